#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

// Recurrent cells with hand-written vector-Jacobian products.
//
// Everything is batched: a "vector" is a B x n block, one row per sequence.
// Row-vector convention throughout: pre-activations are x W_in + h W_rec + b,
// with the gate blocks stacked along the columns:
//
//   VanillaRNN  [h]            h_t = tanh(pre)
//   GRU         [z | r | n]    h_t = (1 - z) * h_{t-1} + z * n,
//                              n   = tanh(x W_n + (r * h_{t-1}) U_n + b_n)
//   LSTM        [i | f | o | n] c_t = f * c_{t-1} + i * n, h_t = o * tanh(c_t)
//
// The LSTM state (and output) is the concatenation [c_t ; h_t] of width 2d.
namespace dsf::cells {

using numerics::ConstMatView;
using numerics::Tensor2;

enum class CellKind { VanillaRNN, GRU, LSTM };

std::string_view to_string(CellKind kind);
CellKind parse_cell_kind(std::string_view name);

std::size_t gate_count(CellKind kind);
// Width of the recurrent state / cell output: d, or 2d for LSTM.
std::size_t state_width(CellKind kind, std::size_t hidden);

struct CellParams {
  CellKind kind = CellKind::GRU;
  std::size_t hidden = 0;
  std::size_t input = 0;
  Tensor2 w_in;   // input x (gates * hidden)
  Tensor2 w_rec;  // hidden x (gates * hidden)
  Tensor2 bias;   // 1 x (gates * hidden)

  static CellParams zeros(CellKind kind, std::size_t hidden, std::size_t input);

  // Uniform +-1/sqrt(fan_in) matrices, zero biases, LSTM forget bias +1.
  static CellParams init(CellKind kind, std::size_t hidden, std::size_t input, Rng& rng);

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("w_in", w_in);
    fn("w_rec", w_rec);
    fn("bias", bias);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn("w_in", w_in);
    fn("w_rec", w_rec);
    fn("bias", bias);
  }

  bool same_shape(const CellParams& other) const;
};

struct CellState {
  Tensor2 h;                // B x d
  std::optional<Tensor2> c; // B x d, LSTM only

  static CellState zeros(CellKind kind, std::size_t batch, std::size_t hidden);
  // Packed B x state_width view of the state ([c ; h] for LSTM).
  Tensor2 packed() const;
};

// Activations saved by one forward step; enough for every VJP.
struct StepCache {
  CellKind kind = CellKind::GRU;
  Tensor2 x;       // B x d_in
  Tensor2 h_prev;  // B x d
  Tensor2 gates;   // B x (gates * d), post-activation
  // LSTM only
  Tensor2 c_prev;
  Tensor2 c;
  Tensor2 tanh_c;

  std::size_t batch() const { return x.rows(); }
};

struct StepResult {
  CellState state;
  Tensor2 output;  // B x state_width
  StepCache cache;
};

StepResult cell_forward(const CellParams& params, const Tensor2& x, const CellState& prev);

// Same step with the input projection x W_in + b already evaluated
// (B x gates*d); lets a layer project a whole sequence with one product.
StepResult cell_forward_projected(const CellParams& params, ConstMatView input_proj, const Tensor2& x,
                                  const CellState& prev);

// g . d state_t / d state_{t-1}. g and the result are B x state_width.
Tensor2 cell_vjp_hidden(const CellParams& params, const StepCache& cache, const Tensor2& g);

// out += g . d state_t / d theta, with x_t and state_{t-1} held fixed.
void cell_vjp_params(const CellParams& params, const StepCache& cache, const Tensor2& g, CellParams& out);

// g . d state_t / d x_t (B x d_in).
Tensor2 cell_vjp_input(const CellParams& params, const StepCache& cache, const Tensor2& g);

// Gradient with respect to the stacked gate pre-activations (B x gates*d).
Tensor2 pre_activation_grads(const CellParams& params, const StepCache& cache, const Tensor2& g);

// Number of cell_vjp_hidden invocations since start-up (or the last reset).
std::uint64_t hidden_vjp_calls();
void reset_hidden_vjp_calls();

// A whole sequence through one cell, zero initial state.
// inputs: (T*B) x d_in, time-major (row t*B + b).
struct LayerRun {
  Tensor2 outputs;  // (T*B) x state_width
  std::vector<StepCache> caches;
};
LayerRun run_layer(const CellParams& params, const Tensor2& inputs, std::size_t steps, std::size_t batch);

// Local (non-recurrent) backward of a whole sequence given the hidden-state
// gradients g (T x B*state_width): accumulates parameter gradients into
// `param_grads` (when non-null) and returns the input gradients ((T*B) x d_in)
// when requested. Same quantities as summing cell_vjp_params / cell_vjp_input
// over the steps, but as a handful of stacked products.
Tensor2 sequence_local_backward(const CellParams& params, std::span<const StepCache> caches,
                                const Tensor2& grads, CellParams* param_grads, bool want_input_grads);

}  // namespace dsf::cells
