#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsf/cells.hpp"
#include "dsf/feedback.hpp"
#include "dsf/model.hpp"

// Gradient oracles: central finite differences, the linear diagonal cell on
// which DSF is exact, and cross-backend agreement.
namespace dsf::gradcheck {

using numerics::Tensor2;

struct CheckReport {
  std::string name;
  std::string metric = "relative";  // "relative" or "absolute"
  double max_err = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::size_t cases = 0;
  // worst entry
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double oracle = 0.0;
  std::string note;

  // Recomputes pass from max_err and tolerance.
  void settle() { pass = max_err <= tolerance; }
  // Keeps the larger error of the two and the location that produced it.
  void absorb(const CheckReport& other);

  std::string text() const;
  // check:<name> pass:<0|1> metric:<..> max_err:<..> tol:<..> worst:<tensor>[<i>] analytic:<..> oracle:<..>
  std::string summary_line() const;
};

// max |a - b| / max(max|a|, max|b|, 1e-12), plus the index of the worst entry.
struct TensorError {
  double rel = 0.0;
  double abs = 0.0;
  std::size_t index = 0;
};
TensorError relative_error(const Tensor2& analytic, const Tensor2& oracle);

// (f(x + eps) - f(x - eps)) / (2 eps).
double central_difference(const std::function<double(double)>& f, double x, double eps);

// Central differences of `loss` over every entry of every tensor in
// `params`; the tensors are perturbed in place and restored bit-exactly.
// Throws NumericError when two baseline evaluations differ.
std::vector<Tensor2> finite_diff_grads(const std::function<double()>& loss, const std::vector<Tensor2*>& params,
                                       double eps);

model::ParamGrads finite_diff_loss_grad(const model::ModelParams& params, const Batch& batch, double eps);

// Per-tensor relative max-norm comparison of two gradient sets.
CheckReport compare_grads(const std::string& name, const model::ParamGrads& analytic,
                          const model::ParamGrads& oracle, double tolerance);

// h_t = a * h_{t-1} + x_t. Its state Jacobian is diag(a) at every step.
struct LinearDiagCell {
  std::vector<double> a;

  // x: T x (B*d) -> h: T x (B*d), zero initial state.
  Tensor2 forward(const Tensor2& x) const;
  // Exact reverse-time recursion through the cell's own Jacobian.
  feedback::GradSeq bptt_hidden_grads(const feedback::ErrorSeq& errors) const;
};

// DSF (every backend) against BPTT on a random LinearDiagCell. With
// `perturb` set, the DSF side gets a copy of a with one entry moved by 0.1,
// so the report is expected to fail.
CheckReport check_dsf_exactness(std::size_t d, std::size_t steps, std::uint64_t seed, bool perturb = false,
                                double tolerance = 1e-12);

// Random (d, T) instances drawn from the grids; Sequential, Scan and FFT
// compared pairwise in absolute terms.
CheckReport check_engine_consistency(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& lengths,
                                     std::size_t trials, std::uint64_t seed, double tolerance = 1e-10);

// Finite-difference check of cell_vjp_hidden, cell_vjp_params and
// cell_vjp_input on one random step.
CheckReport check_cell_vjps(cells::CellKind kind, std::size_t hidden, std::size_t input, std::size_t batch,
                            std::uint64_t seed, double eps = 1e-6, double tolerance = 1e-7);

struct ModelCheckConfig {
  cells::CellKind kind = cells::CellKind::GRU;
  std::size_t layers = 2;
  std::size_t hidden = 6;
  std::size_t steps = 10;
  std::size_t batch = 2;
  std::size_t vocab = 7;
  bool transformer_like = false;
  bool skip_connections = true;
  std::uint64_t seed = 7;
  double eps = 1e-5;
  double tolerance = 1e-5;
  // Also evaluate at 10 * eps and require the smaller step not to be worse
  // (above the round-off floor).
  bool richardson = true;
};

// Random model and batch.
model::ModelParams random_model(const ModelCheckConfig& cfg);
Batch random_batch(std::size_t batch, std::size_t steps, std::size_t vocab, std::uint64_t seed);

// backward(BPTT) against finite_diff_loss_grad.
CheckReport check_model_gradients(const ModelCheckConfig& cfg);

// DSF backends on a full model: pairwise absolute agreement of ParamGrads.
CheckReport check_model_backends(const ModelCheckConfig& cfg, double tolerance = 1e-10);

// One DSF backend with A = 0 against FT-BPTT on a full model.
CheckReport check_zero_feedback(const ModelCheckConfig& cfg, model::EngineKind engine, double tolerance = 0.0);

// g[T-1] == e[T-1] bit for bit for every engine on a random model layer.
CheckReport check_terminal_condition(const ModelCheckConfig& cfg);

}  // namespace dsf::gradcheck
