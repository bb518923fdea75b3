#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsf/cells.hpp"
#include "dsf/fft_conv.hpp"
#include "dsf/rng.hpp"
#include "dsf/tensor.hpp"

// Temporal gradient engines. Each maps the per-step error signals e_t (the
// same-time-step part of dL/dh_t) to hidden-state gradients g_t, which then
// feed the purely local parameter gradient sum_t g_t df_t/dtheta.
//
// Sequences are packed as T x (B * w): row t holds step t for every batch
// element, w being the state width.
namespace dsf::feedback {

using numerics::Tensor2;

enum class EngineKind { Bptt, DsfSequential, DsfScan, DsfFft, FtBptt };
enum class DsfBackend { Sequential, Scan, Fft };

std::string_view to_string(EngineKind kind);
EngineKind parse_engine_kind(std::string_view name);
bool is_dsf(EngineKind kind);
DsfBackend dsf_backend(EngineKind kind);

using ErrorSeq = Tensor2;
using GradSeq = Tensor2;

// Fixed diagonal feedback: diag holds the entries of A.
struct FeedbackMatrix {
  std::vector<double> diag;

  std::size_t size() const { return diag.size(); }
  // Entries drawn from U[0, 1).
  static FeedbackMatrix sample(std::size_t width, Rng& rng);
  // Clamps every entry into [0, 1]; returns how many were changed.
  std::size_t clamp_to_unit();
};

// kernel[k] = a^k elementwise, k < T (T x d).
Tensor2 dsf_kernel(const FeedbackMatrix& a, std::size_t steps);

// Convolvers keyed by sequence length for one feedback matrix.
class DsfKernelCache {
 public:
  explicit DsfKernelCache(FeedbackMatrix a) : a_(std::move(a)) {}
  const numerics::SuffixConvolver& get(std::size_t steps);
  const FeedbackMatrix& feedback() const { return a_; }
  std::size_t entries() const { return cache_.size(); }

 private:
  FeedbackMatrix a_;
  std::map<std::size_t, std::unique_ptr<numerics::SuffixConvolver>> cache_;
};

// g[t] = sum_{k>=t} a^{k-t} e[k]. The column count of `errors` must be a
// multiple of a.size(); column c uses a[c mod a.size()].
GradSeq dsf_hidden_grads(const ErrorSeq& errors, const FeedbackMatrix& a, DsfBackend backend,
                         DsfKernelCache* cache = nullptr);

// Allocation-free sequential form (out is resized if needed).
void dsf_sequential_into(const ErrorSeq& errors, std::span<const double> a, GradSeq& out);

// g = e: no temporal feedback. Takes the buffer by value; moving it in costs
// nothing.
GradSeq ft_bptt_hidden_grads(ErrorSeq errors);

// Reverse-time recursion g[T-1] = e[T-1], g[t] = e[t] + g[t+1] A_{t+1} where
// `vjp(t, g_next, g_cur)` must add g_next A_t into g_cur for the transition
// that consumed the state of step t-1, i.e. A_t = d state_t / d state_{t-1}.
template <typename Vjp>
GradSeq bptt_recurrence(const ErrorSeq& errors, Vjp&& vjp) {
  GradSeq g = errors;
  for (std::size_t t = g.rows(); t-- > 1;) {
    vjp(t, std::span<const double>(g.row(t)), g.row(t - 1));
  }
  return g;
}

// Exact BPTT through the cell's true Jacobians. caches[t] is the cache of
// step t (which consumed the state of step t-1).
GradSeq bptt_hidden_grads(const ErrorSeq& errors, std::span<const cells::StepCache> caches,
                          const cells::CellParams& params);

// Any engine by kind. `a`/`cache` are only consulted for DSF engines,
// `caches`/`params` only for BPTT.
GradSeq hidden_grads(EngineKind engine, ErrorSeq errors, const FeedbackMatrix& a,
                     std::span<const cells::StepCache> caches, const cells::CellParams& params,
                     DsfKernelCache* cache = nullptr);

// out += sum_t g_t d f_t / d theta (local parameter gradients).
void accumulate_param_grads(const GradSeq& grads, std::span<const cells::StepCache> caches,
                            const cells::CellParams& params, cells::CellParams& out);

}  // namespace dsf::feedback
