#include "dsf/feedback.hpp"

#include <algorithm>
#include <cctype>

#include "dsf/error.hpp"
#include "dsf/scan.hpp"

namespace dsf::feedback {
namespace {

void check_feedback_width(const ErrorSeq& errors, std::size_t width) {
  if (width == 0 || errors.cols() % width != 0) {
    throw ShapeError("dsf_hidden_grads: " + std::to_string(errors.cols()) +
                     " channels is not a multiple of feedback width " + std::to_string(width));
  }
  if (errors.rows() == 0) throw ShapeError("dsf_hidden_grads: empty error sequence");
}

Tensor2 reversed_rows(const Tensor2& x) {
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    std::copy(x.row(t).begin(), x.row(t).end(), out.row(x.rows() - 1 - t).begin());
  }
  return out;
}

}  // namespace

std::string_view to_string(EngineKind kind) {
  switch (kind) {
    case EngineKind::Bptt: return "BPTT";
    case EngineKind::DsfSequential: return "DSF_Sequential";
    case EngineKind::DsfScan: return "DSF_Scan";
    case EngineKind::DsfFft: return "DSF_FFT";
    case EngineKind::FtBptt: return "FTBPTT";
  }
  return "?";
}

EngineKind parse_engine_kind(std::string_view name) {
  std::string key;
  for (char ch : name) {
    if (ch == '_' || ch == '-') continue;
    key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  if (key == "bptt") return EngineKind::Bptt;
  if (key == "dsfsequential" || key == "dsf" || key == "dsfseq") return EngineKind::DsfSequential;
  if (key == "dsfscan") return EngineKind::DsfScan;
  if (key == "dsffft") return EngineKind::DsfFft;
  if (key == "ftbptt") return EngineKind::FtBptt;
  throw UsageError("unknown engine '" + std::string(name) +
                   "' (expected BPTT, DSF_Sequential, DSF_Scan, DSF_FFT or FTBPTT)");
}

bool is_dsf(EngineKind kind) {
  return kind == EngineKind::DsfSequential || kind == EngineKind::DsfScan || kind == EngineKind::DsfFft;
}

DsfBackend dsf_backend(EngineKind kind) {
  switch (kind) {
    case EngineKind::DsfScan: return DsfBackend::Scan;
    case EngineKind::DsfFft: return DsfBackend::Fft;
    default: return DsfBackend::Sequential;
  }
}

FeedbackMatrix FeedbackMatrix::sample(std::size_t width, Rng& rng) {
  FeedbackMatrix a;
  a.diag.resize(width);
  for (double& v : a.diag) v = rng.uniform();
  return a;
}

std::size_t FeedbackMatrix::clamp_to_unit() {
  std::size_t changed = 0;
  for (double& v : diag) {
    const double c = std::clamp(v, 0.0, 1.0);
    if (c != v || v != v) {
      v = v != v ? 0.0 : c;
      ++changed;
    }
  }
  return changed;
}

Tensor2 dsf_kernel(const FeedbackMatrix& a, std::size_t steps) {
  Tensor2 kernel(steps, a.size());
  if (steps == 0) return kernel;
  std::fill(kernel.row(0).begin(), kernel.row(0).end(), 1.0);
  for (std::size_t k = 1; k < steps; ++k) {
    for (std::size_t j = 0; j < a.size(); ++j) kernel(k, j) = kernel(k - 1, j) * a.diag[j];
  }
  return kernel;
}

const numerics::SuffixConvolver& DsfKernelCache::get(std::size_t steps) {
  auto it = cache_.find(steps);
  if (it == cache_.end()) {
    it = cache_.emplace(steps, std::make_unique<numerics::SuffixConvolver>(dsf_kernel(a_, steps))).first;
  }
  return *it->second;
}

void dsf_sequential_into(const ErrorSeq& errors, std::span<const double> a, GradSeq& out) {
  check_feedback_width(errors, a.size());
  if (!out.same_shape(errors)) out = Tensor2(errors.rows(), errors.cols());
  const std::size_t steps = errors.rows();
  const std::size_t channels = errors.cols();
  const std::size_t width = a.size();
  std::copy(errors.row(steps - 1).begin(), errors.row(steps - 1).end(), out.row(steps - 1).begin());
  for (std::size_t t = steps - 1; t-- > 0;) {
    const double* e = errors.row(t).data();
    const double* next = out.row(t + 1).data();
    double* cur = out.row(t).data();
    for (std::size_t c0 = 0; c0 < channels; c0 += width) {
      for (std::size_t j = 0; j < width; ++j) cur[c0 + j] = e[c0 + j] + a[j] * next[c0 + j];
    }
  }
}

GradSeq dsf_hidden_grads(const ErrorSeq& errors, const FeedbackMatrix& a, DsfBackend backend,
                         DsfKernelCache* cache) {
  check_feedback_width(errors, a.size());
  const std::size_t steps = errors.rows();
  switch (backend) {
    case DsfBackend::Sequential: {
      GradSeq out;
      dsf_sequential_into(errors, a.diag, out);
      return out;
    }
    case DsfBackend::Scan: {
      // The scan runs forward in time; feed it the reversed sequence.
      Tensor2 mult(1, errors.cols());
      for (std::size_t c = 0; c < errors.cols(); ++c) mult(0, c) = a.diag[c % a.size()];
      return reversed_rows(numerics::linear_recurrence_scan(mult, reversed_rows(errors)));
    }
    case DsfBackend::Fft: {
      GradSeq out;
      if (cache != nullptr) {
        if (cache->feedback().diag != a.diag) throw ShapeError("dsf_hidden_grads: kernel cache built for other A");
        cache->get(steps).apply_into(errors, out);
      } else {
        numerics::SuffixConvolver(dsf_kernel(a, steps)).apply_into(errors, out);
      }
      // kernel[0] is exactly one; restore the terminal row without FFT rounding.
      std::copy(errors.row(steps - 1).begin(), errors.row(steps - 1).end(), out.row(steps - 1).begin());
      return out;
    }
  }
  return {};
}

GradSeq ft_bptt_hidden_grads(ErrorSeq errors) { return errors; }

GradSeq bptt_hidden_grads(const ErrorSeq& errors, std::span<const cells::StepCache> caches,
                          const cells::CellParams& params) {
  if (caches.size() != errors.rows()) {
    throw ShapeError("bptt_hidden_grads: " + std::to_string(errors.rows()) + " error steps but " +
                     std::to_string(caches.size()) + " caches");
  }
  if (caches.empty()) throw ShapeError("bptt_hidden_grads: empty sequence");
  const std::size_t batch = caches.front().batch();
  const std::size_t width = cells::state_width(params.kind, params.hidden);
  if (errors.cols() != batch * width) {
    throw ShapeError("bptt_hidden_grads: errors are " + errors.shape_string() + ", expected width " +
                     std::to_string(batch * width));
  }
  return bptt_recurrence(errors, [&](std::size_t t, std::span<const double> g_next, std::span<double> g_cur) {
    const Tensor2 g(batch, width, std::vector<double>(g_next.begin(), g_next.end()));
    const Tensor2 back = cells::cell_vjp_hidden(params, caches[t], g);
    for (std::size_t i = 0; i < g_cur.size(); ++i) g_cur[i] += back.data()[i];
  });
}

GradSeq hidden_grads(EngineKind engine, ErrorSeq errors, const FeedbackMatrix& a,
                     std::span<const cells::StepCache> caches, const cells::CellParams& params,
                     DsfKernelCache* cache) {
  switch (engine) {
    case EngineKind::Bptt: return bptt_hidden_grads(errors, caches, params);
    case EngineKind::FtBptt: return ft_bptt_hidden_grads(std::move(errors));
    default: return dsf_hidden_grads(errors, a, dsf_backend(engine), cache);
  }
}

void accumulate_param_grads(const GradSeq& grads, std::span<const cells::StepCache> caches,
                            const cells::CellParams& params, cells::CellParams& out) {
  if (grads.rows() != caches.size()) {
    throw ShapeError("accumulate_param_grads: " + std::to_string(grads.rows()) + " gradient steps but " +
                     std::to_string(caches.size()) + " caches");
  }
  cells::sequence_local_backward(params, caches, grads, &out, /*want_input_grads=*/false);
}

}  // namespace dsf::feedback
