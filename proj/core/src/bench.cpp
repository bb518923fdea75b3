#include "dsf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "dsf/error.hpp"
#include "dsf/linalg.hpp"
#include "dsf/rng.hpp"
#include "dsf/scan.hpp"

namespace dsf::bench {
namespace {

using numerics::Tensor2;

template <typename T>
inline void keep(T* p) {
#if defined(__GNUC__) || defined(__clang__)
  asm volatile("" : : "r"(p) : "memory");
#else
  static volatile T* sink;
  sink = p;
#endif
}

Tensor2 random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::pair<double, double> median_iqr(std::vector<double> samples) {
  if (samples.empty()) throw ShapeError("median_iqr: no samples");
  std::sort(samples.begin(), samples.end());
  return {quantile(samples, 0.5), quantile(samples, 0.75) - quantile(samples, 0.25)};
}

BenchResult time_hidden_grads(feedback::EngineKind engine, std::size_t d, std::size_t T,
                              const TimingOptions& options) {
  if (options.reps < 5) throw UsageError("time_hidden_grads: reps must be at least 5");
  if (d == 0 || T == 0) throw UsageError("time_hidden_grads: d and T must be positive");
  using feedback::EngineKind;
  Rng rng(options.seed);
  Tensor2 errors = random_tensor(T, d, rng, 1.0);
  const auto a = feedback::FeedbackMatrix::sample(d, rng);
  Tensor2 out(T, d);

  std::function<void()> run;
  Tensor2 jac;
  Tensor2 mult;
  std::optional<feedback::DsfKernelCache> kernels;
  switch (engine) {
    case EngineKind::Bptt:
      jac = random_tensor(d, d, rng, 1.0 / std::sqrt(static_cast<double>(d)));
      run = [&] {
        out = feedback::bptt_recurrence(errors, [&](std::size_t, std::span<const double> g_next,
                                                    std::span<double> g_cur) {
          numerics::gemm_into(numerics::ConstMatView{g_next.data(), 1, d, d}, numerics::Trans::No, jac,
                              numerics::Trans::No, numerics::MatView{g_cur.data(), 1, d, d}, 1.0, 1.0);
        });
      };
      break;
    case EngineKind::DsfSequential:
      run = [&] { feedback::dsf_sequential_into(errors, a.diag, out); };
      break;
    case EngineKind::DsfScan:
      if (options.threads > 1) {
        mult = Tensor2::row_vector(a.diag);
        run = [&] { out = numerics::linear_recurrence_scan(mult, errors, options.threads); };
      } else {
        run = [&] { out = feedback::dsf_hidden_grads(errors, a, feedback::DsfBackend::Scan); };
      }
      break;
    case EngineKind::DsfFft:
      kernels.emplace(a);
      kernels->get(T);
      run = [&] { kernels->get(T).apply_into(errors, out); };
      break;
    case EngineKind::FtBptt:
      run = [&] {
        out = feedback::ft_bptt_hidden_grads(std::move(errors));
        errors = std::move(out);
      };
      break;
  }

  using clock = std::chrono::steady_clock;
  auto time_batch = [&](std::size_t n) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < n; ++i) {
      run();
      keep(out.data());
      keep(errors.data());
    }
    return std::chrono::duration<double, std::nano>(clock::now() - t0).count();
  };

  // Calibrate the inner repeat count, then warm up.
  std::size_t inner = 1;
  for (;;) {
    const double ns = time_batch(inner);
    if (ns >= options.min_rep_ns || inner >= (std::size_t{1} << 30)) break;
    inner = ns <= 0.0 ? inner * 16 : std::max(inner * 2, static_cast<std::size_t>(inner * options.min_rep_ns / ns * 1.2));
  }
  for (std::size_t i = 0; i < options.warmups; ++i) time_batch(inner);

  std::vector<double> samples;
  for (std::size_t i = 0; i < options.reps; ++i) samples.push_back(time_batch(inner) / static_cast<double>(inner));
  const auto [median, iqr] = median_iqr(samples);
  return BenchResult{std::string(feedback::to_string(engine)), d, T, median, iqr, options.reps};
}

Axis parse_axis(const std::string& name) {
  if (name == "d" || name == "D") return Axis::D;
  if (name == "T" || name == "t") return Axis::T;
  throw UsageError("unknown sweep axis '" + name + "' (expected d or T)");
}

std::string to_string(Axis axis) { return axis == Axis::D ? "d" : "T"; }

double fit_scaling_exponent(const std::vector<BenchResult>& results, Axis axis) {
  std::set<std::size_t> sizes;
  for (const auto& r : results) sizes.insert(axis == Axis::D ? r.d : r.T);
  if (sizes.size() < 4 || *sizes.begin() == 0 || *sizes.rbegin() < 8 * *sizes.begin()) {
    throw UsageError("fit_scaling_exponent: need at least 4 sizes spanning a factor of 8");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(results.size());
  for (const auto& r : results) {
    if (!(r.median_ns > 0.0)) throw UsageError("fit_scaling_exponent: non-positive timing");
    const double x = std::log(static_cast<double>(axis == Axis::D ? r.d : r.T));
    const double y = std::log(r.median_ns);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<std::pair<std::size_t, std::size_t>> default_sweep(Axis axis) {
  if (axis == Axis::D) return {{64, 256}, {128, 256}, {256, 256}, {512, 256}};
  return {{128, 256}, {128, 512}, {128, 1024}, {128, 2048}};
}

std::optional<std::pair<double, double>> exponent_range(feedback::EngineKind engine, Axis axis) {
  using feedback::EngineKind;
  if (engine == EngineKind::Bptt && axis == Axis::D) return std::pair{1.6, 2.4};
  if (engine == EngineKind::DsfSequential && axis == Axis::D) return std::pair{0.7, 1.3};
  if (engine == EngineKind::DsfSequential && axis == Axis::T) return std::pair{0.8, 1.2};
  if (engine == EngineKind::FtBptt && axis == Axis::T) return std::pair{-0.2, 0.4};
  return std::nullopt;
}

std::string csv_header() { return "engine,d,T,median_ns,iqr_ns,reps"; }

std::string csv_row(const BenchResult& r) {
  std::ostringstream s;
  s.precision(10);
  s << r.engine << ',' << r.d << ',' << r.T << ',' << r.median_ns << ',' << r.iqr_ns << ',' << r.reps;
  return s.str();
}

}  // namespace dsf::bench
