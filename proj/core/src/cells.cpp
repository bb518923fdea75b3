#include "dsf/cells.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>

#include "dsf/error.hpp"
#include "dsf/linalg.hpp"

namespace dsf::cells {
namespace {

using numerics::gemm_into;
using numerics::MatView;
using numerics::Trans;

std::atomic<std::uint64_t> g_hidden_vjp_calls{0};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void check_shape(const char* what, const Tensor2& t, std::size_t rows, std::size_t cols) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ShapeError(std::string("cell: ") + what + " is " + t.shape_string() + ", expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void check_params(const CellParams& p) {
  const std::size_t width = gate_count(p.kind) * p.hidden;
  require(p.hidden > 0, "cell: hidden size must be positive");
  check_shape("w_in", p.w_in, p.input, width);
  check_shape("w_rec", p.w_rec, p.hidden, width);
  check_shape("bias", p.bias, 1, width);
}

void check_cache(const CellParams& p, const StepCache& cache) {
  require(cache.kind == p.kind, "cell: cache was produced by a different cell kind");
  const std::size_t b = cache.batch();
  require(cache.x.cols() == p.input && cache.h_prev.rows() == b && cache.h_prev.cols() == p.hidden &&
              cache.gates.rows() == b && cache.gates.cols() == gate_count(p.kind) * p.hidden,
          "cell: cache shapes do not match parameters");
  if (p.kind == CellKind::LSTM) {
    require(cache.c.rows() == b && cache.c.cols() == p.hidden && cache.c_prev.same_shape(cache.c),
            "cell: LSTM cache is missing cell state");
  }
}

void check_grad(const CellParams& p, const StepCache& cache, const Tensor2& g) {
  check_shape("gradient", g, cache.batch(), state_width(p.kind, p.hidden));
}

}  // namespace

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::VanillaRNN: return "VanillaRNN";
    case CellKind::GRU: return "GRU";
    case CellKind::LSTM: return "LSTM";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  std::string lower;
  for (char ch : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "vanillarnn" || lower == "vanilla" || lower == "rnn") return CellKind::VanillaRNN;
  if (lower == "gru") return CellKind::GRU;
  if (lower == "lstm") return CellKind::LSTM;
  throw UsageError("unknown cell kind '" + std::string(name) + "' (expected VanillaRNN, GRU or LSTM)");
}

std::size_t gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::VanillaRNN: return 1;
    case CellKind::GRU: return 3;
    case CellKind::LSTM: return 4;
  }
  return 0;
}

std::size_t state_width(CellKind kind, std::size_t hidden) {
  return kind == CellKind::LSTM ? 2 * hidden : hidden;
}

CellParams CellParams::zeros(CellKind kind, std::size_t hidden, std::size_t input) {
  const std::size_t width = gate_count(kind) * hidden;
  return CellParams{kind, hidden, input, Tensor2(input, width), Tensor2(hidden, width), Tensor2(1, width)};
}

CellParams CellParams::init(CellKind kind, std::size_t hidden, std::size_t input, Rng& rng) {
  CellParams p = zeros(kind, hidden, input);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(input, 1)));
  const double rec_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : p.w_in.values()) v = rng.uniform(-in_bound, in_bound);
  for (double& v : p.w_rec.values()) v = rng.uniform(-rec_bound, rec_bound);
  if (kind == CellKind::LSTM) {
    for (std::size_t j = hidden; j < 2 * hidden; ++j) p.bias(0, j) = 1.0;
  }
  return p;
}

bool CellParams::same_shape(const CellParams& other) const {
  return kind == other.kind && hidden == other.hidden && input == other.input &&
         w_in.same_shape(other.w_in) && w_rec.same_shape(other.w_rec) && bias.same_shape(other.bias);
}

CellState CellState::zeros(CellKind kind, std::size_t batch, std::size_t hidden) {
  CellState s{Tensor2(batch, hidden), std::nullopt};
  if (kind == CellKind::LSTM) s.c = Tensor2(batch, hidden);
  return s;
}

Tensor2 CellState::packed() const {
  if (!c) return h;
  Tensor2 out(h.rows(), 2 * h.cols());
  numerics::copy_into(*c, out.view().col_range(0, h.cols()));
  numerics::copy_into(h, out.view().col_range(h.cols(), h.cols()));
  return out;
}

StepResult cell_forward(const CellParams& params, const Tensor2& x, const CellState& prev) {
  check_params(params);
  require(x.cols() == params.input,
          "cell_forward: input is " + x.shape_string() + ", expected width " + std::to_string(params.input));
  Tensor2 proj(x.rows(), gate_count(params.kind) * params.hidden);
  gemm_into(x, Trans::No, params.w_in, Trans::No, proj);
  for (std::size_t r = 0; r < proj.rows(); ++r) {
    for (std::size_t j = 0; j < proj.cols(); ++j) proj(r, j) += params.bias(0, j);
  }
  return cell_forward_projected(params, proj, x, prev);
}

StepResult cell_forward_projected(const CellParams& params, ConstMatView input_proj, const Tensor2& x,
                                  const CellState& prev) {
  const std::size_t b = x.rows();
  const std::size_t d = params.hidden;
  const std::size_t width = gate_count(params.kind) * d;
  require(input_proj.rows == b && input_proj.cols == width, "cell_forward: projection shape mismatch");
  check_shape("previous state", prev.h, b, d);
  require(prev.c.has_value() == (params.kind == CellKind::LSTM),
          "cell_forward: cell state presence does not match cell kind");

  StepResult res;
  StepCache& cache = res.cache;
  cache.kind = params.kind;
  cache.x = x;
  cache.h_prev = prev.h;
  cache.gates = Tensor2(b, width);
  Tensor2& gates = cache.gates;
  Tensor2 h(b, d);

  switch (params.kind) {
    case CellKind::VanillaRNN: {
      gemm_into(prev.h, Trans::No, params.w_rec, Trans::No, gates);
      for (std::size_t r = 0; r < b; ++r) {
        double* gr = gates.row(r).data();
        const double* pr = input_proj.row(r);
        for (std::size_t j = 0; j < d; ++j) gr[j] += pr[j];
        numerics::tanh_inplace({gr, d});
        std::copy(gr, gr + d, h.row(r).begin());
      }
      res.output = h;
      res.state = CellState{std::move(h), std::nullopt};
      break;
    }
    case CellKind::GRU: {
      // z and r first; the candidate needs r * h_prev.
      const auto rec = params.w_rec.view();
      gemm_into(prev.h, Trans::No, rec.col_range(0, 2 * d), Trans::No, gates.view().col_range(0, 2 * d));
      Tensor2 rh(b, d);
      for (std::size_t r = 0; r < b; ++r) {
        double* gr = gates.row(r).data();
        const double* pr = input_proj.row(r);
        for (std::size_t j = 0; j < 2 * d; ++j) gr[j] += pr[j];
        numerics::sigmoid_inplace({gr, 2 * d});
        for (std::size_t j = 0; j < d; ++j) rh(r, j) = gr[d + j] * prev.h(r, j);
      }
      gemm_into(rh, Trans::No, rec.col_range(2 * d, d), Trans::No, gates.view().col_range(2 * d, d));
      for (std::size_t r = 0; r < b; ++r) {
        double* gr = gates.row(r).data();
        const double* pr = input_proj.row(r);
        for (std::size_t j = 2 * d; j < 3 * d; ++j) gr[j] += pr[j];
        numerics::tanh_inplace({gr + 2 * d, d});
        for (std::size_t j = 0; j < d; ++j) {
          const double z = gr[j];
          h(r, j) = (1.0 - z) * prev.h(r, j) + z * gr[2 * d + j];
        }
      }
      res.output = h;
      res.state = CellState{std::move(h), std::nullopt};
      break;
    }
    case CellKind::LSTM: {
      gemm_into(prev.h, Trans::No, params.w_rec, Trans::No, gates);
      cache.c_prev = *prev.c;
      cache.c = Tensor2(b, d);
      cache.tanh_c = Tensor2(b, d);
      res.output = Tensor2(b, 2 * d);
      for (std::size_t r = 0; r < b; ++r) {
        double* gr = gates.row(r).data();
        const double* pr = input_proj.row(r);
        for (std::size_t j = 0; j < 4 * d; ++j) gr[j] += pr[j];
        numerics::sigmoid_inplace({gr, 3 * d});
        numerics::tanh_inplace({gr + 3 * d, d});
        double* tcr = cache.tanh_c.row(r).data();
        for (std::size_t j = 0; j < d; ++j) {
          const double c = gr[d + j] * cache.c_prev(r, j) + gr[j] * gr[3 * d + j];
          cache.c(r, j) = c;
          tcr[j] = c;
        }
        numerics::tanh_inplace({tcr, d});
        for (std::size_t j = 0; j < d; ++j) {
          const double c = cache.c(r, j);
          const double tc = tcr[j];
          h(r, j) = gr[2 * d + j] * tc;
          res.output(r, j) = c;
          res.output(r, d + j) = h(r, j);
        }
      }
      res.state = CellState{std::move(h), cache.c};
      break;
    }
  }
  return res;
}

Tensor2 pre_activation_grads(const CellParams& params, const StepCache& cache, const Tensor2& g) {
  check_params(params);
  check_cache(params, cache);
  check_grad(params, cache, g);
  const std::size_t b = cache.batch();
  const std::size_t d = params.hidden;
  const Tensor2& gates = cache.gates;
  Tensor2 dpre(b, gate_count(params.kind) * d);

  switch (params.kind) {
    case CellKind::VanillaRNN:
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) dpre(r, j) = g(r, j) * (1.0 - gates(r, j) * gates(r, j));
      }
      break;
    case CellKind::GRU: {
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double z = gates(r, j);
          const double n = gates(r, 2 * d + j);
          dpre(r, j) = g(r, j) * (n - cache.h_prev(r, j)) * z * (1.0 - z);
          dpre(r, 2 * d + j) = g(r, j) * z * (1.0 - n * n);
        }
      }
      // d(r * h_prev) = dpre_n U_n^T
      Tensor2 drh(b, d);
      gemm_into(dpre.view().col_range(2 * d, d), Trans::No, params.w_rec.view().col_range(2 * d, d), Trans::Yes,
                drh);
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double rg = gates(r, d + j);
          dpre(r, d + j) = drh(r, j) * cache.h_prev(r, j) * rg * (1.0 - rg);
        }
      }
      break;
    }
    case CellKind::LSTM:
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double i = gates(r, j);
          const double f = gates(r, d + j);
          const double o = gates(r, 2 * d + j);
          const double n = gates(r, 3 * d + j);
          const double tc = cache.tanh_c(r, j);
          const double gc = g(r, j);
          const double gh = g(r, d + j);
          const double dc = gc + gh * o * (1.0 - tc * tc);
          dpre(r, j) = dc * n * i * (1.0 - i);
          dpre(r, d + j) = dc * cache.c_prev(r, j) * f * (1.0 - f);
          dpre(r, 2 * d + j) = gh * tc * o * (1.0 - o);
          dpre(r, 3 * d + j) = dc * i * (1.0 - n * n);
        }
      }
      break;
  }
  return dpre;
}

Tensor2 cell_vjp_hidden(const CellParams& params, const StepCache& cache, const Tensor2& g) {
  g_hidden_vjp_calls.fetch_add(1, std::memory_order_relaxed);
  const Tensor2 dpre = pre_activation_grads(params, cache, g);
  const std::size_t b = cache.batch();
  const std::size_t d = params.hidden;
  const Tensor2& gates = cache.gates;

  switch (params.kind) {
    case CellKind::VanillaRNN: {
      Tensor2 out(b, d);
      gemm_into(dpre, Trans::No, params.w_rec, Trans::Yes, out);
      return out;
    }
    case CellKind::GRU: {
      Tensor2 out(b, d);
      const auto rec = params.w_rec.view();
      gemm_into(dpre.view().col_range(0, 2 * d), Trans::No, rec.col_range(0, 2 * d), Trans::Yes, out);
      Tensor2 drh(b, d);
      gemm_into(dpre.view().col_range(2 * d, d), Trans::No, rec.col_range(2 * d, d), Trans::Yes, drh);
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          out(r, j) += g(r, j) * (1.0 - gates(r, j)) + drh(r, j) * gates(r, d + j);
        }
      }
      return out;
    }
    case CellKind::LSTM: {
      Tensor2 out(b, 2 * d);
      gemm_into(dpre, Trans::No, params.w_rec, Trans::Yes, out.view().col_range(d, d));
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double o = gates(r, 2 * d + j);
          const double tc = cache.tanh_c(r, j);
          const double dc = g(r, j) + g(r, d + j) * o * (1.0 - tc * tc);
          out(r, j) = dc * gates(r, d + j);
        }
      }
      return out;
    }
  }
  return {};
}

void cell_vjp_params(const CellParams& params, const StepCache& cache, const Tensor2& g, CellParams& out) {
  require(out.same_shape(params), "cell_vjp_params: accumulator shape does not match parameters");
  const Tensor2 dpre = pre_activation_grads(params, cache, g);
  const std::size_t d = params.hidden;
  gemm_into(cache.x, Trans::Yes, dpre, Trans::No, out.w_in, 1.0, 1.0);
  if (params.kind == CellKind::GRU) {
    Tensor2 rh(cache.batch(), d);
    for (std::size_t r = 0; r < cache.batch(); ++r) {
      for (std::size_t j = 0; j < d; ++j) rh(r, j) = cache.gates(r, d + j) * cache.h_prev(r, j);
    }
    gemm_into(cache.h_prev, Trans::Yes, dpre.view().col_range(0, 2 * d), Trans::No,
              out.w_rec.view().col_range(0, 2 * d), 1.0, 1.0);
    gemm_into(rh, Trans::Yes, dpre.view().col_range(2 * d, d), Trans::No, out.w_rec.view().col_range(2 * d, d),
              1.0, 1.0);
  } else {
    gemm_into(cache.h_prev, Trans::Yes, dpre, Trans::No, out.w_rec, 1.0, 1.0);
  }
  numerics::accumulate_col_sums(dpre, out.bias.row(0));
}

Tensor2 cell_vjp_input(const CellParams& params, const StepCache& cache, const Tensor2& g) {
  const Tensor2 dpre = pre_activation_grads(params, cache, g);
  Tensor2 out(cache.batch(), params.input);
  gemm_into(dpre, Trans::No, params.w_in, Trans::Yes, out);
  return out;
}

std::uint64_t hidden_vjp_calls() { return g_hidden_vjp_calls.load(std::memory_order_relaxed); }
void reset_hidden_vjp_calls() { g_hidden_vjp_calls.store(0, std::memory_order_relaxed); }

LayerRun run_layer(const CellParams& params, const Tensor2& inputs, std::size_t steps, std::size_t batch) {
  check_params(params);
  require(inputs.rows() == steps * batch && inputs.cols() == params.input,
          "run_layer: inputs are " + inputs.shape_string() + ", expected " + std::to_string(steps * batch) + "x" +
              std::to_string(params.input));
  const std::size_t width = gate_count(params.kind) * params.hidden;
  const std::size_t out_w = state_width(params.kind, params.hidden);

  Tensor2 proj(steps * batch, width);
  gemm_into(inputs, Trans::No, params.w_in, Trans::No, proj);
  for (std::size_t r = 0; r < proj.rows(); ++r) {
    for (std::size_t j = 0; j < width; ++j) proj(r, j) += params.bias(0, j);
  }

  LayerRun run;
  run.outputs = Tensor2(steps * batch, out_w);
  run.caches.reserve(steps);
  CellState state = CellState::zeros(params.kind, batch, params.hidden);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor2 x = numerics::copy_of(inputs.view().row_range(t * batch, batch));
    StepResult step = cell_forward_projected(params, proj.view().row_range(t * batch, batch), x, state);
    numerics::copy_into(step.output, run.outputs.view().row_range(t * batch, batch));
    state = std::move(step.state);
    run.caches.push_back(std::move(step.cache));
  }
  return run;
}

Tensor2 sequence_local_backward(const CellParams& params, std::span<const StepCache> caches, const Tensor2& grads,
                                CellParams* param_grads, bool want_input_grads) {
  check_params(params);
  const std::size_t steps = caches.size();
  require(steps > 0, "sequence_local_backward: no steps");
  const std::size_t batch = caches.front().batch();
  const std::size_t out_w = state_width(params.kind, params.hidden);
  require(grads.rows() == steps && grads.cols() == batch * out_w,
          "sequence_local_backward: gradients are " + grads.shape_string() + ", expected " +
              std::to_string(steps) + "x" + std::to_string(batch * out_w));
  if (param_grads) require(param_grads->same_shape(params), "sequence_local_backward: accumulator shape mismatch");

  const std::size_t d = params.hidden;
  const std::size_t width = gate_count(params.kind) * d;
  const std::size_t rows = steps * batch;
  Tensor2 dpre(rows, width);
  Tensor2 xs(rows, params.input);
  Tensor2 hs(rows, d);  // h_prev, or r * h_prev for the GRU candidate block
  Tensor2 rhs;
  if (params.kind == CellKind::GRU) rhs = Tensor2(rows, d);

  for (std::size_t t = 0; t < steps; ++t) {
    const StepCache& cache = caches[t];
    require(cache.batch() == batch, "sequence_local_backward: ragged batch");
    Tensor2 g(batch, out_w, std::vector<double>(grads.row(t).begin(), grads.row(t).end()));
    const Tensor2 dp = pre_activation_grads(params, cache, g);
    numerics::copy_into(dp, dpre.view().row_range(t * batch, batch));
    numerics::copy_into(cache.x, xs.view().row_range(t * batch, batch));
    numerics::copy_into(cache.h_prev, hs.view().row_range(t * batch, batch));
    if (params.kind == CellKind::GRU) {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < d; ++j) rhs(t * batch + r, j) = cache.gates(r, d + j) * cache.h_prev(r, j);
      }
    }
  }

  if (param_grads) {
    gemm_into(xs, Trans::Yes, dpre, Trans::No, param_grads->w_in, 1.0, 1.0);
    if (params.kind == CellKind::GRU) {
      gemm_into(hs, Trans::Yes, dpre.view().col_range(0, 2 * d), Trans::No,
                param_grads->w_rec.view().col_range(0, 2 * d), 1.0, 1.0);
      gemm_into(rhs, Trans::Yes, dpre.view().col_range(2 * d, d), Trans::No,
                param_grads->w_rec.view().col_range(2 * d, d), 1.0, 1.0);
    } else {
      gemm_into(hs, Trans::Yes, dpre, Trans::No, param_grads->w_rec, 1.0, 1.0);
    }
    numerics::accumulate_col_sums(dpre, param_grads->bias.row(0));
  }

  Tensor2 dx;
  if (want_input_grads) {
    dx = Tensor2(rows, params.input);
    gemm_into(dpre, Trans::No, params.w_in, Trans::Yes, dx);
  }
  return dx;
}

}  // namespace dsf::cells
