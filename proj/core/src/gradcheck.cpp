#include "dsf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "dsf/error.hpp"
#include "dsf/rng.hpp"

namespace dsf::gradcheck {
namespace {

constexpr double kFloor = 1e-12;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

Tensor2 random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor2& a, const Tensor2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

void record(CheckReport& r, const std::string& tensor, const TensorError& e, const Tensor2& analytic,
            const Tensor2& oracle, bool absolute) {
  const double err = absolute ? e.abs : e.rel;
  ++r.cases;
  if (err > r.max_err || r.worst_tensor.empty()) {
    r.max_err = std::max(r.max_err, err);
    r.worst_tensor = tensor;
    r.worst_index = e.index;
    r.analytic = analytic.size() ? analytic.data()[e.index] : 0.0;
    r.oracle = oracle.size() ? oracle.data()[e.index] : 0.0;
  }
}

// The packed [c ; h] (or h) state as a CellState.
cells::CellState unpack_state(cells::CellKind kind, const Tensor2& packed, std::size_t hidden) {
  cells::CellState s;
  if (kind != cells::CellKind::LSTM) {
    s.h = packed;
    return s;
  }
  const std::size_t batch = packed.rows();
  s.c = Tensor2(batch, hidden);
  s.h = Tensor2(batch, hidden);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < hidden; ++j) {
      (*s.c)(b, j) = packed(b, j);
      s.h(b, j) = packed(b, hidden + j);
    }
  }
  return s;
}

std::vector<Tensor2*> tensor_ptrs(model::ModelWeights& w) {
  std::vector<Tensor2*> out;
  w.for_each_tensor([&](const std::string&, Tensor2& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> tensor_names(const model::ModelWeights& w) {
  std::vector<std::string> out;
  w.for_each_tensor([&](const std::string& name, const Tensor2&) { out.push_back(name); });
  return out;
}

model::ModelConfig model_config(const ModelCheckConfig& cfg) {
  model::ModelConfig mc;
  mc.cell_kind = cfg.kind;
  mc.num_layers = cfg.layers;
  mc.hidden = cfg.hidden;
  mc.vocab_size = cfg.vocab;
  mc.context = cfg.steps;
  mc.skip_connections = cfg.skip_connections;
  mc.transformer_like = cfg.transformer_like;
  mc.seed = cfg.seed;
  return mc;
}

}  // namespace

void CheckReport::absorb(const CheckReport& other) {
  cases += other.cases;
  if (other.max_err > max_err || (!other.pass && pass)) {
    max_err = std::max(max_err, other.max_err);
    worst_tensor = other.worst_tensor;
    worst_index = other.worst_index;
    analytic = other.analytic;
    oracle = other.oracle;
  }
  pass = pass && other.pass;
}

std::string CheckReport::text() const {
  std::ostringstream s;
  s << (pass ? "PASS " : "FAIL ") << name << ": max " << metric << " error " << fmt(max_err) << " (tolerance "
    << fmt(tolerance) << ", " << cases << " cases)";
  if (!worst_tensor.empty()) {
    s << "; worst " << worst_tensor << "[" << worst_index << "] analytic " << fmt(analytic) << " oracle "
      << fmt(oracle);
  }
  if (!note.empty()) s << "; " << note;
  return s.str();
}

std::string CheckReport::summary_line() const {
  std::ostringstream s;
  s.precision(17);
  s << "check:" << name << " pass:" << (pass ? 1 : 0) << " metric:" << metric << " max_err:" << max_err
    << " tol:" << tolerance << " cases:" << cases << " worst:" << (worst_tensor.empty() ? "-" : worst_tensor) << "["
    << worst_index << "] analytic:" << analytic << " oracle:" << oracle;
  return s.str();
}

TensorError relative_error(const Tensor2& analytic, const Tensor2& oracle) {
  if (!analytic.same_shape(oracle)) {
    throw ShapeError("relative_error: " + analytic.shape_string() + " vs " + oracle.shape_string());
  }
  TensorError e;
  double scale = kFloor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double o = oracle.data()[i];
    scale = std::max({scale, std::abs(a), std::abs(o)});
    const double diff = std::abs(a - o);
    if (diff > e.abs || std::isnan(diff)) {
      e.abs = std::isnan(diff) ? HUGE_VAL : diff;
      e.index = i;
    }
  }
  e.rel = e.abs / scale;
  return e;
}

double central_difference(const std::function<double(double)>& f, double x, double eps) {
  if (!(eps > 0.0)) throw ShapeError("central_difference: eps must be positive");
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

std::vector<Tensor2> finite_diff_grads(const std::function<double()>& loss, const std::vector<Tensor2*>& params,
                                       double eps) {
  if (!(eps > 0.0)) throw ShapeError("finite_diff_grads: eps must be positive");
  const double base = loss();
  const double again = loss();
  if (std::memcmp(&base, &again, sizeof base) != 0) {
    throw NumericError("finite_diff_grads: loss is not deterministic (" + fmt(base) + " then " + fmt(again) + ")");
  }
  std::vector<Tensor2> grads;
  for (Tensor2* p : params) {
    Tensor2 g(p->rows(), p->cols());
    for (std::size_t i = 0; i < p->size(); ++i) {
      double& v = p->data()[i];
      const double saved = v;
      v = saved + eps;
      const double up = loss();
      v = saved - eps;
      const double down = loss();
      v = saved;
      g.data()[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

model::ParamGrads finite_diff_loss_grad(const model::ModelParams& params, const Batch& batch, double eps) {
  model::ModelParams work = params;
  auto ptrs = tensor_ptrs(work.weights);
  auto fd = finite_diff_grads([&] { return model::evaluate_loss(work, batch); }, ptrs, eps);
  model::ParamGrads out = params.weights.zeros_like();
  auto outs = tensor_ptrs(out);
  for (std::size_t i = 0; i < outs.size(); ++i) *outs[i] = std::move(fd[i]);
  return out;
}

CheckReport compare_grads(const std::string& name, const model::ParamGrads& analytic,
                          const model::ParamGrads& oracle, double tolerance) {
  CheckReport r;
  r.name = name;
  r.tolerance = tolerance;
  std::vector<const Tensor2*> a, o;
  analytic.for_each_tensor([&](const std::string&, const Tensor2& t) { a.push_back(&t); });
  oracle.for_each_tensor([&](const std::string&, const Tensor2& t) { o.push_back(&t); });
  const auto names = tensor_names(analytic);
  if (a.size() != o.size()) throw ShapeError("compare_grads: gradient sets have different tensor counts");
  for (std::size_t i = 0; i < a.size(); ++i) record(r, names[i], relative_error(*a[i], *o[i]), *a[i], *o[i], false);
  r.settle();
  return r;
}

Tensor2 LinearDiagCell::forward(const Tensor2& x) const {
  if (a.empty() || x.cols() % a.size() != 0) throw ShapeError("LinearDiagCell: width does not divide input");
  Tensor2 h(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      h(t, c) = x(t, c) + (t > 0 ? a[c % a.size()] * h(t - 1, c) : 0.0);
    }
  }
  return h;
}

feedback::GradSeq LinearDiagCell::bptt_hidden_grads(const feedback::ErrorSeq& errors) const {
  if (a.empty() || errors.cols() % a.size() != 0) throw ShapeError("LinearDiagCell: width does not divide errors");
  return feedback::bptt_recurrence(errors, [&](std::size_t, std::span<const double> g_next, std::span<double> g_cur) {
    for (std::size_t c = 0; c < g_cur.size(); ++c) g_cur[c] += g_next[c] * a[c % a.size()];
  });
}

CheckReport check_dsf_exactness(std::size_t d, std::size_t steps, std::uint64_t seed, bool perturb,
                                double tolerance) {
  Rng rng(seed);
  LinearDiagCell cell;
  cell.a.resize(d);
  for (double& v : cell.a) v = rng.uniform();
  const Tensor2 errors = random_tensor(steps, d, rng);
  const feedback::GradSeq reference = cell.bptt_hidden_grads(errors);

  feedback::FeedbackMatrix a{cell.a};
  if (perturb) {
    const std::size_t j = rng.below(d);
    a.diag[j] += a.diag[j] < 0.5 ? 0.1 : -0.1;
  }

  CheckReport r;
  r.name = perturb ? "dsf_exactness_negative_control" : "dsf_exactness";
  r.tolerance = tolerance;
  r.note = "d=" + std::to_string(d) + " T=" + std::to_string(steps);
  for (auto backend : {feedback::DsfBackend::Sequential, feedback::DsfBackend::Scan, feedback::DsfBackend::Fft}) {
    const auto g = feedback::dsf_hidden_grads(errors, a, backend);
    static const char* names[] = {"sequential", "scan", "fft"};
    record(r, names[static_cast<int>(backend)], relative_error(g, reference), g, reference, false);
  }
  r.settle();
  return r;
}

CheckReport check_engine_consistency(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& lengths,
                                     std::size_t trials, std::uint64_t seed, double tolerance) {
  if (dims.empty() || lengths.empty()) throw ShapeError("check_engine_consistency: empty grid");
  Rng rng(seed);
  CheckReport r;
  r.name = "dsf_backend_equivalence";
  r.metric = "absolute";
  r.tolerance = tolerance;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t d = dims[rng.below(dims.size())];
    const std::size_t steps = lengths[rng.below(lengths.size())];
    const std::size_t batch = 1 + rng.below(2);
    const auto a = feedback::FeedbackMatrix::sample(d, rng);
    const Tensor2 errors = random_tensor(steps, batch * d, rng);
    const auto seq = feedback::dsf_hidden_grads(errors, a, feedback::DsfBackend::Sequential);
    const auto scan = feedback::dsf_hidden_grads(errors, a, feedback::DsfBackend::Scan);
    const auto fft = feedback::dsf_hidden_grads(errors, a, feedback::DsfBackend::Fft);
    const std::string where = "d=" + std::to_string(d) + ",T=" + std::to_string(steps);
    record(r, "scan-vs-sequential(" + where + ")", relative_error(scan, seq), scan, seq, true);
    record(r, "fft-vs-sequential(" + where + ")", relative_error(fft, seq), fft, seq, true);
    record(r, "fft-vs-scan(" + where + ")", relative_error(fft, scan), fft, scan, true);
  }
  r.note = std::to_string(trials) + " instances";
  r.settle();
  return r;
}

CheckReport check_cell_vjps(cells::CellKind kind, std::size_t hidden, std::size_t input, std::size_t batch,
                            std::uint64_t seed, double eps, double tolerance) {
  Rng rng(seed);
  cells::CellParams params = cells::CellParams::init(kind, hidden, input, rng);
  for (double& v : params.bias.values()) v = rng.uniform(-0.5, 0.5);
  const std::size_t width = cells::state_width(kind, hidden);
  Tensor2 x = random_tensor(batch, input, rng);
  Tensor2 prev = random_tensor(batch, width, rng, -0.9, 0.9);
  const Tensor2 w = random_tensor(batch, width, rng);

  auto loss = [&] { return dot(w, cells::cell_forward(params, x, unpack_state(kind, prev, hidden)).output); };
  const auto step = cells::cell_forward(params, x, unpack_state(kind, prev, hidden));

  CheckReport r;
  r.name = std::string("cell_vjps_") + std::string(cells::to_string(kind));
  r.tolerance = tolerance;

  const Tensor2 dh = cells::cell_vjp_hidden(params, step.cache, w);
  const Tensor2 dx = cells::cell_vjp_input(params, step.cache, w);
  cells::CellParams dp = cells::CellParams::zeros(kind, hidden, input);
  cells::cell_vjp_params(params, step.cache, w, dp);

  const auto fd = finite_diff_grads(loss, {&prev, &x, &params.w_in, &params.w_rec, &params.bias}, eps);
  record(r, "state", relative_error(dh, fd[0]), dh, fd[0], false);
  record(r, "input", relative_error(dx, fd[1]), dx, fd[1], false);
  record(r, "w_in", relative_error(dp.w_in, fd[2]), dp.w_in, fd[2], false);
  record(r, "w_rec", relative_error(dp.w_rec, fd[3]), dp.w_rec, fd[3], false);
  record(r, "bias", relative_error(dp.bias, fd[4]), dp.bias, fd[4], false);
  r.settle();
  return r;
}

model::ModelParams random_model(const ModelCheckConfig& cfg) {
  model::ModelParams p = model::init_params(model_config(cfg));
  // Non-trivial biases and norm parameters so every path carries gradient.
  Rng rng(cfg.seed + 1);
  p.weights.for_each_tensor([&](const std::string& name, Tensor2& t) {
    if (name.find("bias") != std::string::npos || name.find("gain") != std::string::npos) {
      for (double& v : t.values()) v += rng.uniform(-0.3, 0.3);
    }
  });
  return p;
}

Batch random_batch(std::size_t batch, std::size_t steps, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  Batch b{TokenGrid(batch, steps), TokenGrid(batch, steps)};
  for (auto& id : b.inputs.ids) id = static_cast<TokenId>(rng.below(vocab));
  for (auto& id : b.targets.ids) id = static_cast<TokenId>(rng.below(vocab));
  return b;
}

CheckReport check_model_gradients(const ModelCheckConfig& cfg) {
  const auto params = random_model(cfg);
  const Batch batch = random_batch(cfg.batch, cfg.steps, cfg.vocab, cfg.seed + 2);
  const auto fwd = model::forward(params, batch.inputs);
  const auto loss = model::loss_and_errors(fwd.logits, batch.targets);
  const auto analytic = model::backward(params, fwd.trace, loss.dlogits, model::EngineKind::Bptt);

  const auto fd = finite_diff_loss_grad(params, batch, cfg.eps);
  CheckReport r = compare_grads(std::string("model_gradients_") + std::string(cells::to_string(cfg.kind)) +
                                    (cfg.transformer_like ? "_transformer_like" : ""),
                                analytic, fd, cfg.tolerance);
  r.note = "eps=" + fmt(cfg.eps);
  if (cfg.richardson) {
    const auto coarse = finite_diff_loss_grad(params, batch, 10.0 * cfg.eps);
    const CheckReport rc = compare_grads("coarse", analytic, coarse, cfg.tolerance);
    // Central differences converge as eps^2 until round-off takes over, so the
    // test is skipped once the worst entry is at the round-off level of the loss.
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss.mean_nll)) / cfg.eps;
    const bool consistent = r.max_err <= rc.max_err || std::abs(r.analytic - r.oracle) < roundoff;
    r.note += " err(eps)=" + fmt(r.max_err) + " err(10eps)=" + fmt(rc.max_err) +
              (consistent ? " converging" : " NOT converging");
    r.pass = r.pass && consistent;
  }
  return r;
}

CheckReport check_model_backends(const ModelCheckConfig& cfg, double tolerance) {
  const auto params = random_model(cfg);
  const Batch batch = random_batch(cfg.batch, cfg.steps, cfg.vocab, cfg.seed + 2);
  const auto fwd = model::forward(params, batch.inputs);
  const auto loss = model::loss_and_errors(fwd.logits, batch.targets);
  const auto seq = model::backward(params, fwd.trace, loss.dlogits, model::EngineKind::DsfSequential);
  const auto scan = model::backward(params, fwd.trace, loss.dlogits, model::EngineKind::DsfScan);
  const auto fft = model::backward(params, fwd.trace, loss.dlogits, model::EngineKind::DsfFft);

  CheckReport r;
  r.name = std::string("model_backends_") + std::string(cells::to_string(cfg.kind));
  r.metric = "absolute";
  r.tolerance = tolerance;
  const auto names = tensor_names(seq);
  std::vector<const Tensor2*> ts, tc, tf;
  seq.for_each_tensor([&](const std::string&, const Tensor2& t) { ts.push_back(&t); });
  scan.for_each_tensor([&](const std::string&, const Tensor2& t) { tc.push_back(&t); });
  fft.for_each_tensor([&](const std::string&, const Tensor2& t) { tf.push_back(&t); });
  for (std::size_t i = 0; i < ts.size(); ++i) {
    record(r, "scan:" + names[i], relative_error(*tc[i], *ts[i]), *tc[i], *ts[i], true);
    record(r, "fft:" + names[i], relative_error(*tf[i], *ts[i]), *tf[i], *ts[i], true);
  }
  r.settle();
  return r;
}

CheckReport check_zero_feedback(const ModelCheckConfig& cfg, model::EngineKind engine, double tolerance) {
  if (!feedback::is_dsf(engine)) throw ShapeError("check_zero_feedback: engine must be a DSF backend");
  auto params = random_model(cfg);
  for (auto& a : params.feedback) std::fill(a.diag.begin(), a.diag.end(), 0.0);
  const Batch batch = random_batch(cfg.batch, cfg.steps, cfg.vocab, cfg.seed + 2);
  const auto fwd = model::forward(params, batch.inputs);
  const auto loss = model::loss_and_errors(fwd.logits, batch.targets);
  const auto ft = model::backward(params, fwd.trace, loss.dlogits, model::EngineKind::FtBptt);
  const auto dsf = model::backward(params, fwd.trace, loss.dlogits, engine);

  CheckReport r;
  r.name = "zero_feedback_" + std::string(feedback::to_string(engine)) + "_" + std::string(cells::to_string(cfg.kind));
  r.metric = "absolute";
  r.tolerance = tolerance;
  const auto names = tensor_names(ft);
  std::vector<const Tensor2*> td, tt;
  dsf.for_each_tensor([&](const std::string&, const Tensor2& t) { td.push_back(&t); });
  ft.for_each_tensor([&](const std::string&, const Tensor2& t) { tt.push_back(&t); });
  for (std::size_t i = 0; i < td.size(); ++i) record(r, names[i], relative_error(*td[i], *tt[i]), *td[i], *tt[i], true);
  r.settle();
  return r;
}

CheckReport check_terminal_condition(const ModelCheckConfig& cfg) {
  const auto params = random_model(cfg);
  const Batch batch = random_batch(cfg.batch, cfg.steps, cfg.vocab, cfg.seed + 2);
  const auto fwd = model::forward(params, batch.inputs);
  const auto& layer = fwd.trace.layers.front();
  const auto& cell = params.weights.layers.front().cell;
  const std::size_t width = cells::state_width(cfg.kind, cfg.hidden);
  Rng rng(cfg.seed + 3);
  const Tensor2 errors = random_tensor(cfg.steps, cfg.batch * width, rng);

  CheckReport r;
  r.name = std::string("terminal_condition_") + std::string(cells::to_string(cfg.kind));
  r.metric = "absolute";
  r.tolerance = 0.0;
  feedback::DsfKernelCache cache(params.feedback.front());
  for (auto engine : {model::EngineKind::Bptt, model::EngineKind::DsfSequential, model::EngineKind::DsfScan,
                      model::EngineKind::DsfFft, model::EngineKind::FtBptt}) {
    const auto g =
        feedback::hidden_grads(engine, errors, params.feedback.front(), layer.run.caches, cell,
                               engine == model::EngineKind::DsfFft ? &cache : nullptr);
    const auto last = g.row(cfg.steps - 1);
    const auto want = errors.row(cfg.steps - 1);
    ++r.cases;
    if (std::memcmp(last.data(), want.data(), want.size_bytes()) != 0) {
      r.pass = false;
      r.max_err = std::max(r.max_err, 1.0);
      r.worst_tensor = std::string(feedback::to_string(engine));
    }
  }
  r.note = "bitwise comparison of g[T-1] and e[T-1]";
  return r;
}

}  // namespace dsf::gradcheck
