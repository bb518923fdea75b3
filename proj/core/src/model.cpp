#include "dsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsf/error.hpp"
#include "dsf/linalg.hpp"
#include "dsf/rng.hpp"

namespace dsf::model {
namespace {

using numerics::gemm_into;
using numerics::Trans;

constexpr double kNormEps = 1e-5;
constexpr std::uint64_t kFeedbackStream = 0x9E3779B97F4A7C15ULL;

void fill_uniform(Tensor2& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

Tensor2 ones_row(std::size_t n) { return Tensor2(1, n, 1.0); }

void add_bias_rows(Tensor2& x, const Tensor2& bias) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double* row = x.row(r).data();
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] += bias(0, j);
  }
}

// y = gain * (x - mean) / sqrt(var + eps) + bias, per row.
Tensor2 layer_norm(const Tensor2& x, const Tensor2& gain, const Tensor2& bias, NormCache& cache) {
  const std::size_t n = x.cols();
  cache.xhat = Tensor2(x.rows(), n);
  cache.inv_std = Tensor2(x.rows(), 1);
  Tensor2 y(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    cache.inv_std(r, 0) = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * inv;
      cache.xhat(r, j) = xh;
      y(r, j) = gain(0, j) * xh + bias(0, j);
    }
  }
  return y;
}

Tensor2 layer_norm_backward(const Tensor2& dy, const Tensor2& gain, const NormCache& cache, Tensor2& dgain,
                            Tensor2& dbias) {
  const std::size_t n = dy.cols();
  Tensor2 dx(dy.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double g = dy(r, j);
      const double xh = cache.xhat(r, j);
      dgain(0, j) += g * xh;
      dbias(0, j) += g;
      dxhat[j] = g * gain(0, j);
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xh;
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    const double inv = cache.inv_std(r, 0);
    for (std::size_t j = 0; j < n; ++j) dx(r, j) = inv * (dxhat[j] - mean_d - cache.xhat(r, j) * mean_dx);
  }
  return dx;
}

// tanh-approximated GELU
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b, Trans tb = Trans::No) {
  Tensor2 c(a.rows(), tb == Trans::No ? b.cols() : b.rows());
  gemm_into(a, Trans::No, b, tb, c);
  return c;
}

void check_trace(const ModelParams& params, const ForwardTrace& trace, const Tensor2& dlogits) {
  const auto& cfg = params.config;
  if (trace.layers.size() != cfg.num_layers) throw ShapeError("backward: trace layer count does not match model");
  if (dlogits.rows() != trace.batch * trace.steps || dlogits.cols() != cfg.vocab_size) {
    throw ShapeError("backward: dlogits are " + dlogits.shape_string() + ", expected " +
                     std::to_string(trace.batch * trace.steps) + "x" + std::to_string(cfg.vocab_size));
  }
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& lt = trace.layers[l];
    if (lt.run.caches.size() != trace.steps || lt.input.rows() != trace.batch * trace.steps ||
        lt.input.cols() != cfg.hidden) {
      throw ShapeError("backward: trace of layer " + std::to_string(l) + " does not match the model");
    }
    if (!lt.run.caches.empty() && lt.run.caches.front().kind != cfg.cell_kind) {
      throw ShapeError("backward: trace was recorded with a different cell kind");
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ShapeError("model config: " + what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (hidden < 1) fail("hidden dimension d must be >= 1");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (context < 1) fail("context length T must be >= 1");
}

void ModelWeights::for_each_tensor(const std::function<void(const std::string&, Tensor2&)>& fn) {
  auto visit = [&](const std::string& name, Tensor2& t) {
    if (!t.empty()) fn(name, t);
  };
  visit("embedding", embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerWeights& lw = layers[l];
    lw.cell.for_each_tensor([&](const char* name, Tensor2& t) { visit(p + "cell." + name, t); });
    visit(p + "proj", lw.proj);
    visit(p + "norm1_gain", lw.norm1_gain);
    visit(p + "norm1_bias", lw.norm1_bias);
    visit(p + "norm2_gain", lw.norm2_gain);
    visit(p + "norm2_bias", lw.norm2_bias);
    visit(p + "ff_in", lw.ff_in);
    visit(p + "ff_in_bias", lw.ff_in_bias);
    visit(p + "ff_out", lw.ff_out);
    visit(p + "ff_out_bias", lw.ff_out_bias);
  }
  visit("final_norm_gain", final_norm_gain);
  visit("final_norm_bias", final_norm_bias);
  visit("head", head);
  visit("head_bias", head_bias);
}

void ModelWeights::for_each_tensor(const std::function<void(const std::string&, const Tensor2&)>& fn) const {
  const_cast<ModelWeights*>(this)->for_each_tensor(
      [&](const std::string& name, Tensor2& t) { fn(name, static_cast<const Tensor2&>(t)); });
}

ModelWeights ModelWeights::zeros_like() const {
  ModelWeights z = *this;
  z.for_each_tensor([](const std::string&, Tensor2& t) { t.fill(0.0); });
  return z;
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Tensor2& t) { n += t.size(); });
  return n;
}

bool operator==(const ModelWeights& a, const ModelWeights& b) {
  std::vector<const Tensor2*> ta;
  std::vector<const Tensor2*> tb;
  a.for_each_tensor([&](const std::string&, const Tensor2& t) { ta.push_back(&t); });
  b.for_each_tensor([&](const std::string&, const Tensor2& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden;
  const std::size_t v = config.vocab_size;
  Rng rng(config.seed);
  ModelParams p;
  p.config = config;
  ModelWeights& w = p.weights;

  w.embedding = Tensor2(v, d);
  fill_uniform(w.embedding, 0.1, rng);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LayerWeights lw;
    lw.cell = cells::CellParams::init(config.cell_kind, d, d, rng);
    if (config.cell_kind == CellKind::LSTM) {
      lw.proj = Tensor2(2 * d, d);
      fill_uniform(lw.proj, 1.0 / std::sqrt(2.0 * static_cast<double>(d)), rng);
    }
    if (config.transformer_like) {
      lw.norm1_gain = ones_row(d);
      lw.norm1_bias = Tensor2(1, d);
      lw.norm2_gain = ones_row(d);
      lw.norm2_bias = Tensor2(1, d);
      lw.ff_in = Tensor2(d, 4 * d);
      lw.ff_in_bias = Tensor2(1, 4 * d);
      lw.ff_out = Tensor2(4 * d, d);
      lw.ff_out_bias = Tensor2(1, d);
      fill_uniform(lw.ff_in, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      fill_uniform(lw.ff_out, 1.0 / std::sqrt(4.0 * static_cast<double>(d)), rng);
    }
    w.layers.push_back(std::move(lw));
  }
  if (config.transformer_like) {
    w.final_norm_gain = ones_row(d);
    w.final_norm_bias = Tensor2(1, d);
  }
  w.head = Tensor2(d, v);
  fill_uniform(w.head, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  w.head_bias = Tensor2(1, v);

  // Separate stream: A depends on the seed and layer widths only.
  Rng fb_rng(config.seed ^ kFeedbackStream);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    p.feedback.push_back(feedback::FeedbackMatrix::sample(cells::state_width(config.cell_kind, d), fb_rng));
  }
  return p;
}

ForwardResult forward(const ModelParams& params, const TokenGrid& tokens) {
  const ModelConfig& cfg = params.config;
  const ModelWeights& w = params.weights;
  const std::size_t batch = tokens.batch;
  const std::size_t steps = tokens.steps;
  const std::size_t d = cfg.hidden;
  if (batch == 0 || steps == 0 || tokens.ids.size() != batch * steps) {
    throw ShapeError("forward: token grid must be non-empty B x T");
  }

  ForwardResult res;
  ForwardTrace& tr = res.trace;
  tr.batch = batch;
  tr.steps = steps;
  tr.tokens = tokens;

  Tensor2 x(steps * batch, d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const TokenId id = tokens.at(b, t);
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
        throw ShapeError("forward: token " + std::to_string(id) + " at position (batch " + std::to_string(b) +
                         ", step " + std::to_string(t) + ") is outside the vocabulary of size " +
                         std::to_string(cfg.vocab_size));
      }
      std::copy_n(w.embedding.row(static_cast<std::size_t>(id)).data(), d, x.row(t * batch + b).data());
    }
  }

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerTrace lt;
    lt.input = x;
    Tensor2 cell_in = cfg.transformer_like ? layer_norm(x, lw.norm1_gain, lw.norm1_bias, lt.norm1) : x;
    lt.run = cells::run_layer(lw.cell, cell_in, steps, batch);
    Tensor2 y = cfg.cell_kind == CellKind::LSTM ? matmul(lt.run.outputs, lw.proj) : lt.run.outputs;
    if (cfg.transformer_like) {
      numerics::add_inplace(y, x);  // v = u + rnn
      lt.norm2_out = layer_norm(y, lw.norm2_gain, lw.norm2_bias, lt.norm2);
      lt.ff_pre = matmul(lt.norm2_out, lw.ff_in);
      add_bias_rows(lt.ff_pre, lw.ff_in_bias);
      lt.ff_act = Tensor2(lt.ff_pre.rows(), lt.ff_pre.cols());
      for (std::size_t i = 0; i < lt.ff_pre.size(); ++i) lt.ff_act.data()[i] = gelu(lt.ff_pre.data()[i]);
      gemm_into(lt.ff_act, Trans::No, lw.ff_out, Trans::No, y, 1.0, 1.0);
      add_bias_rows(y, lw.ff_out_bias);
    } else if (cfg.skip_connections) {
      numerics::add_inplace(y, x);
    }
    tr.layers.push_back(std::move(lt));
    x = std::move(y);
  }

  tr.head_input = cfg.transformer_like ? layer_norm(x, w.final_norm_gain, w.final_norm_bias, tr.final_norm) : x;
  res.logits = matmul(tr.head_input, w.head);
  add_bias_rows(res.logits, w.head_bias);
  return res;
}

LossResult loss_and_errors(const Tensor2& logits, const TokenGrid& targets) {
  const std::size_t batch = targets.batch;
  const std::size_t steps = targets.steps;
  const std::size_t vocab = logits.cols();
  if (logits.rows() != batch * steps || targets.ids.size() != batch * steps) {
    throw ShapeError("loss_and_errors: logits " + logits.shape_string() + " do not match targets " +
                     std::to_string(batch) + "x" + std::to_string(steps));
  }
  LossResult res;
  res.dlogits = Tensor2(logits.rows(), vocab);
  const double scale = 1.0 / static_cast<double>(batch * steps);
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r = t * batch + b;
      const TokenId target = targets.at(b, t);
      if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
        throw ShapeError("loss_and_errors: target " + std::to_string(target) + " at (batch " + std::to_string(b) +
                         ", step " + std::to_string(t) + ") is out of range");
      }
      const auto row = logits.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - mx);
      const double log_z = mx + std::log(sum);
      total += log_z - row[static_cast<std::size_t>(target)];
      auto drow = res.dlogits.row(r);
      for (std::size_t j = 0; j < vocab; ++j) drow[j] = std::exp(row[j] - log_z) * scale;
      drow[static_cast<std::size_t>(target)] -= scale;
    }
  }
  res.mean_nll = total * scale;
  return res;
}

KernelCaches::KernelCaches(const ModelParams& params) {
  for (const auto& a : params.feedback) caches_.emplace_back(a);
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace, const Tensor2& dlogits, EngineKind engine,
                    KernelCaches* kernels) {
  check_trace(params, trace, dlogits);
  const ModelConfig& cfg = params.config;
  const ModelWeights& w = params.weights;
  const std::size_t batch = trace.batch;
  const std::size_t steps = trace.steps;
  ParamGrads grads = w.zeros_like();

  gemm_into(trace.head_input, Trans::Yes, dlogits, Trans::No, grads.head, 1.0, 1.0);
  numerics::accumulate_col_sums(dlogits, grads.head_bias.row(0));
  Tensor2 dy = matmul(dlogits, w.head, Trans::Yes);
  if (cfg.transformer_like) {
    dy = layer_norm_backward(dy, w.final_norm_gain, trace.final_norm, grads.final_norm_gain, grads.final_norm_bias);
  }

  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    const LayerWeights& lw = w.layers[l];
    LayerWeights& lg = grads.layers[l];
    const LayerTrace& lt = trace.layers[l];

    Tensor2 du;  // gradient reaching the layer input through same-step paths
    Tensor2 dr;  // gradient of the recurrent branch output
    if (cfg.transformer_like) {
      // y = v + W_out gelu(W_in norm2(v))
      gemm_into(lt.ff_act, Trans::Yes, dy, Trans::No, lg.ff_out, 1.0, 1.0);
      numerics::accumulate_col_sums(dy, lg.ff_out_bias.row(0));
      Tensor2 dpre = matmul(dy, lw.ff_out, Trans::Yes);
      for (std::size_t i = 0; i < dpre.size(); ++i) dpre.data()[i] *= gelu_grad(lt.ff_pre.data()[i]);
      gemm_into(lt.norm2_out, Trans::Yes, dpre, Trans::No, lg.ff_in, 1.0, 1.0);
      numerics::accumulate_col_sums(dpre, lg.ff_in_bias.row(0));
      Tensor2 dn2 = matmul(dpre, lw.ff_in, Trans::Yes);
      Tensor2 dv = layer_norm_backward(dn2, lw.norm2_gain, lt.norm2, lg.norm2_gain, lg.norm2_bias);
      numerics::add_inplace(dv, dy);
      dr = dv;
      du = std::move(dv);
    } else {
      dr = dy;
      du = cfg.skip_connections ? std::move(dy) : Tensor2(batch * steps, cfg.hidden);
    }

    Tensor2 dout;
    if (cfg.cell_kind == CellKind::LSTM) {
      gemm_into(lt.run.outputs, Trans::Yes, dr, Trans::No, lg.proj, 1.0, 1.0);
      dout = matmul(dr, lw.proj, Trans::Yes);
    } else {
      dout = std::move(dr);
    }

    const std::size_t width = cells::state_width(cfg.cell_kind, cfg.hidden);
    feedback::ErrorSeq errors = std::move(dout).reshaped(steps, batch * width);
    feedback::DsfKernelCache* kc = kernels ? &kernels->layer(l) : nullptr;
    const feedback::GradSeq g =
        feedback::hidden_grads(engine, std::move(errors), params.feedback[l], lt.run.caches, lw.cell, kc);
    Tensor2 dcell_in = cells::sequence_local_backward(lw.cell, lt.run.caches, g, &lg.cell, true);

    if (cfg.transformer_like) {
      dcell_in = layer_norm_backward(dcell_in, lw.norm1_gain, lt.norm1, lg.norm1_gain, lg.norm1_bias);
    }
    numerics::add_inplace(du, dcell_in);
    dy = std::move(du);
  }

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const auto id = static_cast<std::size_t>(trace.tokens.at(b, t));
      const double* src = dy.row(t * batch + b).data();
      double* dst = grads.embedding.row(id).data();
      for (std::size_t j = 0; j < cfg.hidden; ++j) dst[j] += src[j];
    }
  }
  return grads;
}

double evaluate_loss(const ModelParams& params, const Batch& batch) {
  return loss_and_errors(forward(params, batch.inputs).logits, batch.targets).mean_nll;
}

std::vector<TokenId> greedy_sample(const ModelParams& params, std::vector<TokenId> prompt, std::size_t count) {
  if (prompt.empty()) throw ShapeError("greedy_sample: empty prompt");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t window = std::min(prompt.size(), params.config.context);
    TokenGrid grid(1, window, std::vector<TokenId>(prompt.end() - static_cast<std::ptrdiff_t>(window), prompt.end()));
    const Tensor2 logits = forward(params, grid).logits;
    const auto last = logits.row(window - 1);
    prompt.push_back(static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin()));
  }
  return prompt;
}

}  // namespace dsf::model
