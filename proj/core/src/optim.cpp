#include "dsf/optim.hpp"

#include <cmath>
#include <numbers>

#include "dsf/error.hpp"

namespace dsf::optim {
namespace {

std::vector<NamedTensor> named(model::ModelWeights& w) {
  std::vector<NamedTensor> out;
  w.for_each_tensor([&](const std::string& name, Tensor2& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<const Tensor2*> tensors_of(const model::ModelWeights& w) {
  std::vector<const Tensor2*> out;
  w.for_each_tensor([&](const std::string&, const Tensor2& t) { out.push_back(&t); });
  return out;
}

}  // namespace

AdamState AdamState::for_tensors(std::span<const Tensor2* const> params) {
  AdamState s;
  for (const Tensor2* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

AdamState AdamState::for_model(const model::ModelWeights& weights) {
  const auto ts = tensors_of(weights);
  return for_tensors(ts);
}

void adam_step(std::span<const NamedTensor> params, std::span<const Tensor2* const> grads, AdamState& state,
               double lr, double weight_decay, const AdamConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor2& p = *params[i].tensor;
    if (!p.same_shape(*grads[i]) || !p.same_shape(state.m[i]) || !p.same_shape(state.v[i])) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
    grads[i]->validate("gradient of " + params[i].name);
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].tensor->data();
    const double* g = grads[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const std::size_t n = params[i].tensor->size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] = p[k] * decay - lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void adam_step(model::ModelWeights& params, const model::ParamGrads& grads, AdamState& state, double lr,
               double weight_decay, const AdamConfig& config) {
  const auto ps = named(params);
  const auto gs = tensors_of(grads);
  adam_step(ps, gs, state, lr, weight_decay, config);
}

double grad_norm(const model::ParamGrads& grads) {
  double sq = 0.0;
  grads.for_each_tensor([&](const std::string&, const Tensor2& t) {
    for (double v : t.values()) sq += v * v;
  });
  return std::sqrt(sq);
}

double clip_grad_norm(model::ParamGrads& grads, double max_norm) {
  const double norm = grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    grads.for_each_tensor([&](const std::string&, Tensor2& t) { numerics::scale_inplace(t, s); });
  }
  return norm;
}

double lr_at(const ScheduleConfig& schedule, std::size_t epoch_or_step) {
  switch (schedule.kind) {
    case ScheduleKind::Step: {
      double lr = schedule.base_lr;
      for (std::size_t m : schedule.milestones) {
        if (epoch_or_step >= m) lr *= schedule.factor;
      }
      return lr;
    }
    case ScheduleKind::Cosine: {
      if (schedule.total_steps == 0) return schedule.base_lr;
      if (epoch_or_step >= schedule.total_steps) return 0.0;
      const double frac = static_cast<double>(epoch_or_step) / static_cast<double>(schedule.total_steps);
      return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    }
  }
  return schedule.base_lr;
}

}  // namespace dsf::optim
