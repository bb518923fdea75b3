#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsf/model.hpp"
#include "dsf/tensor.hpp"

namespace dsf::optim {

using numerics::Tensor2;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor2> m;  // first moments, one per parameter tensor
  std::vector<Tensor2> v;  // second moments

  static AdamState for_tensors(std::span<const Tensor2* const> params);
  static AdamState for_model(const model::ModelWeights& weights);
};

struct NamedTensor {
  std::string name;
  Tensor2* tensor;
};

// Adam with bias correction and decoupled weight decay:
//   theta <- theta - lr * wd * theta, then theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
// Throws NumericError naming the tensor when a gradient is not finite; no
// parameter is touched in that case.
void adam_step(std::span<const NamedTensor> params, std::span<const Tensor2* const> grads, AdamState& state,
               double lr, double weight_decay, const AdamConfig& config = {});

// Model form. Feedback vectors live outside ModelWeights and are never updated.
void adam_step(model::ModelWeights& params, const model::ParamGrads& grads, AdamState& state, double lr,
               double weight_decay, const AdamConfig& config = {});

// Global L2 norm over all gradient tensors.
double grad_norm(const model::ParamGrads& grads);
// Rescales so the global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(model::ParamGrads& grads, double max_norm);

enum class ScheduleKind { Step, Cosine };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::Step;
  double base_lr = 1e-3;
  std::vector<std::size_t> milestones = {10, 20};
  double factor = 0.1;
  std::size_t total_steps = 0;  // Cosine horizon
};

// Step: base_lr * factor^(milestones passed); Cosine: base_lr * (1 + cos(pi s / total)) / 2,
// held at zero past the horizon.
double lr_at(const ScheduleConfig& schedule, std::size_t epoch_or_step);

}  // namespace dsf::optim
