#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "dsf/error.hpp"
#include "dsf/gradcheck.hpp"
#include "dsf/model.hpp"
#include "dsf/optim.hpp"

namespace {

using namespace dsf::optim;
using dsf::numerics::Tensor2;

struct Single {
  Tensor2 theta;
  Tensor2 grad;
  AdamState state;

  explicit Single(std::vector<double> values) : theta(1, values.size(), values), grad(1, values.size()) {
    const Tensor2* p[] = {&theta};
    state = AdamState::for_tensors(p);
  }
  void step(double lr, double wd, const AdamConfig& cfg = {}) {
    const NamedTensor params[] = {{"theta", &theta}};
    const Tensor2* grads[] = {&grad};
    adam_step(params, grads, state, lr, wd, cfg);
  }
};

TEST(Adam, UnitGradientMovesByLearningRate) {
  Single s({0.5, -2.0});
  s.grad.fill(1.0);
  s.step(1e-3, 0.0);
  // bias-corrected m and v are both 1, so the move is lr / (1 + eps)
  const double move = 1e-3 / (1.0 + AdamConfig{}.eps);
  EXPECT_NEAR(s.theta(0, 0), 0.5 - move, 1e-16);
  EXPECT_NEAR(s.theta(0, 1), -2.0 - move, 1e-15);
  EXPECT_EQ(s.state.step, 1u);
}

TEST(Adam, DecayOnlyShrinksMultiplicatively) {
  Single s({3.0, -4.0});
  s.step(0.01, 0.1);
  EXPECT_DOUBLE_EQ(s.theta(0, 0), 3.0 * (1.0 - 0.01 * 0.1));
  EXPECT_DOUBLE_EQ(s.theta(0, 1), -4.0 * (1.0 - 0.01 * 0.1));
}

TEST(Adam, SignEquivariant) {
  Single a({0.2, 0.7, -0.3}), b({-0.2, -0.7, 0.3});
  const double g[][3] = {{0.5, -1.0, 2.0}, {0.1, 0.3, -0.2}, {-1.5, 0.0, 0.4}};
  for (const auto& row : g) {
    for (int i = 0; i < 3; ++i) {
      a.grad(0, i) = row[i];
      b.grad(0, i) = -row[i];
    }
    a.step(1e-2, 1e-3);
    b.step(1e-2, 1e-3);
  }
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.theta(0, i), -b.theta(0, i));
}

TEST(Adam, ScaleInvariantBeyondEpsilon) {
  Single a({1.0}), b({1.0});
  AdamConfig cfg;
  cfg.eps = 0.0;
  for (int k = 0; k < 5; ++k) {
    a.grad(0, 0) = 0.3 + 0.1 * k;
    b.grad(0, 0) = 1000.0 * (0.3 + 0.1 * k);
    a.step(1e-3, 0.0, cfg);
    b.step(1e-3, 0.0, cfg);
  }
  EXPECT_NEAR(a.theta(0, 0), b.theta(0, 0), 1e-15);
}

TEST(Adam, NonFiniteGradientLeavesParametersUntouched) {
  Single s({1.0, 2.0});
  s.grad(0, 1) = std::numeric_limits<double>::infinity();
  try {
    s.step(1e-3, 0.0);
    FAIL();
  } catch (const dsf::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
  EXPECT_EQ(s.theta(0, 0), 1.0);
  EXPECT_EQ(s.theta(0, 1), 2.0);
  EXPECT_EQ(s.state.step, 0u);
}

TEST(Adam, ShapeMismatchIsRejected) {
  Single s({1.0, 2.0});
  Tensor2 wrong(1, 3);
  const NamedTensor params[] = {{"theta", &s.theta}};
  const Tensor2* grads[] = {&wrong};
  EXPECT_THROW(adam_step(params, grads, s.state, 1e-3, 0.0), dsf::ShapeError);
}

TEST(Adam, ModelStepLeavesFeedbackAlone) {
  dsf::gradcheck::ModelCheckConfig cfg;
  auto params = dsf::gradcheck::random_model(cfg);
  const auto feedback = params.feedback;
  const auto before = params.weights;
  auto state = AdamState::for_model(params.weights);
  const auto batch = dsf::gradcheck::random_batch(cfg.batch, cfg.steps, cfg.vocab, 9);
  for (int i = 0; i < 3; ++i) {
    const auto fwd = dsf::model::forward(params, batch.inputs);
    const auto loss = dsf::model::loss_and_errors(fwd.logits, batch.targets);
    const auto grads = dsf::model::backward(params, fwd.trace, loss.dlogits, dsf::model::EngineKind::DsfSequential);
    adam_step(params.weights, grads, state, 1e-2, 1e-4);
  }
  ASSERT_EQ(params.feedback.size(), feedback.size());
  for (std::size_t l = 0; l < feedback.size(); ++l) EXPECT_EQ(params.feedback[l].diag, feedback[l].diag);
  EXPECT_FALSE(params.weights == before);
  EXPECT_EQ(state.step, 3u);
}

TEST(GradNorm, GlobalNormAndClipping) {
  dsf::gradcheck::ModelCheckConfig cfg;
  auto grads = dsf::gradcheck::random_model(cfg).weights.zeros_like();
  grads.head(0, 0) = 3.0;
  grads.embedding(1, 1) = 4.0;
  EXPECT_DOUBLE_EQ(grad_norm(grads), 5.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(grads, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(grads.head(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(grads, 1.0), 5.0);
  EXPECT_NEAR(grad_norm(grads), 1.0, 1e-15);
  EXPECT_NEAR(grads.head(0, 0), 0.6, 1e-15);
}

TEST(Schedule, StepMilestones) {
  ScheduleConfig s;
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(s, 9), 1e-3);
  EXPECT_NEAR(lr_at(s, 10), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 19), 1e-4, 1e-18);
  EXPECT_NEAR(lr_at(s, 20), 1e-5, 1e-19);
  EXPECT_NEAR(lr_at(s, 29), 1e-5, 1e-19);
}

TEST(Schedule, CosineEndpoints) {
  ScheduleConfig s;
  s.kind = ScheduleKind::Cosine;
  s.base_lr = 2e-3;
  s.total_steps = 100;
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 2e-3);
  EXPECT_NEAR(lr_at(s, 50), 1e-3, 1e-18);
  EXPECT_EQ(lr_at(s, 100), 0.0);
  EXPECT_EQ(lr_at(s, 1000), 0.0);
  for (std::size_t k = 1; k < 100; ++k) EXPECT_LE(lr_at(s, k), lr_at(s, k - 1));
}

}  // namespace
