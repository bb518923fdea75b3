#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "dsf/error.hpp"
#include "dsf/gradcheck.hpp"

namespace {

using namespace dsf::gradcheck;
using dsf::numerics::Tensor2;

TEST(FiniteDiff, SquareAtThree) {
  const double d = central_difference([](double x) { return x * x; }, 3.0, 1e-4);
  EXPECT_NEAR(d, 6.0, 1e-7);
}

TEST(FiniteDiff, TensorGradientsAndExactRestore) {
  Tensor2 a = Tensor2::from_rows({{0.3, -1.2}, {2.0, 0.1}});
  Tensor2 b = Tensor2::from_rows({{0.7, 1e-3, -5.0}});
  const Tensor2 a0 = a, b0 = b;
  const auto loss = [&] {
    double s = 0.0;
    for (double v : a.values()) s += std::sin(v);
    for (double v : b.values()) s += v * v * v;
    return s;
  };
  const auto g = finite_diff_grads(loss, {&a, &b}, 1e-5);
  ASSERT_EQ(g.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(g[0].data()[i], std::cos(a0.data()[i]), 1e-9);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(g[1].data()[i], 3 * b0.data()[i] * b0.data()[i], 1e-8);
  EXPECT_EQ(0, std::memcmp(a.data(), a0.data(), a.size() * sizeof(double)));
  EXPECT_EQ(0, std::memcmp(b.data(), b0.data(), b.size() * sizeof(double)));
}

TEST(FiniteDiff, NondeterministicLossIsRejected) {
  Tensor2 a(1, 1, 1.0);
  double drift = 0.0;
  const auto loss = [&] { return a(0, 0) + (drift += 1e-9); };
  EXPECT_THROW(finite_diff_grads(loss, {&a}, 1e-5), dsf::NumericError);
}

TEST(RelativeError, MaxNormDefinition) {
  const Tensor2 x = Tensor2::from_rows({{1.0, -4.0, 2.0}});
  const Tensor2 y = Tensor2::from_rows({{1.0, -4.0, 2.5}});
  const auto e = relative_error(x, y);
  EXPECT_DOUBLE_EQ(e.abs, 0.5);
  EXPECT_DOUBLE_EQ(e.rel, 0.5 / 4.0);
  EXPECT_EQ(e.index, 2u);
  EXPECT_EQ(relative_error(Tensor2(1, 2), Tensor2(1, 2)).rel, 0.0);
  EXPECT_THROW(relative_error(Tensor2(1, 2), Tensor2(2, 1)), dsf::ShapeError);
}

TEST(CheckReport, SettleAbsorbAndSummary) {
  CheckReport a;
  a.name = "x";
  a.tolerance = 1e-5;
  a.max_err = 1e-6;
  a.settle();
  EXPECT_TRUE(a.pass);
  CheckReport b = a;
  b.max_err = 1e-3;
  b.worst_tensor = "head";
  a.absorb(b);
  a.settle();
  EXPECT_FALSE(a.pass);
  EXPECT_EQ(a.worst_tensor, "head");
  const std::string line = a.summary_line();
  EXPECT_EQ(line.rfind("check:x pass:0", 0), 0u) << line;
  EXPECT_NE(line.find("worst:head"), std::string::npos);
}

TEST(LinearDiagCell, ForwardRecurrence) {
  const LinearDiagCell cell{{0.5}};
  const Tensor2 h = cell.forward(Tensor2::from_rows({{1.0}, {1.0}, {1.0}}));
  EXPECT_EQ(h, Tensor2::from_rows({{1.0}, {1.5}, {1.75}}));
}

TEST(Exactness, PassesAndNegativeControlFails) {
  for (std::size_t d : {1u, 16u}) {
    for (std::size_t T : {1u, 64u}) {
      const auto ok = check_dsf_exactness(d, T, 5);
      EXPECT_TRUE(ok.pass) << ok.text();
      EXPECT_LE(ok.max_err, 1e-12);
    }
  }
  const auto bad = check_dsf_exactness(16, 64, 5, true);
  EXPECT_FALSE(bad.pass) << bad.text();
  EXPECT_GT(bad.max_err, 1e-3);
}

TEST(Consistency, BackendsAgreeOnRandomInstances) {
  const auto r = check_engine_consistency({1, 3, 16}, {1, 7, 100}, 10, 3);
  EXPECT_TRUE(r.pass) << r.text();
  EXPECT_EQ(r.cases, 30u);  // three backend pairs per instance
  EXPECT_EQ(r.metric, "absolute");
}

TEST(ModelChecks, BackendsTerminalRowAndZeroFeedback) {
  ModelCheckConfig cfg;
  cfg.kind = dsf::cells::CellKind::LSTM;
  EXPECT_TRUE(check_model_backends(cfg).pass);
  EXPECT_TRUE(check_terminal_condition(cfg).pass);
  EXPECT_TRUE(check_zero_feedback(cfg, dsf::model::EngineKind::DsfScan).pass);
  EXPECT_THROW(check_zero_feedback(cfg, dsf::model::EngineKind::Bptt), dsf::ShapeError);
}

TEST(ModelChecks, DetectsWrongGradient) {
  ModelCheckConfig cfg;
  cfg.hidden = 3;
  cfg.steps = 4;
  const auto params = random_model(cfg);
  const auto batch = random_batch(cfg.batch, cfg.steps, cfg.vocab, cfg.seed);
  auto oracle = finite_diff_loss_grad(params, batch, cfg.eps);
  auto wrong = oracle;
  wrong.head(0, 0) += 0.1;
  EXPECT_TRUE(compare_grads("same", oracle, oracle, 1e-12).pass);
  const auto r = compare_grads("wrong", wrong, oracle, 1e-5);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.worst_tensor, "head");
}

TEST(RandomBatch, SeededAndInRange) {
  const auto a = random_batch(3, 5, 7, 11), b = random_batch(3, 5, 7, 11);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  for (auto id : a.inputs.ids) EXPECT_LT(id, 7);
}

}  // namespace
