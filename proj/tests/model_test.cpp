#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "dsf/cells.hpp"
#include "dsf/error.hpp"
#include "dsf/gradcheck.hpp"
#include "dsf/model.hpp"

namespace {

using namespace dsf::model;
using dsf::numerics::Tensor2;

ModelConfig small_config(CellKind kind = CellKind::GRU) {
  ModelConfig c;
  c.cell_kind = kind;
  c.num_layers = 2;
  c.hidden = 5;
  c.vocab_size = 9;
  c.context = 6;
  c.seed = 3;
  return c;
}

TEST(Model, ConfigValidation) {
  ModelConfig c = small_config();
  c.hidden = 0;
  EXPECT_THROW(init_params(c), dsf::ShapeError);
  c = small_config();
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), dsf::ShapeError);
  c = small_config();
  c.num_layers = 0;
  EXPECT_THROW(c.validate(), dsf::ShapeError);
}

TEST(Model, InitIsSeededAndFeedbackSized) {
  for (CellKind k : {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM}) {
    const auto a = init_params(small_config(k));
    const auto b = init_params(small_config(k));
    EXPECT_TRUE(a.weights == b.weights);
    ASSERT_EQ(a.feedback.size(), 2u);
    EXPECT_EQ(a.feedback[0].size(), dsf::cells::state_width(k, 5));
    EXPECT_EQ(a.feedback[0].diag, b.feedback[0].diag);
    for (double v : a.feedback[1].diag) {
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    for (double v : a.weights.embedding.values()) EXPECT_LE(std::abs(v), 0.1);
  }
  ModelConfig c = small_config();
  c.seed = 4;
  EXPECT_FALSE(init_params(c).weights == init_params(small_config()).weights);
}

TEST(Model, TensorVisitOrderAndCounts) {
  const auto p = init_params(small_config(CellKind::LSTM));
  std::vector<std::string> names;
  std::size_t total = 0;
  p.weights.for_each_tensor([&](const std::string& n, const Tensor2& t) {
    names.push_back(n);
    total += t.size();
  });
  EXPECT_EQ(names.front(), "embedding");
  EXPECT_EQ(names[1], "layers.0.cell.w_in");
  EXPECT_EQ(names[4], "layers.0.proj");
  EXPECT_EQ(names.back(), "head_bias");
  EXPECT_EQ(total, p.weights.parameter_count());
  const auto z = p.weights.zeros_like();
  z.for_each_tensor([](const std::string&, const Tensor2& t) { EXPECT_EQ(dsf::numerics::max_abs(t), 0.0); });
}

TEST(Model, ForwardShapesAndTokenRange) {
  const auto p = init_params(small_config());
  const auto batch = dsf::gradcheck::random_batch(3, 4, 9, 1);
  const auto res = forward(p, batch.inputs);
  EXPECT_EQ(res.logits.rows(), 12u);
  EXPECT_EQ(res.logits.cols(), 9u);
  dsf::TokenGrid bad = batch.inputs;
  bad.at(1, 2) = 9;
  try {
    forward(p, bad);
    FAIL();
  } catch (const dsf::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 1"), std::string::npos);
  }
}

TEST(Model, UniformLogitsGiveLogVocab) {
  const Tensor2 logits(6, 10, 0.7);
  dsf::TokenGrid targets(2, 3, {0, 3, 9, 1, 2, 5});
  const auto loss = loss_and_errors(logits, targets);
  EXPECT_NEAR(loss.mean_nll, std::log(10.0), 1e-14);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (double v : loss.dlogits.row(r)) s += v;
    EXPECT_NEAR(s, 0.0, 1e-16);
  }
  // row t*B + b holds target (b, t)
  EXPECT_NEAR(loss.dlogits(1, 1), (0.1 - 1.0) / 6.0, 1e-16);
}

TEST(Model, FreshModelWithUniformHeadHasPerplexityVocab) {
  ModelConfig c = small_config();
  c.vocab_size = 10;
  auto p = init_params(c);
  p.weights.head.fill(0.0);
  p.weights.head_bias.fill(0.0);
  const auto batch = dsf::gradcheck::random_batch(2, 5, 10, 4);
  EXPECT_NEAR(std::exp(evaluate_loss(p, batch)), 10.0, 1e-12);
}

TEST(Model, LossIsFiniteAndStableUnderLargeLogits) {
  Tensor2 logits(2, 3);
  logits(0, 0) = 1000.0;
  logits(1, 2) = -1000.0;
  const auto loss = loss_and_errors(logits, dsf::TokenGrid(1, 2, {0, 2}));
  EXPECT_TRUE(std::isfinite(loss.mean_nll));
  EXPECT_TRUE(loss.dlogits.all_finite());
}

TEST(Model, BpttGradientsMatchFiniteDifferences) {
  for (CellKind k : {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM}) {
    dsf::gradcheck::ModelCheckConfig cfg;
    cfg.kind = k;
    cfg.hidden = 4;
    cfg.steps = 5;
    const auto report = dsf::gradcheck::check_model_gradients(cfg);
    EXPECT_TRUE(report.pass) << report.text();
  }
}

TEST(Model, TransformerLikeGradientsMatchFiniteDifferences) {
  dsf::gradcheck::ModelCheckConfig cfg;
  cfg.transformer_like = true;
  cfg.hidden = 4;
  cfg.steps = 4;
  const auto report = dsf::gradcheck::check_model_gradients(cfg);
  EXPECT_TRUE(report.pass) << report.text();
}

TEST(Model, NoSkipGradientsMatchFiniteDifferences) {
  dsf::gradcheck::ModelCheckConfig cfg;
  cfg.skip_connections = false;
  cfg.kind = CellKind::LSTM;
  cfg.hidden = 3;
  cfg.steps = 4;
  const auto report = dsf::gradcheck::check_model_gradients(cfg);
  EXPECT_TRUE(report.pass) << report.text();
}

TEST(Model, ZeroFeedbackEqualsTruncated) {
  dsf::gradcheck::ModelCheckConfig cfg;
  for (CellKind k : {CellKind::GRU, CellKind::LSTM}) {
    cfg.kind = k;
    EXPECT_TRUE(dsf::gradcheck::check_zero_feedback(cfg, EngineKind::DsfSequential, 0.0).pass);
    EXPECT_TRUE(dsf::gradcheck::check_zero_feedback(cfg, EngineKind::DsfScan, 0.0).pass);
    EXPECT_TRUE(dsf::gradcheck::check_zero_feedback(cfg, EngineKind::DsfFft, 1e-12).pass);
  }
}

TEST(Model, EnginesDifferOnlyInTemporalGradient) {
  const auto p = init_params(small_config());
  const auto batch = dsf::gradcheck::random_batch(2, 6, 9, 2);
  const auto fwd = forward(p, batch.inputs);
  const auto loss = loss_and_errors(fwd.logits, batch.targets);
  const auto bptt = backward(p, fwd.trace, loss.dlogits, EngineKind::Bptt);
  const auto dsf = backward(p, fwd.trace, loss.dlogits, EngineKind::DsfSequential);
  const auto ft = backward(p, fwd.trace, loss.dlogits, EngineKind::FtBptt);
  // the head sees only local errors
  EXPECT_EQ(bptt.head, dsf.head);
  EXPECT_EQ(bptt.head, ft.head);
  EXPECT_FALSE(bptt.layers[1].cell.w_rec == ft.layers[1].cell.w_rec);
  EXPECT_FALSE(dsf.layers[1].cell.w_rec == ft.layers[1].cell.w_rec);
}

TEST(Model, DsfAndTruncatedNeverCallHiddenVjp) {
  const auto p = init_params(small_config(CellKind::LSTM));
  const auto batch = dsf::gradcheck::random_batch(2, 6, 9, 3);
  const auto fwd = forward(p, batch.inputs);
  const auto loss = loss_and_errors(fwd.logits, batch.targets);
  KernelCaches kernels(p);
  for (EngineKind e : {EngineKind::DsfSequential, EngineKind::DsfScan, EngineKind::DsfFft, EngineKind::FtBptt}) {
    dsf::cells::reset_hidden_vjp_calls();
    backward(p, fwd.trace, loss.dlogits, e, &kernels);
    EXPECT_EQ(dsf::cells::hidden_vjp_calls(), 0u) << dsf::feedback::to_string(e);
  }
  dsf::cells::reset_hidden_vjp_calls();
  backward(p, fwd.trace, loss.dlogits, EngineKind::Bptt);
  EXPECT_EQ(dsf::cells::hidden_vjp_calls(), 2u * 5u);
}

TEST(Model, BackwardIsDeterministic) {
  const auto p = init_params(small_config());
  const auto batch = dsf::gradcheck::random_batch(2, 6, 9, 5);
  const auto fwd = forward(p, batch.inputs);
  const auto loss = loss_and_errors(fwd.logits, batch.targets);
  for (EngineKind e : {EngineKind::Bptt, EngineKind::DsfFft}) {
    EXPECT_TRUE(backward(p, fwd.trace, loss.dlogits, e) == backward(p, fwd.trace, loss.dlogits, e));
  }
}

TEST(Model, GreedySampleExtendsPrompt) {
  const auto p = init_params(small_config());
  const auto out = greedy_sample(p, {1, 2, 3}, 10);
  ASSERT_EQ(out.size(), 13u);
  for (auto id : out) EXPECT_LT(static_cast<std::size_t>(id), 9u);
  EXPECT_EQ(out, greedy_sample(p, {1, 2, 3}, 10));
  EXPECT_THROW(greedy_sample(p, {}, 1), dsf::ShapeError);
}

}  // namespace
