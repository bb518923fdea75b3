#include <cmath>

#include <gtest/gtest.h>

#include "dsf/cells.hpp"
#include "dsf/error.hpp"
#include "dsf/gradcheck.hpp"
#include "dsf/rng.hpp"

namespace {

using namespace dsf::cells;
using dsf::numerics::Tensor2;

constexpr CellKind kKinds[] = {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM};

Tensor2 random_tensor(std::size_t r, std::size_t c, dsf::Rng& rng, double scale = 1.0) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

CellState random_state(CellKind kind, std::size_t b, std::size_t d, dsf::Rng& rng) {
  CellState s{random_tensor(b, d, rng, 0.8), std::nullopt};
  if (kind == CellKind::LSTM) s.c = random_tensor(b, d, rng, 0.8);
  return s;
}

TEST(Cells, NamesRoundTrip) {
  for (CellKind k : kKinds) EXPECT_EQ(parse_cell_kind(to_string(k)), k);
  EXPECT_EQ(parse_cell_kind("gru"), CellKind::GRU);
  EXPECT_THROW(parse_cell_kind("transformer"), dsf::UsageError);
  EXPECT_EQ(state_width(CellKind::LSTM, 5), 10u);
  EXPECT_EQ(gate_count(CellKind::GRU), 3u);
}

TEST(Cells, InitShapesAndForgetBias) {
  dsf::Rng rng(1);
  const CellParams p = CellParams::init(CellKind::LSTM, 4, 3, rng);
  EXPECT_EQ(p.w_in.rows(), 3u);
  EXPECT_EQ(p.w_in.cols(), 16u);
  EXPECT_EQ(p.w_rec.rows(), 4u);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(p.bias(0, j), (j >= 4 && j < 8) ? 1.0 : 0.0);
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : p.w_in.values()) EXPECT_LE(std::abs(v), bound);
}

// One hidden unit, hand-evaluated.
TEST(Cells, GruScalarForward) {
  CellParams p = CellParams::zeros(CellKind::GRU, 1, 1);
  p.w_in = Tensor2::from_rows({{0.5, -0.25, 1.0}});
  p.w_rec = Tensor2::from_rows({{0.2, 0.3, -0.7}});
  p.bias = Tensor2::from_rows({{0.1, 0.0, 0.05}});
  const Tensor2 x = Tensor2::from_rows({{0.8}});
  const CellState prev{Tensor2::from_rows({{0.4}}), std::nullopt};
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double z = sig(0.5 * 0.8 + 0.2 * 0.4 + 0.1);
  const double r = sig(-0.25 * 0.8 + 0.3 * 0.4);
  const double n = std::tanh(1.0 * 0.8 + (r * 0.4) * -0.7 + 0.05);
  const StepResult res = cell_forward(p, x, prev);
  EXPECT_NEAR(res.output(0, 0), (1 - z) * 0.4 + z * n, 1e-15);
}

TEST(Cells, LstmOutputIsCellAndHidden) {
  dsf::Rng rng(2);
  const CellParams p = CellParams::init(CellKind::LSTM, 3, 2, rng);
  const auto prev = random_state(CellKind::LSTM, 2, 3, rng);
  const StepResult res = cell_forward(p, random_tensor(2, 2, rng), prev);
  ASSERT_EQ(res.output.cols(), 6u);
  EXPECT_EQ(res.output, res.state.packed());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(res.output(1, j), (*res.state.c)(1, j));
}

TEST(Cells, VjpsMatchFiniteDifferences) {
  for (CellKind k : kKinds) {
    const auto report = dsf::gradcheck::check_cell_vjps(k, 5, 4, 3, 17);
    EXPECT_TRUE(report.pass) << report.text();
  }
}

// Independent of the library oracle: perturb the packed previous state and
// compare d(w . state_t) against cell_vjp_hidden.
TEST(Cells, HiddenVjpDirectionalDerivative) {
  dsf::Rng rng(3);
  for (CellKind k : kKinds) {
    const std::size_t b = 2, d = 4, w = state_width(k, d);
    const CellParams p = CellParams::init(k, d, 3, rng);
    const Tensor2 x = random_tensor(b, 3, rng);
    const CellState prev = random_state(k, b, d, rng);
    const Tensor2 g = random_tensor(b, w, rng);
    const Tensor2 dir = random_tensor(b, w, rng);
    const auto loss = [&](double eps) {
      CellState s = prev;
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          if (k == CellKind::LSTM) {
            (*s.c)(r, j) += eps * dir(r, j);
            s.h(r, j) += eps * dir(r, d + j);
          } else {
            s.h(r, j) += eps * dir(r, j);
          }
        }
      }
      const Tensor2 out = cell_forward(p, x, s).output;
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += g.data()[i] * out.data()[i];
      return acc;
    };
    const double fd = (loss(1e-6) - loss(-1e-6)) / 2e-6;
    const Tensor2 vjp = cell_vjp_hidden(p, cell_forward(p, x, prev).cache, g);
    double an = 0.0;
    for (std::size_t i = 0; i < vjp.size(); ++i) an += vjp.data()[i] * dir.data()[i];
    EXPECT_NEAR(an, fd, 1e-8 * std::max(1.0, std::abs(fd))) << to_string(k);
  }
}

TEST(Cells, RunLayerMatchesStepwiseForward) {
  dsf::Rng rng(4);
  for (CellKind k : kKinds) {
    const std::size_t T = 5, B = 3, d = 4, din = 2;
    const CellParams p = CellParams::init(k, d, din, rng);
    const Tensor2 inputs = random_tensor(T * B, din, rng);
    const LayerRun run = run_layer(p, inputs, T, B);
    CellState s = CellState::zeros(k, B, d);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor2 x = dsf::numerics::copy_of(inputs.view().row_range(t * B, B));
      StepResult step = cell_forward(p, x, s);
      const Tensor2 got = dsf::numerics::copy_of(run.outputs.view().row_range(t * B, B));
      EXPECT_LE(dsf::numerics::max_abs_diff(got, step.output), 1e-15) << to_string(k) << " t=" << t;
      s = std::move(step.state);
    }
  }
}

TEST(Cells, SequenceLocalBackwardMatchesPerStepVjps) {
  dsf::Rng rng(5);
  for (CellKind k : kKinds) {
    const std::size_t T = 6, B = 2, d = 3, din = 4, w = state_width(k, d);
    const CellParams p = CellParams::init(k, d, din, rng);
    const LayerRun run = run_layer(p, random_tensor(T * B, din, rng), T, B);
    const Tensor2 grads = random_tensor(T, B * w, rng);

    CellParams want = CellParams::zeros(k, d, din);
    Tensor2 want_dx(T * B, din);
    for (std::size_t t = 0; t < T; ++t) {
      const Tensor2 g(B, w, std::vector<double>(grads.row(t).begin(), grads.row(t).end()));
      cell_vjp_params(p, run.caches[t], g, want);
      const Tensor2 dx = cell_vjp_input(p, run.caches[t], g);
      dsf::numerics::copy_into(dx, want_dx.view().row_range(t * B, B));
    }
    CellParams got = CellParams::zeros(k, d, din);
    const Tensor2 dx = sequence_local_backward(p, run.caches, grads, &got, true);
    EXPECT_LE(dsf::numerics::max_abs_diff(dx, want_dx), 1e-13);
    EXPECT_LE(dsf::numerics::max_abs_diff(got.w_in, want.w_in), 1e-13);
    EXPECT_LE(dsf::numerics::max_abs_diff(got.w_rec, want.w_rec), 1e-13);
    EXPECT_LE(dsf::numerics::max_abs_diff(got.bias, want.bias), 1e-13);
  }
}

TEST(Cells, HiddenVjpCounter) {
  dsf::Rng rng(6);
  const CellParams p = CellParams::init(CellKind::GRU, 3, 3, rng);
  const auto step = cell_forward(p, random_tensor(1, 3, rng), CellState::zeros(CellKind::GRU, 1, 3));
  reset_hidden_vjp_calls();
  EXPECT_EQ(hidden_vjp_calls(), 0u);
  cell_vjp_hidden(p, step.cache, Tensor2(1, 3, 1.0));
  cell_vjp_hidden(p, step.cache, Tensor2(1, 3, 1.0));
  EXPECT_EQ(hidden_vjp_calls(), 2u);
  CellParams acc = CellParams::zeros(CellKind::GRU, 3, 3);
  cell_vjp_params(p, step.cache, Tensor2(1, 3, 1.0), acc);
  EXPECT_EQ(hidden_vjp_calls(), 2u);
}

TEST(Cells, ShapeErrors) {
  dsf::Rng rng(7);
  const CellParams p = CellParams::init(CellKind::GRU, 3, 2, rng);
  EXPECT_THROW(cell_forward(p, Tensor2(1, 5), CellState::zeros(CellKind::GRU, 1, 3)), dsf::ShapeError);
  EXPECT_THROW(cell_forward(p, Tensor2(1, 2), CellState::zeros(CellKind::GRU, 2, 3)), dsf::ShapeError);
  EXPECT_THROW(cell_forward(p, Tensor2(1, 2), CellState::zeros(CellKind::LSTM, 1, 3)), dsf::ShapeError);
  const auto step = cell_forward(p, Tensor2(1, 2), CellState::zeros(CellKind::GRU, 1, 3));
  EXPECT_THROW(cell_vjp_hidden(p, step.cache, Tensor2(1, 4)), dsf::ShapeError);
  EXPECT_THROW(run_layer(p, Tensor2(5, 2), 2, 2), dsf::ShapeError);
}

}  // namespace
