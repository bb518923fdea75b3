#include <gtest/gtest.h>

#include "dsf/error.hpp"
#include "dsf/rng.hpp"
#include "dsf/scan.hpp"

namespace {

using dsf::numerics::ScanElem;
using dsf::numerics::Tensor2;

std::vector<ScanElem> random_elems(std::size_t n, std::size_t d, dsf::Rng& rng) {
  std::vector<ScanElem> elems(n);
  for (auto& e : elems) {
    for (std::size_t k = 0; k < d; ++k) {
      e.mult.push_back(rng.uniform());
      e.add.push_back(rng.uniform(-1.0, 1.0));
    }
  }
  return elems;
}

std::vector<std::vector<double>> sequential(const std::vector<ScanElem>& elems) {
  std::vector<std::vector<double>> out;
  std::vector<double> h(elems.front().add.size(), 0.0);
  for (const auto& e : elems) {
    for (std::size_t k = 0; k < h.size(); ++k) h[k] = e.add[k] + e.mult[k] * h[k];
    out.push_back(h);
  }
  return out;
}

TEST(Scan, HalfDecayExample) {
  const std::vector<ScanElem> elems(3, ScanElem{{0.5}, {1.0}});
  const auto out = dsf::numerics::linear_recurrence_scan(elems);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0][0], 1.0);
  EXPECT_DOUBLE_EQ(out[1][0], 1.5);
  EXPECT_DOUBLE_EQ(out[2][0], 1.75);
}

TEST(Scan, CombineIsAssociative) {
  dsf::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto e = random_elems(3, 4, rng);
    const auto left = combine(combine(e[0], e[1]), e[2]);
    const auto right = combine(e[0], combine(e[1], e[2]));
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(left.mult[k], right.mult[k], 1e-15);
      EXPECT_NEAR(left.add[k], right.add[k], 1e-15);
    }
  }
}

TEST(Scan, MatchesSequentialAcrossLengths) {
  dsf::Rng rng(4);
  for (std::size_t n : {1u, 2u, 3u, 7u, 64u, 100u, 513u}) {
    const auto elems = random_elems(n, 5, rng);
    const auto want = sequential(elems);
    const auto got = dsf::numerics::linear_recurrence_scan(elems);
    ASSERT_EQ(got.size(), n);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(got[t][k], want[t][k], 1e-12) << n << " " << t;
  }
}

TEST(Scan, ThreadCountDoesNotChangeResult) {
  dsf::Rng rng(5);
  const auto elems = random_elems(301, 6, rng);
  const auto one = dsf::numerics::linear_recurrence_scan(elems, 1);
  for (unsigned threads : {2u, 3u, 8u}) EXPECT_EQ(dsf::numerics::linear_recurrence_scan(elems, threads), one);
}

TEST(Scan, PackedFormAndSharedMultiplier) {
  dsf::Rng rng(6);
  Tensor2 mult(1, 3), add(40, 3);
  for (double& v : mult.values()) v = rng.uniform();
  for (double& v : add.values()) v = rng.uniform(-1.0, 1.0);
  const Tensor2 seq = dsf::numerics::linear_recurrence_sequential(mult, add);
  const Tensor2 scan = dsf::numerics::linear_recurrence_scan(mult, add);
  EXPECT_LE(dsf::numerics::max_abs_diff(seq, scan), 1e-13);
  EXPECT_DOUBLE_EQ(seq(0, 1), add(0, 1));
  EXPECT_DOUBLE_EQ(seq(1, 2), add(1, 2) + mult(0, 2) * add(0, 2));
}

TEST(Scan, RejectsBadShapes) {
  EXPECT_THROW(dsf::numerics::linear_recurrence_scan(std::vector<ScanElem>{}), dsf::ShapeError);
  const std::vector<ScanElem> mixed{ScanElem{{0.5}, {1.0}}, ScanElem{{0.5, 0.5}, {1.0, 1.0}}};
  EXPECT_THROW(dsf::numerics::linear_recurrence_scan(mixed), dsf::ShapeError);
  EXPECT_THROW(dsf::numerics::linear_recurrence_scan(Tensor2(2, 3), Tensor2(4, 3)), dsf::ShapeError);
}

}  // namespace
