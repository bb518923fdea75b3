#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsf/feedback.hpp"

// Wall-clock timing of the e -> g conversion alone.
namespace dsf::bench {

struct BenchResult {
  std::string engine;
  std::size_t d = 0;
  std::size_t T = 0;
  double median_ns = 0.0;  // per conversion
  double iqr_ns = 0.0;
  std::size_t reps = 0;
};

struct TimingOptions {
  std::size_t reps = 9;
  std::size_t warmups = 3;
  // Each rep repeats the conversion until at least this much time passed.
  double min_rep_ns = 5e6;
  unsigned threads = 1;  // scan backend only
  std::uint64_t seed = 42;
};

// BPTT is timed with a dense random constant Jacobian, so its cost is the
// d x d vector-matrix product per step and nothing cell specific.
BenchResult time_hidden_grads(feedback::EngineKind engine, std::size_t d, std::size_t T,
                              const TimingOptions& options = {});

enum class Axis { D, T };
Axis parse_axis(const std::string& name);
std::string to_string(Axis axis);

// Least-squares slope of log(median_ns) against log(size). Needs at least 4
// distinct sizes spanning a factor of 8 or more.
double fit_scaling_exponent(const std::vector<BenchResult>& results, Axis axis);

// d in {64,128,256,512} at T=256, or T in {256,512,1024,2048} at d=128.
std::vector<std::pair<std::size_t, std::size_t>> default_sweep(Axis axis);

// Accepted exponent range for (engine, axis), when one is asserted.
std::optional<std::pair<double, double>> exponent_range(feedback::EngineKind engine, Axis axis);

std::string csv_header();
std::string csv_row(const BenchResult& r);

// median and interquartile range (linear interpolation) of the samples.
std::pair<double, double> median_iqr(std::vector<double> samples);

}  // namespace dsf::bench
