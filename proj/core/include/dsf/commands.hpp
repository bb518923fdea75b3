#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsf/bench.hpp"
#include "dsf/data.hpp"
#include "dsf/model.hpp"
#include "dsf/run_config.hpp"

namespace dsf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kCheckFailed = 3, kNumericAbort = 4 };

// Keeps large freed blocks in the heap so per-step temporaries do not
// page-fault on every batch. No-op outside glibc. Call once from main.
void tune_allocator();

// Runs fn, mapping exceptions to exit codes with a one-line diagnostic on err.
int guarded(const std::function<int()>& fn, std::ostream& err);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_ppl = 0.0;
  double valid_ppl = 0.0;
  double lr = 0.0;
  double wall_s = 0.0;
};

struct TrainSummary {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;
  double best_valid_ppl = 0.0;
  std::string out_dir;
};

// Writes into cfg.out_dir:
//   train_log.csv  epoch,train_ppl,valid_ppl,lr,wall_s   (one row per epoch)
//   steps.csv      step,epoch,loss,lr,grad_norm          (one row per optimizer step)
//   config.txt, vocab.txt, last.ckpt, best.ckpt
TrainSummary train(const RunConfig& cfg, std::ostream& log);

// exp(token-mean NLL) over non-overlapping windows.
double evaluate_perplexity(const model::ModelParams& params, const data::TokenStream& stream, std::size_t batch,
                           std::size_t steps, std::size_t max_batches = 0);

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out,
              std::ostream& err);

// Prints "valid_ppl=<value>".
int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, std::ostream& out,
             std::ostream& err);

enum class GradcheckScope { Cells, Engines, Model, All };
GradcheckScope parse_gradcheck_scope(const std::string& name);

// Nonzero exit when any report fails. negative_control adds a DSF exactness
// check whose feedback entry was moved, which must fail.
int cmd_gradcheck(GradcheckScope scope, bool negative_control, std::uint64_t seed, std::ostream& out,
                  std::ostream& err);

struct BenchOptions {
  bench::Axis axis = bench::Axis::D;
  std::vector<feedback::EngineKind> engines;
  bench::TimingOptions timing;
};

// Emits the CSV, then one "exponent:" line per engine; exits 3 when an
// asserted exponent range is violated.
int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& err);

std::vector<feedback::EngineKind> parse_engine_list(const std::string& csv);

}  // namespace dsf::cli
