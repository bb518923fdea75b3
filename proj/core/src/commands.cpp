#include "dsf/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dsf/checkpoint.hpp"
#include "dsf/error.hpp"
#include "dsf/gradcheck.hpp"
#include "dsf/optim.hpp"

namespace dsf::cli {
namespace {

namespace fs = std::filesystem;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path, const char* header, bool append) {
  const bool fresh = !append || !fs::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  if (fresh) out << header << '\n';
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::size_t valid_batch(const RunConfig& cfg) { return cfg.valid_batch_size ? cfg.valid_batch_size : cfg.batch_size; }

void check_resume_compatible(const model::ModelConfig& stored, const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (stored.cell_kind != m.cell_kind || stored.num_layers != m.num_layers || stored.hidden != m.hidden ||
      stored.skip_connections != m.skip_connections || stored.transformer_like != m.transformer_like) {
    throw DataError("checkpoint/config mismatch: checkpoint holds a different model architecture");
  }
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

int guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ShapeError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kNumericAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

double evaluate_perplexity(const model::ModelParams& params, const data::TokenStream& stream, std::size_t batch,
                           std::size_t steps, std::size_t max_batches) {
  auto it = data::batchify(stream, batch, steps);
  const std::size_t n = max_batches ? std::min(max_batches, it.num_batches()) : it.num_batches();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += model::evaluate_loss(params, it.batch_at(i));
  const double mean = total / static_cast<double>(n);
  if (!std::isfinite(mean)) throw NumericError("non-finite validation loss");
  return std::exp(mean);
}

TrainSummary train(const RunConfig& cfg, std::ostream& log) {
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw UsageError("epochs and batch_size must be positive");
  const std::string train_text = data::read_file(cfg.train_path);
  const std::string valid_text = data::read_file(cfg.valid_path);

  checkpoint::Checkpoint state;
  data::Vocab vocab;
  if (!cfg.resume.empty()) {
    state = checkpoint::load(cfg.resume);
    check_resume_compatible(state.params.config, cfg);
    if (!state.vocab) throw DataError("checkpoint '" + cfg.resume + "' carries no vocabulary");
    vocab = *state.vocab;
    state.params.config.engine = cfg.model.engine;
  } else {
    vocab = data::build_vocab(train_text, cfg.vocab_mode, cfg.vocab_size);
    model::ModelConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    state.params = model::init_params(mc);
    state.adam = optim::AdamState::for_model(state.params.weights);
    state.vocab = vocab;
  }
  state.run_config = cfg.to_text();
  if (state.adam.m.empty()) state.adam = optim::AdamState::for_model(state.params.weights);

  const data::TokenStream train_ids = data::encode(train_text, vocab);
  const data::TokenStream valid_ids = data::encode(valid_text, vocab);
  auto batches = data::batchify(train_ids, cfg.batch_size, cfg.model.context);
  // Fail on a too-short validation split before spending time on training.
  data::batchify(valid_ids, valid_batch(cfg), cfg.model.context);
  const std::size_t per_epoch = cfg.max_batches ? std::min(cfg.max_batches, batches.num_batches())
                                                : batches.num_batches();

  optim::ScheduleConfig schedule = cfg.schedule;
  if (schedule.kind == optim::ScheduleKind::Cosine && schedule.total_steps == 0) {
    schedule.total_steps = cfg.epochs * per_epoch;
  }

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const bool append = !cfg.resume.empty();
  write_text(dir / "config.txt", state.run_config);
  write_text(dir / "vocab.txt", vocab.export_text());
  auto epoch_csv = open_csv(dir / "train_log.csv", "epoch,train_ppl,valid_ppl,lr,wall_s", append);
  auto step_csv = open_csv(dir / "steps.csv", "step,epoch,loss,lr,grad_norm", append);

  model::ModelParams& params = state.params;
  const model::EngineKind engine = cfg.model.engine;
  model::KernelCaches kernels(params);
  TrainSummary summary;
  summary.out_dir = cfg.out_dir;
  summary.best_valid_ppl = state.best_valid_ppl;
  std::size_t step = state.step;

  log << "training " << cells::to_string(params.config.cell_kind) << " x" << params.config.num_layers
      << " d=" << params.config.hidden << " vocab=" << params.config.vocab_size << " engine="
      << feedback::to_string(engine) << " params=" << params.weights.parameter_count() << " batches/epoch="
      << per_epoch << '\n';

  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) {
      batches.shuffle(cfg.model.seed + 0x9E3779B97F4A7C15ULL * (epoch + 1));
    } else {
      batches.reset();
    }
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t i = 0; i < per_epoch; ++i) {
      const auto batch = batches.next();
      lr = schedule.kind == optim::ScheduleKind::Step ? optim::lr_at(schedule, epoch) : optim::lr_at(schedule, step);
      const auto fwd = model::forward(params, batch->inputs);
      const auto loss = model::loss_and_errors(fwd.logits, batch->targets);
      if (!std::isfinite(loss.mean_nll)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(step + 1));
      }
      auto grads = model::backward(params, fwd.trace, loss.dlogits, engine, &kernels);
      const double gnorm = cfg.clip_norm > 0.0 ? optim::clip_grad_norm(grads, cfg.clip_norm) : optim::grad_norm(grads);
      optim::adam_step(params.weights, grads, state.adam, lr, cfg.weight_decay, cfg.adam);
      ++step;
      loss_sum += loss.mean_nll;
      step_csv << step << ',' << epoch + 1 << ',' << g17(loss.mean_nll) << ',' << g17(lr) << ',' << g17(gnorm) << '\n';
      if (cfg.log_every && step % cfg.log_every == 0) {
        log << "  step " << step << " loss " << loss.mean_nll << " ppl " << std::exp(loss.mean_nll) << '\n';
      }
    }
    step_csv.flush();

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_ppl = std::exp(loss_sum / static_cast<double>(per_epoch));
    rec.valid_ppl = evaluate_perplexity(params, valid_ids, valid_batch(cfg), cfg.model.context, cfg.max_valid_batches);
    rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    epoch_csv << rec.epoch << ',' << g17(rec.train_ppl) << ',' << g17(rec.valid_ppl) << ',' << g17(rec.lr) << ','
              << g17(rec.wall_s) << '\n';
    epoch_csv.flush();
    log << "epoch " << rec.epoch << " train_ppl " << rec.train_ppl << " valid_ppl " << rec.valid_ppl << " ("
        << rec.wall_s << " s)\n";
    summary.epochs.push_back(rec);

    state.epoch = epoch + 1;
    state.step = step;
    const bool best = summary.best_valid_ppl == 0.0 || rec.valid_ppl < summary.best_valid_ppl;
    if (best) summary.best_valid_ppl = rec.valid_ppl;
    state.best_valid_ppl = summary.best_valid_ppl;
    checkpoint::save((dir / "last.ckpt").string(), state);
    if (best) checkpoint::save((dir / "best.ckpt").string(), state);
  }
  summary.steps = step;
  return summary;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, std::ostream& out,
              std::ostream& err) {
  return guarded(
      [&] {
        const RunConfig cfg = load_run_config(config_path, overrides);
        const TrainSummary s = train(cfg, err);
        if (!s.epochs.empty()) out << "valid_ppl=" << g17(s.epochs.back().valid_ppl) << '\n';
        return static_cast<int>(kOk);
      },
      err);
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const checkpoint::Checkpoint ckpt = checkpoint::load(checkpoint_path);
        if (!ckpt.vocab) throw DataError("checkpoint '" + checkpoint_path + "' carries no vocabulary");
        RunConfig cfg;
        for (const auto& [k, v] : parse_config_text(ckpt.run_config)) cfg.set(k, v);
        if (cfg.model.context != ckpt.params.config.context || cfg.model.hidden != ckpt.params.config.hidden) {
          throw DataError("checkpoint/config mismatch: stored run config disagrees with the stored model");
        }
        const auto ids = data::encode(data::read_file(data_path), *ckpt.vocab);
        const double ppl =
            evaluate_perplexity(ckpt.params, ids, valid_batch(cfg), cfg.model.context, cfg.max_valid_batches);
        out << "valid_ppl=" << g17(ppl) << '\n';
        return static_cast<int>(kOk);
      },
      err);
}

GradcheckScope parse_gradcheck_scope(const std::string& name) {
  if (name == "cells") return GradcheckScope::Cells;
  if (name == "engines") return GradcheckScope::Engines;
  if (name == "model") return GradcheckScope::Model;
  if (name == "all") return GradcheckScope::All;
  throw UsageError("unknown gradcheck scope '" + name + "' (expected cells, engines, model or all)");
}

int cmd_gradcheck(GradcheckScope scope, bool negative_control, std::uint64_t seed, std::ostream& out,
                  std::ostream& err) {
  return guarded(
      [&] {
        using cells::CellKind;
        std::vector<gradcheck::CheckReport> reports;
        const bool all = scope == GradcheckScope::All;
        const CellKind kinds[] = {CellKind::VanillaRNN, CellKind::GRU, CellKind::LSTM};
        if (all || scope == GradcheckScope::Cells) {
          for (auto k : kinds) reports.push_back(gradcheck::check_cell_vjps(k, 5, 4, 3, seed));
        }
        if (all || scope == GradcheckScope::Engines) {
          reports.push_back(gradcheck::check_engine_consistency({1, 2, 7, 16, 33, 64}, {1, 2, 37, 64, 128, 255, 512},
                                                                100, seed));
          gradcheck::CheckReport exact;
          exact.name = "dsf_exactness";
          exact.tolerance = 1e-12;
          for (std::size_t d : {1, 4, 16}) {
            for (std::size_t t : {1, 16, 64}) exact.absorb(gradcheck::check_dsf_exactness(d, t, seed + d * 131 + t));
          }
          reports.push_back(exact);
          for (auto k : kinds) {
            gradcheck::ModelCheckConfig mc;
            mc.kind = k;
            mc.seed = seed;
            reports.push_back(gradcheck::check_model_backends(mc));
            reports.push_back(gradcheck::check_terminal_condition(mc));
            reports.push_back(gradcheck::check_zero_feedback(mc, model::EngineKind::DsfSequential, 0.0));
            reports.push_back(gradcheck::check_zero_feedback(mc, model::EngineKind::DsfScan, 0.0));
            reports.push_back(gradcheck::check_zero_feedback(mc, model::EngineKind::DsfFft, 1e-12));
          }
        }
        if (all || scope == GradcheckScope::Model) {
          for (auto k : kinds) {
            gradcheck::ModelCheckConfig mc;
            mc.kind = k;
            mc.seed = seed;
            reports.push_back(gradcheck::check_model_gradients(mc));
          }
          gradcheck::ModelCheckConfig tl;
          tl.transformer_like = true;
          tl.seed = seed;
          reports.push_back(gradcheck::check_model_gradients(tl));
        }
        if (negative_control) reports.push_back(gradcheck::check_dsf_exactness(4, 16, seed, /*perturb=*/true));

        bool ok = true;
        for (const auto& r : reports) {
          out << r.text() << '\n' << r.summary_line() << '\n';
          ok = ok && r.pass;
        }
        out << (ok ? "gradcheck: all checks passed" : "gradcheck: FAILED") << '\n';
        return static_cast<int>(ok ? kOk : kCheckFailed);
      },
      err);
}

std::vector<feedback::EngineKind> parse_engine_list(const std::string& csv) {
  std::vector<feedback::EngineKind> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(feedback::parse_engine_kind(item));
  }
  if (out.empty()) throw UsageError("empty engine list");
  return out;
}

int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (options.engines.empty()) throw UsageError("bench: no engines given");
        out << bench::csv_header() << '\n';
        std::vector<std::vector<bench::BenchResult>> per_engine;
        for (auto engine : options.engines) {
          std::vector<bench::BenchResult> rows;
          for (const auto& [d, t] : bench::default_sweep(options.axis)) {
            rows.push_back(bench::time_hidden_grads(engine, d, t, options.timing));
            out << bench::csv_row(rows.back()) << '\n' << std::flush;
          }
          per_engine.push_back(std::move(rows));
        }
        bool ok = true;
        for (std::size_t i = 0; i < options.engines.size(); ++i) {
          const double slope = bench::fit_scaling_exponent(per_engine[i], options.axis);
          const auto range = bench::exponent_range(options.engines[i], options.axis);
          out << "exponent:" << feedback::to_string(options.engines[i]) << " axis:" << bench::to_string(options.axis)
              << " value:" << slope;
          if (range) {
            const bool in = slope >= range->first && slope <= range->second;
            ok = ok && in;
            out << " range:[" << range->first << "," << range->second << "] pass:" << (in ? 1 : 0);
          }
          out << '\n';
        }
        return static_cast<int>(ok ? kOk : kCheckFailed);
      },
      err);
}

}  // namespace dsf::cli
