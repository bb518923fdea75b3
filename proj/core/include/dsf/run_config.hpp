#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsf/data.hpp"
#include "dsf/model.hpp"
#include "dsf/optim.hpp"

namespace dsf::cli {

// Everything a training run needs. Defaults are the PTB preset: 3-layer GRU,
// d=256, T=64, B=128, Adam lr 1e-3, weight decay 1e-4, 30 epochs, lr x0.1
// after epochs 10 and 20.
struct RunConfig {
  model::ModelConfig model;

  data::VocabMode vocab_mode = data::VocabMode::Word;
  std::size_t vocab_size = 10000;  // upper bound; the model uses the built size
  std::string train_path = "data/ptb/train.txt";
  std::string valid_path = "data/ptb/valid.txt";

  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  std::size_t valid_batch_size = 0;  // 0: same as batch_size
  std::size_t max_batches = 0;       // per epoch, 0: all
  std::size_t max_valid_batches = 0; // 0: all
  double weight_decay = 1e-4;
  double clip_norm = 0.0;  // 0: no clipping
  optim::ScheduleConfig schedule;
  optim::AdamConfig adam;
  bool shuffle = false;

  std::string out_dir = "runs/default";
  std::string resume;  // checkpoint path
  std::size_t log_every = 0;  // progress line every n steps on the log stream, 0: off

  // Applies one key=value pair; throws UsageError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Canonical key = value text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static std::vector<std::string> keys();
};

// Flat "key = value" lines, '#' starts a comment. Later lines win.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

// File (if path non-empty), then "key=value" overrides, then the RNN_SEED
// environment variable.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace dsf::cli
