#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dsf/data.hpp"
#include "dsf/model.hpp"
#include "dsf/optim.hpp"

// Single-file binary archive:
//
//   "DSFCKPT\0"  u32 version
//   str model config (key=value lines)      str run config (free text)
//   u8 has_vocab [u8 mode, str vocab export]
//   u64 n, n x {str name, u64 rows, u64 cols, f64[rows*cols]}   weights
//   u64 n, n x {u64 len, f64[len]}                              feedback
//   u64 adam step, u64 n, n x {m tensor, v tensor}
//   u64 epoch, u64 step, f64 best_valid_ppl
//   "DSFEND\0\0"
//
// Integers and doubles little-endian, strings as u64 length + bytes.
namespace dsf::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  model::ModelParams params;
  std::string run_config;  // opaque to this module
  std::optional<data::Vocab> vocab;
  optim::AdamState adam;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed optimizer steps
  double best_valid_ppl = 0.0;
};

std::string model_config_text(const model::ModelConfig& config);
// Throws DataError on unknown or missing keys.
model::ModelConfig parse_model_config(const std::string& text);

void save(const std::string& path, const Checkpoint& ckpt);
// Throws DataError on bad magic, unsupported version, truncation, or
// tensors that do not match the stored model config.
Checkpoint load(const std::string& path);

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);

}  // namespace dsf::checkpoint
