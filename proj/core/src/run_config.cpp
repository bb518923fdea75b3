#include "dsf/run_config.hpp"

#include <cstdlib>
#include <sstream>

#include "dsf/error.hpp"

namespace dsf::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw UsageError("config '" + key + "': expected a number, got '" + v + "'");
  return x;
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("config '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_count(key, item));
  }
  return out;
}

std::string real_text(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  return {"cell",          "layers",        "hidden",         "context",        "skip_connections",
          "transformer_like", "engine",     "seed",           "vocab_mode",     "vocab_size",
          "train_path",    "valid_path",    "epochs",         "batch_size",     "valid_batch_size",
          "max_batches",   "max_valid_batches", "lr",         "weight_decay",   "clip_norm",
          "schedule",      "milestones",    "lr_factor",      "total_steps",    "adam_beta1",
          "adam_beta2",    "adam_eps",      "shuffle",        "out_dir",        "resume",
          "log_every"};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  try {
    if (key == "cell") model.cell_kind = cells::parse_cell_kind(v);
    else if (key == "layers") model.num_layers = to_count(key, v);
    else if (key == "hidden") model.hidden = to_count(key, v);
    else if (key == "context") model.context = to_count(key, v);
    else if (key == "skip_connections") model.skip_connections = to_flag(key, v);
    else if (key == "transformer_like") model.transformer_like = to_flag(key, v);
    else if (key == "engine") model.engine = feedback::parse_engine_kind(v);
    else if (key == "seed") model.seed = to_count(key, v);
    else if (key == "vocab_mode") vocab_mode = data::parse_vocab_mode(v);
    else if (key == "vocab_size") vocab_size = to_count(key, v);
    else if (key == "train_path") train_path = v;
    else if (key == "valid_path") valid_path = v;
    else if (key == "epochs") epochs = to_count(key, v);
    else if (key == "batch_size") batch_size = to_count(key, v);
    else if (key == "valid_batch_size") valid_batch_size = to_count(key, v);
    else if (key == "max_batches") max_batches = to_count(key, v);
    else if (key == "max_valid_batches") max_valid_batches = to_count(key, v);
    else if (key == "lr") schedule.base_lr = to_real(key, v);
    else if (key == "weight_decay") weight_decay = to_real(key, v);
    else if (key == "clip_norm") clip_norm = to_real(key, v);
    else if (key == "schedule") {
      if (v == "step") schedule.kind = optim::ScheduleKind::Step;
      else if (v == "cosine") schedule.kind = optim::ScheduleKind::Cosine;
      else throw UsageError("config 'schedule': expected step or cosine, got '" + v + "'");
    } else if (key == "milestones") schedule.milestones = to_list(key, v);
    else if (key == "lr_factor") schedule.factor = to_real(key, v);
    else if (key == "total_steps") schedule.total_steps = to_count(key, v);
    else if (key == "adam_beta1") adam.beta1 = to_real(key, v);
    else if (key == "adam_beta2") adam.beta2 = to_real(key, v);
    else if (key == "adam_eps") adam.eps = to_real(key, v);
    else if (key == "shuffle") shuffle = to_flag(key, v);
    else if (key == "out_dir") out_dir = v;
    else if (key == "resume") resume = v;
    else if (key == "log_every") log_every = to_count(key, v);
    else throw UsageError("unknown config key '" + key + "'");
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError("config '" + key + "': " + e.what());
  }
  if (key == "lr" && !(schedule.base_lr > 0.0)) throw UsageError("config 'lr' must be positive");
}

std::string RunConfig::to_text() const {
  std::ostringstream s;
  auto kv = [&](const char* k, const std::string& v) { s << k << " = " << v << '\n'; };
  kv("cell", std::string(cells::to_string(model.cell_kind)));
  kv("layers", std::to_string(model.num_layers));
  kv("hidden", std::to_string(model.hidden));
  kv("context", std::to_string(model.context));
  kv("skip_connections", model.skip_connections ? "true" : "false");
  kv("transformer_like", model.transformer_like ? "true" : "false");
  kv("engine", std::string(feedback::to_string(model.engine)));
  kv("seed", std::to_string(model.seed));
  kv("vocab_mode", std::string(data::to_string(vocab_mode)));
  kv("vocab_size", std::to_string(vocab_size));
  kv("train_path", train_path);
  kv("valid_path", valid_path);
  kv("epochs", std::to_string(epochs));
  kv("batch_size", std::to_string(batch_size));
  kv("valid_batch_size", std::to_string(valid_batch_size));
  kv("max_batches", std::to_string(max_batches));
  kv("max_valid_batches", std::to_string(max_valid_batches));
  kv("lr", real_text(schedule.base_lr));
  kv("weight_decay", real_text(weight_decay));
  kv("clip_norm", real_text(clip_norm));
  kv("schedule", schedule.kind == optim::ScheduleKind::Step ? "step" : "cosine");
  std::string ms;
  for (std::size_t i = 0; i < schedule.milestones.size(); ++i) {
    ms += (i ? "," : "") + std::to_string(schedule.milestones[i]);
  }
  kv("milestones", ms);
  kv("lr_factor", real_text(schedule.factor));
  kv("total_steps", std::to_string(schedule.total_steps));
  kv("adam_beta1", real_text(adam.beta1));
  kv("adam_beta2", real_text(adam.beta2));
  kv("adam_eps", real_text(adam.eps));
  kv("shuffle", shuffle ? "true" : "false");
  kv("out_dir", out_dir);
  kv("resume", resume);
  kv("log_every", std::to_string(log_every));
  return s.str();
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::string text;
    try {
      text = data::read_file(path);
    } catch (const DataError&) {
      throw DataError("cannot read config file '" + path + "'");
    }
    for (const auto& [k, v] : parse_config_text(text)) cfg.set(k, v);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + o + "' is not of the form key=value");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  if (const char* env = std::getenv("RNN_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env);
  return cfg;
}

}  // namespace dsf::cli
