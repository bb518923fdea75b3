#include "dsf/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dsf/error.hpp"

namespace dsf::checkpoint {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr char kTrailer[8] = {'D', 'S', 'F', 'E', 'N', 'D', '\0', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const numerics::Tensor2& t) {
    u64(t.rows());
    u64(t.cols());
    for (double v : t.values()) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("checkpoint is truncated");
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() { return raw(checked_count(1)); }
  std::uint64_t checked_count(std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    if (elem_bytes > 0 && n > (in_.size() - pos_) / elem_bytes) throw DataError("checkpoint is truncated");
    return n;
  }
  numerics::Tensor2 tensor() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (in_.size() - pos_) / 8 / cols) throw DataError("checkpoint is truncated");
    numerics::Tensor2 t(rows, cols);
    for (double& v : t.values()) v = f64();
    return t;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_pairs(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint model config: malformed line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace

std::string model_config_text(const model::ModelConfig& c) {
  std::ostringstream out;
  out << "cell=" << cells::to_string(c.cell_kind) << '\n'
      << "layers=" << c.num_layers << '\n'
      << "hidden=" << c.hidden << '\n'
      << "vocab_size=" << c.vocab_size << '\n'
      << "context=" << c.context << '\n'
      << "skip_connections=" << (c.skip_connections ? 1 : 0) << '\n'
      << "transformer_like=" << (c.transformer_like ? 1 : 0) << '\n'
      << "engine=" << feedback::to_string(c.engine) << '\n'
      << "seed=" << c.seed << '\n';
  return out.str();
}

model::ModelConfig parse_model_config(const std::string& text) {
  auto kv = parse_pairs(text);
  auto take = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint model config: missing '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  model::ModelConfig c;
  try {
    c.cell_kind = cells::parse_cell_kind(take("cell"));
    c.num_layers = std::stoull(take("layers"));
    c.hidden = std::stoull(take("hidden"));
    c.vocab_size = std::stoull(take("vocab_size"));
    c.context = std::stoull(take("context"));
    c.skip_connections = take("skip_connections") == "1";
    c.transformer_like = take("transformer_like") == "1";
    c.engine = feedback::parse_engine_kind(take("engine"));
    c.seed = std::stoull(take("seed"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  if (!kv.empty()) throw DataError("checkpoint model config: unknown key '" + kv.begin()->first + "'");
  try {
    c.validate();
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint model config: ") + e.what());
  }
  return c;
}

std::string serialize(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.str(model_config_text(ckpt.params.config));
  w.str(ckpt.run_config);
  w.u8(ckpt.vocab ? 1 : 0);
  if (ckpt.vocab) {
    w.u8(ckpt.vocab->mode() == data::VocabMode::Char ? 1 : 0);
    w.str(ckpt.vocab->export_text());
  }

  std::vector<std::pair<std::string, const numerics::Tensor2*>> tensors;
  ckpt.params.weights.for_each_tensor(
      [&](const std::string& name, const numerics::Tensor2& t) { tensors.emplace_back(name, &t); });
  w.u64(tensors.size());
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.tensor(*t);
  }

  w.u64(ckpt.params.feedback.size());
  for (const auto& fb : ckpt.params.feedback) {
    w.u64(fb.diag.size());
    for (double v : fb.diag) w.f64(v);
  }

  w.u64(ckpt.adam.step);
  w.u64(ckpt.adam.m.size());
  for (std::size_t i = 0; i < ckpt.adam.m.size(); ++i) {
    w.tensor(ckpt.adam.m[i]);
    w.tensor(ckpt.adam.v.at(i));
  }

  w.u64(ckpt.epoch);
  w.u64(ckpt.step);
  w.f64(ckpt.best_valid_ppl);
  w.bytes(kTrailer, sizeof kTrailer);
  return w.take();
}

Checkpoint deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file (bad magic bytes)");
  }
  r.raw(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.params = model::init_params(parse_model_config(r.str()));
  ckpt.run_config = r.str();
  if (r.u8() != 0) {
    const auto mode = r.u8() != 0 ? data::VocabMode::Char : data::VocabMode::Word;
    ckpt.vocab = data::Vocab::import_text(mode, r.str());
    if (ckpt.vocab->size() != ckpt.params.config.vocab_size) {
      throw DataError("checkpoint vocabulary has " + std::to_string(ckpt.vocab->size()) +
                      " tokens but the model expects " + std::to_string(ckpt.params.config.vocab_size));
    }
  }

  std::vector<std::pair<std::string, numerics::Tensor2*>> slots;
  ckpt.params.weights.for_each_tensor(
      [&](const std::string& name, numerics::Tensor2& t) { slots.emplace_back(name, &t); });
  const std::uint64_t n = r.u64();
  if (n != slots.size()) {
    throw DataError("checkpoint has " + std::to_string(n) + " tensors, model config implies " +
                    std::to_string(slots.size()));
  }
  for (auto& [name, slot] : slots) {
    const std::string stored = r.str();
    if (stored != name) throw DataError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    numerics::Tensor2 t = r.tensor();
    if (!t.same_shape(*slot)) {
      throw DataError("checkpoint tensor '" + name + "' is " + t.shape_string() + ", model expects " +
                      slot->shape_string());
    }
    *slot = std::move(t);
  }

  const std::uint64_t nfb = r.u64();
  if (nfb != ckpt.params.feedback.size()) throw DataError("checkpoint feedback count does not match the model");
  for (auto& fb : ckpt.params.feedback) {
    if (r.u64() != fb.diag.size()) throw DataError("checkpoint feedback width does not match the model");
    for (double& v : fb.diag) v = r.f64();
  }

  ckpt.adam.step = r.u64();
  const std::uint64_t nm = r.u64();
  if (nm != 0 && nm != slots.size()) throw DataError("checkpoint optimizer state does not match the model");
  for (std::uint64_t i = 0; i < nm; ++i) {
    ckpt.adam.m.push_back(r.tensor());
    ckpt.adam.v.push_back(r.tensor());
    if (!ckpt.adam.m.back().same_shape(*slots[i].second) || !ckpt.adam.v.back().same_shape(*slots[i].second)) {
      throw DataError("checkpoint optimizer state for '" + slots[i].first + "' has the wrong shape");
    }
  }

  ckpt.epoch = r.u64();
  ckpt.step = r.u64();
  ckpt.best_valid_ppl = r.f64();
  if (r.raw(sizeof kTrailer) != std::string(kTrailer, sizeof kTrailer) || !r.at_end()) {
    throw DataError("checkpoint has a corrupt trailer");
  }
  return ckpt;
}

void save(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load(const std::string& path) { return deserialize(data::read_file(path)); }

}  // namespace dsf::checkpoint
