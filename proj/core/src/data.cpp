#include "dsf/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsf/error.hpp"
#include "dsf/rng.hpp"

namespace dsf::data {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool needs_escape(unsigned char c) { return c < 0x20 || c == 0x7f || c == '\\'; }

std::string escape_token(const std::string& tok) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (char ch : tok) {
    const auto c = static_cast<unsigned char>(ch);
    if (needs_escape(c)) {
      out += "\\x";
      out += hex[c >> 4];
      out += hex[c & 15];
    } else {
      out += ch;
    }
  }
  return out;
}

std::string unescape_token(std::string_view tok) {
  std::string out;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (tok[i] == '\\' && i + 3 < tok.size() && tok[i + 1] == 'x') {
      out += static_cast<char>(std::stoi(std::string(tok.substr(i + 2, 2)), nullptr, 16));
      i += 3;
    } else {
      out += tok[i];
    }
  }
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      fn(text.substr(start));
      return;
    }
    fn(text.substr(start, nl - start));
    start = nl + 1;
  }
}

}  // namespace

std::string_view to_string(VocabMode mode) { return mode == VocabMode::Word ? "word" : "char"; }

VocabMode parse_vocab_mode(std::string_view name) {
  if (name == "word") return VocabMode::Word;
  if (name == "char") return VocabMode::Char;
  throw UsageError("unknown vocabulary mode '" + std::string(name) + "' (expected word or char)");
}

Vocab::Vocab(VocabMode mode, std::vector<std::string> tokens) : mode_(mode), tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[kUnk] != kUnkToken || tokens_[kEos] != kEosToken) {
    throw DataError("vocabulary must start with <unk> and <eos>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("vocabulary has duplicate token '" + escape_token(tokens_[i]) + "'");
    }
  }
}

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

std::string Vocab::export_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += escape_token(t);
    out += '\n';
  }
  return out;
}

Vocab Vocab::import_text(VocabMode mode, std::string_view text) {
  std::vector<std::string> tokens;
  for_each_line(text, [&](std::string_view line) { tokens.push_back(unescape_token(line)); });
  return Vocab(mode, std::move(tokens));
}

VocabBuilder::VocabBuilder(VocabMode mode, std::size_t max_size) : mode_(mode), max_size_(max_size) {
  if (max_size_ < 2) throw UsageError("vocabulary size must be at least 2");
}

void VocabBuilder::flush_word() {
  if (!pending_.empty()) {
    ++counts_[pending_];
    pending_.clear();
  }
}

void VocabBuilder::add(std::string_view chunk) {
  if (mode_ == VocabMode::Char) {
    for (char c : chunk) {
      if (c != '\n') ++counts_[std::string(1, c)];
    }
    return;
  }
  for (char c : chunk) {
    if (is_space(c)) {
      flush_word();
    } else {
      pending_ += c;
    }
  }
}

std::size_t VocabBuilder::count(std::string_view token) const {
  const auto it = counts_.find(std::string(token));
  return it == counts_.end() ? 0 : it->second;
}

Vocab VocabBuilder::finish() {
  flush_word();
  if (counts_.empty()) throw DataError("cannot build a vocabulary from an empty corpus (no tokens)");
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [tok, n] : counts_) {
    if (tok != Vocab::kUnkToken && tok != Vocab::kEosToken) entries.emplace_back(tok, n);
  }
  // counts_ is ordered, so a stable sort by count keeps ties lexicographic.
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (entries.size() > max_size_ - 2) entries.resize(max_size_ - 2);
  if (mode_ == VocabMode::Char) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return static_cast<unsigned char>(a.first[0]) < static_cast<unsigned char>(b.first[0]);
    });
  }
  std::vector<std::string> tokens{std::string(Vocab::kUnkToken), std::string(Vocab::kEosToken)};
  for (auto& e : entries) tokens.push_back(std::move(e.first));
  return Vocab(mode_, std::move(tokens));
}

Vocab build_vocab(std::string_view corpus, VocabMode mode, std::size_t max_size) {
  VocabBuilder builder(mode, max_size);
  builder.add(corpus);
  return builder.finish();
}

Vocab build_vocab(std::istream& in, VocabMode mode, std::size_t max_size, std::size_t chunk_bytes) {
  VocabBuilder builder(mode, max_size);
  std::string buf(std::max<std::size_t>(chunk_bytes, 1), '\0');
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    builder.add(std::string_view(buf.data(), got));
  }
  return builder.finish();
}

TokenStream encode(std::string_view text, const Vocab& vocab) {
  TokenStream out;
  for_each_line(text, [&](std::string_view line) {
    if (vocab.mode() == VocabMode::Char) {
      for (char c : line) out.push_back(vocab.id(std::string_view(&c, 1)));
    } else {
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(vocab.id(line.substr(start, i - start)));
      }
    }
    out.push_back(Vocab::kEos);
  });
  return out;
}

std::string decode(const TokenStream& stream, const Vocab& vocab) {
  std::string out;
  bool line_start = true;
  for (TokenId id : stream) {
    if (id == Vocab::kEos) {
      out += '\n';
      line_start = true;
      continue;
    }
    if (vocab.mode() == VocabMode::Word && !line_start) out += ' ';
    out += vocab.token(id);
    line_start = false;
  }
  return out;
}

BatchIterator::BatchIterator(const TokenStream& stream, std::size_t batch, std::size_t steps)
    : stream_(&stream), batch_(batch), steps_(steps) {
  if (batch_ == 0 || steps_ == 0) throw UsageError("batchify: batch size and context length must be positive");
  const std::size_t needed = batch_ * (steps_ + 1);
  if (stream.size() < needed) {
    throw DataError("batchify: token stream has " + std::to_string(stream.size()) + " tokens, need at least " +
                    std::to_string(needed) + " for B=" + std::to_string(batch_) + ", T=" + std::to_string(steps_));
  }
  shard_len_ = stream.size() / batch_;
  num_batches_ = (shard_len_ - 1) / steps_;
  order_.resize(num_batches_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

Batch BatchIterator::batch_at(std::size_t index) const {
  if (index >= num_batches_) throw std::out_of_range("BatchIterator: batch index out of range");
  Batch out{TokenGrid(batch_, steps_), TokenGrid(batch_, steps_)};
  const auto& s = *stream_;
  for (std::size_t b = 0; b < batch_; ++b) {
    const std::size_t base = b * shard_len_ + index * steps_;
    for (std::size_t t = 0; t < steps_; ++t) {
      out.inputs.at(b, t) = s[base + t];
      out.targets.at(b, t) = s[base + t + 1];
    }
  }
  return out;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= num_batches_) return std::nullopt;
  return batch_at(order_[cursor_++]);
}

void BatchIterator::shuffle(std::uint64_t seed) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  cursor_ = 0;
}

BatchIterator batchify(const TokenStream& stream, std::size_t batch, std::size_t steps) {
  return BatchIterator(stream, batch, steps);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dsf::data
