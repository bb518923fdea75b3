#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsf/tokens.hpp"

namespace dsf::data {

enum class VocabMode { Word, Char };

std::string_view to_string(VocabMode mode);
VocabMode parse_vocab_mode(std::string_view name);

class Vocab {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kEos = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";

  Vocab() = default;
  Vocab(VocabMode mode, std::vector<std::string> tokens);

  VocabMode mode() const { return mode_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // kUnk when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;

  // One token per line, id = line number; control bytes and backslash as \xHH.
  std::string export_text() const;
  static Vocab import_text(VocabMode mode, std::string_view text);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.mode_ == b.mode_ && a.tokens_ == b.tokens_; }

 private:
  VocabMode mode_ = VocabMode::Word;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Incremental vocabulary construction; chunks may split words or lines
// anywhere.
class VocabBuilder {
 public:
  VocabBuilder(VocabMode mode, std::size_t max_size);
  void add(std::string_view chunk);
  // Throws DataError when nothing was added.
  Vocab finish();
  // Occurrence count seen so far (word mode: whole words only).
  std::size_t count(std::string_view token) const;

 private:
  void flush_word();

  VocabMode mode_;
  std::size_t max_size_;
  std::string pending_;
  std::map<std::string, std::size_t> counts_;
};

// Word mode: whitespace-separated words, the max_size - 2 most frequent kept
// (ties lexicographic), the rest map to <unk>. Char mode: every distinct byte
// except newline, by byte value, capped the same way by frequency.
Vocab build_vocab(std::string_view corpus, VocabMode mode, std::size_t max_size);
Vocab build_vocab(std::istream& in, VocabMode mode, std::size_t max_size, std::size_t chunk_bytes = 1 << 16);

using TokenStream = std::vector<TokenId>;

// Line by line; <eos> closes every line (a final line without newline too).
TokenStream encode(std::string_view text, const Vocab& vocab);
// Inverse of encode for in-vocabulary text: <eos> becomes "\n", word tokens
// on a line are joined by single spaces.
std::string decode(const TokenStream& stream, const Vocab& vocab);

// Non-overlapping next-token windows. The stream is cut into B contiguous
// shards of floor(N / B) tokens; batch i holds window i of every shard.
class BatchIterator {
 public:
  BatchIterator(const TokenStream& stream, std::size_t batch, std::size_t steps);

  std::size_t num_batches() const { return num_batches_; }
  std::size_t batch_size() const { return batch_; }
  std::size_t steps() const { return steps_; }

  Batch batch_at(std::size_t index) const;
  // Sequential order unless shuffle() was called.
  std::optional<Batch> next();
  void reset() { cursor_ = 0; }
  // Permutes window order for this pass with a seeded generator.
  void shuffle(std::uint64_t seed);

 private:
  const TokenStream* stream_;
  std::size_t batch_;
  std::size_t steps_;
  std::size_t shard_len_;
  std::size_t num_batches_;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

// Throws DataError stating the minimum length when the stream is too short.
BatchIterator batchify(const TokenStream& stream, std::size_t batch, std::size_t steps);

std::string read_file(const std::string& path);

}  // namespace dsf::data
