#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dsf/data.hpp"
#include "dsf/error.hpp"

namespace {

using namespace dsf::data;

TEST(Vocab, SpecialTokensFirst) {
  const Vocab v = build_vocab("a a b", VocabMode::Word, 100);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(0), "<unk>");
  EXPECT_EQ(v.token(1), "<eos>");
  EXPECT_EQ(v.token(2), "a");
  EXPECT_EQ(v.token(3), "b");
  EXPECT_EQ(v.id("b"), 3);
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
}

TEST(Vocab, CapKeepsMostFrequent) {
  const Vocab v = build_vocab("a a b c", VocabMode::Word, 3);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("c"));
  const TokenStream s = encode("a c", v);
  EXPECT_EQ(s, (TokenStream{2, Vocab::kUnk, Vocab::kEos}));
}

TEST(Vocab, TiesAreLexicographic) {
  const Vocab v = build_vocab("d c b a", VocabMode::Word, 4);
  EXPECT_EQ(v.token(2), "a");
  EXPECT_EQ(v.token(3), "b");
}

TEST(Vocab, CharModeSkipsNewlineAndSortsByByte) {
  const Vocab v = build_vocab("ba\nab c\n", VocabMode::Char, 100);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(2), " ");
  EXPECT_EQ(v.token(3), "a");
  EXPECT_EQ(v.token(4), "b");
  EXPECT_EQ(v.token(5), "c");
  EXPECT_FALSE(v.contains("\n"));
  const TokenStream s = encode("ab\ncz", v);
  EXPECT_EQ(s, (TokenStream{3, 4, Vocab::kEos, 5, Vocab::kUnk, Vocab::kEos}));
}

TEST(Vocab, EmptyCorpusIsAnError) {
  EXPECT_THROW(build_vocab("", VocabMode::Word, 10), dsf::DataError);
  EXPECT_THROW(build_vocab("  \n\n", VocabMode::Word, 10), dsf::DataError);
}

TEST(Vocab, InsensitiveToChunking) {
  std::string text;
  for (int i = 0; i < 300; ++i) text += "word" + std::to_string(i % 37) + (i % 11 == 0 ? "\n" : "  ");
  for (VocabMode mode : {VocabMode::Word, VocabMode::Char}) {
    const Vocab whole = build_vocab(text, mode, 30);
    for (std::size_t chunk : {1u, 2u, 3u, 7u, 64u, 5000u}) {
      std::istringstream in(text);
      EXPECT_EQ(build_vocab(in, mode, 30, chunk), whole) << chunk;
    }
  }
}

TEST(Vocab, ExportImportRoundTrip) {
  const Vocab v = build_vocab(std::string("tab\there back\\slash caf\xc3\xa9 \x01x"), VocabMode::Char, 100);
  const std::string text = v.export_text();
  EXPECT_EQ(Vocab::import_text(VocabMode::Char, text), v);
  const Vocab w = build_vocab("the cat sat on the mat\n", VocabMode::Word, 100);
  EXPECT_EQ(Vocab::import_text(VocabMode::Word, w.export_text()), w);
}

TEST(Vocab, ModeNames) {
  EXPECT_EQ(parse_vocab_mode("char"), VocabMode::Char);
  EXPECT_EQ(parse_vocab_mode(to_string(VocabMode::Word)), VocabMode::Word);
  EXPECT_THROW(parse_vocab_mode("bpe"), dsf::UsageError);
}

TEST(Encode, WordsAndLines) {
  const Vocab v = build_vocab("the cat\nthe dog\n", VocabMode::Word, 100);
  const TokenStream s = encode("the  cat\n\nthe dog", v);
  EXPECT_EQ(s.size(), 7u);
  EXPECT_EQ(s[2], Vocab::kEos);
  EXPECT_EQ(s[3], Vocab::kEos);
  EXPECT_EQ(s.back(), Vocab::kEos);
  EXPECT_EQ(decode(s, v), "the cat\n\nthe dog\n");
}

TEST(Encode, DecodeInvertsInVocabularyText) {
  const std::string text = "one two three\nfour five\n";
  const Vocab v = build_vocab(text, VocabMode::Word, 100);
  EXPECT_EQ(decode(encode(text, v), v), text);
  const Vocab c = build_vocab(text, VocabMode::Char, 100);
  EXPECT_EQ(decode(encode(text, c), c), text);
}

TEST(Batchify, TenTokensTwoByTwo) {
  TokenStream s(10);
  for (int i = 0; i < 10; ++i) s[i] = i;
  BatchIterator it = batchify(s, 2, 2);
  ASSERT_EQ(it.num_batches(), 2u);
  const dsf::Batch b = it.batch_at(0);
  EXPECT_EQ(b.inputs.ids, (std::vector<dsf::TokenId>{0, 1, 5, 6}));
  EXPECT_EQ(b.targets.ids, (std::vector<dsf::TokenId>{1, 2, 6, 7}));
  const dsf::Batch b1 = it.batch_at(1);
  EXPECT_EQ(b1.inputs.ids, (std::vector<dsf::TokenId>{2, 3, 7, 8}));
  EXPECT_EQ(b1.targets.ids, (std::vector<dsf::TokenId>{3, 4, 8, 9}));
}

TEST(Batchify, TargetsAreNextTokensEverywhere) {
  TokenStream s(1000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<dsf::TokenId>(i);
  for (std::size_t B : {1u, 3u, 7u}) {
    for (std::size_t T : {1u, 5u, 32u}) {
      BatchIterator it = batchify(s, B, T);
      std::set<dsf::TokenId> seen;
      std::size_t count = 0;
      while (auto b = it.next()) {
        ++count;
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t t = 0; t < T; ++t) {
            EXPECT_EQ(b->targets.at(r, t), b->inputs.at(r, t) + 1);
            EXPECT_TRUE(seen.insert(b->inputs.at(r, t)).second);
          }
      }
      EXPECT_EQ(count, it.num_batches());
      EXPECT_EQ(it.num_batches(), (1000 / B - 1) / T);
    }
  }
}

TEST(Batchify, ShuffleIsPermutationAndSeeded) {
  TokenStream s(500);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<dsf::TokenId>(i);
  auto order = [&](std::uint64_t seed) {
    BatchIterator it = batchify(s, 2, 4);
    it.shuffle(seed);
    std::vector<dsf::TokenId> firsts;
    while (auto b = it.next()) firsts.push_back(b->inputs.at(0, 0));
    return firsts;
  };
  const auto a = order(1), b = order(1), c = order(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::set<dsf::TokenId> unique(a.begin(), a.end());
  EXPECT_EQ(unique.size(), a.size());
}

TEST(Batchify, TooShortStatesMinimum) {
  TokenStream s(9);
  try {
    batchify(s, 2, 4);
    FAIL();
  } catch (const dsf::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
  }
}

TEST(ReadFile, MissingFileIsDataError) {
  EXPECT_THROW(read_file("/nonexistent/dir/file.txt"), dsf::DataError);
  const auto path = std::filesystem::temp_directory_path() / "dsf_read_file_test.txt";
  std::ofstream(path) << "hello\n";
  EXPECT_EQ(read_file(path.string()), "hello\n");
  std::filesystem::remove(path);
}

TEST(BundledCorpus, IsAboutOneMegabyteAndEncodable) {
  const std::string dir = std::string(DSF_SOURCE_DIR) + "/data/tiny/";
  const std::string train = read_file(dir + "train.txt");
  const std::string valid = read_file(dir + "valid.txt");
  const std::size_t total = train.size() + valid.size();
  EXPECT_GT(total, 900'000u);
  EXPECT_LT(total, 1'200'000u);
  const Vocab v = build_vocab(train, VocabMode::Char, 256);
  EXPECT_LT(v.size(), 100u);
  for (dsf::TokenId id : encode(valid, v)) EXPECT_NE(id, Vocab::kUnk);
}

}  // namespace
