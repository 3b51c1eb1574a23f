#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "adens/corpus.hpp"
#include "adens/types.hpp"
#include "doctest.h"

using namespace adens;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "adens_test_corpus";
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("tokenize splits whitespace and isolates punctuation") {
  CHECK(tokenize("the cat sat") == Words{"the", "cat", "sat"});
  CHECK(tokenize("  spaced\tout \n") == Words{"spaced", "out"});
  CHECK(tokenize("hello, world!") == Words{"hello", ",", "world", "!"});
  CHECK(tokenize("a(b)c") == Words{"a", "(", "b", ")", "c"});
  CHECK(tokenize("") == Words{});
  CHECK(tokenize("   ") == Words{});
}

TEST_CASE("tokenize keeps UTF-8 sequences intact") {
  CHECK(tokenize("caf\xc3\xa9 bar") == Words{"caf\xc3\xa9", "bar"});
  CHECK(tokenize("\xe6\x97\xa5\xe6\x9c\xac") == Words{"\xe6\x97\xa5\xe6\x9c\xac"});
}

TEST_CASE("filter_pair enforces bounds and ratio") {
  FilterOptions opts;
  opts.min_tokens = 2;
  opts.max_tokens = 6;
  opts.max_length_ratio = 2.0;
  CHECK(filter_pair(3, 4, opts));
  CHECK_FALSE(filter_pair(1, 3, opts));   // source too short
  CHECK_FALSE(filter_pair(3, 7, opts));   // target too long
  CHECK_FALSE(filter_pair(2, 5, opts));   // ratio 2.5
  CHECK(filter_pair(2, 4, opts));         // ratio exactly at the bound
  CHECK(filter_pair(Words{"a", "b"}, Words{"c", "d", "e"}, opts));
}

TEST_CASE("bpe learns most frequent pairs first, ties lexicographic") {
  // "ab" occurs in every word, 3 times total; no other pair beats it.
  std::vector<Words> corpus = {{"abc", "abd"}, {"ab"}};
  BpeModel model = train_bpe(corpus, 1);
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == std::pair<std::string, std::string>{"a", "b"});

  // All pairs tie at count 1: lexicographically smallest pair wins.
  BpeModel tie = train_bpe({{"xy"}, {"uv"}}, 1);
  REQUIRE(tie.merges.size() == 1);
  CHECK(tie.merges[0] == std::pair<std::string, std::string>{"u", "v"});
}

TEST_CASE("bpe stops when nothing is left to join") {
  BpeModel model = train_bpe({{"aa"}}, 10);
  CHECK(model.merges.size() == 1);  // "aa" then a single symbol remains
}

TEST_CASE("bpe apply and restore round-trip arbitrary words") {
  std::vector<Words> corpus = {{"lower", "lowest"}, {"newer", "newest"}, {"low", "new"}};
  BpeModel model = train_bpe(corpus, 8);
  for (const Words& sent :
       {Words{"lower", "newest"}, Words{"low"}, Words{"unrelated", "zq"}, Words{"new", "new"}}) {
    Words pieces = apply_bpe(model, sent);
    CHECK(bpe_restore(pieces) == sent);
  }
}

TEST_CASE("bpe apply leaves words without applicable merges as characters") {
  BpeModel model = train_bpe({{"aaaa", "aaab"}}, 4);
  // No merge mentions these symbols; every character must survive unchanged.
  Words pieces = apply_bpe(model, {"xyz"});
  CHECK(pieces == Words{"x@@", "y@@", "z"});
  CHECK(bpe_restore(pieces) == Words{"xyz"});
}

TEST_CASE("bpe_split_word agrees with apply_bpe modulo markers") {
  std::vector<Words> corpus = {{"lower", "lowest", "lowly"}};
  BpeModel model = train_bpe(corpus, 5);
  Words via_apply = apply_bpe(model, {"lowest"});
  std::vector<std::string> split = bpe_split_word(model, "lowest");
  REQUIRE(via_apply.size() == split.size());
  CHECK(bpe_restore(via_apply) == Words{"lowest"});
  std::string joined;
  for (const std::string& s : split) joined += s;
  CHECK(joined == "lowest");
}

TEST_CASE("bpe training is deterministic") {
  std::vector<Words> corpus = {{"abcde", "abcef"}, {"bcd", "cde"}, {"ab", "de"}};
  BpeModel a = train_bpe(corpus, 6);
  BpeModel b = train_bpe(corpus, 6);
  CHECK(a.merges == b.merges);
}

TEST_CASE("bpe save and load round-trip") {
  std::vector<Words> corpus = {{"lower", "lowest"}, {"newer", "newest"}};
  BpeModel model = train_bpe(corpus, 6);
  fs::path p = temp_dir() / "merges.txt";
  save_bpe(p.string(), model);
  BpeModel back = load_bpe(p.string());
  CHECK(back.merges == model.merges);
}

TEST_CASE("vocabulary reserves control ids and resolves unknowns") {
  Vocabulary v;
  CHECK(v.size() == 3);
  CHECK(v.token(Vocabulary::kBos) == "<s>");
  CHECK(v.token(Vocabulary::kEos) == "</s>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");

  TokenId cat = v.add("cat");
  CHECK(v.add("cat") == cat);  // idempotent insert
  CHECK(v.id("cat") == cat);
  CHECK(v.id("dog") == Vocabulary::kUnk);
  CHECK(v.token(cat) == "cat");
}

TEST_CASE("vocabulary encode and decode") {
  Vocabulary v;
  v.add_all({{"the", "cat"}, {"sat"}});
  Sentence s = v.encode({"the", "dog", "sat"}, "the dog sat");
  REQUIRE(s.ids.size() == 3);
  CHECK(s.ids[1] == Vocabulary::kUnk);
  CHECK(s.raw == "the dog sat");
  CHECK(v.decode(s) == Words{"the", "<unk>", "sat"});
}

TEST_CASE("vocabulary save and load preserve order and fingerprint") {
  Vocabulary v;
  v.add_all({{"royal", "navy"}, {"navy", "blue"}});
  fs::path p = temp_dir() / "vocab.txt";
  save_vocab(p.string(), v);
  Vocabulary back = load_vocab(p.string());
  CHECK(back.size() == v.size());
  CHECK(back.id("royal") == v.id("royal"));
  CHECK(vocab_fingerprint(back) == vocab_fingerprint(v));

  Vocabulary other;
  other.add_all({{"navy", "royal"}, {"blue"}});  // same tokens, different order
  CHECK(vocab_fingerprint(other) != vocab_fingerprint(v));
}

TEST_CASE("load_parallel reads pairs, counts filtered ones, skips blanks") {
  fs::path p = temp_dir() / "pairs.tsv";
  write_file(p, "the cat sat\tle chat assis\n\nx\ty\nfour tokens here now\tquatre morceaux ici la\n");
  FilterOptions opts;
  opts.min_tokens = 2;
  RawParallel raw = load_parallel(p.string(), opts);
  CHECK(raw.kept == 2);
  CHECK(raw.dropped_by_filter == 1);  // the single-token pair
  REQUIRE(raw.pairs.size() == 2);
  CHECK(raw.pairs[0].first == Words{"the", "cat", "sat"});
  CHECK(raw.pairs[0].second == Words{"le", "chat", "assis"});
}

TEST_CASE("load_parallel reports malformed lines by number") {
  fs::path p = temp_dir() / "bad.tsv";
  write_file(p, "good\tpair of tokens\nno tab here\n");
  FilterOptions opts;
  opts.min_tokens = 1;
  CHECK_THROWS_WITH_AS(load_parallel(p.string(), opts),
                       doctest::Contains("line 2"), DataError);

  fs::path q = temp_dir() / "twotabs.tsv";
  write_file(q, "a b\tc d\te f\n");
  CHECK_THROWS_AS(load_parallel(q.string(), opts), DataError);

  CHECK_THROWS_AS(load_parallel((temp_dir() / "missing.tsv").string(), opts), DataError);
}

TEST_CASE("save_parallel and load_parallel round-trip") {
  RawParallel raw;
  raw.pairs = {{{"the", "cat"}, {"le", "chat"}}, {{"a", "dog", "ran"}, {"un", "chien", "courait"}}};
  raw.kept = 2;
  fs::path p = temp_dir() / "roundtrip.tsv";
  save_parallel(p.string(), raw);
  FilterOptions opts;
  opts.min_tokens = 1;
  RawParallel back = load_parallel(p.string(), opts);
  CHECK(back.pairs == raw.pairs);
}

TEST_CASE("load_mono reads one sentence per line") {
  fs::path p = temp_dir() / "mono.txt";
  write_file(p, "the cat\n\nthe dog runs\n");
  std::vector<Words> lines = load_mono(p.string());
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == Words{"the", "cat"});
  CHECK(lines[1] == Words{"the", "dog", "runs"});
}

TEST_CASE("encode_corpus applies bpe and vocabulary") {
  RawParallel raw;
  raw.pairs = {{{"lower"}, {"lowest"}}};
  std::vector<Words> all = {{"lower", "lowest"}};
  BpeModel bpe = train_bpe(all, 3);

  Vocabulary vocab;
  for (const Words& w : all)
    for (const std::string& word : w)
      for (const std::string& piece : apply_bpe(bpe, {word})) vocab.add(piece);

  ParallelCorpus enc = encode_corpus(raw, &bpe, vocab, "alpha");
  CHECK(enc.domain_tag == "alpha");
  REQUIRE(enc.pairs.size() == 1);
  CHECK(vocab.decode(enc.pairs[0].first) == apply_bpe(bpe, {"lower"}));

  // Without BPE the words are looked up directly (and miss here).
  ParallelCorpus plain = encode_corpus(raw, nullptr, vocab, "beta");
  CHECK(plain.pairs[0].first.ids[0] == Vocabulary::kUnk);
}
