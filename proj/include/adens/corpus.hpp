#ifndef ADENS_CORPUS_HPP
#define ADENS_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adens/types.hpp"

namespace adens {

using Words = std::vector<std::string>;

// A sentence after vocabulary encoding. `ids` is never empty for corpus data.
struct Sentence {
  std::vector<TokenId> ids;
  std::string raw;
};

// Splits on whitespace and breaks ASCII punctuation into single-character
// tokens. Bytes >= 0x80 are treated as word characters, so UTF-8 text stays
// intact.
Words tokenize(const std::string& line);

struct FilterOptions {
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 120;
  double max_length_ratio = 4.5;
};

// True when both sides are within the length bounds and neither side is
// longer than max_length_ratio times the other.
bool filter_pair(std::size_t src_tokens, std::size_t tgt_tokens, const FilterOptions& opts);
bool filter_pair(const Words& src, const Words& tgt, const FilterOptions& opts);

// Byte-pair encoding over word-internal character sequences. Non-final pieces
// of a split word carry the "@@" continuation marker so the original word
// boundaries survive a round trip.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
};

inline constexpr const char* kBpeContinuation = "@@";

// Learns up to `merges` merges by repeatedly joining the most frequent
// adjacent symbol pair; ties go to the lexicographically smallest pair.
// Returns fewer merges when the corpus runs out of joinable pairs.
BpeModel train_bpe(const std::vector<Words>& sentences, std::size_t merges);

Words apply_bpe(const BpeModel& model, const Words& words);
// Splits one word into its final merged pieces (no continuation markers).
std::vector<std::string> bpe_split_word(const BpeModel& model, const std::string& word);
// Joins continuation-marked pieces back into words.
Words bpe_restore(const Words& pieces);

void save_bpe(const std::string& path, const BpeModel& model);
BpeModel load_bpe(const std::string& path);

class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;  // begin-of-sentence marker, never predicted
  static constexpr TokenId kEos = 1;  // end-of-sentence marker
  static constexpr TokenId kUnk = 2;  // unknown token

  Vocabulary();

  TokenId add(const std::string& token);       // insert or look up
  void add_all(const std::vector<Words>& sentences);
  TokenId id(const std::string& token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }

  Sentence encode(const Words& words, std::string raw = "") const;
  Words decode(const Sentence& s) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId> index_;
};

void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

// Order-sensitive digest of the token list; checkpoints store it so a model
// is never silently paired with the wrong vocabulary.
std::uint64_t vocab_fingerprint(const Vocabulary& vocab);

struct ParallelCorpus {
  std::vector<std::pair<Sentence, Sentence>> pairs;  // (source, target)
  std::string domain_tag;
};

// Word-level corpus before subword encoding.
struct RawParallel {
  std::vector<std::pair<Words, Words>> pairs;
  std::size_t dropped_by_filter = 0;
  std::size_t kept = 0;
};

// Reads a UTF-8 file with one pair per line, source TAB target. Pairs failing
// the filter are dropped and counted. Non-empty lines without exactly one tab
// raise DataError naming the line number. Blank lines are skipped.
RawParallel load_parallel(const std::string& path, const FilterOptions& opts);

// One sentence per line.
std::vector<Words> load_mono(const std::string& path);

void save_parallel(const std::string& path, const RawParallel& corpus);

// Applies BPE (when given) and vocabulary encoding to a raw corpus.
ParallelCorpus encode_corpus(const RawParallel& raw, const BpeModel* bpe,
                             const Vocabulary& vocab, std::string domain_tag);

}  // namespace adens

#endif  // ADENS_CORPUS_HPP
