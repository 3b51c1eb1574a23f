#ifndef ADENS_SYNTH_HPP
#define ADENS_SYNTH_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adens/corpus.hpp"

namespace adens {

// Synthetic multi-domain translation data. All domains share a core
// vocabulary with one fixed successor chain, and each domain adds its own
// exclusive vocabulary with its own chain. A sentence is a random-entry walk
// along one chain, or a core walk that switches into the domain chain midway,
// so domains are tellable apart exactly by their exclusive n-grams while core
// material looks the same everywhere. Targets follow a global one-to-one word
// mapping, giving every source an oracle translation.
struct SynthParams {
  std::size_t domains = 2;
  std::size_t core_vocab = 24;
  std::size_t excl_vocab = 48;   // per domain
  double overlap = 0.65;         // fraction of sentences drawn from the core chain
  double switch_frac = 0.0;      // of the rest, fraction that open with a core prefix
  std::size_t train_pairs = 200;
  std::size_t valid_pairs = 48;
  std::size_t test_pairs = 48;
  std::size_t min_len = 6;
  std::size_t max_len = 11;
};

class SynthGenerator {
 public:
  SynthGenerator(SynthParams params, std::uint64_t master_seed);

  const SynthParams& params() const { return params_; }
  const std::vector<std::string>& domain_names() const { return names_; }

  // Splits are independent named sub-streams of the master seed, so the same
  // (domain, split) pair always regenerates identical data.
  RawParallel make_split(std::size_t domain, const std::string& split, std::size_t pairs) const;

  // Oracle word-for-word translation.
  Words translate(const Words& src) const;

  bool is_exclusive_word(const std::string& word, std::size_t domain) const;

  // A diagnostic sentence: a core-chain walk followed by an exclusive-chain
  // walk in the given domain.
  struct Probe {
    Words src;
    Words tgt;
    std::size_t neutral_words = 0;
    std::size_t exclusive_words = 0;
  };
  Probe make_probe(std::size_t domain, std::size_t neutral_words, std::size_t exclusive_words,
                   std::size_t index) const;

 private:
  Words walk_core(std::mt19937_64& gen, std::size_t len) const;
  Words walk_exclusive(std::mt19937_64& gen, std::size_t domain, std::size_t len) const;
  std::size_t core_count(std::size_t pairs) const;
  std::vector<Words> core_block(const std::string& split, std::size_t count) const;

  SynthParams params_;
  std::uint64_t seed_;
  std::vector<std::string> names_;
  std::vector<std::size_t> core_next_;               // successor chain over core ids
  std::vector<std::vector<std::size_t>> excl_next_;  // per domain
};

}  // namespace adens

#endif  // ADENS_SYNTH_HPP
