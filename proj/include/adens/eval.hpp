#ifndef ADENS_EVAL_HPP
#define ADENS_EVAL_HPP

#include <array>
#include <string>
#include <vector>

#include "adens/corpus.hpp"

namespace adens {

struct BleuReport {
  double bleu = 0.0;                       // 0..100
  std::array<double, 4> precisions{};      // clipped n-gram precision, n = 1..4
  double brevity_penalty = 1.0;
  std::size_t hyp_tokens = 0;
  std::size_t ref_tokens = 0;

  std::string to_json() const;
};

// Corpus-level score with a single reference per hypothesis: geometric mean
// of the clipped 1..4-gram precisions times the brevity penalty, scaled to
// 0..100. No smoothing; a zero precision at any order zeroes the score.
BleuReport corpus_bleu(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references);

// Convenience for word-level text: builds a throwaway shared vocabulary.
BleuReport corpus_bleu_words(const std::vector<Words>& hypotheses,
                             const std::vector<Words>& references);

}  // namespace adens

#endif  // ADENS_EVAL_HPP
