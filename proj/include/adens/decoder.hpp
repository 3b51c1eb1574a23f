#ifndef ADENS_DECODER_HPP
#define ADENS_DECODER_HPP

#include <optional>
#include <string>
#include <vector>

#include "adens/ensemble.hpp"

namespace adens {

// One row per emitted token of the returned translation: the ensemble
// weights that produced the token and the task posterior after seeing it.
struct TrajectoryRecord {
  struct Row {
    std::size_t step;  // 1-based
    TokenId token;
    std::vector<double> weights;
    std::vector<double> posterior;
  };
  std::vector<Row> rows;
};

struct DecodeResult {
  Sentence translation;  // end marker not included
  double score = 0.0;    // sum of log mixture probabilities, end marker included
  bool finished = false; // false when nothing reached the end marker in time
  TrajectoryRecord trajectory;
};

struct Hypothesis {
  std::vector<TokenId> tokens;
  double score = 0.0;
  TaskPosteriorState state;
};

// Beam search over the ensemble mixture. Scores never improve with length,
// so search stops once the best active hypothesis scores below the best
// completed one. max_len bounds the emitted tokens before the end marker.
// Score ties break toward the lexicographically smaller token sequence.
DecodeResult beam_decode(const EnsembleSpec& spec, const Sentence& source, std::size_t beam_size,
                         std::size_t max_len);

// Scores every token sequence of up to max_len tokens plus the end marker
// and returns the argmax with the same tie-break as beam_decode. Refuses
// instances whose enumeration would exceed a small work bound.
DecodeResult exhaustive_decode(const EnsembleSpec& spec, const Sentence& source,
                               std::size_t max_len);

// Weight and posterior trace for a given target sequence instead of a decoded
// one: feed the tokens through the ensemble as if the decoder had emitted
// them. Useful for studying how the task posterior reacts to known content.
TrajectoryRecord forced_trajectory(const EnsembleSpec& spec, const Sentence& source,
                                   const std::vector<TokenId>& target_tokens);

struct DecodeOptions {
  std::size_t beam_size = 4;
  std::size_t max_len = 32;
  std::size_t threads = 1;
};

// Decodes sentences independently across a small worker pool; results come
// back in input order regardless of thread count.
std::vector<DecodeResult> decode_corpus(const EnsembleSpec& spec,
                                        const std::vector<Sentence>& sources,
                                        const DecodeOptions& opts);

void save_trajectory_tsv(const std::string& path, const TrajectoryRecord& record,
                         const Vocabulary& vocab, const std::vector<std::string>& task_names);

}  // namespace adens

#endif  // ADENS_DECODER_HPP
