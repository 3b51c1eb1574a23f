#ifndef ADENS_EXPERIMENT_HPP
#define ADENS_EXPERIMENT_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "adens/ensemble.hpp"
#include "adens/synth.hpp"

#include "json.hpp"

namespace adens {

// Full pipeline settings. Defaults are desk-scale: small enough that the
// whole run finishes in a few minutes, large enough that the domain gaps
// and forgetting effects are far from the noise floor.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  SynthParams synth;

  std::size_t bpe_merges = 700;
  std::size_t lm_order = 4;

  std::size_t embed_dim = 12;
  std::size_t hidden_dim = 24;
  std::size_t base_steps = 1000;
  std::size_t adapt_steps = 300;
  double learning_rate = 2e-3;

  std::size_t fisher_samples = 100000;  // >= corpus events means use them all
  std::vector<double> lambda_grid = {0.01, 0.1, 1.0, 10.0, 100.0};
  double ppl_match_slack = 1.10;  // regularized runs must reach noreg's new-domain
                                  // validation perplexity within this factor

  std::size_t beam_size = 4;
  std::size_t max_len = 24;
  std::size_t threads = 2;

  std::size_t probe_count = 10;
  std::size_t probe_neutral_words = 5;
  std::size_t probe_exclusive_words = 4;

  LambdaEstimation lambda_estimation = LambdaEstimation::kLiteral;

  void validate() const;  // throws DataError on nonsense
};

// Runs the whole pipeline and writes every artifact under cfg.out_dir:
// data/, prep/, lm/, model/, adapt/, lambda/, decode/, traj/, summary.json.
// Artifacts are byte-deterministic for a fixed config; wall-clock timings go
// to `log` only. Returns the same JSON written to summary.json.
nlohmann::json run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace adens

#endif  // ADENS_EXPERIMENT_HPP
