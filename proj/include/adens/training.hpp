#ifndef ADENS_TRAINING_HPP
#define ADENS_TRAINING_HPP

#include <string>
#include <vector>

#include "adens/seqmodel.hpp"

namespace adens {

enum class RegularizerMode { kNone, kL2, kEwc };

// Quadratic parameter penalty added to the negative log-likelihood:
//   loss = -LL(data) + lambda * sum_j f_j * (theta_j - anchor_j)^2
// where f_j is 1 in L2 mode and the Fisher diagonal in EWC mode. kNone
// ignores the penalty entirely, whatever lambda says.
struct RegularizerConfig {
  RegularizerMode mode = RegularizerMode::kNone;
  double lambda = 0.0;
  std::vector<double> anchor;  // parameter snapshot the penalty pulls toward
  std::vector<double> fisher;  // diagonal weights, EWC mode only

  void validate(std::size_t param_count) const;
};

struct FisherEstimate {
  std::vector<double> values;
  std::size_t samples_used = 0;
};

// Diagonal empirical Fisher: mean over sampled events of the squared gradient
// of the event log-probability. When `samples` covers the corpus, every event
// is used exactly once; otherwise events are drawn uniformly with replacement.
FisherEstimate estimate_fisher_diagonal(const ToyNeuralModel& model, const ParallelCorpus& data,
                                        std::size_t samples, std::uint64_t seed);

double regularized_loss(const ToyNeuralModel& model, const ParallelCorpus& data,
                        const RegularizerConfig& cfg);
// Penalty term alone (0 in kNone mode or when lambda is 0).
double penalty_term(const ToyNeuralModel& model, const RegularizerConfig& cfg);
std::vector<double> regularized_gradient(const ToyNeuralModel& model, const ParallelCorpus& data,
                                         const RegularizerConfig& cfg);

struct FineTuneResult {
  ToyNeuralModel model;
  struct Row {
    std::size_t step;
    double loss;
    double penalty;
  };
  std::vector<Row> trace;  // loss before each update
};

// Plain batch gradient descent with a fixed learning rate. Throws
// NumericError naming the step if the loss or gradient goes non-finite.
FineTuneResult fine_tune(const ToyNeuralModel& start, const ParallelCorpus& data,
                         const RegularizerConfig& cfg, std::size_t steps, double lr);

void save_trace_csv(const std::string& path, const std::vector<FineTuneResult::Row>& trace);

// exp(mean negative log-likelihood per event); the uniform model scores
// exactly the vocabulary size.
double perplexity(const ConditionalSequenceModel& model, const ParallelCorpus& data);

}  // namespace adens

#endif  // ADENS_TRAINING_HPP
