#ifndef ADENS_ENSEMBLE_HPP
#define ADENS_ENSEMBLE_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adens/ngram.hpp"
#include "adens/seqmodel.hpp"

namespace adens {

// K x T matrix of interpolation weights; column t gives the model mixture
// that represents task t, so every column sums to 1.
class LambdaMatrix {
 public:
  LambdaMatrix() = default;
  LambdaMatrix(std::size_t models, std::size_t tasks, std::vector<double> weights);

  std::size_t models() const { return models_; }
  std::size_t tasks() const { return tasks_; }
  double at(std::size_t k, std::size_t t) const { return w_[k * tasks_ + t]; }
  double& at(std::size_t k, std::size_t t) { return w_[k * tasks_ + t]; }
  const std::vector<double>& data() const { return w_; }

  void validate() const;  // throws DataError unless columns are stochastic

 private:
  std::size_t models_ = 0;
  std::size_t tasks_ = 0;
  std::vector<double> w_;
};

LambdaMatrix identity_lambda(std::size_t k);
LambdaMatrix uniform_lambda(std::size_t models, std::size_t tasks);

enum class LambdaEstimation {
  kLengthNormalized,  // per-sentence exp(log G(x) / |x|); soft weights
  kLiteral,           // whole-corpus probability per model; sharp weights
};

// Estimates column-stochastic interpolation weights from how well each
// model's source language model scores each task's validation sentences:
// lambda[k][t] = S_k(V_t) / sum_k' S_k'(V_t).
LambdaMatrix estimate_lambda(const std::vector<const NgramLm*>& lms,
                             const std::vector<std::vector<Sentence>>& validation_sources,
                             LambdaEstimation mode = LambdaEstimation::kLengthNormalized);

void save_lambda_tsv(const std::string& path, const LambdaMatrix& lambda,
                     const std::vector<std::string>& model_names,
                     const std::vector<std::string>& task_names);
LambdaMatrix load_lambda_tsv(const std::string& path);

// How the ensemble sets its task prior and interpolation weights. The two
// static schemes fix the mixture for a whole sentence; the adaptive ones
// update the task posterior after every emitted token.
enum class Scheme {
  kUniform,     // static, flat prior, flat lambda
  kIs,          // static, source-informed prior, identity lambda
  kIdentityBi,  // adaptive, flat prior, identity lambda
  kBi,          // adaptive, flat prior, estimated lambda
  kBiIs,        // adaptive, source-informed prior, estimated lambda
};

const char* scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);
bool scheme_is_adaptive(Scheme s);
bool scheme_needs_source_lms(Scheme s);

struct EnsembleSpec {
  std::vector<std::shared_ptr<const ConditionalSequenceModel>> models;
  std::vector<std::shared_ptr<const NgramLm>> lms;  // per task, only for source priors
  LambdaMatrix lambda;
  Scheme scheme = Scheme::kUniform;

  std::size_t model_count() const { return models.size(); }
  std::size_t task_count() const { return lambda.tasks(); }

  // Fills in the lambda the scheme dictates (flat or identity) and checks
  // the pieces agree; estimated-lambda schemes must pass their matrix in.
  static EnsembleSpec make(std::vector<std::shared_ptr<const ConditionalSequenceModel>> models,
                           std::vector<std::shared_ptr<const NgramLm>> lms, Scheme scheme,
                           const LambdaMatrix* estimated = nullptr);
};

// Accumulated log evidence per task; the posterior is its softmax. Values are
// cheap to copy, so each decoder hypothesis carries its own state.
struct TaskPosteriorState {
  std::vector<double> log_alpha;
  std::vector<double> posterior() const;
};

// Prior state for one source sentence: flat, or informed by the source
// language models for the source-prior schemes.
TaskPosteriorState init_posterior(const EnsembleSpec& spec, const Sentence& source);

// Bayes update with one emitted token: log_alpha[t] += log sum_k
// lambda[k][t] * p_k(token). `chosen_probs` holds each model's probability of
// the token that was emitted. Throws DataError if every task scores zero.
TaskPosteriorState update_posterior(const TaskPosteriorState& state, const EnsembleSpec& spec,
                                    std::span<const double> chosen_probs);

// W_k = sum_t posterior_t * lambda[k][t]; sums to 1.
std::vector<double> ensemble_weights(const TaskPosteriorState& state, const EnsembleSpec& spec);

// Everything one decode step needs: each model's distribution, the current
// weights, and the weighted mixture.
struct StepDetail {
  std::vector<std::vector<double>> per_model;
  std::vector<double> weights;
  std::vector<double> mixture;
};
StepDetail ensemble_step_detail(const EnsembleSpec& spec, const TaskPosteriorState& state,
                                const Sentence& source, std::span<const TokenId> history);

// The mixture distribution alone.
std::vector<double> combined_step(const EnsembleSpec& spec, const TaskPosteriorState& state,
                                  const Sentence& source, std::span<const TokenId> history);

}  // namespace adens

#endif  // ADENS_ENSEMBLE_HPP
