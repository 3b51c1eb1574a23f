#ifndef ADENS_SEQMODEL_HPP
#define ADENS_SEQMODEL_HPP

#include <memory>
#include <span>
#include <vector>

#include "adens/corpus.hpp"
#include "adens/types.hpp"

namespace adens {

// A conditional next-token model: given a source sentence and the target
// prefix emitted so far, produce a full distribution over the next target
// token. The end marker is an ordinary predictable token; the begin marker
// stands in for the previous token when the prefix is empty.
class ConditionalSequenceModel {
 public:
  virtual ~ConditionalSequenceModel() = default;
  virtual std::size_t target_vocab() const = 0;
  // Returns a probability vector of size target_vocab() summing to 1.
  virtual std::vector<double> step(const Sentence& source,
                                   std::span<const TokenId> history) const = 0;
};

// Count-table model: p(y | prev, x) proportional to
// (bigram[prev][y] + bigram_floor) * (mean source co-occurrence + source_floor).
// Deterministic and cheap; used as a stand-in where training a neural model
// would add nothing.
class TableModel : public ConditionalSequenceModel {
 public:
  static TableModel train(const ParallelCorpus& data, std::size_t vocab_size,
                          double bigram_floor = 0.5, double source_floor = 0.5);
  // Explicit conditional rows[prev][y]; each row must have positive sum.
  // Rows are normalized as given and the source side is ignored.
  static TableModel from_bigram(std::size_t vocab_size, const std::vector<std::vector<double>>& rows);

  std::size_t target_vocab() const override { return vocab_; }
  std::vector<double> step(const Sentence& source, std::span<const TokenId> history) const override;

 private:
  TableModel() = default;
  std::size_t vocab_ = 0;
  std::vector<double> bigram_;   // vocab_ x vocab_, counts or direct weights
  std::vector<double> src_cooc_; // vocab_ x vocab_, counts; empty when unused
  double bigram_floor_ = 0.0;
  double source_floor_ = 0.0;
};

// Minimal trainable model: embed the previous target token and the mean of
// the source token embeddings, concatenate, one tanh hidden layer, softmax.
class ToyNeuralModel : public ConditionalSequenceModel {
 public:
  struct Shape {
    std::size_t target_vocab = 0;
    std::size_t source_vocab = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;

    std::size_t target_embed_offset() const { return 0; }
    std::size_t source_embed_offset() const { return target_vocab * embed_dim; }
    std::size_t hidden_weight_offset() const { return source_embed_offset() + source_vocab * embed_dim; }
    std::size_t hidden_bias_offset() const { return hidden_weight_offset() + hidden_dim * 2 * embed_dim; }
    std::size_t output_weight_offset() const { return hidden_bias_offset() + hidden_dim; }
    std::size_t output_bias_offset() const { return output_weight_offset() + target_vocab * hidden_dim; }
    std::size_t param_count() const { return output_bias_offset() + target_vocab; }
  };

  ToyNeuralModel(Shape shape, std::vector<double> params);
  static ToyNeuralModel zeros(Shape shape);
  // Uniform init on [-0.1, 0.1], reproducible from the seed.
  static ToyNeuralModel random_init(Shape shape, std::uint64_t seed);

  std::size_t target_vocab() const override { return shape_.target_vocab; }
  std::vector<double> step(const Sentence& source, std::span<const TokenId> history) const override;

  const Shape& shape() const { return shape_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& mutable_params() { return params_; }

  double event_log_prob(const Sentence& source, std::span<const TokenId> history,
                        TokenId target) const;
  // Adds scale * d(-log p(target | history, source)) / d(params) into grad.
  void add_event_nll_grad(const Sentence& source, std::span<const TokenId> history,
                          TokenId target, std::span<double> grad, double scale) const;

 private:
  struct Forward;
  Forward forward(const Sentence& source, std::span<const TokenId> history) const;

  Shape shape_;
  std::vector<double> params_;
};

// Sum over all pairs of log step probabilities for each target token and the
// final end marker.
double log_likelihood(const ConditionalSequenceModel& model, const ParallelCorpus& data);

// Number of scored events: target tokens plus one end marker per pair.
std::size_t event_count(const ParallelCorpus& data);

// Gradient of the negative log-likelihood, summed over the batch.
std::vector<double> nll_gradient(const ToyNeuralModel& model, const ParallelCorpus& data);

// Self-describing JSON checkpoint with shapes, vocabulary fingerprint, and
// parameters. Loading validates the fingerprint when a vocabulary is given.
void save_model(const std::string& path, const ToyNeuralModel& model, std::uint64_t vocab_fp);
ToyNeuralModel load_model(const std::string& path, const std::uint64_t* expect_vocab_fp = nullptr);

}  // namespace adens

#endif  // ADENS_SEQMODEL_HPP
