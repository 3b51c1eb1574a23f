#ifndef ADENS_NGRAM_HPP
#define ADENS_NGRAM_HPP

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "adens/corpus.hpp"
#include "adens/types.hpp"

namespace adens {

enum class Smoothing {
  kAbsoluteDiscount,  // interpolated absolute discounting, the normal mode
  kNone,              // raw relative frequencies; diagnostic use only
};

struct NgramOptions {
  Smoothing smoothing = Smoothing::kAbsoluteDiscount;
  double discount = 0.75;
};

// Backoff n-gram language model over a shared vocabulary. The begin marker is
// conditioned on but never predicted; every stored context therefore defines
// a distribution over all non-begin tokens that sums to one.
class NgramLm {
 public:
  NgramLm(std::size_t order, std::shared_ptr<const Vocabulary> vocab, NgramOptions opts);

  std::size_t order() const { return order_; }
  const Vocabulary& vocab() const { return *vocab_; }
  const NgramOptions& options() const { return opts_; }

  // log p(token | context), natural log. Context may be any length; only the
  // most recent order-1 tokens are used.
  double log_cond(TokenId token, std::span<const TokenId> context) const;

  // Sum of log p over the sentence's tokens plus the end marker, with begin
  // padding supplied internally.
  double log_prob_sentence(const Sentence& s) const;

  struct ContextEntry {
    std::map<TokenId, double> probs;  // log p, fully interpolated
    double backoff_log = 0.0;         // log of the backoff weight
  };
  const std::map<std::vector<TokenId>, ContextEntry>& table() const { return table_; }

 private:
  friend NgramLm train_ngram(const std::vector<Sentence>&, std::size_t,
                             std::shared_ptr<const Vocabulary>, const NgramOptions&);
  friend NgramLm load_ngram(const std::string&, std::shared_ptr<const Vocabulary>);

  std::size_t order_;
  std::shared_ptr<const Vocabulary> vocab_;
  NgramOptions opts_;
  std::map<std::vector<TokenId>, ContextEntry> table_;
  std::size_t predictable_vocab_ = 0;  // vocab size minus the begin marker
};

// Trains a model of the given order on tokenized sentences. Throws DataError
// on an empty corpus or order of zero.
NgramLm train_ngram(const std::vector<Sentence>& mono, std::size_t order,
                    std::shared_ptr<const Vocabulary> vocab, const NgramOptions& opts = {});

// Text serialization: per-order sections with count headers, one n-gram per
// line as "log10prob<TAB>tokens<TAB>log10backoff".
void save_ngram(const std::string& path, const NgramLm& lm);
NgramLm load_ngram(const std::string& path, std::shared_ptr<const Vocabulary> vocab);

struct TaskPosterior {
  std::vector<double> probs;   // one per model, sums to 1
  bool degenerate = false;     // true when every model scored the input at -inf
};

// Normalized posterior over source language models for one sentence:
// p(t | x) proportional to prior_t * exp(log_prob_sentence_t(x)). Uniform
// priors when `priors` is empty.
TaskPosterior source_task_posterior(const std::vector<const NgramLm*>& lms, const Sentence& x,
                                    std::span<const double> priors = {});

}  // namespace adens

#endif  // ADENS_NGRAM_HPP
