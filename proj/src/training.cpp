#include "adens/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "adens/numeric.hpp"
#include "adens/rng.hpp"

namespace adens {

void RegularizerConfig::validate(std::size_t param_count) const {
  if (mode == RegularizerMode::kNone) return;
  if (lambda < 0.0) throw DataError("regularizer: lambda must be non-negative");
  if (anchor.size() != param_count) throw DataError("regularizer: anchor length mismatch");
  if (mode == RegularizerMode::kEwc && fisher.size() != param_count)
    throw DataError("regularizer: fisher length mismatch");
}

FisherEstimate estimate_fisher_diagonal(const ToyNeuralModel& model, const ParallelCorpus& data,
                                        std::size_t samples, std::uint64_t seed) {
  if (data.pairs.empty()) throw DataError("estimate_fisher_diagonal: empty corpus");
  if (samples == 0) throw DataError("estimate_fisher_diagonal: need at least one sample");

  // flat index of every scored event
  std::vector<std::pair<std::size_t, std::size_t>> events;
  for (std::size_t p = 0; p < data.pairs.size(); ++p)
    for (std::size_t i = 0; i <= data.pairs[p].second.ids.size(); ++i)
      events.emplace_back(p, i);

  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  if (samples >= events.size()) {
    chosen = events;
  } else {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<std::size_t> pick(0, events.size() - 1);
    chosen.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) chosen.push_back(events[pick(gen)]);
  }

  std::size_t n = model.shape().param_count();
  FisherEstimate est;
  est.values.assign(n, 0.0);
  est.samples_used = chosen.size();
  std::vector<double> grad(n);
  for (const auto& [p, i] : chosen) {
    const auto& [src, tgt] = data.pairs[p];
    TokenId y = i < tgt.ids.size() ? tgt.ids[i] : Vocabulary::kEos;
    std::span<const TokenId> history(tgt.ids.data(), i);
    std::fill(grad.begin(), grad.end(), 0.0);
    // gradient of log p and of -log p square to the same thing
    model.add_event_nll_grad(src, history, y, grad, 1.0);
    for (std::size_t j = 0; j < n; ++j) est.values[j] += grad[j] * grad[j];
  }
  double inv = 1.0 / static_cast<double>(chosen.size());
  for (double& v : est.values) v *= inv;
  return est;
}

double penalty_term(const ToyNeuralModel& model, const RegularizerConfig& cfg) {
  if (cfg.mode == RegularizerMode::kNone || cfg.lambda == 0.0) return 0.0;
  cfg.validate(model.params().size());
  const std::vector<double>& theta = model.params();
  double sum = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    double f = cfg.mode == RegularizerMode::kL2 ? 1.0 : cfg.fisher[j];
    double d = theta[j] - cfg.anchor[j];
    sum += f * d * d;
  }
  return cfg.lambda * sum;
}

double regularized_loss(const ToyNeuralModel& model, const ParallelCorpus& data,
                        const RegularizerConfig& cfg) {
  return -log_likelihood(model, data) + penalty_term(model, cfg);
}

std::vector<double> regularized_gradient(const ToyNeuralModel& model, const ParallelCorpus& data,
                                         const RegularizerConfig& cfg) {
  std::vector<double> grad = nll_gradient(model, data);
  if (cfg.mode == RegularizerMode::kNone || cfg.lambda == 0.0) return grad;
  cfg.validate(grad.size());
  const std::vector<double>& theta = model.params();
  for (std::size_t j = 0; j < grad.size(); ++j) {
    double f = cfg.mode == RegularizerMode::kL2 ? 1.0 : cfg.fisher[j];
    grad[j] += 2.0 * cfg.lambda * f * (theta[j] - cfg.anchor[j]);
  }
  return grad;
}

FineTuneResult fine_tune(const ToyNeuralModel& start, const ParallelCorpus& data,
                         const RegularizerConfig& cfg, std::size_t steps, double lr) {
  if (data.pairs.empty()) throw DataError("fine_tune: empty corpus");
  cfg.validate(start.params().size());
  FineTuneResult result{start, {}};
  result.trace.reserve(steps);
  for (std::size_t step = 1; step <= steps; ++step) {
    double penalty = penalty_term(result.model, cfg);
    double loss = -log_likelihood(result.model, data) + penalty;
    if (!std::isfinite(loss))
      throw NumericError("fine_tune: non-finite loss at step " + std::to_string(step));
    result.trace.push_back({step, loss, penalty});
    std::vector<double> grad = regularized_gradient(result.model, data, cfg);
    if (!all_finite(grad))
      throw NumericError("fine_tune: non-finite gradient at step " + std::to_string(step));
    std::vector<double>& theta = result.model.mutable_params();
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * grad[j];
  }
  return result;
}

void save_trace_csv(const std::string& path, const std::vector<FineTuneResult::Row>& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "step,loss,penalty\n";
  char buf[64];
  auto fmt = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    (void)ec;
    return std::string(buf, p);
  };
  for (const auto& row : trace) out << row.step << ',' << fmt(row.loss) << ',' << fmt(row.penalty) << '\n';
}

double perplexity(const ConditionalSequenceModel& model, const ParallelCorpus& data) {
  std::size_t n = event_count(data);
  if (n == 0) throw DataError("perplexity: empty corpus");
  return std::exp(-log_likelihood(model, data) / static_cast<double>(n));
}

}  // namespace adens
