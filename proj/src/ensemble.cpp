#include "adens/ensemble.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adens/numeric.hpp"

namespace adens {

LambdaMatrix::LambdaMatrix(std::size_t models, std::size_t tasks, std::vector<double> weights)
    : models_(models), tasks_(tasks), w_(std::move(weights)) {
  if (w_.size() != models_ * tasks_) throw DataError("LambdaMatrix: size mismatch");
  validate();
}

void LambdaMatrix::validate() const {
  if (models_ == 0 || tasks_ == 0) throw DataError("LambdaMatrix: empty");
  for (std::size_t t = 0; t < tasks_; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < models_; ++k) {
      double v = at(k, t);
      if (v < 0.0 || !std::isfinite(v)) throw DataError("LambdaMatrix: bad entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw DataError("LambdaMatrix: column " + std::to_string(t) + " sums to " +
                      std::to_string(sum));
  }
}

LambdaMatrix identity_lambda(std::size_t k) {
  if (k == 0) throw DataError("identity_lambda: zero size");
  std::vector<double> w(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) w[i * k + i] = 1.0;
  return LambdaMatrix(k, k, std::move(w));
}

LambdaMatrix uniform_lambda(std::size_t models, std::size_t tasks) {
  if (models == 0 || tasks == 0) throw DataError("uniform_lambda: zero size");
  std::vector<double> w(models * tasks, 1.0 / static_cast<double>(models));
  return LambdaMatrix(models, tasks, std::move(w));
}

LambdaMatrix estimate_lambda(const std::vector<const NgramLm*>& lms,
                             const std::vector<std::vector<Sentence>>& validation_sources,
                             LambdaEstimation mode) {
  std::size_t k = lms.size();
  std::size_t t = validation_sources.size();
  if (k == 0) throw DataError("estimate_lambda: no language models");
  if (t == 0) throw DataError("estimate_lambda: no validation sets");
  for (const auto& v : validation_sources)
    if (v.empty()) throw DataError("estimate_lambda: empty validation set");

  std::vector<double> w(k * t, 0.0);
  for (std::size_t task = 0; task < t; ++task) {
    const auto& sents = validation_sources[task];
    std::vector<std::vector<double>> logs(k, std::vector<double>(sents.size()));
    for (std::size_t m = 0; m < k; ++m)
      for (std::size_t s = 0; s < sents.size(); ++s)
        logs[m][s] = lms[m]->log_prob_sentence(sents[s]);

    std::vector<double> scores(k, 0.0);
    if (mode == LambdaEstimation::kLengthNormalized) {
      // per-sentence scores on a common per-token scale; soft weights
      for (std::size_t m = 0; m < k; ++m)
        for (std::size_t s = 0; s < sents.size(); ++s)
          scores[m] += std::exp(logs[m][s] / static_cast<double>(sents[s].ids.size()));
      double total = 0.0;
      for (double s : scores) total += s;
      if (total <= 0.0 || !std::isfinite(total))
        throw NumericError("estimate_lambda: degenerate scores for task " + std::to_string(task));
      for (std::size_t m = 0; m < k; ++m) w[m * t + task] = scores[m] / total;
    } else {
      // whole-corpus evidence: each model's probability of the entire
      // validation set, normalized across models in log space
      std::vector<double> totals(k, 0.0);
      for (std::size_t m = 0; m < k; ++m)
        for (double v : logs[m]) totals[m] += v;
      for (double v : totals)
        if (!std::isfinite(v) && v != kLogZero)
          throw NumericError("estimate_lambda: degenerate scores for task " + std::to_string(task));
      std::vector<double> col = softmax_from_logs(totals);
      double total = 0.0;
      for (double c : col) total += c;
      if (total <= 0.0)
        throw NumericError("estimate_lambda: every model scored task " + std::to_string(task) +
                           " at zero");
      for (std::size_t m = 0; m < k; ++m) w[m * t + task] = col[m];
    }
  }
  return LambdaMatrix(k, t, std::move(w));
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void save_lambda_tsv(const std::string& path, const LambdaMatrix& lambda,
                     const std::vector<std::string>& model_names,
                     const std::vector<std::string>& task_names) {
  if (model_names.size() != lambda.models() || task_names.size() != lambda.tasks())
    throw DataError("save_lambda_tsv: name count mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "model";
  for (const auto& n : task_names) out << '\t' << n;
  out << '\n';
  for (std::size_t k = 0; k < lambda.models(); ++k) {
    out << model_names[k];
    for (std::size_t t = 0; t < lambda.tasks(); ++t) out << '\t' << format_double(lambda.at(k, t));
    out << '\n';
  }
}

LambdaMatrix load_lambda_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::size_t tasks = std::count(line.begin(), line.end(), '\t');
  if (tasks == 0) throw DataError(path + ": header has no task columns");
  std::vector<double> w;
  std::size_t models = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string name;
    if (!std::getline(iss, name, '\t'))
      throw DataError(path + ": line " + std::to_string(lineno) + ": missing model name");
    std::string field;
    std::size_t cols = 0;
    while (std::getline(iss, field, '\t')) {
      try {
        w.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(lineno) + ": bad number");
      }
      ++cols;
    }
    if (cols != tasks)
      throw DataError(path + ": line " + std::to_string(lineno) + ": expected " +
                      std::to_string(tasks) + " columns");
    ++models;
  }
  return LambdaMatrix(models, tasks, std::move(w));
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kUniform: return "uniform";
    case Scheme::kIs: return "is";
    case Scheme::kIdentityBi: return "identity_bi";
    case Scheme::kBi: return "bi";
    case Scheme::kBiIs: return "bi_is";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::kUniform, Scheme::kIs, Scheme::kIdentityBi, Scheme::kBi, Scheme::kBiIs})
    if (name == scheme_name(s)) return s;
  throw DataError("unknown scheme: " + name);
}

bool scheme_is_adaptive(Scheme s) {
  return s == Scheme::kIdentityBi || s == Scheme::kBi || s == Scheme::kBiIs;
}

bool scheme_needs_source_lms(Scheme s) { return s == Scheme::kIs || s == Scheme::kBiIs; }

EnsembleSpec EnsembleSpec::make(std::vector<std::shared_ptr<const ConditionalSequenceModel>> models,
                                std::vector<std::shared_ptr<const NgramLm>> lms, Scheme scheme,
                                const LambdaMatrix* estimated) {
  if (models.empty()) throw DataError("EnsembleSpec: no models");
  for (const auto& m : models)
    if (!m) throw DataError("EnsembleSpec: null model");
  std::size_t vocab = models.front()->target_vocab();
  for (const auto& m : models)
    if (m->target_vocab() != vocab) throw DataError("EnsembleSpec: models disagree on vocabulary");

  EnsembleSpec spec;
  spec.models = std::move(models);
  spec.lms = std::move(lms);
  spec.scheme = scheme;
  std::size_t k = spec.models.size();

  switch (scheme) {
    case Scheme::kUniform:
      spec.lambda = uniform_lambda(k, k);
      break;
    case Scheme::kIs:
    case Scheme::kIdentityBi:
      spec.lambda = identity_lambda(k);
      break;
    case Scheme::kBi:
    case Scheme::kBiIs:
      if (!estimated) throw DataError("EnsembleSpec: scheme needs an estimated lambda matrix");
      if (estimated->models() != k) throw DataError("EnsembleSpec: lambda rows != model count");
      estimated->validate();
      spec.lambda = *estimated;
      break;
  }
  if (scheme_needs_source_lms(scheme) && spec.lms.size() != spec.lambda.tasks())
    throw DataError("EnsembleSpec: scheme needs one source language model per task");
  for (const auto& lm : spec.lms)
    if (!lm) throw DataError("EnsembleSpec: null language model");
  return spec;
}

std::vector<double> TaskPosteriorState::posterior() const {
  std::vector<double> p = softmax_from_logs(log_alpha);
  double sum = 0.0;
  for (double v : p) sum += v;
  if (sum == 0.0) throw NumericError("task posterior: all tasks at zero evidence");
  return p;
}

TaskPosteriorState init_posterior(const EnsembleSpec& spec, const Sentence& source) {
  std::size_t t = spec.task_count();
  TaskPosteriorState state;
  state.log_alpha.resize(t);
  double flat = -std::log(static_cast<double>(t));
  if (scheme_needs_source_lms(spec.scheme)) {
    // Unnormalized log evidence; posterior() normalizes, and keeping the raw
    // values means a badly trailing task is small rather than exactly zero.
    bool any_finite = false;
    for (std::size_t i = 0; i < t; ++i) {
      state.log_alpha[i] = spec.lms[i]->log_prob_sentence(source) + flat;
      any_finite = any_finite || state.log_alpha[i] != kLogZero;
    }
    if (!any_finite) std::fill(state.log_alpha.begin(), state.log_alpha.end(), flat);
  } else {
    std::fill(state.log_alpha.begin(), state.log_alpha.end(), flat);
  }
  return state;
}

TaskPosteriorState update_posterior(const TaskPosteriorState& state, const EnsembleSpec& spec,
                                    std::span<const double> chosen_probs) {
  if (chosen_probs.size() != spec.model_count())
    throw DataError("update_posterior: need one probability per model");
  TaskPosteriorState next = state;
  bool any = false;
  for (std::size_t t = 0; t < spec.task_count(); ++t) {
    double mix = 0.0;
    for (std::size_t k = 0; k < spec.model_count(); ++k)
      mix += spec.lambda.at(k, t) * chosen_probs[k];
    next.log_alpha[t] += mix > 0.0 ? std::log(mix) : kLogZero;
    if (next.log_alpha[t] != kLogZero) any = true;
  }
  if (!any) throw DataError("update_posterior: token has zero probability under every task");
  return next;
}

std::vector<double> ensemble_weights(const TaskPosteriorState& state, const EnsembleSpec& spec) {
  std::vector<double> post = state.posterior();
  std::vector<double> w(spec.model_count(), 0.0);
  for (std::size_t k = 0; k < spec.model_count(); ++k)
    for (std::size_t t = 0; t < spec.task_count(); ++t) w[k] += post[t] * spec.lambda.at(k, t);
  return w;
}

StepDetail ensemble_step_detail(const EnsembleSpec& spec, const TaskPosteriorState& state,
                                const Sentence& source, std::span<const TokenId> history) {
  StepDetail d;
  d.per_model.reserve(spec.model_count());
  for (const auto& m : spec.models) d.per_model.push_back(m->step(source, history));
  d.weights = ensemble_weights(state, spec);
  std::size_t vocab = d.per_model.front().size();
  d.mixture.assign(vocab, 0.0);
  for (std::size_t k = 0; k < spec.model_count(); ++k) {
    double wk = d.weights[k];
    const std::vector<double>& p = d.per_model[k];
    for (std::size_t v = 0; v < vocab; ++v) d.mixture[v] += wk * p[v];
  }
  return d;
}

std::vector<double> combined_step(const EnsembleSpec& spec, const TaskPosteriorState& state,
                                  const Sentence& source, std::span<const TokenId> history) {
  return ensemble_step_detail(spec, state, source, history).mixture;
}

}  // namespace adens
