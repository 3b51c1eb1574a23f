#include "adens/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "adens/numeric.hpp"
#include "adens/rng.hpp"

namespace adens {

using json = nlohmann::json;

TableModel TableModel::train(const ParallelCorpus& data, std::size_t vocab_size,
                             double bigram_floor, double source_floor) {
  if (data.pairs.empty()) throw DataError("TableModel::train: empty corpus");
  TableModel m;
  m.vocab_ = vocab_size;
  m.bigram_.assign(vocab_size * vocab_size, 0.0);
  m.src_cooc_.assign(vocab_size * vocab_size, 0.0);
  m.bigram_floor_ = bigram_floor;
  m.source_floor_ = source_floor;
  for (const auto& [src, tgt] : data.pairs) {
    TokenId prev = Vocabulary::kBos;
    for (std::size_t i = 0; i <= tgt.ids.size(); ++i) {
      TokenId y = i < tgt.ids.size() ? tgt.ids[i] : Vocabulary::kEos;
      if (y >= vocab_size || prev >= vocab_size) throw DataError("TableModel::train: token id out of range");
      m.bigram_[prev * vocab_size + y] += 1.0;
      for (TokenId s : src.ids) {
        if (s >= vocab_size) throw DataError("TableModel::train: token id out of range");
        m.src_cooc_[s * vocab_size + y] += 1.0;
      }
      prev = y;
    }
  }
  return m;
}

TableModel TableModel::from_bigram(std::size_t vocab_size,
                                   const std::vector<std::vector<double>>& rows) {
  if (rows.size() != vocab_size) throw DataError("from_bigram: need one row per token");
  TableModel m;
  m.vocab_ = vocab_size;
  m.bigram_.assign(vocab_size * vocab_size, 0.0);
  for (std::size_t r = 0; r < vocab_size; ++r) {
    if (rows[r].size() != vocab_size) throw DataError("from_bigram: row size mismatch");
    double sum = 0.0;
    for (std::size_t c = 0; c < vocab_size; ++c) {
      if (rows[r][c] < 0.0) throw DataError("from_bigram: negative weight");
      m.bigram_[r * vocab_size + c] = rows[r][c];
      sum += rows[r][c];
    }
    if (sum <= 0.0) throw DataError("from_bigram: row " + std::to_string(r) + " has zero mass");
  }
  return m;
}

std::vector<double> TableModel::step(const Sentence& source,
                                     std::span<const TokenId> history) const {
  TokenId prev = history.empty() ? Vocabulary::kBos : history.back();
  if (prev >= vocab_) throw DataError("TableModel::step: history token out of range");
  std::vector<double> probs(vocab_, 0.0);
  double sum = 0.0;
  for (std::size_t y = 0; y < vocab_; ++y) {
    double score = bigram_[prev * vocab_ + y] + bigram_floor_;
    if (!src_cooc_.empty()) {
      double cooc = 0.0;
      for (TokenId s : source.ids) cooc += src_cooc_[s * vocab_ + y];
      score *= cooc / static_cast<double>(source.ids.size()) + source_floor_;
    }
    probs[y] = score;
    sum += score;
  }
  if (sum <= 0.0) throw NumericError("TableModel::step: zero total score");
  for (double& p : probs) p /= sum;
  return probs;
}

struct ToyNeuralModel::Forward {
  TokenId prev;
  std::vector<double> src_mean;  // embed_dim
  std::vector<double> hidden;    // hidden_dim, after tanh
  std::vector<double> probs;     // target_vocab
};

ToyNeuralModel::ToyNeuralModel(Shape shape, std::vector<double> params)
    : shape_(shape), params_(std::move(params)) {
  if (shape_.target_vocab == 0 || shape_.source_vocab == 0 || shape_.embed_dim == 0 ||
      shape_.hidden_dim == 0)
    throw DataError("ToyNeuralModel: zero dimension");
  if (params_.size() != shape_.param_count())
    throw DataError("ToyNeuralModel: parameter vector has wrong length");
}

ToyNeuralModel ToyNeuralModel::zeros(Shape shape) {
  return ToyNeuralModel(shape, std::vector<double>(shape.param_count(), 0.0));
}

ToyNeuralModel ToyNeuralModel::random_init(Shape shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  std::vector<double> params(shape.param_count());
  for (double& p : params) p = dist(gen);
  return ToyNeuralModel(shape, std::move(params));
}

ToyNeuralModel::Forward ToyNeuralModel::forward(const Sentence& source,
                                                std::span<const TokenId> history) const {
  const Shape& s = shape_;
  Forward f;
  f.prev = history.empty() ? Vocabulary::kBos : history.back();
  if (f.prev >= s.target_vocab) throw DataError("step: history token out of range");

  f.src_mean.assign(s.embed_dim, 0.0);
  if (!source.ids.empty()) {
    for (TokenId t : source.ids) {
      if (t >= s.source_vocab) throw DataError("step: source token out of range");
      const double* row = params_.data() + s.source_embed_offset() + t * s.embed_dim;
      for (std::size_t d = 0; d < s.embed_dim; ++d) f.src_mean[d] += row[d];
    }
    for (double& v : f.src_mean) v /= static_cast<double>(source.ids.size());
  }

  const double* e_prev = params_.data() + s.target_embed_offset() + f.prev * s.embed_dim;
  const double* wh = params_.data() + s.hidden_weight_offset();
  const double* bh = params_.data() + s.hidden_bias_offset();
  f.hidden.resize(s.hidden_dim);
  for (std::size_t r = 0; r < s.hidden_dim; ++r) {
    const double* row = wh + r * 2 * s.embed_dim;
    double acc = bh[r];
    for (std::size_t d = 0; d < s.embed_dim; ++d) acc += row[d] * e_prev[d];
    for (std::size_t d = 0; d < s.embed_dim; ++d) acc += row[s.embed_dim + d] * f.src_mean[d];
    f.hidden[r] = std::tanh(acc);
  }

  const double* wo = params_.data() + s.output_weight_offset();
  const double* bo = params_.data() + s.output_bias_offset();
  std::vector<double> logits(s.target_vocab);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < s.target_vocab; ++y) {
    const double* row = wo + y * s.hidden_dim;
    double acc = bo[y];
    for (std::size_t r = 0; r < s.hidden_dim; ++r) acc += row[r] * f.hidden[r];
    logits[y] = acc;
    if (acc > max_logit) max_logit = acc;
  }
  f.probs.resize(s.target_vocab);
  double z = 0.0;
  for (std::size_t y = 0; y < s.target_vocab; ++y) {
    f.probs[y] = std::exp(logits[y] - max_logit);
    z += f.probs[y];
  }
  for (double& p : f.probs) p /= z;
  return f;
}

std::vector<double> ToyNeuralModel::step(const Sentence& source,
                                         std::span<const TokenId> history) const {
  return forward(source, history).probs;
}

double ToyNeuralModel::event_log_prob(const Sentence& source, std::span<const TokenId> history,
                                      TokenId target) const {
  if (target >= shape_.target_vocab) throw DataError("event_log_prob: target out of range");
  return std::log(forward(source, history).probs[target]);
}

void ToyNeuralModel::add_event_nll_grad(const Sentence& source, std::span<const TokenId> history,
                                        TokenId target, std::span<double> grad,
                                        double scale) const {
  const Shape& s = shape_;
  if (grad.size() != s.param_count()) throw DataError("add_event_nll_grad: bad gradient size");
  if (target >= s.target_vocab) throw DataError("add_event_nll_grad: target out of range");
  Forward f = forward(source, history);

  // d(-log p)/d(logit_y) = p_y - [y == target]
  std::vector<double> dlogits(f.probs);
  dlogits[target] -= 1.0;

  const double* wo = params_.data() + s.output_weight_offset();
  double* g_wo = grad.data() + s.output_weight_offset();
  double* g_bo = grad.data() + s.output_bias_offset();
  std::vector<double> dhidden(s.hidden_dim, 0.0);
  for (std::size_t y = 0; y < s.target_vocab; ++y) {
    double dy = dlogits[y] * scale;
    if (dy == 0.0) continue;
    double* grow = g_wo + y * s.hidden_dim;
    const double* wrow = wo + y * s.hidden_dim;
    for (std::size_t r = 0; r < s.hidden_dim; ++r) {
      grow[r] += dy * f.hidden[r];
      dhidden[r] += (dlogits[y]) * wrow[r];
    }
    g_bo[y] += dy;
  }

  // through tanh
  std::vector<double> dpre(s.hidden_dim);
  for (std::size_t r = 0; r < s.hidden_dim; ++r)
    dpre[r] = dhidden[r] * (1.0 - f.hidden[r] * f.hidden[r]);

  const double* e_prev = params_.data() + s.target_embed_offset() + f.prev * s.embed_dim;
  const double* wh = params_.data() + s.hidden_weight_offset();
  double* g_wh = grad.data() + s.hidden_weight_offset();
  double* g_bh = grad.data() + s.hidden_bias_offset();
  std::vector<double> dz(2 * s.embed_dim, 0.0);
  for (std::size_t r = 0; r < s.hidden_dim; ++r) {
    double dr = dpre[r];
    if (dr == 0.0) continue;
    double* grow = g_wh + r * 2 * s.embed_dim;
    const double* wrow = wh + r * 2 * s.embed_dim;
    for (std::size_t d = 0; d < s.embed_dim; ++d) {
      grow[d] += scale * dr * e_prev[d];
      grow[s.embed_dim + d] += scale * dr * f.src_mean[d];
      dz[d] += dr * wrow[d];
      dz[s.embed_dim + d] += dr * wrow[s.embed_dim + d];
    }
    g_bh[r] += scale * dr;
  }

  double* g_eprev = grad.data() + s.target_embed_offset() + f.prev * s.embed_dim;
  for (std::size_t d = 0; d < s.embed_dim; ++d) g_eprev[d] += scale * dz[d];
  if (!source.ids.empty()) {
    double inv = 1.0 / static_cast<double>(source.ids.size());
    for (TokenId t : source.ids) {
      double* g_es = grad.data() + s.source_embed_offset() + t * s.embed_dim;
      for (std::size_t d = 0; d < s.embed_dim; ++d)
        g_es[d] += scale * dz[s.embed_dim + d] * inv;
    }
  }
}

double log_likelihood(const ConditionalSequenceModel& model, const ParallelCorpus& data) {
  double total = 0.0;
  for (const auto& [src, tgt] : data.pairs) {
    for (std::size_t i = 0; i <= tgt.ids.size(); ++i) {
      TokenId y = i < tgt.ids.size() ? tgt.ids[i] : Vocabulary::kEos;
      std::span<const TokenId> history(tgt.ids.data(), i);
      std::vector<double> probs = model.step(src, history);
      if (y >= probs.size()) throw DataError("log_likelihood: target out of range");
      total += std::log(probs[y]);
    }
  }
  return total;
}

std::size_t event_count(const ParallelCorpus& data) {
  std::size_t n = 0;
  for (const auto& [src, tgt] : data.pairs) n += tgt.ids.size() + 1;
  return n;
}

std::vector<double> nll_gradient(const ToyNeuralModel& model, const ParallelCorpus& data) {
  std::vector<double> grad(model.shape().param_count(), 0.0);
  for (const auto& [src, tgt] : data.pairs) {
    for (std::size_t i = 0; i <= tgt.ids.size(); ++i) {
      TokenId y = i < tgt.ids.size() ? tgt.ids[i] : Vocabulary::kEos;
      std::span<const TokenId> history(tgt.ids.data(), i);
      model.add_event_nll_grad(src, history, y, grad, 1.0);
    }
  }
  return grad;
}

void save_model(const std::string& path, const ToyNeuralModel& model, std::uint64_t vocab_fp) {
  const auto& s = model.shape();
  json j;
  j["format"] = "adens-model";
  j["version"] = 1;
  j["kind"] = "neural";
  j["target_vocab"] = s.target_vocab;
  j["source_vocab"] = s.source_vocab;
  j["embed_dim"] = s.embed_dim;
  j["hidden_dim"] = s.hidden_dim;
  j["vocab_fingerprint"] = vocab_fp;
  j["params"] = model.params();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

ToyNeuralModel load_model(const std::string& path, const std::uint64_t* expect_vocab_fp) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (j.value("format", "") != "adens-model" || j.value("kind", "") != "neural")
    throw DataError(path + ": not a model checkpoint");
  if (expect_vocab_fp && j.value("vocab_fingerprint", std::uint64_t{0}) != *expect_vocab_fp)
    throw DataError(path + ": vocabulary fingerprint mismatch");
  ToyNeuralModel::Shape s;
  s.target_vocab = j.at("target_vocab").get<std::size_t>();
  s.source_vocab = j.at("source_vocab").get<std::size_t>();
  s.embed_dim = j.at("embed_dim").get<std::size_t>();
  s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  return ToyNeuralModel(s, j.at("params").get<std::vector<double>>());
}

}  // namespace adens
