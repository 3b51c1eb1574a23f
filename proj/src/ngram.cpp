#include "adens/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adens/numeric.hpp"

namespace adens {

namespace {

constexpr double kLn10 = 2.302585092994045684;

// Sentences are padded with begin markers for context and one end marker as
// the final event. At least one begin marker is always present so the raw
// count mode sees it in the stream.
std::vector<TokenId> pad(const Sentence& s, std::size_t order) {
  std::size_t bos = std::max<std::size_t>(1, order - 1);
  std::vector<TokenId> padded;
  padded.reserve(bos + s.ids.size() + 1);
  padded.insert(padded.end(), bos, Vocabulary::kBos);
  padded.insert(padded.end(), s.ids.begin(), s.ids.end());
  padded.push_back(Vocabulary::kEos);
  return padded;
}

using Counts = std::map<std::vector<TokenId>, std::map<TokenId, long>>;

}  // namespace

NgramLm::NgramLm(std::size_t order, std::shared_ptr<const Vocabulary> vocab, NgramOptions opts)
    : order_(order), vocab_(std::move(vocab)), opts_(opts) {
  if (order_ == 0) throw DataError("ngram order must be at least 1");
  if (!vocab_) throw DataError("ngram model needs a vocabulary");
  predictable_vocab_ = vocab_->size() - 1;
}

double NgramLm::log_cond(TokenId token, std::span<const TokenId> context) const {
  if (token == Vocabulary::kBos) return kLogZero;  // context-only marker
  std::size_t use = std::min(context.size(), order_ - 1);
  double acc = 0.0;
  for (std::size_t len = use;; --len) {
    std::vector<TokenId> key(context.end() - len, context.end());
    auto it = table_.find(key);
    if (it != table_.end()) {
      auto pit = it->second.probs.find(token);
      if (pit != it->second.probs.end()) return acc + pit->second;
      acc += it->second.backoff_log;
    }
    if (len == 0) break;
  }
  if (opts_.smoothing == Smoothing::kNone) return kLogZero;
  // Below the unigram table sits a uniform distribution over every
  // predictable token, so unseen tokens keep nonzero probability.
  return acc + std::log(1.0 / static_cast<double>(predictable_vocab_));
}

double NgramLm::log_prob_sentence(const Sentence& s) const {
  if (s.ids.empty()) throw DataError("log_prob_sentence: empty sentence");
  std::vector<TokenId> padded = pad(s, order_);
  std::size_t bos = std::max<std::size_t>(1, order_ - 1);
  double total = 0.0;
  for (std::size_t j = bos; j < padded.size(); ++j) {
    std::span<const TokenId> ctx(padded.data(), j);
    total += log_cond(padded[j], ctx);
  }
  return total;
}

NgramLm train_ngram(const std::vector<Sentence>& mono, std::size_t order,
                    std::shared_ptr<const Vocabulary> vocab, const NgramOptions& opts) {
  if (mono.empty()) throw DataError("train_ngram: empty corpus");
  NgramLm lm(order, std::move(vocab), opts);

  bool raw_counts = opts.smoothing == Smoothing::kNone;
  Counts counts;
  for (const Sentence& s : mono) {
    std::vector<TokenId> padded = pad(s, order);
    std::size_t bos = std::max<std::size_t>(1, order - 1);
    // In the smoothed model begin markers are contexts only; the raw count
    // mode tallies them as events too, matching plain stream frequencies.
    std::size_t first = raw_counts ? 0 : bos;
    for (std::size_t j = first; j < padded.size(); ++j) {
      for (std::size_t m = 1; m <= order && m <= j + 1; ++m) {
        std::vector<TokenId> ctx(padded.begin() + static_cast<long>(j - m + 1),
                                 padded.begin() + static_cast<long>(j));
        ++counts[std::move(ctx)][padded[j]];
      }
    }
  }

  if (raw_counts) {
    for (auto& [ctx, followers] : counts) {
      long total = 0;
      for (auto& [tok, c] : followers) total += c;
      NgramLm::ContextEntry entry;
      for (auto& [tok, c] : followers)
        entry.probs[tok] = std::log(static_cast<double>(c) / static_cast<double>(total));
      entry.backoff_log = kLogZero;
      lm.table_[ctx] = std::move(entry);
    }
    return lm;
  }

  // Interpolated absolute discounting, built bottom-up so that stored
  // probabilities already include the lower-order mass.
  double d = opts.discount;
  if (d <= 0.0 || d >= 1.0) throw DataError("discount must lie in (0, 1)");
  for (std::size_t ctx_len = 0; ctx_len < order; ++ctx_len) {
    for (auto& [ctx, followers] : counts) {
      if (ctx.size() != ctx_len) continue;
      long total = 0;
      for (auto& [tok, c] : followers) total += c;
      double distinct = static_cast<double>(followers.size());
      double gamma = d * distinct / static_cast<double>(total);
      NgramLm::ContextEntry entry;
      entry.backoff_log = std::log(gamma);
      for (auto& [tok, c] : followers) {
        double direct = (static_cast<double>(c) - d) / static_cast<double>(total);
        double lower;
        if (ctx_len == 0) {
          lower = 1.0 / static_cast<double>(lm.predictable_vocab_);
        } else {
          std::span<const TokenId> lower_ctx(ctx.data() + 1, ctx.size() - 1);
          lower = std::exp(lm.log_cond(tok, lower_ctx));
        }
        entry.probs[tok] = std::log(direct + gamma * lower);
      }
      lm.table_[ctx] = std::move(entry);
    }
  }
  return lm;
}

namespace {

std::string format_double(double v) {
  if (v == kLogZero) return "-99";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void save_ngram(const std::string& path, const NgramLm& lm) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const Vocabulary& vocab = lm.vocab();

  auto backoff_of = [&](const std::vector<TokenId>& as_ctx) {
    auto it = lm.table().find(as_ctx);
    return it == lm.table().end() ? 0.0 : it->second.backoff_log / kLn10;
  };

  // The unigram section lists every token, which folds the root backoff into
  // explicit values and keeps queries identical after reload. Higher orders
  // list stored entries only; |context| = m-1 for an m-gram. A stored context
  // that never occurs as an event of its own length (begin-marker prefixes)
  // still has to carry its backoff weight, so it gets a "-99" placeholder
  // probability line, the usual convention for such entries.
  auto context_only = [&](const std::vector<TokenId>& ctx) {
    if (ctx.empty()) return false;
    std::vector<TokenId> prefix(ctx.begin(), ctx.end() - 1);
    auto it = lm.table().find(prefix);
    bool listed = it != lm.table().end() && it->second.probs.count(ctx.back()) > 0;
    return !listed && backoff_of(ctx) != 0.0;
  };

  std::vector<std::size_t> counts(lm.order() + 1, 0);
  counts[1] = vocab.size();
  for (const auto& [ctx, entry] : lm.table()) {
    if (!ctx.empty()) counts[ctx.size() + 1] += entry.probs.size();
    if (ctx.size() >= 2 && context_only(ctx)) ++counts[ctx.size()];
  }

  out << "\\data\\\n";
  for (std::size_t m = 1; m <= lm.order(); ++m) out << "ngram " << m << "=" << counts[m] << "\n";
  out << "\n";
  for (std::size_t m = 1; m <= lm.order(); ++m) {
    out << "\\" << m << "-grams:\n";
    if (m == 1) {
      for (TokenId id = 0; id < vocab.size(); ++id) {
        out << format_double(lm.log_cond(id, {}) / kLn10) << '\t' << vocab.token(id) << '\t'
            << format_double(backoff_of({id})) << '\n';
      }
    } else {
      for (const auto& [ctx, entry] : lm.table()) {
        if (ctx.size() == m && context_only(ctx)) {
          out << format_double(kLogZero) << '\t';
          for (std::size_t i = 0; i < ctx.size(); ++i)
            out << (i ? " " : "") << vocab.token(ctx[i]);
          out << '\t' << format_double(backoff_of(ctx)) << '\n';
        }
        if (ctx.size() + 1 != m) continue;
        for (const auto& [tok, logp] : entry.probs) {
          out << format_double(logp / kLn10) << '\t';
          for (TokenId id : ctx) out << vocab.token(id) << ' ';
          out << vocab.token(tok);
          std::vector<TokenId> as_ctx(ctx);
          as_ctx.push_back(tok);
          out << '\t' << format_double(backoff_of(as_ctx)) << '\n';
        }
      }
    }
    out << "\n";
  }
  out << "\\end\\\n";
}

NgramLm load_ngram(const std::string& path, std::shared_ptr<const Vocabulary> vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw DataError(path + ": line " + std::to_string(lineno) + ": " + msg);
  };

  std::size_t order = 0;
  bool in_data = false;
  std::vector<std::pair<std::vector<TokenId>, std::pair<double, double>>> grams;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "\\data\\") {
      in_data = true;
      continue;
    }
    if (line == "\\end\\") break;
    if (line.size() > 1 && line.front() == '\\') {
      in_data = false;
      continue;  // \m-grams: section header; order is implied per line
    }
    if (in_data) {
      if (line.rfind("ngram ", 0) != 0) fail("expected 'ngram N=count'");
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) fail("expected 'ngram N=count'");
      try {
        order = std::max(order, static_cast<std::size_t>(std::stoul(line.substr(6, eq - 6))));
      } catch (const std::exception&) {
        fail("bad order in 'ngram N=count'");
      }
      continue;
    }
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      fail("expected three tab-separated fields");
    double logp = 0.0, bo = 0.0;
    try {
      logp = std::stod(line.substr(0, t1)) * kLn10;
      bo = std::stod(line.substr(t2 + 1)) * kLn10;
    } catch (const std::exception&) {
      fail("bad numeric field");
    }
    std::istringstream toks(line.substr(t1 + 1, t2 - t1 - 1));
    std::vector<TokenId> ids;
    std::string tok;
    while (toks >> tok) ids.push_back(vocab->id(tok));
    if (ids.empty()) fail("empty n-gram");
    grams.push_back({std::move(ids), {logp, bo}});
  }
  if (order == 0) throw DataError(path + ": missing \\data\\ header");

  NgramLm lm(order, std::move(vocab), NgramOptions{});
  for (auto& [ids, values] : grams) {
    std::vector<TokenId> ctx(ids.begin(), ids.end() - 1);
    lm.table_[ctx].probs[ids.back()] = values.first;
    if (values.second != 0.0) {
      lm.table_[ids].backoff_log = values.second;
    }
  }
  return lm;
}

TaskPosterior source_task_posterior(const std::vector<const NgramLm*>& lms, const Sentence& x,
                                    std::span<const double> priors) {
  if (lms.empty()) throw DataError("source_task_posterior: no language models");
  if (!priors.empty() && priors.size() != lms.size())
    throw DataError("source_task_posterior: prior count does not match model count");

  std::vector<double> logs(lms.size());
  for (std::size_t t = 0; t < lms.size(); ++t) {
    double prior = priors.empty() ? 1.0 / static_cast<double>(lms.size()) : priors[t];
    logs[t] = lms[t]->log_prob_sentence(x) + std::log(prior);
  }
  TaskPosterior post;
  post.probs = softmax_from_logs(logs);
  double sum = 0.0;
  for (double p : post.probs) sum += p;
  if (sum == 0.0) {
    post.degenerate = true;
    post.probs.assign(lms.size(), 1.0 / static_cast<double>(lms.size()));
  }
  return post;
}

}  // namespace adens
