#include "adens/decoder.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <thread>

#include "adens/numeric.hpp"

namespace adens {

namespace {

// score first, then lexicographically smaller token sequence
bool better(double score_a, const std::vector<TokenId>& tokens_a, double score_b,
            const std::vector<TokenId>& tokens_b) {
  if (score_a != score_b) return score_a > score_b;
  return tokens_a < tokens_b;
}

std::vector<double> chosen_column(const StepDetail& detail, TokenId token) {
  std::vector<double> probs(detail.per_model.size());
  for (std::size_t k = 0; k < detail.per_model.size(); ++k)
    probs[k] = detail.per_model[k][token];
  return probs;
}

DecodeResult finish_result(const EnsembleSpec& spec, const Sentence& source,
                           std::vector<TokenId> tokens, double score, bool finished) {
  DecodeResult result;
  result.trajectory = forced_trajectory(spec, source, tokens);
  result.translation.ids = std::move(tokens);
  result.score = score;
  result.finished = finished;
  return result;
}

}  // namespace

TrajectoryRecord forced_trajectory(const EnsembleSpec& spec, const Sentence& source,
                                   const std::vector<TokenId>& target_tokens) {
  TrajectoryRecord record;
  TaskPosteriorState state = init_posterior(spec, source);
  for (std::size_t i = 0; i < target_tokens.size(); ++i) {
    std::span<const TokenId> prefix(target_tokens.data(), i);
    StepDetail detail = ensemble_step_detail(spec, state, source, prefix);
    if (scheme_is_adaptive(spec.scheme))
      state = update_posterior(state, spec, chosen_column(detail, target_tokens[i]));
    record.rows.push_back({i + 1, target_tokens[i], detail.weights, state.posterior()});
  }
  return record;
}

DecodeResult beam_decode(const EnsembleSpec& spec, const Sentence& source, std::size_t beam_size,
                         std::size_t max_len) {
  if (beam_size == 0) throw DataError("beam_decode: beam size must be positive");
  if (source.ids.empty()) throw DataError("beam_decode: empty source");

  std::vector<Hypothesis> active;
  active.push_back({{}, 0.0, init_posterior(spec, source)});

  std::optional<Hypothesis> completed;
  std::optional<Hypothesis> dead_end;  // best hypothesis that ran out of road
  auto offer = [](std::optional<Hypothesis>& slot, Hypothesis&& h) {
    if (!slot || better(h.score, h.tokens, slot->score, slot->tokens)) slot = std::move(h);
  };

  while (!active.empty()) {
    std::vector<Hypothesis> expansions;
    for (const Hypothesis& hyp : active) {
      StepDetail detail = ensemble_step_detail(spec, hyp.state, source, hyp.tokens);
      double p_end = detail.mixture[Vocabulary::kEos];
      if (p_end > 0.0) {
        Hypothesis done = hyp;
        done.score += std::log(p_end);
        offer(completed, std::move(done));
      }
      if (hyp.tokens.size() >= max_len) {
        offer(dead_end, Hypothesis(hyp));
        continue;
      }
      for (std::size_t v = 0; v < detail.mixture.size(); ++v) {
        if (v == Vocabulary::kEos) continue;
        double p = detail.mixture[v];
        if (p <= 0.0) continue;
        Hypothesis next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(static_cast<TokenId>(v));
        next.score = hyp.score + std::log(p);
        next.state = scheme_is_adaptive(spec.scheme)
                         ? update_posterior(hyp.state, spec, chosen_column(detail, static_cast<TokenId>(v)))
                         : hyp.state;
        expansions.push_back(std::move(next));
      }
    }
    std::sort(expansions.begin(), expansions.end(), [](const Hypothesis& a, const Hypothesis& b) {
      return better(a.score, a.tokens, b.score, b.tokens);
    });
    if (expansions.size() > beam_size) expansions.resize(beam_size);
    active = std::move(expansions);
    // Extending never raises a score, so once the best active hypothesis is
    // strictly behind the best completed one nothing can still win. Ties keep
    // searching: an equal-scoring completion may be lexicographically smaller.
    if (completed && !active.empty() && active.front().score < completed->score) break;
  }

  if (completed)
    return finish_result(spec, source, std::move(completed->tokens), completed->score, true);
  // Nothing ever reached the end marker, which takes a model that assigns it
  // zero probability; hand back the best unfinished hypothesis, flagged.
  if (dead_end)
    return finish_result(spec, source, std::move(dead_end->tokens), dead_end->score, false);
  return finish_result(spec, source, {}, 0.0, false);
}

DecodeResult exhaustive_decode(const EnsembleSpec& spec, const Sentence& source,
                               std::size_t max_len) {
  if (source.ids.empty()) throw DataError("exhaustive_decode: empty source");
  std::size_t vocab = spec.models.front()->target_vocab();
  double states = 1.0;
  double work = 1.0;
  for (std::size_t i = 0; i < max_len; ++i) {
    states *= static_cast<double>(vocab);
    work += states;
    if (work > 250000.0)
      throw DataError("exhaustive_decode: vocabulary^max_len too large to enumerate");
  }

  std::optional<std::pair<std::vector<TokenId>, double>> best;
  auto consider = [&](const std::vector<TokenId>& tokens, double score) {
    if (!best || better(score, tokens, best->second, best->first))
      best = std::make_pair(tokens, score);
  };

  std::vector<TokenId> prefix;
  auto dfs = [&](auto&& self, const TaskPosteriorState& state, double score) -> void {
    StepDetail detail = ensemble_step_detail(spec, state, source, prefix);
    double p_end = detail.mixture[Vocabulary::kEos];
    if (p_end > 0.0) consider(prefix, score + std::log(p_end));
    if (prefix.size() >= max_len) return;
    for (std::size_t v = 0; v < detail.mixture.size(); ++v) {
      if (v == Vocabulary::kEos) continue;
      double p = detail.mixture[v];
      if (p <= 0.0) continue;
      TaskPosteriorState next =
          scheme_is_adaptive(spec.scheme)
              ? update_posterior(state, spec, chosen_column(detail, static_cast<TokenId>(v)))
              : state;
      prefix.push_back(static_cast<TokenId>(v));
      self(self, next, score + std::log(p));
      prefix.pop_back();
    }
  };
  dfs(dfs, init_posterior(spec, source), 0.0);

  if (!best) {
    DecodeResult result;
    result.finished = false;
    return result;
  }
  return finish_result(spec, source, std::move(best->first), best->second, true);
}

std::vector<DecodeResult> decode_corpus(const EnsembleSpec& spec,
                                        const std::vector<Sentence>& sources,
                                        const DecodeOptions& opts) {
  std::vector<DecodeResult> results(sources.size());
  std::size_t threads = std::max<std::size_t>(1, opts.threads);
  threads = std::min(threads, sources.size() == 0 ? 1 : sources.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < sources.size(); ++i)
      results[i] = beam_decode(spec, sources[i], opts.beam_size, opts.max_len);
    return results;
  }
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          std::size_t i = cursor.fetch_add(1);
          if (i >= sources.size()) break;
          results[i] = beam_decode(spec, sources[i], opts.beam_size, opts.max_len);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

void save_trajectory_tsv(const std::string& path, const TrajectoryRecord& record,
                         const Vocabulary& vocab, const std::vector<std::string>& task_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  char buf[64];
  auto fmt = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    (void)ec;
    return std::string(buf, p);
  };
  std::size_t k = record.rows.empty() ? 0 : record.rows.front().weights.size();
  std::size_t t = record.rows.empty() ? 0 : record.rows.front().posterior.size();
  out << "step\ttoken";
  for (std::size_t i = 0; i < k; ++i) out << "\tW_" << (i + 1);
  for (std::size_t i = 0; i < t; ++i)
    out << "\tposterior_" << (i < task_names.size() ? task_names[i] : std::to_string(i + 1));
  out << '\n';
  for (const auto& row : record.rows) {
    out << row.step << '\t' << vocab.token(row.token);
    for (double w : row.weights) out << '\t' << fmt(w);
    for (double p : row.posterior) out << '\t' << fmt(p);
    out << '\n';
  }
}

}  // namespace adens
