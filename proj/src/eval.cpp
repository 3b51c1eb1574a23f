#include "adens/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

namespace adens {

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

NgramCounts count_ngrams(const std::vector<TokenId>& ids, std::size_t n) {
  NgramCounts counts;
  if (ids.size() >= n)
    for (std::size_t i = 0; i + n <= ids.size(); ++i)
      ++counts[std::vector<TokenId>(ids.begin() + static_cast<long>(i),
                                    ids.begin() + static_cast<long>(i + n))];
  return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<Sentence>& hypotheses,
                       const std::vector<Sentence>& references) {
  if (hypotheses.size() != references.size())
    throw DataError("corpus_bleu: hypothesis and reference counts differ");
  if (hypotheses.empty()) throw DataError("corpus_bleu: empty corpus");

  BleuReport report;
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i].ids;
    const auto& ref = references[i].ids;
    report.hyp_tokens += hyp.size();
    report.ref_tokens += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      NgramCounts hyp_counts = count_ngrams(hyp, n);
      NgramCounts ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  bool zero_order = false;
  double log_mean = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    report.precisions[n] =
        totals[n] == 0 ? 0.0
                       : static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    if (report.precisions[n] == 0.0)
      zero_order = true;
    else
      log_mean += std::log(report.precisions[n]) / 4.0;
  }

  if (report.hyp_tokens == 0) {
    report.brevity_penalty = 1.0;  // degenerate; score is 0 anyway
    report.bleu = 0.0;
    return report;
  }
  report.brevity_penalty =
      report.hyp_tokens >= report.ref_tokens
          ? 1.0
          : std::exp(1.0 - static_cast<double>(report.ref_tokens) /
                               static_cast<double>(report.hyp_tokens));
  report.bleu = zero_order ? 0.0 : 100.0 * report.brevity_penalty * std::exp(log_mean);
  return report;
}

BleuReport corpus_bleu_words(const std::vector<Words>& hypotheses,
                             const std::vector<Words>& references) {
  if (hypotheses.size() != references.size())
    throw DataError("corpus_bleu: hypothesis and reference counts differ");
  Vocabulary vocab;
  auto encode = [&](const Words& words) {
    Sentence s;
    s.ids.reserve(words.size());
    for (const std::string& w : words) s.ids.push_back(vocab.add(w));
    return s;
  };
  std::vector<Sentence> hyp, ref;
  hyp.reserve(hypotheses.size());
  ref.reserve(references.size());
  for (const Words& w : hypotheses) hyp.push_back(encode(w));
  for (const Words& w : references) ref.push_back(encode(w));
  return corpus_bleu(hyp, ref);
}

std::string BleuReport::to_json() const {
  char buf[64];
  auto fmt = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    (void)ec;
    return std::string(buf, p);
  };
  std::string out = "{\"bleu\": " + fmt(bleu) + ", \"precisions\": [";
  for (std::size_t n = 0; n < 4; ++n) out += (n ? ", " : "") + fmt(precisions[n]);
  out += "], \"brevity_penalty\": " + fmt(brevity_penalty);
  out += ", \"hyp_tokens\": " + std::to_string(hyp_tokens);
  out += ", \"ref_tokens\": " + std::to_string(ref_tokens) + "}";
  return out;
}

}  // namespace adens
