#include "adens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "adens/rng.hpp"
#include "adens/types.hpp"

namespace adens {
namespace {

const char* kDomainNames[] = {"alpha", "beta", "gamma", "delta",
                              "epsilon", "zeta", "eta", "theta"};

std::string two_digits(std::size_t v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

std::string core_source_word(std::size_t idx) { return "s" + two_digits(idx); }

char domain_letter(std::size_t domain) { return static_cast<char>('a' + domain); }

std::string excl_source_word(std::size_t domain, std::size_t idx) {
  return std::string("x") + domain_letter(domain) + two_digits(idx);
}

// One full cycle over all n ids, in a random visiting order. A plain random
// permutation would allow fixed points and short orbits, which produce
// degenerate repeated-token sentences; a single cycle gives every entry
// point a distinct full-length walk.
std::vector<std::size_t> random_chain(std::size_t n, std::mt19937_64& gen) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::size_t> next(n);
  for (std::size_t i = 0; i < n; ++i) next[order[i]] = order[(i + 1) % n];
  return next;
}

}  // namespace

SynthGenerator::SynthGenerator(SynthParams params, std::uint64_t master_seed)
    : params_(params), seed_(master_seed) {
  if (params_.domains < 2 || params_.domains > 8) {
    throw DataError("synthetic data needs between 2 and 8 domains");
  }
  if (params_.core_vocab < 4 || params_.excl_vocab < 4) {
    throw DataError("synthetic vocabularies need at least 4 words each");
  }
  if (params_.overlap < 0.0 || params_.overlap > 1.0) {
    throw DataError("overlap must lie in [0, 1]");
  }
  if (params_.switch_frac < 0.0 || params_.switch_frac > 1.0) {
    throw DataError("switch_frac must lie in [0, 1]");
  }
  if (params_.min_len < 2 || params_.max_len < params_.min_len) {
    throw DataError("bad sentence length bounds");
  }
  for (std::size_t d = 0; d < params_.domains; ++d) names_.push_back(kDomainNames[d]);

  auto core_gen = substream(seed_, "chains/core");
  core_next_ = random_chain(params_.core_vocab, core_gen);
  for (std::size_t d = 0; d < params_.domains; ++d) {
    auto gen = substream(seed_, "chains/excl/" + names_[d]);
    excl_next_.push_back(random_chain(params_.excl_vocab, gen));
  }
}

Words SynthGenerator::walk_core(std::mt19937_64& gen, std::size_t len) const {
  std::uniform_int_distribution<std::size_t> entry(0, params_.core_vocab - 1);
  Words out;
  std::size_t cur = entry(gen);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(core_source_word(cur));
    cur = core_next_[cur];
  }
  return out;
}

Words SynthGenerator::walk_exclusive(std::mt19937_64& gen, std::size_t domain,
                                     std::size_t len) const {
  std::uniform_int_distribution<std::size_t> entry(0, params_.excl_vocab - 1);
  Words out;
  std::size_t cur = entry(gen);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(excl_source_word(domain, cur));
    cur = excl_next_[domain][cur];
  }
  return out;
}

Words SynthGenerator::translate(const Words& src) const {
  Words out;
  out.reserve(src.size());
  for (const auto& w : src) {
    if (w.empty()) throw DataError("cannot translate an empty word");
    std::string t = w;
    switch (t[0]) {
      case 's': t[0] = 't'; break;
      case 'x': t[0] = 'y'; break;
      default: throw DataError("word outside the synthetic source vocabulary: " + w);
    }
    out.push_back(std::move(t));
  }
  return out;
}

bool SynthGenerator::is_exclusive_word(const std::string& word, std::size_t domain) const {
  if (word.size() < 2) return false;
  if (word[0] != 'x' && word[0] != 'y') return false;
  return word[1] == domain_letter(domain);
}

std::size_t SynthGenerator::core_count(std::size_t pairs) const {
  return std::min(pairs, static_cast<std::size_t>(std::llround(
                             static_cast<double>(pairs) * params_.overlap)));
}

// The general-domain block is drawn from a split-wide stream, so every
// domain's corpus contains the exact same general sentences. Models then
// agree on general material because they fitted identical evidence for it,
// not merely samples from the same distribution.
std::vector<Words> SynthGenerator::core_block(const std::string& split, std::size_t count) const {
  auto core_gen = substream(seed_, "data/core/" + split);
  std::uniform_int_distribution<std::size_t> len_dist(params_.min_len, params_.max_len);
  std::vector<Words> block;
  block.reserve(count);
  for (std::size_t i = 0; i < count; ++i) block.push_back(walk_core(core_gen, len_dist(core_gen)));
  return block;
}

RawParallel SynthGenerator::make_split(std::size_t domain, const std::string& split,
                                       std::size_t pairs) const {
  if (domain >= params_.domains) throw DataError("domain index out of range");
  std::size_t n_core = core_count(pairs);
  std::size_t rest = pairs - n_core;
  std::size_t n_switch = std::min(
      rest, static_cast<std::size_t>(std::llround(static_cast<double>(rest) * params_.switch_frac)));
  std::size_t n_excl = rest - n_switch;

  std::uniform_int_distribution<std::size_t> len_dist(params_.min_len, params_.max_len);
  RawParallel out;

  for (Words& src : core_block(split, n_core)) {
    Words tgt = translate(src);
    out.pairs.push_back({std::move(src), std::move(tgt)});
  }

  // Same shape as a probe: neutral opening, domain-specific tail. Keeping
  // these in the training mix means a half-and-half sentence is ordinary
  // input for every model, not something seen only at diagnosis time. The
  // openings come from a split-wide stream like the general block above, so
  // across domains the same openings lead into different tails.
  auto sw_gen = substream(seed_, "data/switch/" + split);
  auto gen = substream(seed_, "data/" + names_[domain] + "/" + split);
  for (std::size_t i = 0; i < n_switch; ++i) {
    std::size_t len = len_dist(sw_gen);
    std::size_t head = (len + 1) / 2;
    Words src = walk_core(sw_gen, head);
    Words tail = walk_exclusive(gen, domain, len - head);
    src.insert(src.end(), tail.begin(), tail.end());
    out.pairs.push_back({src, translate(src)});
  }
  for (std::size_t i = 0; i < n_excl; ++i) {
    Words src = walk_exclusive(gen, domain, len_dist(gen));
    out.pairs.push_back({src, translate(src)});
  }
  out.kept = out.pairs.size();
  return out;
}

SynthGenerator::Probe SynthGenerator::make_probe(std::size_t domain, std::size_t neutral_words,
                                                 std::size_t exclusive_words,
                                                 std::size_t index) const {
  if (domain >= params_.domains) throw DataError("domain index out of range");
  if (neutral_words == 0 || exclusive_words == 0) {
    throw DataError("a probe needs both a neutral and an exclusive segment");
  }
  auto gen = substream(seed_, "probe/" + names_[domain] + "/" + std::to_string(index));
  Probe probe;
  probe.src = walk_core(gen, neutral_words);
  Words tail = walk_exclusive(gen, domain, exclusive_words);
  probe.src.insert(probe.src.end(), tail.begin(), tail.end());
  probe.tgt = translate(probe.src);
  probe.neutral_words = neutral_words;
  probe.exclusive_words = exclusive_words;
  return probe;
}

}  // namespace adens
