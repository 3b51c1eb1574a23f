#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <vector>

#include "adens/corpus.hpp"
#include "adens/decoder.hpp"
#include "adens/ensemble.hpp"
#include "adens/numeric.hpp"
#include "adens/seqmodel.hpp"
#include "adens/types.hpp"
#include "doctest.h"

using namespace adens;
namespace fs = std::filesystem;

namespace {

using ModelPtr = std::shared_ptr<const ConditionalSequenceModel>;

// 5-token vocabulary throughout: 0 <s>, 1 </s>, 2 <unk>, 3 "a", 4 "b".
constexpr std::size_t kV = 5;

ModelPtr table(const std::vector<std::vector<double>>& rows) {
  return std::make_shared<TableModel>(TableModel::from_bigram(rows.size(), rows));
}

// Same successor distribution regardless of the previous token.
ModelPtr flat_model(const std::vector<double>& dist) {
  return table(std::vector<std::vector<double>>(dist.size(), dist));
}

ModelPtr random_model(std::size_t vocab, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<std::vector<double>> rows(vocab, std::vector<double>(vocab));
  for (auto& row : rows) {
    for (double& w : row) w = u(gen);
    row[Vocabulary::kBos] = 0.0;
  }
  return table(rows);
}

LambdaMatrix random_lambda(std::size_t k, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> w(k * k);
  for (std::size_t col = 0; col < k; ++col) {
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) sum += (w[m * k + col] = u(gen));
    for (std::size_t m = 0; m < k; ++m) w[m * k + col] /= sum;
  }
  return LambdaMatrix(k, k, std::move(w));
}

Sentence src() {
  Sentence s;
  s.ids = {3};
  return s;
}

std::vector<double> chosen_probs(const StepDetail& detail, TokenId token) {
  std::vector<double> probs(detail.per_model.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = detail.per_model[i][token];
  return probs;
}

// Independent argmax: walk every token sequence up to max_len (skipping
// zero-probability branches), close each with the end marker, and keep the
// best with the decoder's smaller-sequence-wins tie rule.
struct Enumerated {
  std::vector<TokenId> tokens;
  double score = kLogZero;
};

void enumerate_rec(const EnsembleSpec& spec, const Sentence& source, std::size_t max_len,
                   std::vector<TokenId>& prefix, const TaskPosteriorState& state, double score,
                   Enumerated& best) {
  StepDetail detail = ensemble_step_detail(spec, state, source, prefix);
  double p_end = detail.mixture[Vocabulary::kEos];
  if (p_end > 0.0) {
    double total = score + std::log(p_end);
    if (total > best.score || (total == best.score && prefix < best.tokens))
      best = {prefix, total};
  }
  if (prefix.size() >= max_len) return;
  for (TokenId v = 0; v < detail.mixture.size(); ++v) {
    if (v == Vocabulary::kEos || detail.mixture[v] <= 0.0) continue;
    TaskPosteriorState next = scheme_is_adaptive(spec.scheme)
                                  ? update_posterior(state, spec, chosen_probs(detail, v))
                                  : state;
    prefix.push_back(v);
    enumerate_rec(spec, source, max_len, prefix, next, score + std::log(detail.mixture[v]), best);
    prefix.pop_back();
  }
}

Enumerated enumerate_argmax(const EnsembleSpec& spec, const Sentence& source,
                            std::size_t max_len) {
  Enumerated best;
  std::vector<TokenId> prefix;
  enumerate_rec(spec, source, max_len, prefix, init_posterior(spec, source), 0.0, best);
  return best;
}

double rescore(const EnsembleSpec& spec, const Sentence& source,
               const std::vector<TokenId>& tokens, bool finished) {
  TaskPosteriorState state = init_posterior(spec, source);
  std::vector<TokenId> hist;
  double score = 0.0;
  for (TokenId tok : tokens) {
    StepDetail detail = ensemble_step_detail(spec, state, source, hist);
    score += std::log(detail.mixture[tok]);
    if (scheme_is_adaptive(spec.scheme))
      state = update_posterior(state, spec, chosen_probs(detail, tok));
    hist.push_back(tok);
  }
  if (finished) {
    StepDetail detail = ensemble_step_detail(spec, state, source, hist);
    score += std::log(detail.mixture[Vocabulary::kEos]);
  }
  return score;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "adens_test_decoder";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("single deterministic model decodes greedily") {
  // <s> -> a -> b -> </s>, each step certain
  std::vector<std::vector<double>> rows(kV, std::vector<double>(kV, 0.0));
  rows[Vocabulary::kBos][3] = 1.0;
  rows[3][4] = 1.0;
  rows[4][Vocabulary::kEos] = 1.0;
  rows[Vocabulary::kEos][Vocabulary::kEos] = 1.0;
  rows[2][Vocabulary::kEos] = 1.0;
  EnsembleSpec spec = EnsembleSpec::make({table(rows)}, {}, Scheme::kUniform);

  DecodeResult result = beam_decode(spec, src(), 1, 8);
  CHECK(result.finished);
  CHECK(result.translation.ids == std::vector<TokenId>{3, 4});
  CHECK(result.score == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(result.trajectory.rows.size() == 2);
  CHECK(result.trajectory.rows[0].step == 1);
  CHECK(result.trajectory.rows[0].token == 3);
  CHECK(result.trajectory.rows[1].step == 2);
  CHECK(result.trajectory.rows[1].token == 4);
}

TEST_CASE("exhaustive search agrees with an independent enumeration") {
  ModelPtr m0 = flat_model({0.0, 0.3, 0.0, 0.5, 0.2});
  ModelPtr m1 = flat_model({0.0, 0.1, 0.0, 0.2, 0.7});

  SUBCASE("single model") {
    EnsembleSpec spec = EnsembleSpec::make({m0}, {}, Scheme::kUniform);
    Enumerated expect = enumerate_argmax(spec, src(), 2);
    DecodeResult got = exhaustive_decode(spec, src(), 2);
    CHECK(got.translation.ids == expect.tokens);
    CHECK(got.score == doctest::Approx(expect.score).epsilon(1e-12));
    // p(</s>) = 0.3 beats any longer sequence: 0.5 * 0.3 and below
    CHECK(got.translation.ids.empty());
    CHECK(got.score == doctest::Approx(std::log(0.3)).epsilon(1e-12));
  }

  SUBCASE("adaptive two-model ensemble") {
    EnsembleSpec spec = EnsembleSpec::make({m0, m1}, {}, Scheme::kIdentityBi);
    Enumerated expect = enumerate_argmax(spec, src(), 3);
    DecodeResult got = exhaustive_decode(spec, src(), 3);
    CHECK(got.translation.ids == expect.tokens);
    CHECK(got.score == doctest::Approx(expect.score).epsilon(1e-12));
  }

  SUBCASE("uniform pair of identical models equals the model alone") {
    EnsembleSpec solo = EnsembleSpec::make({m0}, {}, Scheme::kUniform);
    EnsembleSpec pair = EnsembleSpec::make({m0, m0}, {}, Scheme::kUniform);
    DecodeResult a = exhaustive_decode(solo, src(), 3);
    DecodeResult b = exhaustive_decode(pair, src(), 3);
    CHECK(a.translation.ids == b.translation.ids);
    CHECK(a.score == doctest::Approx(b.score).epsilon(1e-12));
  }

  SUBCASE("refuses oversized search spaces") {
    EnsembleSpec spec = EnsembleSpec::make({m0}, {}, Scheme::kUniform);
    CHECK_THROWS_AS(exhaustive_decode(spec, src(), 12), DataError);
  }
}

TEST_CASE("saturating beam equals exhaustive search on fuzzed instances") {
  std::mt19937_64 gen(517);
  std::uniform_int_distribution<int> ksize(1, 3);
  std::uniform_int_distribution<int> mlen(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t k = static_cast<std::size_t>(ksize(gen));
    std::size_t max_len = static_cast<std::size_t>(mlen(gen));
    std::vector<ModelPtr> models;
    for (std::size_t i = 0; i < k; ++i) models.push_back(random_model(kV, gen));
    LambdaMatrix lambda = random_lambda(k, gen);
    EnsembleSpec spec = EnsembleSpec::make(models, {}, Scheme::kBi, &lambda);

    DecodeResult exact = exhaustive_decode(spec, src(), max_len);
    DecodeResult beam = beam_decode(spec, src(), 200, max_len);
    Enumerated oracle = enumerate_argmax(spec, src(), max_len);

    CHECK(beam.translation.ids == exact.translation.ids);
    CHECK(beam.score == doctest::Approx(exact.score).epsilon(1e-12));
    CHECK(exact.translation.ids == oracle.tokens);
    CHECK(exact.score == doctest::Approx(oracle.score).epsilon(1e-9));
    CHECK(beam.finished);
  }
}

TEST_CASE("reported scores match recomputation and never shrink with wider beams") {
  std::mt19937_64 gen(808);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t k = 2;
    std::vector<ModelPtr> models = {random_model(kV, gen), random_model(kV, gen)};
    LambdaMatrix lambda = random_lambda(k, gen);
    EnsembleSpec spec = EnsembleSpec::make(models, {}, Scheme::kBi, &lambda);

    double prev = kLogZero;
    for (std::size_t beam : {1u, 2u, 4u, 16u}) {
      DecodeResult result = beam_decode(spec, src(), beam, 4);
      REQUIRE(result.finished);
      double again = rescore(spec, src(), result.translation.ids, true);
      CHECK(result.score == doctest::Approx(again).epsilon(1e-9));
      CHECK(result.score >= prev - 1e-12);
      prev = result.score;
    }
  }
}

TEST_CASE("decoding without a reachable end marker returns a flagged hypothesis") {
  // the end marker has zero probability after every token
  ModelPtr endless = flat_model({0.0, 0.0, 0.0, 0.7, 0.3});
  EnsembleSpec spec = EnsembleSpec::make({endless}, {}, Scheme::kUniform);
  DecodeResult result = beam_decode(spec, src(), 4, 6);
  CHECK_FALSE(result.finished);
  CHECK(result.translation.ids.size() == 6);
  CHECK(result.score == doctest::Approx(rescore(spec, src(), result.translation.ids, false))
                            .epsilon(1e-9));
}

TEST_CASE("trajectory rows are consistent and normalized") {
  // both models make stopping early expensive, so the argmax is non-empty
  ModelPtr m0 = table({{0, 0.01, 0.01, 0.97, 0.01},
                       {0, 1.0, 0, 0, 0},
                       {0, 0.2, 0.2, 0.3, 0.3},
                       {0, 0.05, 0.01, 0.04, 0.90},
                       {0, 0.85, 0.02, 0.11, 0.02}});
  ModelPtr m1 = table({{0, 0.02, 0.02, 0.46, 0.50},
                       {0, 1.0, 0, 0, 0},
                       {0, 0.25, 0.25, 0.25, 0.25},
                       {0, 0.10, 0.05, 0.15, 0.70},
                       {0, 0.60, 0.10, 0.20, 0.10}});
  EnsembleSpec spec = EnsembleSpec::make({m0, m1}, {}, Scheme::kIdentityBi);
  DecodeResult result = beam_decode(spec, src(), 4, 5);
  REQUIRE(result.finished);
  REQUIRE(!result.translation.ids.empty());
  REQUIRE(result.trajectory.rows.size() == result.translation.ids.size());

  for (std::size_t i = 0; i < result.trajectory.rows.size(); ++i) {
    const auto& row = result.trajectory.rows[i];
    CHECK(row.step == i + 1);
    CHECK(row.token == result.translation.ids[i]);
    REQUIRE(row.weights.size() == 2);
    REQUIRE(row.posterior.size() == 2);
    double wsum = row.weights[0] + row.weights[1];
    double psum = row.posterior[0] + row.posterior[1];
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-9));
  }
  // first token is chosen under the flat prior
  CHECK(result.trajectory.rows.front().weights[0] == doctest::Approx(0.5).epsilon(1e-12));

  // replaying the decoded tokens reproduces the recorded trajectory
  TrajectoryRecord forced = forced_trajectory(spec, src(), result.translation.ids);
  REQUIRE(forced.rows.size() == result.trajectory.rows.size());
  for (std::size_t i = 0; i < forced.rows.size(); ++i) {
    CHECK(forced.rows[i].token == result.trajectory.rows[i].token);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(forced.rows[i].weights[j] ==
            doctest::Approx(result.trajectory.rows[i].weights[j]).epsilon(1e-12));
      CHECK(forced.rows[i].posterior[j] ==
            doctest::Approx(result.trajectory.rows[i].posterior[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("task weights lock onto the in-domain model as its tokens appear") {
  // model 1 keeps predicting "b" with 0.9; model 0 hedges. No end marker, so
  // the beam rides the chain for the full budget and the posterior can lock.
  ModelPtr hedger = flat_model({0.0, 0.0, 0.0, 0.5, 0.5});
  ModelPtr builder = flat_model({0.0, 0.0, 0.0, 0.1, 0.9});
  EnsembleSpec spec = EnsembleSpec::make({hedger, builder}, {}, Scheme::kIdentityBi);
  DecodeResult result = beam_decode(spec, src(), 4, 8);

  CHECK_FALSE(result.finished);
  REQUIRE(result.translation.ids.size() == 8);
  for (TokenId tok : result.translation.ids) CHECK(tok == 4);
  const auto& rows = result.trajectory.rows;
  CHECK(rows.front().posterior[1] < 0.9);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].posterior[1] > rows[i - 1].posterior[1]);
  CHECK(rows.back().posterior[1] > 0.9);
}

TEST_CASE("corpus decoding is order-stable across thread counts") {
  ParallelCorpus data;
  auto add = [&](std::vector<TokenId> s, std::vector<TokenId> t) {
    Sentence source, target;
    source.ids = std::move(s);
    target.ids = std::move(t);
    data.pairs.emplace_back(std::move(source), std::move(target));
  };
  // source token 3 co-occurs with target 3, source 4 with target 4
  add({3, 3}, {3, 3});
  add({3}, {3, 3, 3});
  add({4, 4}, {4, 4});
  add({4}, {4, 4, 4});
  auto model = std::make_shared<TableModel>(TableModel::train(data, kV, 0.2, 0.05));
  EnsembleSpec spec = EnsembleSpec::make({model}, {}, Scheme::kUniform);

  std::vector<Sentence> sources;
  for (TokenId t : {3, 4, 3, 4, 3, 4}) {
    Sentence s;
    s.ids = {t, t};
    sources.push_back(s);
  }

  DecodeOptions serial{4, 16, 1};
  DecodeOptions threaded{4, 16, 3};
  std::vector<DecodeResult> a = decode_corpus(spec, sources, serial);
  std::vector<DecodeResult> b = decode_corpus(spec, sources, threaded);
  REQUIRE(a.size() == sources.size());
  REQUIRE(b.size() == sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    DecodeResult solo = beam_decode(spec, sources[i], 4, 16);
    CHECK(a[i].translation.ids == solo.translation.ids);
    CHECK(b[i].translation.ids == solo.translation.ids);
    CHECK(a[i].score == b[i].score);
  }
  // the source side steers the table model, so the two domains differ
  CHECK(a[0].translation.ids != a[1].translation.ids);
}

TEST_CASE("trajectory tsv lists one labeled row per emitted token") {
  auto vocab = std::make_shared<Vocabulary>();
  vocab->add_all({{"alpha", "beta"}});
  REQUIRE(vocab->size() == kV);

  ModelPtr m0 = flat_model({0.0, 0.2, 0.0, 0.5, 0.3});
  ModelPtr m1 = flat_model({0.0, 0.2, 0.0, 0.3, 0.5});
  EnsembleSpec spec = EnsembleSpec::make({m0, m1}, {}, Scheme::kIdentityBi);
  Sentence source = vocab->encode({"alpha"});
  TrajectoryRecord record = forced_trajectory(spec, source, {3, 4, 3});

  fs::path path = temp_dir() / "trajectory.tsv";
  save_trajectory_tsv(path.string(), record, *vocab, {"news", "email"});

  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "step\ttoken\tW_1\tW_2\tposterior_news\tposterior_email");
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].substr(0, 8) == "1\talpha\t");
  CHECK(rows[1].substr(0, 7) == "2\tbeta\t");
  CHECK(rows[2].substr(0, 8) == "3\talpha\t");
}
