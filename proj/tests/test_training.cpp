#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "adens/training.hpp"
#include "adens/types.hpp"
#include "doctest.h"

using namespace adens;

namespace {

Sentence ids(std::initializer_list<TokenId> xs) {
  Sentence s;
  s.ids = xs;
  return s;
}

ParallelCorpus tiny_corpus() {
  ParallelCorpus c;
  c.pairs.push_back({ids({3, 4}), ids({4, 3})});
  c.pairs.push_back({ids({5}), ids({3, 4, 5})});
  c.pairs.push_back({ids({4, 4}), ids({5, 5})});
  return c;
}

const ToyNeuralModel::Shape kShape{6, 6, 3, 4};

}  // namespace

TEST_CASE("fisher entries are mean squared event gradients") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 31);
  ParallelCorpus c = tiny_corpus();

  FisherEstimate est = estimate_fisher_diagonal(m, c, 1000000, 1);
  CHECK(est.samples_used == event_count(c));
  for (double v : est.values) CHECK(v >= 0.0);

  // Exhaustive oracle: walk every event, square its gradient, average.
  std::vector<double> oracle(kShape.param_count(), 0.0);
  std::size_t n = 0;
  for (const auto& [src, tgt] : c.pairs) {
    std::vector<TokenId> hist;
    for (std::size_t i = 0; i <= tgt.ids.size(); ++i) {
      TokenId y = i < tgt.ids.size() ? tgt.ids[i] : Vocabulary::kEos;
      std::vector<double> g(kShape.param_count(), 0.0);
      m.add_event_nll_grad(src, hist, y, g, 1.0);
      for (std::size_t j = 0; j < g.size(); ++j) oracle[j] += g[j] * g[j];
      hist.push_back(y);
      ++n;
    }
  }
  for (double& v : oracle) v /= static_cast<double>(n);
  REQUIRE(est.values.size() == oracle.size());
  for (std::size_t j = 0; j < oracle.size(); ++j)
    CHECK(est.values[j] == doctest::Approx(oracle[j]).epsilon(1e-12));
}

TEST_CASE("fisher is zero for source rows of tokens absent from the data") {
  ToyNeuralModel m = ToyNeuralModel::zeros(kShape);
  ParallelCorpus c;
  c.pairs.push_back({ids({3}), ids({4})});  // source uses token 3 only
  FisherEstimate est = estimate_fisher_diagonal(m, c, 100, 1);

  std::size_t off = kShape.source_embed_offset();
  std::size_t dim = kShape.embed_dim;
  for (std::size_t d = 0; d < dim; ++d) {
    CHECK(est.values[off + 5 * dim + d] == 0.0);  // token 5 never appears
    CHECK(est.values[off + 2 * dim + d] == 0.0);  // nor does token 2
  }
}

TEST_CASE("fisher subsampling is seeded and deterministic") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 8);
  ParallelCorpus c = tiny_corpus();
  FisherEstimate a = estimate_fisher_diagonal(m, c, 3, 77);
  FisherEstimate b = estimate_fisher_diagonal(m, c, 3, 77);
  FisherEstimate d = estimate_fisher_diagonal(m, c, 3, 78);
  CHECK(a.samples_used == 3);
  CHECK(a.values == b.values);
  CHECK(a.values != d.values);

  CHECK_THROWS_AS(estimate_fisher_diagonal(m, ParallelCorpus{}, 10, 1), DataError);
  CHECK_THROWS_AS(estimate_fisher_diagonal(m, c, 0, 1), DataError);
}

TEST_CASE("lambda zero is bit-for-bit the unregularized objective") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 12);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig none;
  RegularizerConfig ewc;
  ewc.mode = RegularizerMode::kEwc;
  ewc.lambda = 0.0;
  ewc.anchor.assign(kShape.param_count(), 0.05);
  ewc.fisher.assign(kShape.param_count(), 2.0);
  RegularizerConfig l2;
  l2.mode = RegularizerMode::kL2;
  l2.lambda = 0.0;
  l2.anchor = ewc.anchor;

  double base_loss = regularized_loss(m, c, none);
  CHECK(regularized_loss(m, c, ewc) == base_loss);
  CHECK(regularized_loss(m, c, l2) == base_loss);

  std::vector<double> base_grad = regularized_gradient(m, c, none);
  CHECK(regularized_gradient(m, c, ewc) == base_grad);
  CHECK(regularized_gradient(m, c, l2) == base_grad);
}

TEST_CASE("l2 equals ewc with unit fisher, bit for bit") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 13);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig l2;
  l2.mode = RegularizerMode::kL2;
  l2.lambda = 0.37;
  l2.anchor.assign(kShape.param_count(), -0.02);

  RegularizerConfig ewc = l2;
  ewc.mode = RegularizerMode::kEwc;
  ewc.fisher.assign(kShape.param_count(), 1.0);

  CHECK(regularized_loss(m, c, l2) == regularized_loss(m, c, ewc));
  CHECK(regularized_gradient(m, c, l2) == regularized_gradient(m, c, ewc));
}

TEST_CASE("penalty is zero at the anchor and monotone in lambda") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 14);

  RegularizerConfig at_anchor;
  at_anchor.mode = RegularizerMode::kL2;
  at_anchor.lambda = 5.0;
  at_anchor.anchor = m.params();
  CHECK(penalty_term(m, at_anchor) == 0.0);

  RegularizerConfig cfg;
  cfg.mode = RegularizerMode::kEwc;
  cfg.anchor.assign(kShape.param_count(), 0.0);
  cfg.fisher.assign(kShape.param_count(), 0.0);
  cfg.fisher[7] = 3.0;  // one informative direction is enough
  double prev = -1.0;
  for (double lambda : {0.1, 1.0, 10.0, 100.0}) {
    cfg.lambda = lambda;
    double p = penalty_term(m, cfg);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("regularized gradient adds the quadratic pull") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 15);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig cfg;
  cfg.mode = RegularizerMode::kEwc;
  cfg.lambda = 0.8;
  cfg.anchor.assign(kShape.param_count(), 0.01);
  cfg.fisher.assign(kShape.param_count(), 0.0);
  for (std::size_t j = 0; j < cfg.fisher.size(); ++j) cfg.fisher[j] = 0.1 * (j % 5);

  std::vector<double> plain = nll_gradient(m, c);
  std::vector<double> reg = regularized_gradient(m, c, cfg);
  for (std::size_t j = 0; j < plain.size(); ++j) {
    double pull = 2.0 * cfg.lambda * cfg.fisher[j] * (m.params()[j] - cfg.anchor[j]);
    CHECK(reg[j] == doctest::Approx(plain[j] + pull).epsilon(1e-12));
  }
}

TEST_CASE("regularized gradient matches finite differences") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 16);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig cfg;
  cfg.mode = RegularizerMode::kEwc;
  cfg.lambda = 1.3;
  cfg.anchor.assign(kShape.param_count(), -0.04);
  cfg.fisher.assign(kShape.param_count(), 0.6);

  std::vector<double> grad = regularized_gradient(m, c, cfg);
  std::mt19937_64 gen(23);
  std::uniform_int_distribution<std::size_t> pick(0, kShape.param_count() - 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t j = pick(gen);
    ToyNeuralModel plus = m, minus = m;
    plus.mutable_params()[j] += h;
    minus.mutable_params()[j] -= h;
    double fd = (regularized_loss(plus, c, cfg) - regularized_loss(minus, c, cfg)) / (2 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("config validation catches shape mismatches") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 19);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig cfg;
  cfg.mode = RegularizerMode::kL2;
  cfg.lambda = 1.0;
  cfg.anchor.assign(3, 0.0);  // wrong length
  CHECK_THROWS_AS(regularized_loss(m, c, cfg), DataError);

  cfg.anchor.assign(kShape.param_count(), 0.0);
  cfg.mode = RegularizerMode::kEwc;
  cfg.fisher.assign(2, 1.0);  // wrong length
  CHECK_THROWS_AS(regularized_gradient(m, c, cfg), DataError);

  cfg.fisher.assign(kShape.param_count(), 1.0);
  cfg.lambda = -0.5;
  CHECK_THROWS_AS(regularized_loss(m, c, cfg), DataError);
}

TEST_CASE("fine_tune reduces the loss and records the trace") {
  ToyNeuralModel m = ToyNeuralModel::zeros(kShape);
  ParallelCorpus c = tiny_corpus();
  RegularizerConfig none;

  FineTuneResult r = fine_tune(m, c, none, 60, 0.05);
  REQUIRE(r.trace.size() == 60);
  CHECK(r.trace.front().step == 1);
  CHECK(r.trace.back().step == 60);
  CHECK(r.trace.back().loss < r.trace.front().loss);
  for (const auto& row : r.trace) CHECK(row.penalty == 0.0);
  CHECK(perplexity(r.model, c) < perplexity(m, c));
}

TEST_CASE("fine_tune boundary and failure cases") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 40);
  ParallelCorpus c = tiny_corpus();
  RegularizerConfig none;

  FineTuneResult unchanged = fine_tune(m, c, none, 0, 0.1);
  CHECK(unchanged.model.params() == m.params());
  CHECK(unchanged.trace.empty());

  CHECK_THROWS_AS(fine_tune(m, ParallelCorpus{}, none, 5, 0.1), DataError);
  CHECK_THROWS_WITH_AS(fine_tune(m, c, none, 500, 1e9), doctest::Contains("step"),
                       NumericError);
}

TEST_CASE("a strong anchored penalty pins parameters while training still moves them") {
  ToyNeuralModel m = ToyNeuralModel::random_init(kShape, 41);
  ParallelCorpus c = tiny_corpus();

  RegularizerConfig none;
  RegularizerConfig pinned;
  pinned.mode = RegularizerMode::kL2;
  pinned.lambda = 1e4;
  pinned.anchor = m.params();

  ToyNeuralModel free_run = fine_tune(m, c, none, 40, 0.01).model;
  ToyNeuralModel held = fine_tune(m, c, pinned, 40, 1e-5).model;

  double drift_free = 0.0, drift_held = 0.0;
  for (std::size_t j = 0; j < m.params().size(); ++j) {
    drift_free = std::max(drift_free, std::abs(free_run.params()[j] - m.params()[j]));
    drift_held = std::max(drift_held, std::abs(held.params()[j] - m.params()[j]));
  }
  CHECK(drift_held < drift_free);
}

TEST_CASE("trace csv lists one row per step") {
  std::vector<FineTuneResult::Row> trace = {{1, 2.5, 0.5}, {2, 2.0, 0.25}};
  auto path = (std::filesystem::temp_directory_path() / "adens_test_trace.csv").string();
  save_trace_csv(path, trace);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,loss,penalty");
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == trace.size());
}
