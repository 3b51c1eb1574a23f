#include "adens/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "adens/decoder.hpp"
#include "adens/eval.hpp"
#include "adens/ngram.hpp"
#include "adens/rng.hpp"
#include "adens/training.hpp"
#include "adens/types.hpp"

namespace fs = std::filesystem;

namespace adens {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw NumericError("could not format a double");
  return std::string(buf, ptr);
}

class Stage {
 public:
  Stage(std::ostream& log, std::string name)
      : log_(log), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~Stage() {
    auto dt = std::chrono::steady_clock::now() - start_;
    double sec = std::chrono::duration<double>(dt).count();
    log_ << "[stage] " << name_ << ": " << sec << " s\n";
  }

 private:
  std::ostream& log_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string join_words(const Words& words) {
  std::string line;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) line += ' ';
    line += words[i];
  }
  return line;
}

std::vector<Sentence> source_side(const ParallelCorpus& corpus) {
  std::vector<Sentence> out;
  out.reserve(corpus.pairs.size());
  for (const auto& [src, tgt] : corpus.pairs) out.push_back(src);
  return out;
}

Words restore_words(const Vocabulary& vocab, const Sentence& s) {
  return bpe_restore(vocab.decode(s));
}

struct RegimeOutcome {
  std::string regime;
  double lambda = 0.0;
  double new_valid_ppl = 0.0;
  double old_test_ppl = 0.0;
  double degradation = 0.0;
  bool selected = false;
  bool matched = false;  // met the new-domain perplexity slack
};

nlohmann::json regime_json(const RegimeOutcome& r) {
  return {{"regime", r.regime},       {"lambda", r.lambda},
          {"new_valid_ppl", r.new_valid_ppl}, {"old_test_ppl", r.old_test_ppl},
          {"degradation", r.degradation},     {"selected", r.selected},
          {"matched", r.matched}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (out_dir.empty()) throw DataError("experiment: output directory is required");
  if (synth.domains < 2) throw DataError("experiment: need at least two domains");
  if (lm_order == 0) throw DataError("experiment: LM order must be positive");
  if (embed_dim == 0 || hidden_dim == 0) throw DataError("experiment: zero model dimensions");
  if (learning_rate <= 0.0) throw DataError("experiment: learning rate must be positive");
  if (ppl_match_slack < 1.0) throw DataError("experiment: perplexity slack must be >= 1");
  if (beam_size == 0 || max_len == 0) throw DataError("experiment: bad decode settings");
  if (threads == 0) throw DataError("experiment: need at least one thread");
  if (lambda_grid.empty()) throw DataError("experiment: empty lambda grid");
  for (double v : lambda_grid)
    if (!(v > 0.0)) throw DataError("experiment: grid lambdas must be positive");
  if (probe_count == 0 || probe_neutral_words == 0 || probe_exclusive_words == 0)
    throw DataError("experiment: bad probe settings");
}

nlohmann::json run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  for (const char* sub : {"data", "prep", "lm", "model", "adapt", "lambda", "decode", "traj"})
    fs::create_directories(out / sub);

  nlohmann::json summary;
  summary["config"] = {{"seed", cfg.seed},
                       {"domains", cfg.synth.domains},
                       {"core_vocab", cfg.synth.core_vocab},
                       {"excl_vocab", cfg.synth.excl_vocab},
                       {"overlap", cfg.synth.overlap},
                       {"switch_frac", cfg.synth.switch_frac},
                       {"train_pairs", cfg.synth.train_pairs},
                       {"bpe_merges", cfg.bpe_merges},
                       {"lm_order", cfg.lm_order},
                       {"embed_dim", cfg.embed_dim},
                       {"hidden_dim", cfg.hidden_dim},
                       {"base_steps", cfg.base_steps},
                       {"adapt_steps", cfg.adapt_steps},
                       {"learning_rate", cfg.learning_rate},
                       {"lambda_grid", cfg.lambda_grid},
                       {"ppl_match_slack", cfg.ppl_match_slack},
                       {"beam_size", cfg.beam_size},
                       {"max_len", cfg.max_len}};

  SynthGenerator gen(cfg.synth, cfg.seed);
  const auto& names = gen.domain_names();
  const std::size_t D = names.size();
  summary["domains"] = names;

  // data
  std::vector<RawParallel> raw_train(D), raw_valid(D), raw_test(D);
  {
    Stage t(log, "generate data");
    for (std::size_t d = 0; d < D; ++d) {
      raw_train[d] = gen.make_split(d, "train", cfg.synth.train_pairs);
      raw_valid[d] = gen.make_split(d, "valid", cfg.synth.valid_pairs);
      raw_test[d] = gen.make_split(d, "test", cfg.synth.test_pairs);
      save_parallel(out / "data" / (names[d] + ".train.tsv"), raw_train[d]);
      save_parallel(out / "data" / (names[d] + ".valid.tsv"), raw_valid[d]);
      save_parallel(out / "data" / (names[d] + ".test.tsv"), raw_test[d]);
    }
  }

  // subwords and vocabulary, shared across domains and sides
  BpeModel bpe;
  auto vocab = std::make_shared<Vocabulary>();
  {
    Stage t(log, "prepare subwords");
    std::vector<Words> all_words;
    for (std::size_t d = 0; d < D; ++d)
      for (const auto& [src, tgt] : raw_train[d].pairs) {
        all_words.push_back(src);
        all_words.push_back(tgt);
      }
    bpe = train_bpe(all_words, cfg.bpe_merges);
    std::vector<Words> encoded;
    encoded.reserve(all_words.size());
    for (const auto& words : all_words) encoded.push_back(apply_bpe(bpe, words));
    vocab->add_all(encoded);
    save_bpe(out / "prep" / "bpe.txt", bpe);
    save_vocab(out / "prep" / "vocab.txt", *vocab);
  }
  std::shared_ptr<const Vocabulary> vocab_c = vocab;
  summary["vocab_size"] = vocab->size();
  summary["bpe_merges_learned"] = bpe.merges.size();

  std::vector<ParallelCorpus> train(D), valid(D), test(D);
  for (std::size_t d = 0; d < D; ++d) {
    train[d] = encode_corpus(raw_train[d], &bpe, *vocab, names[d]);
    valid[d] = encode_corpus(raw_valid[d], &bpe, *vocab, names[d]);
    test[d] = encode_corpus(raw_test[d], &bpe, *vocab, names[d]);
  }

  // source language models
  std::vector<std::shared_ptr<const NgramLm>> lms;
  {
    Stage t(log, "train source LMs");
    for (std::size_t d = 0; d < D; ++d) {
      NgramLm lm = train_ngram(source_side(train[d]), cfg.lm_order, vocab_c);
      save_ngram(out / "lm" / (names[d] + ".arpa"), lm);
      lms.push_back(std::make_shared<const NgramLm>(std::move(lm)));
    }
  }

  // how well the source LMs separate the domains, measured on test sources
  {
    std::vector<const NgramLm*> lm_ptrs;
    for (const auto& lm : lms) lm_ptrs.push_back(lm.get());
    nlohmann::json sep;
    for (std::size_t d = 0; d < D; ++d) {
      double mass = 0.0;
      for (const auto& [src, tgt] : test[d].pairs)
        mass += source_task_posterior(lm_ptrs, src).probs[d];
      sep[names[d]] = mass / static_cast<double>(test[d].pairs.size());
    }
    summary["source_posterior_true_mass"] = sep;
  }

  // base per-domain models
  ToyNeuralModel::Shape shape{vocab->size(), vocab->size(), cfg.embed_dim, cfg.hidden_dim};
  std::vector<std::shared_ptr<const ToyNeuralModel>> base;
  const RegularizerConfig no_reg;
  {
    Stage t(log, "train base models");
    for (std::size_t d = 0; d < D; ++d) {
      ToyNeuralModel init =
          ToyNeuralModel::random_init(shape, substream_seed(cfg.seed, "init/" + names[d]));
      FineTuneResult r = fine_tune(init, train[d], no_reg, cfg.base_steps, cfg.learning_rate);
      save_model(out / "model" / (names[d] + ".json"), r.model, vocab_fingerprint(*vocab));
      save_trace_csv(out / "model" / (names[d] + "_trace.csv"), r.trace);
      base.push_back(std::make_shared<const ToyNeuralModel>(std::move(r.model)));
    }
    nlohmann::json ppl;
    for (std::size_t d = 0; d < D; ++d) ppl[names[d]] = perplexity(*base[d], valid[d]);
    summary["base_valid_ppl"] = ppl;
  }

  // forgetting study: adapt the first domain's model to the second domain
  {
    Stage t(log, "forgetting grid");
    const ParallelCorpus& old_test = test[0];
    const ParallelCorpus& new_train = train[1];
    const ParallelCorpus& new_valid = valid[1];
    const ToyNeuralModel& origin = *base[0];
    double base_old_ppl = perplexity(origin, old_test);

    FisherEstimate fisher = estimate_fisher_diagonal(origin, train[0], cfg.fisher_samples,
                                                     substream_seed(cfg.seed, "fisher"));
    // scale the diagonal to mean 1 so one penalty grid covers both regimes
    // with comparable aggregate strength, then condition both tails: clip the
    // heaviest entries so the stiffest parameters do not dictate the stable
    // step size, and damp the near-zero ones. Squared observed gradients
    // assign almost no mass to output rows of tokens the old model merely
    // suppresses, yet letting those rows inflate freely is exactly how the
    // new fit steals probability from old-domain predictions.
    constexpr double kFisherClip = 50.0;
    constexpr double kFisherFloor = 0.2;
    double fisher_mean = 0.0;
    for (double v : fisher.values) fisher_mean += v;
    fisher_mean /= static_cast<double>(fisher.values.size());
    if (fisher_mean > 0.0)
      for (double& v : fisher.values)
        v = std::clamp(v / fisher_mean, kFisherFloor, kFisherClip);

    struct Adapted {
      RegimeOutcome outcome;
      ToyNeuralModel model;
    };
    auto adapt = [&](const std::string& regime, RegularizerMode mode, double lambda) {
      RegularizerConfig rc;
      rc.mode = mode;
      rc.lambda = lambda;
      double f_max = 1.0;
      if (mode != RegularizerMode::kNone) {
        rc.anchor = origin.params();
        if (mode == RegularizerMode::kEwc) {
          rc.fisher = fisher.values;
          for (double v : rc.fisher) f_max = std::max(f_max, v);
        }
      }
      // gradient descent on a quadratic of curvature 2*lambda*f diverges once
      // the step exceeds 1/(lambda*f); stay well inside that bound, and when
      // that shrinks the step, stretch the run so lr*steps stays comparable
      // (capped, so hopeless penalty strengths do not eat the clock)
      double lr = cfg.learning_rate;
      std::size_t steps = cfg.adapt_steps;
      if (mode != RegularizerMode::kNone && lambda > 0.0) {
        lr = std::min(lr, 0.25 / (lambda * f_max));
        double mult = std::min(8.0, cfg.learning_rate / lr);
        steps = static_cast<std::size_t>(
            std::lround(static_cast<double>(cfg.adapt_steps) * mult));
      }
      FineTuneResult r = fine_tune(origin, new_train, rc, steps, lr);
      RegimeOutcome o;
      o.regime = regime;
      o.lambda = lambda;
      o.new_valid_ppl = perplexity(r.model, new_valid);
      o.old_test_ppl = perplexity(r.model, old_test);
      o.degradation = o.old_test_ppl - base_old_ppl;
      return Adapted{o, std::move(r.model)};
    };

    Adapted none = adapt("none", RegularizerMode::kNone, 0.0);
    none.outcome.selected = true;
    none.outcome.matched = true;
    double target_ppl = none.outcome.new_valid_ppl * cfg.ppl_match_slack;

    // Sweep the penalty per regime. Old-domain damage shrinks as the penalty
    // grows while the new-domain fit worsens, so the best run that still
    // matches the unregularized fit sits near where the fit crosses the
    // threshold; after the coarse pass, bisect geometrically toward that
    // crossing instead of carrying a uniformly fine grid.
    auto sweep = [&](const std::string& regime, RegularizerMode mode) {
      std::vector<Adapted> runs;
      auto run_one = [&](double lam) {
        runs.push_back(adapt(regime, mode, lam));
        runs.back().outcome.matched = runs.back().outcome.new_valid_ppl <= target_ppl;
      };
      for (double lam : cfg.lambda_grid) run_one(lam);
      for (int extra = 0; extra < 6; ++extra) {
        double hi_matched = 0.0;
        for (const auto& a : runs)
          if (a.outcome.matched) hi_matched = std::max(hi_matched, a.outcome.lambda);
        if (hi_matched == 0.0) break;
        double lo_unmatched = 0.0;
        for (const auto& a : runs)
          if (!a.outcome.matched && a.outcome.lambda > hi_matched &&
              (lo_unmatched == 0.0 || a.outcome.lambda < lo_unmatched))
            lo_unmatched = a.outcome.lambda;
        if (lo_unmatched == 0.0 || lo_unmatched / hi_matched <= 1.2) break;
        run_one(std::sqrt(hi_matched * lo_unmatched));
      }
      std::sort(runs.begin(), runs.end(), [](const Adapted& a, const Adapted& b) {
        return a.outcome.lambda < b.outcome.lambda;
      });
      return runs;
    };
    std::vector<Adapted> grid = sweep("l2", RegularizerMode::kL2);
    {
      std::vector<Adapted> ewc = sweep("ewc", RegularizerMode::kEwc);
      for (auto& a : ewc) grid.push_back(std::move(a));
    }

    // best per regime: least old-domain damage among runs that still reach
    // the unregularized new-domain perplexity within the slack; if none
    // qualify, fall back to the closest new-domain fit
    auto select = [&](const std::string& regime) -> Adapted* {
      Adapted* best = nullptr;
      for (auto& a : grid) {
        if (a.outcome.regime != regime || !a.outcome.matched) continue;
        if (!best || a.outcome.degradation < best->outcome.degradation) best = &a;
      }
      if (!best) {
        for (auto& a : grid) {
          if (a.outcome.regime != regime) continue;
          if (!best || a.outcome.new_valid_ppl < best->outcome.new_valid_ppl) best = &a;
        }
      }
      if (best) best->outcome.selected = true;
      return best;
    };
    Adapted* l2_best = select("l2");
    Adapted* ewc_best = select("ewc");

    std::ostringstream tsv;
    tsv << "regime\tlambda\tnew_valid_ppl\told_test_ppl\tdegradation\tmatched\tselected\n";
    auto row = [&](const RegimeOutcome& o) {
      tsv << o.regime << '\t' << fmt(o.lambda) << '\t' << fmt(o.new_valid_ppl) << '\t'
          << fmt(o.old_test_ppl) << '\t' << fmt(o.degradation) << '\t' << (o.matched ? 1 : 0)
          << '\t' << (o.selected ? 1 : 0) << '\n';
    };
    row(none.outcome);
    for (const auto& a : grid) row(a.outcome);
    write_text(out / "adapt" / "forgetting.tsv", tsv.str());

    save_model(out / "adapt" / "none.json", none.model, vocab_fingerprint(*vocab));
    save_model(out / "adapt" / "l2.json", l2_best->model, vocab_fingerprint(*vocab));
    save_model(out / "adapt" / "ewc.json", ewc_best->model, vocab_fingerprint(*vocab));

    nlohmann::json f;
    f["old_domain"] = names[0];
    f["new_domain"] = names[1];
    f["base_old_test_ppl"] = base_old_ppl;
    f["fisher_samples_used"] = fisher.samples_used;
    f["rows"] = nlohmann::json::array();
    f["rows"].push_back(regime_json(none.outcome));
    for (const auto& a : grid) f["rows"].push_back(regime_json(a.outcome));
    f["selected"] = {{"none", regime_json(none.outcome)},
                     {"l2", regime_json(l2_best->outcome)},
                     {"ewc", regime_json(ewc_best->outcome)}};
    summary["forgetting"] = f;

    // keep the chosen adapted model for the ensembling rows below
    summary["adapted_model_file"] = "adapt/ewc.json";
  }

  // interpolation weights from source LM fit on validation sources
  LambdaMatrix lambda;
  {
    Stage t(log, "estimate lambda");
    std::vector<const NgramLm*> lm_ptrs;
    for (const auto& lm : lms) lm_ptrs.push_back(lm.get());
    std::vector<std::vector<Sentence>> valid_sources;
    for (std::size_t d = 0; d < D; ++d) valid_sources.push_back(source_side(valid[d]));
    lambda = estimate_lambda(lm_ptrs, valid_sources, cfg.lambda_estimation);
    save_lambda_tsv(out / "lambda" / "lambda.tsv", lambda, names, names);
    summary["lambda"] = nlohmann::json::array();
    for (std::size_t k = 0; k < lambda.models(); ++k) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t t = 0; t < lambda.tasks(); ++t) row.push_back(lambda.at(k, t));
      summary["lambda"].push_back(row);
    }
  }

  // decoding tracks
  {
    Stage t(log, "decode and score");
    std::vector<std::shared_ptr<const ConditionalSequenceModel>> models(base.begin(), base.end());

    std::vector<std::string> set_names = names;
    set_names.push_back("concat");
    std::vector<std::vector<Sentence>> set_sources;
    std::vector<std::vector<Words>> set_refs;
    for (std::size_t d = 0; d < D; ++d) {
      set_sources.push_back(source_side(test[d]));
      std::vector<Words> refs;
      for (const auto& [src, tgt] : raw_test[d].pairs) refs.push_back(tgt);
      set_refs.push_back(std::move(refs));
    }
    std::vector<Sentence> concat_sources;
    std::vector<Words> concat_refs;
    for (std::size_t d = 0; d < D; ++d) {
      concat_sources.insert(concat_sources.end(), set_sources[d].begin(), set_sources[d].end());
      concat_refs.insert(concat_refs.end(), set_refs[d].begin(), set_refs[d].end());
    }
    set_sources.push_back(std::move(concat_sources));
    set_refs.push_back(std::move(concat_refs));

    DecodeOptions dopts;
    dopts.beam_size = cfg.beam_size;
    dopts.max_len = cfg.max_len;
    dopts.threads = cfg.threads;

    nlohmann::json bleu_table;
    std::ostringstream tsv;
    tsv << "system";
    for (const auto& s : set_names) tsv << '\t' << s;
    tsv << '\n';

    auto score_set = [&](const EnsembleSpec& spec, const std::vector<Sentence>& sources,
                         const std::vector<Words>& refs, const std::string& file_stem) {
      std::vector<DecodeResult> results = decode_corpus(spec, sources, dopts);
      std::vector<Words> hyps;
      std::string text;
      for (const auto& r : results) {
        hyps.push_back(restore_words(*vocab, r.translation));
        text += join_words(hyps.back());
        text += '\n';
      }
      write_text(out / "decode" / (file_stem + ".hyp.txt"), text);
      return corpus_bleu_words(hyps, refs).bleu;
    };

    auto run_system = [&](const std::string& system, const EnsembleSpec& spec,
                          const std::vector<std::size_t>& sets) {
      nlohmann::json row;
      tsv << system;
      std::size_t next = 0;
      for (std::size_t s = 0; s < set_names.size(); ++s) {
        if (next < sets.size() && sets[next] == s) {
          double b = score_set(spec, set_sources[s], set_refs[s], system + "." + set_names[s]);
          row[set_names[s]] = b;
          tsv << '\t' << fmt(b);
          ++next;
        } else {
          tsv << '\t' << "-";
        }
      }
      tsv << '\n';
      bleu_table[system] = row;
    };

    std::vector<std::size_t> all_sets;
    for (std::size_t s = 0; s < set_names.size(); ++s) all_sets.push_back(s);

    for (Scheme scheme : {Scheme::kUniform, Scheme::kIs, Scheme::kIdentityBi, Scheme::kBi,
                          Scheme::kBiIs}) {
      EnsembleSpec spec = EnsembleSpec::make(models, lms, scheme, &lambda);
      run_system(scheme_name(scheme), spec, all_sets);
    }

    // single-model references: each domain decoded by its own model (oracle)
    // and by every other model (cross), plus the stitched oracle on concat
    {
      nlohmann::json oracle_row, cross_row;
      tsv << "oracle";
      std::vector<Words> stitched;
      for (std::size_t d = 0; d < D; ++d) {
        EnsembleSpec own = EnsembleSpec::make({models[d]}, {}, Scheme::kUniform);
        std::vector<DecodeResult> results = decode_corpus(own, set_sources[d], dopts);
        std::vector<Words> hyps;
        std::string text;
        for (const auto& r : results) {
          hyps.push_back(restore_words(*vocab, r.translation));
          text += join_words(hyps.back());
          text += '\n';
        }
        write_text(out / "decode" / ("oracle." + set_names[d] + ".hyp.txt"), text);
        double b = corpus_bleu_words(hyps, set_refs[d]).bleu;
        oracle_row[set_names[d]] = b;
        tsv << '\t' << fmt(b);
        stitched.insert(stitched.end(), hyps.begin(), hyps.end());
      }
      double concat_bleu = corpus_bleu_words(stitched, set_refs[D]).bleu;
      oracle_row["concat"] = concat_bleu;
      tsv << '\t' << fmt(concat_bleu) << '\n';
      bleu_table["oracle"] = oracle_row;

      tsv << "cross";
      for (std::size_t d = 0; d < D; ++d) {
        EnsembleSpec other = EnsembleSpec::make({models[(d + 1) % D]}, {}, Scheme::kUniform);
        double b = score_set(other, set_sources[d], set_refs[d], "cross." + set_names[d]);
        cross_row[set_names[d]] = b;
        tsv << '\t' << fmt(b);
      }
      tsv << "\t-\n";
      bleu_table["cross"] = cross_row;
    }

    // ensemble where the second domain's member is the regularized adaptation
    // of the first domain's model; the lambda slice below is only column
    // stochastic for the two-domain setup
    if (D == 2) {
      ToyNeuralModel adapted = load_model((out / "adapt" / "ewc.json").string());
      std::vector<std::shared_ptr<const ConditionalSequenceModel>> mixed = {
          models[0], std::make_shared<const ToyNeuralModel>(std::move(adapted))};
      std::vector<std::shared_ptr<const NgramLm>> mixed_lms = {lms[0], lms[1]};
      LambdaMatrix mixed_lambda(2, 2, {lambda.at(0, 0), lambda.at(0, 1), lambda.at(1, 0),
                                       lambda.at(1, 1)});
      EnsembleSpec spec = EnsembleSpec::make(mixed, mixed_lms, Scheme::kBiIs, &mixed_lambda);
      run_system("bi_is_adapted", spec, {D});
    }

    write_text(out / "decode" / "bleu.tsv", tsv.str());
    summary["bleu"] = bleu_table;
  }

  // posterior trajectory probes: neutral prefix, exclusive tail
  {
    Stage t(log, "trajectory probes");
    // The probes watch the weighting arithmetic itself, so they ride on the
    // count tables: wherever two corpora share events the tables emit the
    // same likelihoods, and unseen events hit the smoothing floor. The tanh
    // models blur that contrast through the pooled source embedding, which
    // says something about that architecture, not about the weighting.
    // Small floors: the default smoothing hands each table a noticeable slab
    // of probability on its own domain's columns (floor times co-occurrence),
    // which reads as spurious evidence on neutral tokens.
    std::vector<std::shared_ptr<const ConditionalSequenceModel>> models;
    for (std::size_t d = 0; d < D; ++d)
      models.push_back(std::make_shared<const TableModel>(
          TableModel::train(train[d], vocab->size(), 0.02, 0.02)));
    EnsembleSpec spec = EnsembleSpec::make(models, {}, Scheme::kIdentityBi);

    nlohmann::json probes = nlohmann::json::array();
    std::size_t passed = 0;
    for (std::size_t i = 0; i < cfg.probe_count; ++i) {
      std::size_t domain = i % D;
      SynthGenerator::Probe probe = gen.make_probe(domain, cfg.probe_neutral_words,
                                                   cfg.probe_exclusive_words, i / D);
      Sentence src = vocab->encode(apply_bpe(bpe, probe.src), join_words(probe.src));
      Sentence tgt = vocab->encode(apply_bpe(bpe, probe.tgt), join_words(probe.tgt));

      std::size_t neutral_steps = 0;
      for (std::size_t w = 0; w < probe.neutral_words; ++w)
        neutral_steps += bpe_split_word(bpe, probe.tgt[w]).size();
      std::size_t first_exclusive_step = neutral_steps + 1;

      TrajectoryRecord traj = forced_trajectory(spec, src, tgt.ids);
      save_trajectory_tsv(out / "traj" / ("probe_" + names[domain] + "_" +
                                          std::to_string(i / D) + ".tsv"),
                          traj, *vocab, names);

      double flat = 1.0 / static_cast<double>(D);
      double prefix_max_dev = 0.0;
      std::size_t lock_step = 0;
      for (const auto& row : traj.rows) {
        double w_in = row.weights[domain];
        if (row.step <= first_exclusive_step)
          prefix_max_dev = std::max(prefix_max_dev, std::abs(w_in - flat));
        else if (lock_step == 0 && w_in > 0.9)
          lock_step = row.step;
      }
      long steps_to_lock =
          lock_step == 0 ? -1 : static_cast<long>(lock_step - first_exclusive_step);
      bool ok = prefix_max_dev <= 0.1 && lock_step != 0 && steps_to_lock <= 3;
      if (ok) ++passed;
      probes.push_back({{"domain", names[domain]},
                        {"neutral_steps", neutral_steps},
                        {"first_exclusive_step", first_exclusive_step},
                        {"prefix_max_dev", prefix_max_dev},
                        {"lock_step", lock_step},
                        {"steps_to_lock", steps_to_lock},
                        {"ok", ok}});
    }
    summary["probes"] = {{"rows", probes}, {"passed", passed}, {"total", cfg.probe_count}};
  }

  write_text(out / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace adens
