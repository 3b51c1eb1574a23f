#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "adens/corpus.hpp"
#include "adens/decoder.hpp"
#include "adens/ensemble.hpp"
#include "adens/eval.hpp"
#include "adens/experiment.hpp"
#include "adens/ngram.hpp"
#include "adens/rng.hpp"
#include "adens/seqmodel.hpp"
#include "adens/synth.hpp"
#include "adens/training.hpp"
#include "adens/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace adens;

// Pipeline inputs are usually pre-filtered, so subcommands other than
// `prepare` load with no effective length limits.
FilterOptions permissive_filter() { return {1, 1000000, 1e9}; }

std::optional<BpeModel> maybe_bpe(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_bpe(path);
}

ParallelCorpus load_encoded(const std::string& path, const std::optional<BpeModel>& bpe,
                            const Vocabulary& vocab, const std::string& tag) {
  RawParallel raw = load_parallel(path, permissive_filter());
  return encode_corpus(raw, bpe ? &*bpe : nullptr, vocab, tag);
}

std::vector<Sentence> encode_mono(const std::string& path, const std::optional<BpeModel>& bpe,
                                  const Vocabulary& vocab) {
  std::vector<Sentence> out;
  for (const Words& w : load_mono(path)) {
    Words pieces = bpe ? apply_bpe(*bpe, w) : w;
    std::string raw;
    for (std::size_t i = 0; i < w.size(); ++i) raw += (i ? " " : "") + w[i];
    out.push_back(vocab.encode(pieces, raw));
  }
  return out;
}

Sentence encode_line(const std::string& line, const std::optional<BpeModel>& bpe,
                     const Vocabulary& vocab) {
  Words w = tokenize(line);
  if (w.empty()) throw DataError("empty sentence");
  return vocab.encode(bpe ? apply_bpe(*bpe, w) : w, line);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

struct SharedModelArgs {
  std::vector<std::string> model_paths;
  std::vector<std::string> lm_paths;
  std::string lambda_path;
  std::string scheme_name = "uniform";
  std::string vocab_path;
  std::string bpe_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model_paths, "Model checkpoint, repeat per ensemble member")
        ->required();
    cmd->add_option("--lm", lm_paths, "Source language model (ARPA), one per task");
    cmd->add_option("--lambda-file", lambda_path, "Interpolation weight TSV");
    cmd->add_option("--scheme", scheme_name,
                    "uniform | is | identity_bi | bi | bi_is");
    cmd->add_option("--vocab", vocab_path, "Shared vocabulary file")->required();
    cmd->add_option("--bpe", bpe_path, "Subword merge file");
  }

  struct Loaded {
    EnsembleSpec spec;
    std::shared_ptr<const Vocabulary> vocab;
    std::optional<BpeModel> bpe;
  };

  Loaded load() const {
    Loaded out;
    auto vocab = std::make_shared<Vocabulary>(load_vocab(vocab_path));
    out.vocab = vocab;
    out.bpe = maybe_bpe(bpe_path);
    std::uint64_t fp = vocab_fingerprint(*vocab);

    std::vector<std::shared_ptr<const ConditionalSequenceModel>> models;
    for (const auto& p : model_paths)
      models.push_back(std::make_shared<const ToyNeuralModel>(load_model(p, &fp)));
    std::vector<std::shared_ptr<const NgramLm>> lms;
    for (const auto& p : lm_paths)
      lms.push_back(std::make_shared<const NgramLm>(load_ngram(p, out.vocab)));

    Scheme scheme = parse_scheme(scheme_name);
    if (!lambda_path.empty()) {
      LambdaMatrix lambda = load_lambda_tsv(lambda_path);
      out.spec = EnsembleSpec::make(std::move(models), std::move(lms), scheme, &lambda);
    } else {
      out.spec = EnsembleSpec::make(std::move(models), std::move(lms), scheme);
    }
    return out;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive translation ensemble toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Key-value config file; [section] names a subcommand, flags override");
  app.option_defaults()->always_capture_default(true);
  app.set_config("--config", "", "INI file with [subcommand] sections; flags override");

  // synth-gen ---------------------------------------------------------------
  struct {
    std::uint64_t seed = 1;
    std::string out_dir;
    SynthParams params;
  } sg;
  {
    auto* cmd = app.add_subcommand("synth-gen", "Generate seeded synthetic domain corpora");
    cmd->add_option("--seed", sg.seed, "Master seed")->required();
    cmd->add_option("--out-dir", sg.out_dir, "Output directory")->required();
    cmd->add_option("--domains", sg.params.domains, "Number of domains");
    cmd->add_option("--core-vocab", sg.params.core_vocab, "Shared core vocabulary size");
    cmd->add_option("--excl-vocab", sg.params.excl_vocab, "Per-domain exclusive vocabulary size");
    cmd->add_option("--overlap", sg.params.overlap, "Fraction of core-vocabulary sentences");
    cmd->add_option("--switch-frac", sg.params.switch_frac,
                    "Of the remainder, fraction opening with a core prefix");
    cmd->add_option("--train-pairs", sg.params.train_pairs, "Training pairs per domain");
    cmd->add_option("--valid-pairs", sg.params.valid_pairs, "Validation pairs per domain");
    cmd->add_option("--test-pairs", sg.params.test_pairs, "Test pairs per domain");
    cmd->add_option("--min-len", sg.params.min_len, "Minimum sentence length");
    cmd->add_option("--max-len", sg.params.max_len, "Maximum sentence length");
    cmd->callback([&] {
      SynthGenerator gen(sg.params, sg.seed);
      fs::create_directories(sg.out_dir);
      json files = json::array();
      for (std::size_t d = 0; d < gen.domain_names().size(); ++d) {
        const std::string& name = gen.domain_names()[d];
        struct {
          const char* split;
          std::size_t pairs;
        } splits[] = {{"train", sg.params.train_pairs},
                      {"valid", sg.params.valid_pairs},
                      {"test", sg.params.test_pairs}};
        for (const auto& s : splits) {
          fs::path file = fs::path(sg.out_dir) / (name + "." + s.split + ".tsv");
          save_parallel(file, gen.make_split(d, s.split, s.pairs));
          files.push_back(file.string());
        }
      }
      emit(json{{"domains", gen.domain_names()}, {"files", files}});
    });
  }

  // prepare -----------------------------------------------------------------
  struct {
    std::vector<std::string> train;
    std::size_t merges = 350;
    std::string out_dir;
    FilterOptions filter;
  } pr;
  {
    auto* cmd = app.add_subcommand("prepare", "Filter corpora, learn subwords, build vocabulary");
    cmd->add_option("--train", pr.train, "Word-level parallel TSV, repeatable")->required();
    cmd->add_option("--merges", pr.merges, "Subword merge budget");
    cmd->add_option("--out-dir", pr.out_dir, "Output directory")->required();
    cmd->add_option("--min-tokens", pr.filter.min_tokens, "Minimum tokens per side");
    cmd->add_option("--max-tokens", pr.filter.max_tokens, "Maximum tokens per side");
    cmd->add_option("--max-ratio", pr.filter.max_length_ratio, "Maximum length ratio");
    cmd->callback([&] {
      fs::create_directories(pr.out_dir);
      std::vector<Words> all_words;
      json per_file = json::array();
      for (const auto& path : pr.train) {
        RawParallel raw = load_parallel(path, pr.filter);
        for (const auto& [src, tgt] : raw.pairs) {
          all_words.push_back(src);
          all_words.push_back(tgt);
        }
        per_file.push_back({{"file", path}, {"kept", raw.kept}, {"dropped", raw.dropped_by_filter}});
      }
      BpeModel bpe = train_bpe(all_words, pr.merges);
      Vocabulary vocab;
      std::vector<Words> encoded;
      encoded.reserve(all_words.size());
      for (const auto& w : all_words) encoded.push_back(apply_bpe(bpe, w));
      vocab.add_all(encoded);
      save_bpe((fs::path(pr.out_dir) / "bpe.txt").string(), bpe);
      save_vocab((fs::path(pr.out_dir) / "vocab.txt").string(), vocab);
      emit(json{{"vocab_size", vocab.size()},
                {"merges_learned", bpe.merges.size()},
                {"files", per_file}});
    });
  }

  // train-lm ----------------------------------------------------------------
  struct {
    std::string train, side = "source", vocab, bpe, out;
    std::size_t order = 4;
  } tl;
  {
    auto* cmd = app.add_subcommand("train-lm", "Train a backoff n-gram language model");
    cmd->add_option("--train", tl.train, "Word-level parallel TSV")->required();
    cmd->add_option("--side", tl.side, "source | target");
    cmd->add_option("--order", tl.order, "Model order");
    cmd->add_option("--vocab", tl.vocab, "Shared vocabulary file")->required();
    cmd->add_option("--bpe", tl.bpe, "Subword merge file");
    cmd->add_option("--out", tl.out, "Output ARPA-style file")->required();
    cmd->callback([&] {
      auto vocab = std::make_shared<Vocabulary>(load_vocab(tl.vocab));
      auto bpe = maybe_bpe(tl.bpe);
      ParallelCorpus corpus = load_encoded(tl.train, bpe, *vocab, "");
      std::vector<Sentence> side;
      for (auto& [src, tgt] : corpus.pairs) {
        if (tl.side == "source") side.push_back(std::move(src));
        else if (tl.side == "target") side.push_back(std::move(tgt));
        else throw DataError("train-lm: --side must be source or target");
      }
      NgramLm lm = train_ngram(side, tl.order, vocab);
      save_ngram(tl.out, lm);
      emit(json{{"order", tl.order}, {"sentences", side.size()}, {"file", tl.out}});
    });
  }

  // train-model ---------------------------------------------------------------
  struct {
    std::string train, vocab, bpe, out, trace, valid;
    std::size_t embed_dim = 12, hidden_dim = 24, steps = 250;
    double lr = 2e-4;
    std::uint64_t seed = 1;
  } tm;
  {
    auto* cmd = app.add_subcommand("train-model", "Train a conditional sequence model");
    cmd->add_option("--train", tm.train, "Word-level parallel TSV")->required();
    cmd->add_option("--vocab", tm.vocab, "Shared vocabulary file")->required();
    cmd->add_option("--bpe", tm.bpe, "Subword merge file");
    cmd->add_option("--embed-dim", tm.embed_dim, "Embedding width");
    cmd->add_option("--hidden-dim", tm.hidden_dim, "Hidden layer width");
    cmd->add_option("--steps", tm.steps, "Gradient steps");
    cmd->add_option("--lr", tm.lr, "Learning rate");
    cmd->add_option("--seed", tm.seed, "Master seed");
    cmd->add_option("--out", tm.out, "Output checkpoint")->required();
    cmd->add_option("--trace", tm.trace, "Optional loss trace CSV");
    cmd->add_option("--valid", tm.valid, "Optional validation TSV for a perplexity report");
    cmd->callback([&] {
      auto vocab = std::make_shared<Vocabulary>(load_vocab(tm.vocab));
      auto bpe = maybe_bpe(tm.bpe);
      ParallelCorpus corpus = load_encoded(tm.train, bpe, *vocab, "");
      ToyNeuralModel::Shape shape{vocab->size(), vocab->size(), tm.embed_dim, tm.hidden_dim};
      ToyNeuralModel init = ToyNeuralModel::random_init(shape, substream_seed(tm.seed, "init"));
      FineTuneResult r = fine_tune(init, corpus, {}, tm.steps, tm.lr);
      save_model(tm.out, r.model, vocab_fingerprint(*vocab));
      if (!tm.trace.empty()) save_trace_csv(tm.trace, r.trace);
      json j{{"file", tm.out},
             {"params", r.model.shape().param_count()},
             {"final_loss", r.trace.empty() ? 0.0 : r.trace.back().loss}};
      if (!tm.valid.empty())
        j["valid_ppl"] = perplexity(r.model, load_encoded(tm.valid, bpe, *vocab, ""));
      emit(j);
    });
  }

  // fine-tune -----------------------------------------------------------------
  struct {
    std::string model, train, vocab, bpe, out, trace, mode = "none";
    std::string fisher_corpus, valid_old, valid_new;
    double lambda = 0.0, lr = 2e-4;
    std::size_t steps = 120, fisher_samples = 100000;
    std::uint64_t seed = 1;
  } ft;
  {
    auto* cmd = app.add_subcommand("fine-tune", "Continue training with a parameter penalty");
    cmd->add_option("--model", ft.model, "Starting checkpoint; also the penalty anchor")
        ->required();
    cmd->add_option("--train", ft.train, "New-domain parallel TSV")->required();
    cmd->add_option("--vocab", ft.vocab, "Shared vocabulary file")->required();
    cmd->add_option("--bpe", ft.bpe, "Subword merge file");
    cmd->add_option("--mode", ft.mode, "none | l2 | ewc");
    cmd->add_option("--penalty-weight", ft.lambda, "Penalty strength");
    cmd->add_option("--fisher-corpus", ft.fisher_corpus,
                    "Old-domain TSV for the Fisher diagonal (ewc mode)");
    cmd->add_option("--fisher-samples", ft.fisher_samples, "Fisher sample budget");
    cmd->add_option("--seed", ft.seed, "Master seed");
    cmd->add_option("--steps", ft.steps, "Gradient steps");
    cmd->add_option("--lr", ft.lr, "Learning rate");
    cmd->add_option("--out", ft.out, "Output checkpoint")->required();
    cmd->add_option("--trace", ft.trace, "Optional loss trace CSV");
    cmd->add_option("--valid-old", ft.valid_old, "Old-domain TSV for a perplexity report");
    cmd->add_option("--valid-new", ft.valid_new, "New-domain TSV for a perplexity report");
    cmd->callback([&] {
      auto vocab = std::make_shared<Vocabulary>(load_vocab(ft.vocab));
      auto bpe = maybe_bpe(ft.bpe);
      std::uint64_t fp = vocab_fingerprint(*vocab);
      ToyNeuralModel start = load_model(ft.model, &fp);
      ParallelCorpus corpus = load_encoded(ft.train, bpe, *vocab, "");

      RegularizerConfig rc;
      if (ft.mode == "none") rc.mode = RegularizerMode::kNone;
      else if (ft.mode == "l2") rc.mode = RegularizerMode::kL2;
      else if (ft.mode == "ewc") rc.mode = RegularizerMode::kEwc;
      else throw DataError("fine-tune: --mode must be none, l2, or ewc");
      rc.lambda = ft.lambda;
      if (rc.mode != RegularizerMode::kNone) rc.anchor = start.params();
      json j;
      if (rc.mode == RegularizerMode::kEwc) {
        if (ft.fisher_corpus.empty())
          throw DataError("fine-tune: ewc mode needs --fisher-corpus");
        ParallelCorpus old_corpus = load_encoded(ft.fisher_corpus, bpe, *vocab, "");
        FisherEstimate fisher = estimate_fisher_diagonal(
            start, old_corpus, ft.fisher_samples, substream_seed(ft.seed, "fisher"));
        rc.fisher = fisher.values;
        j["fisher_samples_used"] = fisher.samples_used;
      }

      FineTuneResult r = fine_tune(start, corpus, rc, ft.steps, ft.lr);
      save_model(ft.out, r.model, fp);
      if (!ft.trace.empty()) save_trace_csv(ft.trace, r.trace);
      j["file"] = ft.out;
      j["final_loss"] = r.trace.empty() ? 0.0 : r.trace.back().loss;
      if (!ft.valid_old.empty())
        j["old_ppl"] = perplexity(r.model, load_encoded(ft.valid_old, bpe, *vocab, ""));
      if (!ft.valid_new.empty())
        j["new_ppl"] = perplexity(r.model, load_encoded(ft.valid_new, bpe, *vocab, ""));
      emit(j);
    });
  }

  // estimate-lambda -----------------------------------------------------------
  struct {
    std::vector<std::string> lms, valids;
    std::string vocab, bpe, out, mode = "length_normalized";
  } el;
  {
    auto* cmd = app.add_subcommand("estimate-lambda",
                                   "Estimate interpolation weights from LM validation fit");
    cmd->add_option("--lm", el.lms, "Source LM per model, repeatable")->required();
    cmd->add_option("--valid", el.valids, "Validation TSV per task, repeatable")->required();
    cmd->add_option("--vocab", el.vocab, "Shared vocabulary file")->required();
    cmd->add_option("--bpe", el.bpe, "Subword merge file");
    cmd->add_option("--mode", el.mode, "length_normalized | literal");
    cmd->add_option("--out", el.out, "Output TSV")->required();
    cmd->callback([&] {
      auto vocab = std::make_shared<Vocabulary>(load_vocab(el.vocab));
      auto bpe = maybe_bpe(el.bpe);
      std::vector<NgramLm> lms;
      std::vector<const NgramLm*> ptrs;
      for (const auto& p : el.lms) lms.push_back(load_ngram(p, vocab));
      for (const auto& lm : lms) ptrs.push_back(&lm);
      std::vector<std::vector<Sentence>> valid_sources;
      for (const auto& p : el.valids) {
        ParallelCorpus corpus = load_encoded(p, bpe, *vocab, "");
        std::vector<Sentence> sources;
        for (auto& [src, tgt] : corpus.pairs) sources.push_back(std::move(src));
        valid_sources.push_back(std::move(sources));
      }
      LambdaEstimation mode;
      if (el.mode == "length_normalized") mode = LambdaEstimation::kLengthNormalized;
      else if (el.mode == "literal") mode = LambdaEstimation::kLiteral;
      else throw DataError("estimate-lambda: --mode must be length_normalized or literal");
      LambdaMatrix lambda = estimate_lambda(ptrs, valid_sources, mode);
      std::vector<std::string> model_names, task_names;
      for (const auto& p : el.lms) model_names.push_back(stem_of(p));
      for (const auto& p : el.valids) task_names.push_back(stem_of(p));
      save_lambda_tsv(el.out, lambda, model_names, task_names);
      json rows = json::array();
      for (std::size_t k = 0; k < lambda.models(); ++k) {
        json row = json::array();
        for (std::size_t t = 0; t < lambda.tasks(); ++t) row.push_back(lambda.at(k, t));
        rows.push_back(row);
      }
      emit(json{{"file", el.out}, {"lambda", rows}});
    });
  }

  // decode ----------------------------------------------------------------
  struct {
    SharedModelArgs shared;
    std::string input, out;
    std::size_t beam = 4, max_len = 24, threads = 1;
  } dc;
  {
    auto* cmd = app.add_subcommand("decode", "Translate a file of source sentences");
    dc.shared.attach(cmd);
    cmd->add_option("--input", dc.input, "Source sentences, one per line")->required();
    cmd->add_option("--out", dc.out, "Hypothesis output file")->required();
    cmd->add_option("--beam", dc.beam, "Beam size");
    cmd->add_option("--max-len", dc.max_len, "Maximum emitted tokens per sentence");
    cmd->add_option("--threads", dc.threads, "Worker threads");
    cmd->callback([&] {
      auto loaded = dc.shared.load();
      std::vector<Sentence> sources = encode_mono(dc.input, loaded.bpe, *loaded.vocab);
      DecodeOptions opts{dc.beam, dc.max_len, dc.threads};
      std::vector<DecodeResult> results = decode_corpus(loaded.spec, sources, opts);
      std::ofstream out(dc.out);
      if (!out) throw DataError("cannot write " + dc.out);
      double total_score = 0.0;
      std::size_t unfinished = 0;
      for (const auto& r : results) {
        Words words = bpe_restore(loaded.vocab->decode(r.translation));
        for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
        out << '\n';
        total_score += r.score;
        if (!r.finished) ++unfinished;
      }
      emit(json{{"file", dc.out},
                {"sentences", results.size()},
                {"mean_score", results.empty() ? 0.0 : total_score / results.size()},
                {"unfinished", unfinished}});
    });
  }

  // evaluate ----------------------------------------------------------------
  struct {
    std::string hyp, ref, out;
  } ev;
  {
    auto* cmd = app.add_subcommand("evaluate", "Corpus BLEU of hypotheses against references");
    cmd->add_option("--hyp", ev.hyp, "Hypotheses, one per line")->required();
    cmd->add_option("--ref", ev.ref, "References, one per line")->required();
    cmd->add_option("--out", ev.out, "Optional JSON report file");
    cmd->callback([&] {
      BleuReport report = corpus_bleu_words(load_mono(ev.hyp), load_mono(ev.ref));
      std::string text = report.to_json();
      if (!ev.out.empty()) {
        std::ofstream out(ev.out);
        if (!out) throw DataError("cannot write " + ev.out);
        out << text << '\n';
      }
      std::cout << text << "\n";
    });
  }

  // trajectory ----------------------------------------------------------------
  struct {
    SharedModelArgs shared;
    std::string source, force_target, out;
    std::size_t beam = 4, max_len = 24;
  } tj;
  {
    auto* cmd = app.add_subcommand("trajectory",
                                   "Per-step ensemble weights and task posterior for one sentence");
    tj.shared.attach(cmd);
    cmd->add_option("--source", tj.source, "Source sentence text")->required();
    cmd->add_option("--force-target", tj.force_target,
                    "Trace this target instead of decoding one");
    cmd->add_option("--beam", tj.beam, "Beam size");
    cmd->add_option("--max-len", tj.max_len, "Maximum emitted tokens");
    cmd->add_option("--out", tj.out, "Output TSV")->required();
    cmd->callback([&] {
      auto loaded = tj.shared.load();
      Sentence source = encode_line(tj.source, loaded.bpe, *loaded.vocab);
      std::vector<std::string> task_names;
      for (std::size_t t = 0; t < loaded.spec.task_count(); ++t)
        task_names.push_back("task" + std::to_string(t + 1));

      TrajectoryRecord traj;
      json j;
      if (!tj.force_target.empty()) {
        Sentence target = encode_line(tj.force_target, loaded.bpe, *loaded.vocab);
        traj = forced_trajectory(loaded.spec, source, target.ids);
        j["forced"] = true;
      } else {
        DecodeResult result = beam_decode(loaded.spec, source, tj.beam, tj.max_len);
        traj = result.trajectory;
        Words words = bpe_restore(loaded.vocab->decode(result.translation));
        std::string text;
        for (std::size_t i = 0; i < words.size(); ++i) text += (i ? " " : "") + words[i];
        j["translation"] = text;
        j["score"] = result.score;
        j["finished"] = result.finished;
      }
      save_trajectory_tsv(tj.out, traj, *loaded.vocab, task_names);
      j["file"] = tj.out;
      j["steps"] = traj.rows.size();
      emit(j);
    });
  }

  // run-experiment ------------------------------------------------------------
  ExperimentConfig ex;
  {
    auto* cmd = app.add_subcommand("run-experiment",
                                   "Full pipeline on synthetic domains with one seed");
    cmd->add_option("--seed", ex.seed, "Master seed")->required();
    cmd->add_option("--out-dir", ex.out_dir, "Output directory")->required();
    cmd->add_option("--domains", ex.synth.domains, "Number of domains");
    cmd->add_option("--core-vocab", ex.synth.core_vocab, "Shared core vocabulary size");
    cmd->add_option("--excl-vocab", ex.synth.excl_vocab, "Per-domain exclusive vocabulary size");
    cmd->add_option("--overlap", ex.synth.overlap, "Fraction of core-vocabulary sentences");
    cmd->add_option("--switch-frac", ex.synth.switch_frac,
                    "Of the remainder, fraction opening with a core prefix");
    cmd->add_option("--train-pairs", ex.synth.train_pairs, "Training pairs per domain");
    cmd->add_option("--valid-pairs", ex.synth.valid_pairs, "Validation pairs per domain");
    cmd->add_option("--test-pairs", ex.synth.test_pairs, "Test pairs per domain");
    cmd->add_option("--min-len", ex.synth.min_len, "Minimum sentence length");
    cmd->add_option("--max-len-src", ex.synth.max_len, "Maximum sentence length");
    cmd->add_option("--merges", ex.bpe_merges, "Subword merge budget");
    cmd->add_option("--order", ex.lm_order, "Source LM order");
    cmd->add_option("--embed-dim", ex.embed_dim, "Embedding width");
    cmd->add_option("--hidden-dim", ex.hidden_dim, "Hidden layer width");
    cmd->add_option("--base-steps", ex.base_steps, "Base training steps");
    cmd->add_option("--adapt-steps", ex.adapt_steps, "Fine-tuning steps");
    cmd->add_option("--lr", ex.learning_rate, "Learning rate");
    cmd->add_option("--fisher-samples", ex.fisher_samples, "Fisher sample budget");
    cmd->add_option("--penalty-grid", ex.lambda_grid, "Penalty strengths to sweep");
    cmd->add_option("--ppl-match-slack", ex.ppl_match_slack,
                    "New-domain perplexity slack for grid selection");
    cmd->add_option("--beam", ex.beam_size, "Beam size");
    cmd->add_option("--max-len", ex.max_len, "Maximum emitted tokens per sentence");
    cmd->add_option("--threads", ex.threads, "Decode worker threads");
    cmd->add_option("--probes", ex.probe_count, "Trajectory probe count");
    cmd->add_option("--probe-neutral", ex.probe_neutral_words, "Neutral words per probe");
    cmd->add_option("--probe-exclusive", ex.probe_exclusive_words, "Exclusive words per probe");
    cmd->callback([&, cmd] {
      // record the resolved configuration so the run can be replayed with
      // `adens --config <out-dir>/config.ini run-experiment`
      fs::create_directories(ex.out_dir);
      std::ofstream record(fs::path(ex.out_dir) / "config.ini");
      record << "[run-experiment]\n" << cmd->config_to_str(true, true);
      record.close();
      json summary = run_experiment(ex, std::cerr);
      emit(summary);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
