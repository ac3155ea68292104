#include "cnet/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "cnet/checkpoint.hpp"
#include "cnet/collabonet.hpp"
#include "cnet/config.hpp"
#include "cnet/corpus.hpp"
#include "cnet/evaluation.hpp"

namespace cnet {
namespace {

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
  if (path != "-" && !std::filesystem::exists(path)) {
    throw MissingFile(what + " not found: " + path);
  }
}

TagScheme scheme_from(const std::string& s) {
  if (s == "bio") return TagScheme::kBio;
  if (s == "bioes") return TagScheme::kBioes;
  throw std::invalid_argument("unknown tag scheme '" + s + "'");
}

void apply_threads(const RunConfig& c) {
  if (c.threads > 0) omp_set_num_threads(static_cast<int>(c.threads));
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
      if (!*file_) throw std::runtime_error("cannot write " + path);
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

std::vector<IndexedDataset> index_all(const Vocabulary& vocab,
                                      const std::vector<DatasetBundle>& bundles,
                                      const RunConfig& config) {
  std::vector<IndexedDataset> data;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    data.push_back(index_dataset(vocab, bundles[i]));
    const auto& other = config.datasets[i].test_other;
    if (!other.empty()) data.back().test_other = load_other_spans(other, bundles[i].test, config);
  }
  return data;
}

EpochObserver trace_writer(std::ostream* out) {
  if (!out) return {};
  return [out](const EpochRecord& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g,%.6f", r.loss, r.dev_f1);
    *out << r.phase << ',' << r.dataset << ',' << r.epoch << ',' << buf << '\n';
  };
}

// --- subcommands --------------------------------------------------------------

struct PrepArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "prep.ckpt";
  std::string metrics = "metrics.log";
  std::string trace;
};

int run_prep(const PrepArgs& a, std::ostream& out) {
  require_file(a.config, "config");
  RunConfig config = load_config(a.config);
  if (a.seed) config.seed = *a.seed;
  apply_threads(config);
  const auto bundles = load_datasets(config);
  Vocabulary vocab = build_vocabulary(config, bundles);
  const auto data = index_all(vocab, bundles, config);
  CollaboState state = init_state(config, std::move(vocab), bundles);

  Output trace(a.trace, out);
  MetricsLog log;
  run_preparation_phase(state, data, &log, a.trace.empty() ? EpochObserver{} : trace_writer(&*trace));
  save_checkpoint(state, a.out);
  Output metrics(a.metrics, out);
  log.write(*metrics);
  out << "prepared " << state.models.size() << " model(s); macro dev F1 "
      << state.best_macro_f1 << "; checkpoint " << a.out << '\n';
  return 0;
}

struct CollabArgs {
  std::string checkpoint;
  std::string config;
  std::optional<std::size_t> max_phases;
  std::string out = "collab.ckpt";
  std::string last;
  std::string metrics = "metrics.log";
  std::string trace;
};

int run_collab(const CollabArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  CollaboState state = load_checkpoint(a.checkpoint);
  if (!a.config.empty()) {
    require_file(a.config, "config");
    RunConfig config = load_config(a.config);
    if (config_fingerprint(config) != config_fingerprint(state.config)) {
      throw std::invalid_argument("config " + a.config +
                                  " describes different models than the checkpoint");
    }
    state.config = config;
  }
  if (a.max_phases) state.config.max_phases = *a.max_phases;
  apply_threads(state.config);
  const auto bundles = load_datasets(state.config);
  const auto data = index_all(state.vocab, bundles, state.config);

  Output trace(a.trace, out);
  MetricsLog log;
  auto on_phase = [&](const CollaboState& s) {
    if (!a.last.empty()) save_checkpoint(s, a.last);
  };
  TrainOutcome result = run_collab_phases(std::move(state), data, &log,
                                          a.trace.empty() ? EpochObserver{} : trace_writer(&*trace),
                                          on_phase);
  save_checkpoint(result.best, a.out);
  Output metrics(a.metrics, out);
  log.write(*metrics);
  out << "ran " << result.phases_run << " phase(s); best phase " << result.best.phase
      << ", macro dev F1 " << result.best.best_macro_f1 << "; checkpoint " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string input;
  std::string summary;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  if (!a.input.empty()) require_file(a.input, "input");
  if (a.split != "train" && a.split != "dev" && a.split != "test") {
    throw std::invalid_argument("split must be train, dev or test");
  }
  const CollaboState state = load_checkpoint(a.checkpoint);
  apply_threads(state.config);
  const RunConfig& config = state.config;

  std::vector<std::size_t> targets;
  if (!a.dataset.empty()) {
    targets.push_back(config.dataset_index(a.dataset));
  } else {
    for (std::size_t i = 0; i < state.models.size(); ++i) targets.push_back(i);
  }
  if (!a.input.empty() && targets.size() != 1) {
    throw std::invalid_argument("--input needs --dataset");
  }

  Output summary(a.summary, out);
  std::vector<DatasetBundle> bundles;
  std::vector<IndexedDataset> data;
  if (a.input.empty()) {
    bundles = load_datasets(config);
    data = index_all(state.vocab, bundles, config);
  }
  for (std::size_t d : targets) {
    std::vector<IndexedSentence> sentences;
    std::vector<std::vector<Span>> gold_other;
    if (!a.input.empty()) {
      ConllOptions o;
      o.scheme = config.tag_scheme;
      o.lenient = config.lenient_bio;
      o.max_sentence_length = config.max_sentence_length;
      o.source = a.input;
      sentences = index_sentences(state.vocab, read_conll_file(a.input, o).sentences);
    } else {
      const IndexedDataset& ds = data[d];
      sentences = a.split == "train" ? ds.train : a.split == "dev" ? ds.dev : ds.test;
      if (a.split == "test" && config.taxonomy_source == TaxonomySource::kGold) {
        gold_other = ds.test_other;
      }
    }
    if (sentences.empty()) throw std::invalid_argument("no sentences to evaluate");

    const auto predicted = predict(state, d, sentences);
    const auto other =
        gold_other.empty() ? other_model_spans(state, d, sentences) : std::move(gold_other);
    const std::string name = state.models[d].name;
    const std::string split = a.input.empty() ? a.split : "input";
    for (bool repair : {false, true}) {
      const EvalReport r = evaluate_predictions(predicted, sentences, repair, other);
      const std::string mode = repair ? "repaired" : "raw";
      out << name << ' ' << split << ' ' << mode << ": " << format_report(r) << '\n';
      if (!a.summary.empty()) write_summary(*summary, r, name + "." + split + "." + mode + ".");
    }
  }
  out << "taxonomy: deterministic approximation of a manual error analysis; other-type spans from "
      << (config.taxonomy_source == TaxonomySource::kGold && a.split == "test" && a.input.empty()
              ? "gold annotations"
              : "the other models' predictions")
      << '\n';
  return 0;
}

struct PredictArgs {
  std::string checkpoint;
  std::string dataset;
  std::string input;
  std::string output;
};

int run_predict(const PredictArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.input, "input");
  const CollaboState state = load_checkpoint(a.checkpoint);
  apply_threads(state.config);
  const std::size_t d = a.dataset.empty() && state.models.size() == 1
                            ? 0
                            : state.config.dataset_index(a.dataset);

  std::ifstream in(a.input);
  if (!in) throw MissingFile("cannot open " + a.input);
  const auto rows = parse_columns(in, a.input);
  std::vector<IndexedSentence> sentences;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() > state.config.max_sentence_length) {
      throw ParseError(a.input, 0, "sentence " + std::to_string(i + 1) + " exceeds " +
                                       std::to_string(state.config.max_sentence_length) +
                                       " tokens");
    }
    std::vector<std::string> tokens;
    for (const auto& cols : rows[i]) tokens.push_back(cols.at(0));
    sentences.push_back(index_tokens(state.vocab, tokens));
  }
  const auto tags = predict(state, d, sentences);

  Output dst(a.output, out);
  const std::string& type = state.models[d].entity_type;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = 0; t < rows[i].size(); ++t) {
      for (const auto& col : rows[i][t]) *dst << col << '\t';
      *dst << tag_letter(tags[i][t]);
      if (tags[i][t] != Tag::O && !type.empty()) *dst << '-' << type;
      *dst << '\n';
    }
    *dst << '\n';
  }
  return 0;
}

struct ScoreArgs {
  std::string pred;
  std::string gold;
  std::string other;
  std::string scheme = "bioes";
  std::string summary;
  bool no_repair = false;
};

std::vector<TagSequence> read_tag_column(const std::string& path, TagScheme scheme,
                                         bool lenient, std::vector<std::size_t>* lengths) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open " + path);
  std::vector<TagSequence> out;
  for (const auto& sentence : parse_columns(in, path)) {
    TagSequence tags;
    for (const auto& cols : sentence) {
      if (cols.size() < 2 || cols.back().empty()) {
        throw std::invalid_argument(path + ": expected token and tag columns");
      }
      tags.push_back(tag_from_letter(cols.back()[0]));
    }
    if (scheme == TagScheme::kBio) tags = bio_to_bioes(tags, lenient);
    if (lengths) lengths->push_back(tags.size());
    out.push_back(std::move(tags));
  }
  return out;
}

int run_score(const ScoreArgs& a, std::ostream& out) {
  require_file(a.pred, "prediction file");
  require_file(a.gold, "gold file");
  if (!a.other.empty()) require_file(a.other, "other-type file");
  const TagScheme scheme = scheme_from(a.scheme);
  const auto pred = read_tag_column(a.pred, scheme, true, nullptr);
  const auto gold = read_tag_column(a.gold, scheme, false, nullptr);
  std::vector<TagSequence> other;
  if (!a.other.empty()) other = read_tag_column(a.other, scheme, true, nullptr);
  if (pred.size() != gold.size() || (!other.empty() && other.size() != gold.size())) {
    throw std::invalid_argument("files contain different numbers of sentences");
  }
  Evaluator ev;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i].size() != gold[i].size()) {
      throw std::invalid_argument("sentence " + std::to_string(i + 1) +
                                  " has different lengths in prediction and gold");
    }
    if (!is_valid_bioes(gold[i])) {
      throw std::invalid_argument("gold sentence " + std::to_string(i + 1) +
                                  " is not valid BIOES");
    }
    std::vector<Span> other_spans;
    if (!other.empty()) other_spans = bioes_to_spans(repair_bioes(other[i]));
    ev.add(pred[i], gold[i], !a.no_repair, other_spans);
  }
  const EvalReport r = ev.report();
  char buf[96];
  std::snprintf(buf, sizeof buf, "P=%.4f R=%.4f F1=%.4f", r.precision, r.recall, r.f1);
  out << buf << '\n' << format_report(r) << '\n';
  if (!a.summary.empty()) {
    Output summary(a.summary, out);
    write_summary(*summary, r);
  }
  return 0;
}

struct ConvertArgs {
  std::string from;
  std::string to;
  std::string input = "-";
  std::string output;
  bool lenient = false;
};

int run_convert(const ConvertArgs& a, std::ostream& out) {
  require_file(a.input, "input");
  ConllOptions o;
  o.scheme = scheme_from(a.from);
  o.lenient = a.lenient;
  o.source = a.input == "-" ? "<stdin>" : a.input;
  const TagScheme to = scheme_from(a.to);
  Corpus corpus;
  if (a.input == "-") {
    corpus = parse_conll(std::cin, o);
  } else {
    corpus = read_conll_file(a.input, o);
  }
  Output dst(a.output, out);
  write_conll(*dst, corpus.sentences, corpus.entity_type, to);
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CollaboNet multi-model biomedical NER trainer", "cnet"};
  app.require_subcommand(1);

  PrepArgs prep;
  auto* c_prep = app.add_subcommand("prep", "train every single-task model alone");
  c_prep->add_option("--config", prep.config, "config file")->required();
  c_prep->add_option("--seed", prep.seed, "override the config seed");
  c_prep->add_option("--out", prep.out, "checkpoint to write")->capture_default_str();
  c_prep->add_option("--metrics", prep.metrics, "metrics log to write")->capture_default_str();
  c_prep->add_option("--trace", prep.trace, "per-epoch loss trace to write");

  CollabArgs collab;
  auto* c_collab = app.add_subcommand("collab", "run collaboration phases from a checkpoint");
  c_collab->add_option("--checkpoint", collab.checkpoint, "checkpoint to resume")->required();
  c_collab->add_option("--config", collab.config, "replacement config with the same models");
  c_collab->add_option("--max-phases", collab.max_phases, "override max_phases");
  c_collab->add_option("--out", collab.out, "best checkpoint to write")->capture_default_str();
  c_collab->add_option("--last", collab.last, "checkpoint rewritten after every phase");
  c_collab->add_option("--metrics", collab.metrics, "metrics log to write")->capture_default_str();
  c_collab->add_option("--trace", collab.trace, "per-epoch loss trace to write");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint on a split, raw and repaired");
  c_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint")->required();
  c_eval->add_option("--dataset", eval.dataset, "dataset name (default: all)");
  c_eval->add_option("--split", eval.split, "train, dev or test")->capture_default_str();
  c_eval->add_option("--input", eval.input, "labeled CoNLL file to score instead of a split");
  c_eval->add_option("--summary", eval.summary, "metric=value summary file");

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "tag a CoNLL token file");
  c_pred->add_option("--checkpoint", pred.checkpoint, "checkpoint")->required();
  c_pred->add_option("--dataset", pred.dataset, "model to use");
  c_pred->add_option("--input", pred.input, "token file, first column is the token")->required();
  c_pred->add_option("--output", pred.output, "output file (default: stdout)");

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "compare predicted and gold tag files");
  c_score->add_option("--pred", score.pred, "predicted tags")->required();
  c_score->add_option("--gold", score.gold, "gold tags")->required();
  c_score->add_option("--other", score.other, "other-type annotations of the same sentences");
  c_score->add_option("--scheme", score.scheme, "bio or bioes")->capture_default_str();
  c_score->add_option("--summary", score.summary, "metric=value summary file");
  c_score->add_flag("--no-repair", score.no_repair, "score malformed predictions as decoded");

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert", "convert between BIO and BIOES");
  c_conv->add_option("--from", conv.from, "bio or bioes")->required();
  c_conv->add_option("--to", conv.to, "bio or bioes")->required();
  c_conv->add_option("--input", conv.input, "input file (default: stdin)");
  c_conv->add_option("--output", conv.output, "output file (default: stdout)");
  c_conv->add_flag("--lenient", conv.lenient, "accept I after O in BIO input");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (*c_prep) return run_prep(prep, out);
    if (*c_collab) return run_collab(collab, out);
    if (*c_eval) return run_eval(eval, out);
    if (*c_pred) return run_predict(pred, out);
    if (*c_score) return run_score(score, out);
    if (*c_conv) return run_convert(conv, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cnet
