#include "cnet/collabonet.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "cnet/crf.hpp"
#include "cnet/rng.hpp"

namespace cnet {

std::string alpha_name(const std::string& collaborator) { return "alpha/" + collaborator; }

// --- data -------------------------------------------------------------------

namespace {

ConllOptions conll_options(const RunConfig& config, const std::string& dataset,
                           const std::filesystem::path& path) {
  ConllOptions o;
  o.scheme = config.tag_scheme;
  o.lenient = config.lenient_bio;
  o.max_sentence_length = config.max_sentence_length;
  o.dataset = dataset;
  o.source = path.string();
  return o;
}

void add_sentence_spans(std::vector<Span>& into, const TagSequence& tags) {
  for (const Span& s : bioes_to_spans(repair_bioes(tags))) into.push_back(s);
}

}  // namespace

std::vector<DatasetBundle> load_datasets(const RunConfig& config) {
  if (config.datasets.empty()) throw std::invalid_argument("config lists no datasets");
  std::vector<DatasetBundle> out;
  for (const DatasetConfig& d : config.datasets) {
    if (d.train.empty()) throw std::invalid_argument("dataset " + d.name + " has no train file");
    DatasetBundle b;
    b.name = d.name;
    Corpus train = read_conll_file(d.train, conll_options(config, d.name, d.train));
    b.entity_type = !d.entity_type.empty() ? d.entity_type
                    : !train.entity_type.empty() ? train.entity_type
                                                 : d.name;
    if (!d.dev.empty()) {
      b.train = std::move(train.sentences);
      b.dev = read_conll_file(d.dev, conll_options(config, d.name, d.dev)).sentences;
    } else if (d.dev_size > 0) {
      auto [tr, dv] = split_dev(std::move(train.sentences), d.dev_size);
      b.train = std::move(tr);
      b.dev = std::move(dv);
    } else {
      throw std::invalid_argument("dataset " + d.name + " needs a dev file or dev_size");
    }
    if (!d.test.empty()) {
      b.test = read_conll_file(d.test, conll_options(config, d.name, d.test)).sentences;
    }
    out.push_back(std::move(b));
  }
  return out;
}

Vocabulary build_vocabulary(const RunConfig& config, std::span<const DatasetBundle> datasets) {
  Vocabulary v;
  if (!config.embeddings.empty()) {
    std::ifstream in(config.embeddings);
    if (!in) throw std::runtime_error("cannot open embeddings " + config.embeddings.string());
    v.words = load_word_embeddings(in, nullptr, config.embeddings.string());
    if (v.words.dim() != config.dims.d_word) {
      throw std::invalid_argument("embeddings file has dimension " +
                                  std::to_string(v.words.dim()) + " but d_word is " +
                                  std::to_string(config.dims.d_word));
    }
  } else {
    v.words = WordEmbeddingTable(config.dims.d_word);
    Rng rng(derive_seed(config.seed, "init/words"));
    for (const auto& d : datasets) {
      for (const auto& s : d.train) {
        for (const auto& tok : s.tokens) {
          if (!v.words.contains(tok)) v.words.add_random(tok, rng);
        }
      }
    }
  }
  for (const auto& d : datasets) {
    for (const auto& s : d.train) {
      for (const auto& tok : s.tokens) v.chars.add_word(tok);
    }
  }
  return v;
}

IndexedDataset index_dataset(const Vocabulary& vocab, const DatasetBundle& bundle) {
  IndexedDataset d;
  d.name = bundle.name;
  d.entity_type = bundle.entity_type;
  d.train = index_sentences(vocab, bundle.train);
  d.dev = index_sentences(vocab, bundle.dev);
  d.test = index_sentences(vocab, bundle.test);
  return d;
}

std::vector<std::vector<Span>> load_other_spans(const std::filesystem::path& path,
                                                std::span<const LabeledSentence> test,
                                                const RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  // Mixed entity types are expected here, so the type suffix is dropped.
  const auto rows = parse_columns(in, path.string());
  if (rows.size() != test.size()) {
    throw std::invalid_argument(path.string() + " has " + std::to_string(rows.size()) +
                                " sentences, test has " + std::to_string(test.size()));
  }
  std::vector<std::vector<Span>> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != test[i].tokens.size()) {
      throw std::invalid_argument(path.string() + ": sentence " + std::to_string(i + 1) +
                                  " length differs from the test split");
    }
    TagSequence tags;
    for (const auto& cols : rows[i]) {
      if (cols.size() < 2 || cols.back().empty()) {
        throw std::invalid_argument(path.string() + ": expected token and tag columns");
      }
      tags.push_back(tag_from_letter(cols.back()[0]));
    }
    if (config.tag_scheme == TagScheme::kBio) tags = bio_to_bioes(tags, config.lenient_bio);
    add_sentence_spans(out[i], tags);
  }
  return out;
}

CollaboState init_state(const RunConfig& config, Vocabulary vocab,
                        std::span<const DatasetBundle> datasets) {
  config.validate();
  if (datasets.size() != config.datasets.size()) {
    throw std::invalid_argument("dataset count does not match the config");
  }
  CollaboState s;
  s.config = config;
  s.vocab = std::move(vocab);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    Stm m;
    m.name = datasets[i].name;
    m.entity_type = datasets[i].entity_type;
    Rng rng(derive_seed(config.seed, "init", {i}));
    m.params = init_stm_parameters(config.dims, s.vocab, rng);
    m.optimizer.epsilon = config.adagrad_epsilon;
    s.models.push_back(std::move(m));
  }
  for (std::size_t d = 0; d < s.models.size(); ++d) {
    TensorMap a;
    for (std::size_t k = 0; k < s.models.size(); ++k) {
      if (k != d) a[alpha_name(s.models[k].name)] = Tensor::scalar(1.0);
    }
    s.alpha.push_back(std::move(a));
    OptimizerState opt;
    opt.epsilon = config.adagrad_epsilon;
    s.alpha_optimizer.push_back(std::move(opt));
  }
  return s;
}

// --- aggregation --------------------------------------------------------------

Tensor aggregate(std::span<const Tensor> signals, std::span<const double> alphas) {
  if (signals.empty() || signals.size() != alphas.size()) {
    throw std::invalid_argument("aggregate: need one alpha per signal and at least one signal");
  }
  Tensor out = signals[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alphas[0] * signals[0][i];
  for (std::size_t k = 1; k < signals.size(); ++k) {
    if (signals[k].shape() != out.shape()) {
      throw std::invalid_argument("aggregate: signal " + std::to_string(k) + " has shape " +
                                  shape_string(signals[k].shape()) + ", expected " +
                                  shape_string(out.shape()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = alphas[k] * signals[k][i];
      if (v > out[i]) out[i] = v;
    }
  }
  return out;
}

ad::NodeId aggregate_node(ad::Graph& g, std::span<const Tensor> signals,
                          std::span<const std::string> alpha_inputs) {
  if (signals.empty() || signals.size() != alpha_inputs.size()) {
    throw std::invalid_argument("aggregate: need one alpha per signal and at least one signal");
  }
  std::vector<ad::NodeId> scaled;
  for (std::size_t k = 0; k < signals.size(); ++k) {
    scaled.push_back(g.mul(g.input(alpha_inputs[k]), g.constant(signals[k])));
  }
  return g.max_elementwise(scaled);
}

// --- gradients ----------------------------------------------------------------

ad::NodeId build_target_loss(ad::Graph& g, const ModelDims& dims, const SentenceTask& task,
                             const TrainSettings& settings, bool training) {
  std::optional<ad::NodeId> slot;
  if (!task.signals.empty()) slot = aggregate_node(g, task.signals, task.alpha_inputs);
  ForwardOptions opts;
  opts.training = training;
  opts.dropout_clwe = settings.dropout_clwe;
  opts.dropout_bilstm = settings.dropout_bilstm;
  opts.dropout_seed = task.dropout_seed;
  opts.token_loss = settings.token_loss;
  const StmNodes nodes = build_stm(g, dims, *task.sentence, slot, opts, true);
  if (!nodes.loss) throw std::invalid_argument("training sentence has no tags");
  return *nodes.loss;
}

SentenceGradient sentence_gradient(const TensorMap& params, const TensorMap& alpha,
                                   const ModelDims& dims, const SentenceTask& task,
                                   const TrainSettings& settings) {
  ad::Graph g;
  const ad::NodeId root = build_target_loss(g, dims, task, settings);
  ad::Bindings b(params);
  b.bind_all(alpha);
  SentenceGradient out;
  out.loss = g.evaluate(root, b).item();
  out.grads = g.backward(root);
  return out;
}

namespace {

void accumulate(SentenceGradient& into, SentenceGradient&& part) {
  into.loss += part.loss;
  for (auto& [name, grad] : part.grads) {
    auto [it, inserted] = into.grads.try_emplace(name, std::move(grad));
    if (inserted) continue;
    Tensor& acc = it->second;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grad[i];
  }
}

}  // namespace

SentenceGradient batch_gradient_serial(const TensorMap& params, const TensorMap& alpha,
                                       const ModelDims& dims, std::span<const SentenceTask> tasks,
                                       const TrainSettings& settings) {
  SentenceGradient total;
  for (const SentenceTask& task : tasks) {
    accumulate(total, sentence_gradient(params, alpha, dims, task, settings));
  }
  return total;
}

SentenceGradient batch_gradient_parallel(const TensorMap& params, const TensorMap& alpha,
                                         const ModelDims& dims,
                                         std::span<const SentenceTask> tasks,
                                         const TrainSettings& settings) {
  std::vector<SentenceGradient> parts(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      parts[i] = sentence_gradient(params, alpha, dims, tasks[i], settings);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  SentenceGradient total;
  for (auto& p : parts) accumulate(total, std::move(p));
  return total;
}

// --- metrics ------------------------------------------------------------------

std::string MetricsLog::format(const MetricsRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", r.report.precision, r.report.recall,
                r.report.f1, r.loss);
  return std::to_string(r.phase) + "," + r.dataset + "," + r.split + "," + buf;
}

void MetricsLog::write(std::ostream& out) const {
  for (const auto& r : records_) out << format(r) << '\n';
}

// --- inference ----------------------------------------------------------------

namespace {

template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
}

std::vector<Tensor> signals_for(std::span<const Collaborator> collaborators,
                                const ModelDims& dims, const IndexedSentence& sentence) {
  std::vector<Tensor> out;
  out.reserve(collaborators.size());
  for (const auto& c : collaborators) out.push_back(collaborator_signal(*c.params, dims, sentence));
  return out;
}

}  // namespace

std::vector<TagSequence> predict(const CollaboState& state, std::size_t model,
                                 std::span<const IndexedSentence> sentences) {
  const Stm& m = state.models.at(model);
  const ModelDims& dims = state.dims();
  std::vector<Collaborator> collabs;
  std::vector<double> alphas;
  if (state.phase > 0) {
    for (std::size_t k = 0; k < state.models.size(); ++k) {
      if (k == model) continue;
      const std::string name = alpha_name(state.models[k].name);
      collabs.push_back({&state.models[k].params, name});
      alphas.push_back(state.alpha[model].at(name).item());
    }
  }
  const Tensor& transitions = m.params.at(std::string(kTransitionName));
  std::vector<TagSequence> out(sentences.size());
  parallel_for(sentences.size(), [&](std::size_t i) {
    Tensor z;
    if (collabs.empty()) {
      z = stm_emissions(m.params, dims, sentences[i]);
    } else {
      const Tensor slot = aggregate(signals_for(collabs, dims, sentences[i]), alphas);
      z = stm_emissions(m.params, dims, sentences[i], &slot);
    }
    out[i] = viterbi(z, transitions, state.config.constrained_viterbi).path;
  });
  return out;
}

EvalReport evaluate_predictions(std::span<const TagSequence> predicted,
                                std::span<const IndexedSentence> gold, bool repair,
                                std::span<const std::vector<Span>> other_type) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("prediction count does not match gold sentence count");
  }
  Evaluator ev;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::span<const Span> other =
        i < other_type.size() ? std::span<const Span>(other_type[i]) : std::span<const Span>{};
    ev.add(predicted[i], gold[i].tags, repair, other);
  }
  return ev.report();
}

std::vector<std::vector<Span>> other_model_spans(const CollaboState& state, std::size_t model,
                                                 std::span<const IndexedSentence> sentences) {
  std::vector<std::vector<Span>> out(sentences.size());
  for (std::size_t k = 0; k < state.models.size(); ++k) {
    if (k == model) continue;
    const auto tags = predict(state, k, sentences);
    for (std::size_t i = 0; i < tags.size(); ++i) add_sentence_spans(out[i], tags[i]);
  }
  return out;
}

EvalReport evaluate(const CollaboState& state, std::size_t model,
                    std::span<const IndexedSentence> sentences, const EvalOptions& options) {
  const auto predicted = predict(state, model, sentences);
  if (!options.taxonomy) return evaluate_predictions(predicted, sentences, options.repair);
  if (!options.other_type.empty()) {
    return evaluate_predictions(predicted, sentences, options.repair, options.other_type);
  }
  const auto other = other_model_spans(state, model, sentences);
  return evaluate_predictions(predicted, sentences, options.repair, other);
}

// --- training -----------------------------------------------------------------

double train_epoch(CollaboState& state, std::size_t model,
                   std::span<const IndexedSentence> data,
                   std::span<const Collaborator> collaborators, bool token_loss) {
  if (data.empty()) {
    throw std::invalid_argument("training split of " + state.models.at(model).name + " is empty");
  }
  const RunConfig& cfg = state.config;
  Stm& m = state.models.at(model);
  TensorMap& alpha = state.alpha.at(model);
  const std::uint64_t epoch = m.epochs_trained;
  const double lr = lr_for_epoch(epoch, cfg.learning_rate, cfg.lr_decay);
  const TrainSettings settings{cfg.dropout_clwe, cfg.dropout_bilstm, token_loss};
  std::set<std::string> frozen;
  if (cfg.freeze_embeddings) frozen.insert(std::string(kWordEmbName));

  std::vector<std::size_t> lengths;
  for (const auto& s : data) lengths.push_back(s.size());
  const auto batches =
      make_batches(lengths, cfg.batch_size, derive_seed(cfg.seed, "shuffle", {model}) ^ epoch);

  double total = 0.0;
  for (const Batch& batch : batches) {
    std::vector<SentenceTask> tasks(batch.sentences.size());
    parallel_for(tasks.size(), [&](std::size_t j) {
      const std::size_t i = batch.sentences[j];
      SentenceTask& t = tasks[j];
      t.sentence = &data[i];
      t.dropout_seed = derive_seed(cfg.seed, "dropout", {model, epoch, i});
      if (!collaborators.empty()) {
        t.signals = signals_for(collaborators, cfg.dims, data[i]);
        for (const auto& c : collaborators) t.alpha_inputs.push_back(c.alpha_input);
      }
    });
    SentenceGradient g = batch_gradient_parallel(m.params, alpha, cfg.dims, tasks, settings);
    total += g.loss;
    adagrad_update(m.params, g.grads, m.optimizer, lr, frozen);
    adagrad_update(alpha, g.grads, state.alpha_optimizer.at(model), lr);
  }
  ++m.epochs_trained;
  return total / static_cast<double>(data.size());
}

namespace {

void check_alignment(const CollaboState& state, std::span<const IndexedDataset> data) {
  if (state.models.size() != data.size()) {
    throw std::invalid_argument("state has " + std::to_string(state.models.size()) +
                                " models but " + std::to_string(data.size()) +
                                " datasets were given");
  }
  for (const auto& d : data) {
    if (d.train.empty()) throw std::invalid_argument("training split of " + d.name + " is empty");
    if (d.dev.empty()) throw std::invalid_argument("dev split of " + d.name + " is empty");
  }
}

EvalOptions dev_options() {
  EvalOptions o;
  o.taxonomy = false;
  return o;
}

}  // namespace

void run_preparation_phase(CollaboState& state, std::span<const IndexedDataset> data,
                           MetricsLog* log, const EpochObserver& observer) {
  check_alignment(state, data);
  const RunConfig& cfg = state.config;
  std::vector<double> dev_f1(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    Stm& m = state.models[i];
    std::optional<TensorMap> best_params;
    std::optional<OptimizerState> best_optimizer;
    double best_f1 = -1.0;
    double best_loss = 0.0;
    std::size_t stale = 0;
    for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
      const std::size_t epoch = m.epochs_trained;
      const double loss = train_epoch(state, i, data[i].train, {}, true);
      const double f1 = evaluate(state, i, data[i].dev, dev_options()).f1;
      if (observer) observer({0, m.name, epoch, loss, f1});
      if (f1 > best_f1) {
        best_f1 = f1;
        best_loss = loss;
        best_params = m.params;
        best_optimizer = m.optimizer;
        stale = 0;
      } else if (++stale >= cfg.epoch_patience) {
        break;
      }
    }
    if (best_params) {
      m.params = std::move(*best_params);
      m.optimizer = std::move(*best_optimizer);
    }
    const EvalReport report = evaluate(state, i, data[i].dev, dev_options());
    dev_f1[i] = report.f1;
    if (log) log->add({0, m.name, "dev", report, best_loss});
  }
  double sum = 0.0;
  for (double f : dev_f1) sum += f;
  state.best_macro_f1 = sum / static_cast<double>(dev_f1.size());
  state.stale_phases = 0;
}

std::vector<EvalReport> run_collab_phase(CollaboState& state,
                                         std::span<const IndexedDataset> data, MetricsLog* log,
                                         const EpochObserver& observer) {
  check_alignment(state, data);
  std::vector<TensorMap> frozen;
  frozen.reserve(state.models.size());
  for (const auto& m : state.models) frozen.push_back(m.params);

  std::vector<double> losses(data.size());
  std::vector<std::size_t> epochs(data.size());
  for (std::size_t d = 0; d < data.size(); ++d) {
    std::vector<Collaborator> collabs;
    for (std::size_t k = 0; k < data.size(); ++k) {
      if (k != d) collabs.push_back({&frozen[k], alpha_name(state.models[k].name)});
    }
    epochs[d] = state.models[d].epochs_trained;
    losses[d] = train_epoch(state, d, data[d].train, collabs, state.config.token_loss_in_phases);
  }
  ++state.phase;

  std::vector<EvalReport> reports;
  for (std::size_t d = 0; d < data.size(); ++d) {
    reports.push_back(evaluate(state, d, data[d].dev, dev_options()));
    if (observer) observer({state.phase, state.models[d].name, epochs[d], losses[d], reports[d].f1});
    if (log) log->add({state.phase, state.models[d].name, "dev", reports[d], losses[d]});
  }
  return reports;
}

double macro_dev_f1(const CollaboState& state, std::span<const IndexedDataset> data) {
  double sum = 0.0;
  for (std::size_t d = 0; d < data.size(); ++d) {
    sum += evaluate(state, d, data[d].dev, dev_options()).f1;
  }
  return sum / static_cast<double>(data.size());
}

TrainOutcome run_collab_phases(CollaboState state, std::span<const IndexedDataset> data,
                               MetricsLog* log, const EpochObserver& observer,
                               const std::function<void(const CollaboState&)>& on_phase) {
  if (state.best_macro_f1 < 0.0) state.best_macro_f1 = macro_dev_f1(state, data);
  TrainOutcome out;
  out.best = state;
  while (state.phase < state.config.max_phases &&
         state.stale_phases < state.config.phase_patience) {
    const auto reports = run_collab_phase(state, data, log, observer);
    ++out.phases_run;
    double macro = 0.0;
    for (const auto& r : reports) macro += r.f1;
    macro /= static_cast<double>(reports.size());
    if (macro > state.best_macro_f1) {
      state.best_macro_f1 = macro;
      state.stale_phases = 0;
      out.best = state;
    } else {
      ++state.stale_phases;
      out.best.stale_phases = state.stale_phases;
    }
    if (on_phase) on_phase(state);
  }
  return out;
}

TrainOutcome train_collabonet(const RunConfig& config, MetricsLog* log,
                              const EpochObserver& observer) {
  const auto bundles = load_datasets(config);
  Vocabulary vocab = build_vocabulary(config, bundles);
  std::vector<IndexedDataset> data;
  for (const auto& b : bundles) data.push_back(index_dataset(vocab, b));
  CollaboState state = init_state(config, std::move(vocab), bundles);
  run_preparation_phase(state, data, log, observer);
  return run_collab_phases(std::move(state), data, log, observer);
}

}  // namespace cnet
