#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnet/autodiff.hpp"
#include "cnet/config.hpp"
#include "cnet/corpus.hpp"
#include "cnet/evaluation.hpp"
#include "cnet/model.hpp"
#include "cnet/optimizer.hpp"
#include "cnet/tensor.hpp"

namespace cnet {

struct Stm {
  std::string name;
  std::string entity_type;
  TensorMap params;
  OptimizerState optimizer;
  std::size_t epochs_trained = 0;
};

struct CollaboState {
  RunConfig config;
  Vocabulary vocab;
  std::vector<Stm> models;
  std::size_t phase = 0;
  // alpha[d] holds "alpha/<collaborator name>" scalars for target d.
  std::vector<TensorMap> alpha;
  std::vector<OptimizerState> alpha_optimizer;
  double best_macro_f1 = -1.0;
  std::size_t stale_phases = 0;

  const ModelDims& dims() const { return config.dims; }
};

std::string alpha_name(const std::string& collaborator);

// Indexed splits for one dataset, aligned with the state's model order.
struct IndexedDataset {
  std::string name;
  std::string entity_type;
  std::vector<IndexedSentence> train;
  std::vector<IndexedSentence> dev;
  std::vector<IndexedSentence> test;
  // Other-type gold spans per test sentence, when available.
  std::vector<std::vector<Span>> test_other;
};

std::vector<DatasetBundle> load_datasets(const RunConfig& config);

// Word rows come from the embeddings file when configured, otherwise from
// the training tokens of every dataset with random vectors. Characters come
// from all training tokens.
Vocabulary build_vocabulary(const RunConfig& config, std::span<const DatasetBundle> datasets);

IndexedDataset index_dataset(const Vocabulary& vocab, const DatasetBundle& bundle);

// Spans of a CoNLL file annotated with other entity types over the same
// sentences as test (tokens must match).
std::vector<std::vector<Span>> load_other_spans(const std::filesystem::path& path,
                                                std::span<const LabeledSentence> test,
                                                const RunConfig& config);

// Fresh models (one per configured dataset) and alpha = 1 for every ordered
// pair of distinct models.
CollaboState init_state(const RunConfig& config, Vocabulary vocab,
                        std::span<const DatasetBundle> datasets);

// Slot = elementwise max over k of alpha_k * signal_k. Ties go to the lowest k.
Tensor aggregate(std::span<const Tensor> signals, std::span<const double> alphas);
ad::NodeId aggregate_node(ad::Graph& g, std::span<const Tensor> signals,
                          std::span<const std::string> alpha_inputs);

// Everything needed to build one training graph for a target sentence.
struct SentenceTask {
  const IndexedSentence* sentence = nullptr;
  std::vector<Tensor> signals;            // empty: zero slot
  std::vector<std::string> alpha_inputs;  // one per signal
  std::uint64_t dropout_seed = 0;
};

struct TrainSettings {
  double dropout_clwe = 0.0;
  double dropout_bilstm = 0.0;
  bool token_loss = true;
};

ad::NodeId build_target_loss(ad::Graph& g, const ModelDims& dims, const SentenceTask& task,
                             const TrainSettings& settings, bool training = true);

struct SentenceGradient {
  double loss = 0.0;
  ad::Gradients grads;
};

SentenceGradient sentence_gradient(const TensorMap& params, const TensorMap& alpha,
                                   const ModelDims& dims, const SentenceTask& task,
                                   const TrainSettings& settings);

// Sum of the per-sentence gradients in task order. The parallel version
// computes sentences concurrently and reduces in the same order, so both
// return bit-identical results.
SentenceGradient batch_gradient_serial(const TensorMap& params, const TensorMap& alpha,
                                       const ModelDims& dims, std::span<const SentenceTask> tasks,
                                       const TrainSettings& settings);
SentenceGradient batch_gradient_parallel(const TensorMap& params, const TensorMap& alpha,
                                         const ModelDims& dims,
                                         std::span<const SentenceTask> tasks,
                                         const TrainSettings& settings);

// Per-epoch record for loss traces.
struct EpochRecord {
  std::size_t phase = 0;
  std::string dataset;
  std::size_t epoch = 0;  // the model's epoch counter before this epoch
  double loss = 0.0;      // mean per-sentence training loss
  double dev_f1 = 0.0;
};
using EpochObserver = std::function<void(const EpochRecord&)>;

struct MetricsRecord {
  std::size_t phase = 0;
  std::string dataset;
  std::string split;
  EvalReport report;
  double loss = 0.0;
};

// Line-delimited "phase,dataset,split,P,R,F1,loss".
class MetricsLog {
 public:
  void add(const MetricsRecord& record) { records_.push_back(record); }
  const std::vector<MetricsRecord>& records() const { return records_; }
  void write(std::ostream& out) const;
  static std::string format(const MetricsRecord& record);

 private:
  std::vector<MetricsRecord> records_;
};

// Tags for a model's own dataset. With phase > 0 every other model supplies
// a collaborator signal; with phase 0 the slot is zero.
std::vector<TagSequence> predict(const CollaboState& state, std::size_t model,
                                 std::span<const IndexedSentence> sentences);

struct EvalOptions {
  bool repair = true;
  // Other-type spans per sentence. Empty: the other models' predictions.
  std::span<const std::vector<Span>> other_type = {};
  bool taxonomy = true;
};

EvalReport evaluate(const CollaboState& state, std::size_t model,
                    std::span<const IndexedSentence> sentences, const EvalOptions& options = {});
EvalReport evaluate_predictions(std::span<const TagSequence> predicted,
                                std::span<const IndexedSentence> gold, bool repair,
                                std::span<const std::vector<Span>> other_type = {});
// Spans predicted on sentences by every model except model, merged per sentence.
std::vector<std::vector<Span>> other_model_spans(const CollaboState& state, std::size_t model,
                                                 std::span<const IndexedSentence> sentences);

struct Collaborator {
  const TensorMap* params = nullptr;
  std::string alpha_input;  // name of the target's alpha for this collaborator
};

// One training epoch of model on data. collaborators are frozen parameter
// sets that feed the slot (may be empty). Returns the mean loss.
double train_epoch(CollaboState& state, std::size_t model,
                   std::span<const IndexedSentence> data,
                   std::span<const Collaborator> collaborators, bool token_loss);

// Every model trained alone with early stopping on repaired dev F1; the best
// epoch's parameters are kept.
void run_preparation_phase(CollaboState& state, std::span<const IndexedDataset> data,
                           MetricsLog* log = nullptr, const EpochObserver& observer = {});

// Each target in configured order trains one epoch against frozen copies of
// the models as they were at the start of the phase. Increments the phase.
// Returns the dev reports after the phase, one per dataset.
std::vector<EvalReport> run_collab_phase(CollaboState& state,
                                         std::span<const IndexedDataset> data,
                                         MetricsLog* log = nullptr,
                                         const EpochObserver& observer = {});

double macro_dev_f1(const CollaboState& state, std::span<const IndexedDataset> data);

struct TrainOutcome {
  CollaboState best;
  std::size_t phases_run = 0;
};

// Collab phases until the phase counter reaches max_phases or phase_patience phases without a macro
// dev F1 improvement. on_phase is called with the state after every phase.
TrainOutcome run_collab_phases(CollaboState state, std::span<const IndexedDataset> data,
                               MetricsLog* log = nullptr, const EpochObserver& observer = {},
                               const std::function<void(const CollaboState&)>& on_phase = {});

// Loads the datasets, runs the preparation phase and the collab phases.
TrainOutcome train_collabonet(const RunConfig& config, MetricsLog* log = nullptr,
                              const EpochObserver& observer = {});

}  // namespace cnet
