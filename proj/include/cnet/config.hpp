#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cnet/corpus.hpp"
#include "cnet/model.hpp"

namespace cnet {

enum class TaxonomySource { kPredicted, kGold };

struct DatasetConfig {
  std::string name;
  std::string entity_type;  // defaults to the suffix found in the train file
  std::filesystem::path train;
  std::filesystem::path dev;   // empty: split the tail of train
  std::filesystem::path test;
  std::size_t dev_size = 0;
  std::filesystem::path test_other;  // other-type gold on the test sentences
};

struct RunConfig {
  std::vector<DatasetConfig> datasets;
  std::uint64_t seed = 1;
  std::size_t batch_size = 10;
  double dropout_clwe = 0.5;
  double dropout_bilstm = 0.3;
  ModelDims dims;
  double learning_rate = 0.01;
  double lr_decay = 0.95;
  double adagrad_epsilon = 1e-8;
  std::size_t max_epochs = 100;
  std::size_t epoch_patience = 10;
  std::size_t max_phases = 10;
  std::size_t phase_patience = 3;
  bool freeze_embeddings = false;
  bool constrained_viterbi = false;
  bool token_loss_in_phases = true;
  std::filesystem::path embeddings;
  std::size_t max_sentence_length = 512;
  TagScheme tag_scheme = TagScheme::kBioes;
  bool lenient_bio = false;
  TaxonomySource taxonomy_source = TaxonomySource::kPredicted;
  std::size_t threads = 0;  // 0: OpenMP default

  void validate() const;
  std::size_t dataset_index(const std::string& name) const;
};

// "key = value" per line, '#' starts a comment. Relative paths resolve
// against base_dir. Unknown keys, malformed values and duplicates throw
// ParseError.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {},
                       const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical text that parse_config reads back to an equal config.
std::string serialize_config(const RunConfig& config);

// Hash of the settings that fix parameter shapes and model identity.
std::uint64_t config_fingerprint(const RunConfig& config);

}  // namespace cnet
