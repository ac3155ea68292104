#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnet/autodiff.hpp"
#include "cnet/corpus.hpp"
#include "cnet/embedding.hpp"
#include "cnet/rng.hpp"
#include "cnet/tags.hpp"
#include "cnet/tensor.hpp"

// One single-task BiLSTM-CRF tagger (STM). Its input at every token is
//   [word vector, character-level embedding, collaborator slot]
// where the slot carries the aggregated collaborator signal and is all zero
// when the model runs alone.

namespace cnet {

enum class SignalMode { kBidirectional, kForwardOnly };

struct ModelDims {
  std::size_t d_word = 200;
  std::size_t d_char = 30;
  std::size_t d_clwe = 600;
  std::size_t d_lstm = 300;
  std::vector<std::size_t> windows = {3, 5, 7};
  SignalMode signal = SignalMode::kBidirectional;

  std::size_t signal_width() const {
    return signal == SignalMode::kBidirectional ? 2 * d_lstm : d_lstm;
  }
  std::size_t token_width() const { return d_word + d_clwe; }
  std::size_t input_width() const { return token_width() + signal_width(); }
  CharCnnShape char_shape() const { return {d_char, d_clwe, windows}; }
  void validate() const;
};

struct Vocabulary {
  WordEmbeddingTable words{1};
  CharVocabulary chars;
};

// Word rows and character ids of a sentence, resolved once.
struct IndexedSentence {
  std::vector<std::size_t> words;
  std::vector<std::vector<std::size_t>> chars;
  TagSequence tags;  // empty for unlabeled input

  std::size_t size() const { return words.size(); }
};

IndexedSentence index_tokens(const Vocabulary& vocab, std::span<const std::string> tokens);
IndexedSentence index_sentence(const Vocabulary& vocab, const LabeledSentence& sentence);
std::vector<IndexedSentence> index_sentences(const Vocabulary& vocab,
                                             std::span<const LabeledSentence> sentences);

// Fresh parameters: word_emb copied from the vocabulary table, the character
// CNN, both LSTM directions, emission layer (emit/W, emit/b) and a zero
// transition matrix (crf/A).
TensorMap init_stm_parameters(const ModelDims& dims, const Vocabulary& vocab, Rng& rng);

struct ForwardOptions {
  bool training = false;
  double dropout_clwe = 0.0;
  double dropout_bilstm = 0.0;
  std::uint64_t dropout_seed = 0;
  bool token_loss = true;
};

struct StmNodes {
  std::vector<ad::NodeId> forward;  // h_t^f
  std::vector<ad::NodeId> encoded;  // h_t^bi, before dropout
  std::vector<ad::NodeId> emission_rows;
  ad::NodeId emissions{};  // T x 5
  std::optional<ad::NodeId> token_loss;
  std::optional<ad::NodeId> crf_loss;
  std::optional<ad::NodeId> loss;
};

// Adds the STM computation for one sentence. slot, when given, is a
// T x signal_width node; otherwise the slot is zero. The loss nodes are
// built when with_loss and the sentence has tags.
StmNodes build_stm(ad::Graph& g, const ModelDims& dims, const IndexedSentence& sentence,
                   std::optional<ad::NodeId> slot, const ForwardOptions& options,
                   bool with_loss);

// h_t^bi (or h_t^f in forward-only mode) per token, zero slot, no dropout.
Tensor collaborator_signal(const TensorMap& params, const ModelDims& dims,
                           const IndexedSentence& sentence);

// Emissions in inference mode with an optional T x signal_width slot.
Tensor stm_emissions(const TensorMap& params, const ModelDims& dims,
                     const IndexedSentence& sentence, const Tensor* slot = nullptr);

}  // namespace cnet
