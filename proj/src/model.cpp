#include "cnet/model.hpp"

#include <stdexcept>

#include "cnet/crf.hpp"
#include "cnet/encoder.hpp"
#include "cnet/optimizer.hpp"

namespace cnet {

void ModelDims::validate() const {
  if (!d_word || !d_char || !d_clwe || !d_lstm) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (windows.empty() || d_clwe % windows.size() != 0) {
    throw std::invalid_argument("d_clwe must be a positive multiple of the number of windows");
  }
  for (std::size_t k : windows) {
    if (k % 2 == 0) throw std::invalid_argument("char window sizes must be odd");
  }
}

IndexedSentence index_tokens(const Vocabulary& vocab, std::span<const std::string> tokens) {
  IndexedSentence s;
  s.words.reserve(tokens.size());
  s.chars.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    s.words.push_back(vocab.words.lookup(tok));
    s.chars.push_back(vocab.chars.encode(tok));
  }
  return s;
}

IndexedSentence index_sentence(const Vocabulary& vocab, const LabeledSentence& sentence) {
  IndexedSentence s = index_tokens(vocab, sentence.tokens);
  s.tags = sentence.tags;
  return s;
}

std::vector<IndexedSentence> index_sentences(const Vocabulary& vocab,
                                             std::span<const LabeledSentence> sentences) {
  std::vector<IndexedSentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(index_sentence(vocab, s));
  return out;
}

TensorMap init_stm_parameters(const ModelDims& dims, const Vocabulary& vocab, Rng& rng) {
  dims.validate();
  if (vocab.words.dim() != dims.d_word) {
    throw std::invalid_argument("word embeddings have dimension " +
                                std::to_string(vocab.words.dim()) + ", model expects " +
                                std::to_string(dims.d_word));
  }
  TensorMap params;
  params[std::string(kWordEmbName)] = vocab.words.matrix();
  init_char_cnn(params, dims.char_shape(), vocab.chars.size(), rng);
  init_bilstm(params, dims.input_width(), dims.d_lstm, rng);
  params[std::string(kEmitWeightName)] = xavier_uniform(kNumTags, 2 * dims.d_lstm, rng);
  params[std::string(kEmitBiasName)] = Tensor({kNumTags});
  params[std::string(kTransitionName)] = Tensor({kNumStates, kNumStates});
  return params;
}

StmNodes build_stm(ad::Graph& g, const ModelDims& dims, const IndexedSentence& sentence,
                   std::optional<ad::NodeId> slot, const ForwardOptions& options,
                   bool with_loss) {
  const std::size_t n = sentence.size();
  if (n == 0) throw std::invalid_argument("build_stm: empty sentence");
  const CharCnnShape shape = dims.char_shape();
  const bool drop = options.training;
  Rng rng(options.dropout_seed);

  std::optional<ad::NodeId> zero_slot;
  std::vector<ad::NodeId> inputs;
  inputs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::optional<Tensor> clwe_mask;
    if (drop && options.dropout_clwe > 0.0) {
      clwe_mask = dropout_mask({dims.d_clwe}, options.dropout_clwe, rng);
    }
    const ad::NodeId token = embed_token(g, sentence.words[t], sentence.chars[t], shape,
                                         clwe_mask ? &*clwe_mask : nullptr);
    ad::NodeId slot_t;
    if (slot) {
      slot_t = g.row(*slot, t);
    } else {
      if (!zero_slot) zero_slot = g.constant(Tensor({dims.signal_width()}));
      slot_t = *zero_slot;
    }
    const ad::NodeId parts[] = {token, slot_t};
    inputs.push_back(g.concat(parts));
  }

  const BiLstmOutput enc = bilstm_encode(g, inputs, dims.d_lstm);
  StmNodes out;
  out.forward = enc.forward;
  out.encoded = enc.combined;

  const ad::NodeId w = g.input(std::string(kEmitWeightName));
  const ad::NodeId b = g.input(std::string(kEmitBiasName));
  for (std::size_t t = 0; t < n; ++t) {
    ad::NodeId h = enc.combined[t];
    if (drop && options.dropout_bilstm > 0.0) {
      h = g.dropout(h, dropout_mask({2 * dims.d_lstm}, options.dropout_bilstm, rng));
    }
    out.emission_rows.push_back(g.add(g.matmul(w, h), b));
  }
  out.emissions = g.stack(out.emission_rows);

  if (with_loss && !sentence.tags.empty()) {
    if (sentence.tags.size() != n) {
      throw std::invalid_argument("build_stm: tag count does not match token count");
    }
    out.crf_loss = crf_nll_node(g, out.emissions, g.input(std::string(kTransitionName)),
                                sentence.tags);
    if (options.token_loss) {
      out.token_loss = token_nll_node(g, out.emission_rows, sentence.tags);
      out.loss = g.add(*out.token_loss, *out.crf_loss);
    } else {
      out.loss = out.crf_loss;
    }
  }
  return out;
}

Tensor collaborator_signal(const TensorMap& params, const ModelDims& dims,
                           const IndexedSentence& sentence) {
  ad::Graph g;
  const StmNodes nodes = build_stm(g, dims, sentence, std::nullopt, {}, false);
  const auto& rows =
      dims.signal == SignalMode::kBidirectional ? nodes.encoded : nodes.forward;
  const ad::NodeId stacked = g.stack(rows);
  return g.evaluate(stacked, ad::Bindings(params));
}

Tensor stm_emissions(const TensorMap& params, const ModelDims& dims,
                     const IndexedSentence& sentence, const Tensor* slot) {
  ad::Graph g;
  std::optional<ad::NodeId> slot_node;
  if (slot) slot_node = g.constant(*slot);
  const StmNodes nodes = build_stm(g, dims, sentence, slot_node, {}, false);
  return g.evaluate(nodes.emissions, ad::Bindings(params));
}

}  // namespace cnet
