#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cnet/autodiff.hpp"
#include "cnet/rng.hpp"
#include "cnet/tensor.hpp"

namespace cnet {

// Word vocabulary plus initial vectors. Row 0 is UNK (zero vector).
class WordEmbeddingTable {
 public:
  static constexpr std::size_t kUnkRow = 0;

  explicit WordEmbeddingTable(std::size_t dim);

  // Adds or overwrites a word; returns its row. values.size() must be dim().
  std::size_t set(const std::string& word, std::span<const double> values);
  // Adds a word with a vector drawn uniform(-sqrt(3/dim), sqrt(3/dim)) if it
  // is not yet present.
  std::size_t add_random(const std::string& word, Rng& rng);

  // Exact match, then lowercase, then UNK.
  std::size_t lookup(std::string_view word) const;
  bool contains(std::string_view word) const;

  std::size_t dim() const { return dim_; }
  // Number of rows including UNK.
  std::size_t rows() const { return words_.size(); }
  // Row order; words()[0] is the UNK placeholder.
  const std::vector<std::string>& words() const { return words_; }
  Tensor matrix() const;

 private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> values_;
};

// First line "<count> <dim>", then "word v1 ... v_dim" per line.
// Duplicate words keep the last vector and add a warning.
WordEmbeddingTable load_word_embeddings(std::istream& in,
                                        std::vector<std::string>* warnings = nullptr,
                                        const std::string& source = "<stream>");

std::vector<char32_t> utf8_decode(std::string_view text);
std::string utf8_encode(char32_t cp);

// Characters seen in training. Index 0 is PAD, index 1 is UNK-char.
class CharVocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  CharVocabulary();
  void add_word(std::string_view word);
  void add(char32_t c);
  std::size_t id(char32_t c) const;
  // Character ids of a word; an empty word becomes a single UNK-char.
  std::vector<std::size_t> encode(std::string_view word) const;
  std::size_t size() const { return chars_.size() + 2; }
  // Characters in id order, starting at id 2.
  const std::vector<char32_t>& chars() const { return chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, std::size_t> index_;
};

struct CharCnnShape {
  std::size_t d_char = 30;
  std::size_t d_clwe = 600;
  std::vector<std::size_t> windows = {3, 5, 7};
  std::size_t per_bank() const { return d_clwe / windows.size(); }
};

std::string cnn_weight_name(std::size_t k);
std::string cnn_bias_name(std::size_t k);
inline constexpr std::string_view kCharEmbName = "char_emb";
inline constexpr std::string_view kWordEmbName = "word_emb";

// Window i holds the ids of characters i-(k-1)/2 .. i+(k-1)/2, PAD outside
// the word. Exactly one window per character.
std::vector<std::vector<std::size_t>> char_window_ids(std::span<const std::size_t> chars,
                                                      std::size_t k);
// The concatenated k*d_char embedding of every window.
std::vector<Tensor> char_windows(std::span<const std::size_t> chars, std::size_t k,
                                 const Tensor& char_matrix);

// Builds the character-level word embedding: per window size, the
// coordinatewise max over windows of W C_i + b, banks concatenated in
// ascending window order.
ad::NodeId char_cnn(ad::Graph& g, std::span<const std::size_t> chars,
                    const CharCnnShape& shape);

// [word vector, character-level embedding]; the optional mask is applied to
// the character part (dropout).
ad::NodeId embed_token(ad::Graph& g, std::size_t word_row,
                       std::span<const std::size_t> chars, const CharCnnShape& shape,
                       const Tensor* clwe_mask = nullptr);

// Adds char_emb (uniform(-0.5, 0.5)/d_char, PAD row zero) and the filter
// banks (Xavier-uniform weights, zero biases) to params.
void init_char_cnn(TensorMap& params, const CharCnnShape& shape, std::size_t char_vocab_size,
                   Rng& rng);

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace cnet
