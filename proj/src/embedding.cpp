#include "cnet/embedding.hpp"

#include <cctype>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "cnet/corpus.hpp"

namespace cnet {

// --- word embeddings --------------------------------------------------------

WordEmbeddingTable::WordEmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("word embedding dimension must be positive");
  words_.push_back("<UNK>");
  values_.assign(dim, 0.0);
}

std::size_t WordEmbeddingTable::set(const std::string& word, std::span<const double> values) {
  if (values.size() != dim_) {
    throw std::invalid_argument("embedding for '" + word + "' has " +
                                std::to_string(values.size()) + " values, expected " +
                                std::to_string(dim_));
  }
  auto [it, inserted] = index_.emplace(word, words_.size());
  if (inserted) {
    words_.push_back(word);
    values_.insert(values_.end(), values.begin(), values.end());
  } else {
    std::copy(values.begin(), values.end(),
              values_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
  }
  return it->second;
}

std::size_t WordEmbeddingTable::add_random(const std::string& word, Rng& rng) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const double a = std::sqrt(3.0 / static_cast<double>(dim_));
  std::vector<double> v(dim_);
  for (double& x : v) x = rng.uniform(-a, a);
  return set(word, v);
}

std::size_t WordEmbeddingTable::lookup(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it != index_.end()) return it->second;
  std::string lower(word);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  it = index_.find(lower);
  return it != index_.end() ? it->second : kUnkRow;
}

bool WordEmbeddingTable::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

Tensor WordEmbeddingTable::matrix() const {
  return Tensor::matrix(words_.size(), dim_, values_);
}

WordEmbeddingTable load_word_embeddings(std::istream& in, std::vector<std::string>* warnings,
                                        const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing \"<count> <dim>\" header");
  std::istringstream header(line);
  long long count = -1, dim = -1;
  std::string extra;
  if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim <= 0) {
    throw ParseError(source, 1, "expected \"<count> <dim>\" header, got \"" + line + "\"");
  }
  WordEmbeddingTable table(static_cast<std::size_t>(dim));
  std::size_t line_no = 1;
  std::size_t rows = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    values.clear();
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(source, line_no, "bad number '" + tok + "'");
      }
    }
    if (values.size() != static_cast<std::size_t>(dim)) {
      throw ParseError(source, line_no,
                       "row for '" + word + "' has " + std::to_string(values.size()) +
                           " values, header says " + std::to_string(dim));
    }
    if (table.contains(word) && warnings) {
      warnings->push_back(source + ":" + std::to_string(line_no) + ": duplicate word '" +
                          word + "', keeping the last vector");
    }
    table.set(word, values);
    ++rows;
  }
  if (warnings && rows != static_cast<std::size_t>(count)) {
    warnings->push_back(source + ": header announces " + std::to_string(count) +
                        " words, file has " + std::to_string(rows));
  }
  return table;
}

// --- characters -------------------------------------------------------------

std::vector<char32_t> utf8_decode(std::string_view text) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) { len = 4; cp = b0 & 0x07; }
    else if (b0 >= 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if (b0 >= 0xC0) { len = 2; cp = b0 & 0x1F; }
    bool ok = b0 < 0x80 || (b0 >= 0xC0 && b0 < 0xF8 && i + len <= text.size());
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      // Stray byte: keep it as its own symbol.
      out.push_back(0xDC00 + b0);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp >= 0xDC80 && cp <= 0xDCFF) {
    out.push_back(static_cast<char>(cp - 0xDC00));
  } else if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

CharVocabulary::CharVocabulary() = default;

void CharVocabulary::add(char32_t c) {
  if (index_.emplace(c, chars_.size() + 2).second) chars_.push_back(c);
}

void CharVocabulary::add_word(std::string_view word) {
  for (char32_t c : utf8_decode(word)) add(c);
}

std::size_t CharVocabulary::id(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> CharVocabulary::encode(std::string_view word) const {
  std::vector<std::size_t> ids;
  for (char32_t c : utf8_decode(word)) ids.push_back(id(c));
  if (ids.empty()) ids.push_back(kUnk);
  return ids;
}

// --- character CNN ----------------------------------------------------------

std::string cnn_weight_name(std::size_t k) { return "cnn/k" + std::to_string(k) + "/W"; }
std::string cnn_bias_name(std::size_t k) { return "cnn/k" + std::to_string(k) + "/b"; }

std::vector<std::vector<std::size_t>> char_window_ids(std::span<const std::size_t> chars,
                                                      std::size_t k) {
  if (chars.empty()) throw std::invalid_argument("char_windows: empty word");
  if (k % 2 == 0) {
    throw std::invalid_argument("char_windows: window size " + std::to_string(k) +
                                " must be odd");
  }
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const auto m = static_cast<std::ptrdiff_t>(chars.size());
  std::vector<std::vector<std::size_t>> windows;
  windows.reserve(chars.size());
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    std::vector<std::size_t> w;
    w.reserve(k);
    for (std::ptrdiff_t j = i - half; j <= i + half; ++j) {
      w.push_back(j < 0 || j >= m ? CharVocabulary::kPad : chars[static_cast<std::size_t>(j)]);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<Tensor> char_windows(std::span<const std::size_t> chars, std::size_t k,
                                 const Tensor& char_matrix) {
  const std::size_t d = char_matrix.cols();
  std::vector<Tensor> out;
  for (const auto& ids : char_window_ids(chars, k)) {
    std::vector<double> v;
    v.reserve(k * d);
    for (std::size_t id : ids) {
      if (id == CharVocabulary::kPad) {
        v.insert(v.end(), d, 0.0);
      } else {
        auto r = char_matrix.row(id);
        v.insert(v.end(), r.begin(), r.end());
      }
    }
    out.push_back(Tensor::vector(std::move(v)));
  }
  return out;
}

ad::NodeId char_cnn(ad::Graph& g, std::span<const std::size_t> chars,
                    const CharCnnShape& shape) {
  const ad::NodeId table = g.input(std::string(kCharEmbName));
  const ad::NodeId pad = g.constant(Tensor({shape.d_char}));
  std::unordered_map<std::size_t, ad::NodeId> rows;
  auto char_node = [&](std::size_t id) {
    if (id == CharVocabulary::kPad) return pad;
    auto it = rows.find(id);
    if (it == rows.end()) it = rows.emplace(id, g.row(table, id)).first;
    return it->second;
  };

  std::vector<ad::NodeId> banks;
  for (std::size_t k : shape.windows) {
    std::vector<ad::NodeId> windows;
    for (const auto& ids : char_window_ids(chars, k)) {
      std::vector<ad::NodeId> parts;
      parts.reserve(ids.size());
      for (std::size_t id : ids) parts.push_back(char_node(id));
      windows.push_back(g.concat(parts));
    }
    // (M x k*d_char) times W^T gives one filter response row per window.
    const ad::NodeId responses =
        g.matmul(g.stack(windows), g.input(cnn_weight_name(k)), /*transpose_b=*/true);
    // The bias is constant across windows, so it commutes with the max.
    banks.push_back(g.add(g.max_over_axis(responses, 0), g.input(cnn_bias_name(k))));
  }
  return banks.size() == 1 ? banks.front() : g.concat(banks);
}

ad::NodeId embed_token(ad::Graph& g, std::size_t word_row, std::span<const std::size_t> chars,
                       const CharCnnShape& shape, const Tensor* clwe_mask) {
  const ad::NodeId word = g.row(g.input(std::string(kWordEmbName)), word_row);
  ad::NodeId clwe = char_cnn(g, chars, shape);
  if (clwe_mask) clwe = g.dropout(clwe, *clwe_mask);
  const ad::NodeId parts[] = {word, clwe};
  return g.concat(parts);
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

void init_char_cnn(TensorMap& params, const CharCnnShape& shape, std::size_t char_vocab_size,
                   Rng& rng) {
  if (shape.windows.empty() || shape.d_clwe % shape.windows.size() != 0) {
    throw std::invalid_argument("d_clwe " + std::to_string(shape.d_clwe) +
                                " is not divisible by the number of window sizes");
  }
  Tensor table({char_vocab_size, shape.d_char});
  const double scale = 1.0 / static_cast<double>(shape.d_char);
  for (std::size_t r = 1; r < char_vocab_size; ++r) {
    for (double& v : table.row(r)) v = rng.uniform(-0.5, 0.5) * scale;
  }
  params[std::string(kCharEmbName)] = std::move(table);
  for (std::size_t k : shape.windows) {
    if (k % 2 == 0) throw std::invalid_argument("window size " + std::to_string(k) + " is even");
    params[cnn_weight_name(k)] = xavier_uniform(shape.per_bank(), k * shape.d_char, rng);
    params[cnn_bias_name(k)] = Tensor({shape.per_bank()});
  }
}

}  // namespace cnet
