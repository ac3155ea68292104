#include "cnet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace cnet {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return c == ' ' || c == '\r' || c == '\t'; });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line,
                       const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

Corpus parse_conll(std::istream& in, const ConllOptions& options) {
  Corpus corpus;
  bool have_type = false;
  bool saw_bare = false;
  LabeledSentence current;
  current.dataset = options.dataset;
  std::size_t first_line = 0;

  auto finish = [&](std::size_t line_no) {
    if (current.tokens.empty()) return;
    if (current.tokens.size() > options.max_sentence_length) {
      throw ParseError(options.source, first_line,
                       "sentence of " + std::to_string(current.tokens.size()) +
                           " tokens exceeds the limit of " +
                           std::to_string(options.max_sentence_length));
    }
    if (options.scheme == TagScheme::kBio) {
      try {
        current.tags = bio_to_bioes(current.tags, options.lenient);
      } catch (const std::invalid_argument& e) {
        throw ParseError(options.source, line_no, e.what());
      }
    }
    corpus.sentences.push_back(std::move(current));
    current = LabeledSentence{};
    current.dataset = options.dataset;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) {
      finish(line_no);
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(options.source, line_no,
                       "expected \"token<TAB>tag\", got " + std::to_string(fields.size()) +
                           " field(s)");
    }
    const std::string& tag = fields[1];
    char letter = 0;
    std::string type;
    if (tag.size() == 1) {
      letter = tag[0];
    } else if (tag.size() > 2 && tag[1] == '-') {
      letter = tag[0];
      type = tag.substr(2);
    } else {
      throw ParseError(options.source, line_no, "unknown tag '" + tag + "'");
    }
    const std::string allowed = options.scheme == TagScheme::kBio ? "BIO" : "BIOES";
    if (allowed.find(letter) == std::string::npos || (letter == 'O' && !type.empty())) {
      throw ParseError(options.source, line_no, "unknown tag '" + tag + "'");
    }
    if (letter != 'O') {
      if (type.empty()) {
        saw_bare = true;
      } else if (!have_type) {
        corpus.entity_type = type;
        have_type = true;
      } else if (type != corpus.entity_type) {
        throw ParseError(options.source, line_no,
                         "entity type '" + type + "' differs from '" +
                             corpus.entity_type + "' used earlier in the file");
      }
      if (have_type && saw_bare) {
        throw ParseError(options.source, line_no,
                         "mix of typed and bare entity tags");
      }
    }
    if (current.tokens.empty()) first_line = line_no;
    current.tokens.push_back(fields[0]);
    current.tags.push_back(tag_from_letter(letter));
  }
  finish(line_no);
  return corpus;
}

Corpus read_conll_file(const std::filesystem::path& path, ConllOptions options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  options.source = path.string();
  return parse_conll(in, options);
}

void write_conll(std::ostream& out, std::span<const LabeledSentence> sentences,
                 const std::string& entity_type, TagScheme scheme) {
  for (const LabeledSentence& s : sentences) {
    const TagSequence tags = scheme == TagScheme::kBio ? bioes_to_bio(s.tags) : s.tags;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      out << s.tokens[t] << '\t' << tag_letter(tags[t]);
      if (tags[t] != Tag::O && !entity_type.empty()) out << '-' << entity_type;
      out << '\n';
    }
    out << '\n';
  }
}

std::vector<ColumnSentence> parse_columns(std::istream& in, const std::string& source) {
  std::vector<ColumnSentence> out;
  ColumnSentence current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (is_blank(line)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    auto fields = split_tabs(line);
    if (fields[0].empty()) throw ParseError(source, line_no, "empty token column");
    current.push_back(std::move(fields));
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::pair<std::vector<LabeledSentence>, std::vector<LabeledSentence>> split_dev(
    std::vector<LabeledSentence> train, std::size_t dev_size) {
  if (dev_size == 0) throw std::invalid_argument("split_dev: dev split must be nonempty");
  if (dev_size >= train.size()) {
    throw std::invalid_argument("split_dev: dev size " + std::to_string(dev_size) +
                                " must be smaller than the " +
                                std::to_string(train.size()) + " training sentences");
  }
  const auto cut = train.end() - static_cast<std::ptrdiff_t>(dev_size);
  std::vector<LabeledSentence> dev(std::make_move_iterator(cut),
                                   std::make_move_iterator(train.end()));
  train.erase(cut, train.end());
  return {std::move(train), std::move(dev)};
}

std::vector<Batch> make_batches(std::span<const std::size_t> lengths,
                                std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be >= 1");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine(seed);
  std::shuffle(order.begin(), order.end(), engine);

  std::vector<Batch> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
    const std::size_t hi = std::min(order.size(), lo + batch_size);
    Batch b;
    b.sentences.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                       order.begin() + static_cast<std::ptrdiff_t>(hi));
    for (std::size_t i : b.sentences) b.padded_length = std::max(b.padded_length, lengths[i]);
    for (std::size_t i : b.sentences) {
      std::vector<std::uint8_t> m(b.padded_length, 0);
      std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(lengths[i]), 1);
      b.mask.push_back(std::move(m));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<Batch> make_batches(std::span<const LabeledSentence> sentences,
                                std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> lengths;
  lengths.reserve(sentences.size());
  for (const auto& s : sentences) lengths.push_back(s.tokens.size());
  return make_batches(lengths, batch_size, seed);
}

}  // namespace cnet
