#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cnet/tags.hpp"

namespace cnet {

// A malformed input line; line() is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LabeledSentence {
  std::vector<std::string> tokens;
  TagSequence tags;
  std::string dataset;
};

enum class TagScheme { kBio, kBioes };

struct ConllOptions {
  TagScheme scheme = TagScheme::kBioes;
  // BIO only: promote a dangling I to B instead of failing.
  bool lenient = false;
  std::size_t max_sentence_length = 512;
  std::string dataset;
  // Used in error messages.
  std::string source = "<stream>";
};

struct Corpus {
  std::vector<LabeledSentence> sentences;
  // Entity-type suffix shared by all non-O tags ("Disease" in "B-Disease");
  // empty when the file uses bare letters.
  std::string entity_type;
};

// "token<TAB>tag" lines, blank line between sentences. Tags are BIOES (or
// BIO, converted on read) with an optional "-Type" suffix that must be the
// same throughout the file.
Corpus parse_conll(std::istream& in, const ConllOptions& options = {});
Corpus read_conll_file(const std::filesystem::path& path, ConllOptions options = {});

// Normalized form: one blank line after every sentence, tab delimiter.
void write_conll(std::ostream& out, std::span<const LabeledSentence> sentences,
                 const std::string& entity_type = {},
                 TagScheme scheme = TagScheme::kBioes);

// Tab-separated rows grouped into sentences; any number of columns >= 1.
using ColumnSentence = std::vector<std::vector<std::string>>;
std::vector<ColumnSentence> parse_columns(std::istream& in,
                                          const std::string& source = "<stream>");

// Moves the last dev_size sentences of train into a new dev split.
std::pair<std::vector<LabeledSentence>, std::vector<LabeledSentence>> split_dev(
    std::vector<LabeledSentence> train, std::size_t dev_size);

struct DatasetBundle {
  std::string name;
  std::string entity_type;
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> dev;
  std::vector<LabeledSentence> test;
};

struct Batch {
  // Indices into the sentence list, in batch order.
  std::vector<std::size_t> sentences;
  std::size_t padded_length = 0;
  // mask[row][t] is 1 for real tokens, 0 for padding.
  std::vector<std::vector<std::uint8_t>> mask;
};

// Shuffles with the given seed, then cuts groups of at most batch_size.
std::vector<Batch> make_batches(std::span<const std::size_t> lengths,
                                std::size_t batch_size, std::uint64_t seed);
std::vector<Batch> make_batches(std::span<const LabeledSentence> sentences,
                                std::size_t batch_size, std::uint64_t seed);

}  // namespace cnet
