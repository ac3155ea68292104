#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cnet/tags.hpp"

namespace cnet {

// False positives split by the first matching rule, plus false negatives.
// The rules are a mechanical approximation of a manual error analysis.
struct ErrorTaxonomy {
  std::size_t bio_entity = 0;  // overlaps an entity of another type
  std::size_t span = 0;        // overlaps a same-type gold entity, wrong bounds
  std::size_t other = 0;
  std::size_t false_negatives = 0;

  std::size_t false_positives() const { return bio_entity + span + other; }
  ErrorTaxonomy& operator+=(const ErrorTaxonomy& o);
};

struct EvalReport {
  std::size_t correct = 0;    // C
  std::size_t predicted = 0;  // M
  std::size_t gold = 0;       // N
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ErrorTaxonomy taxonomy;
};

// P = C/M, R = C/N, F1 = 2PR/(P+R); each 0 when its denominator is 0.
EvalReport report_from_counts(std::size_t correct, std::size_t predicted, std::size_t gold);

// Rewrites every maximal run of non-O tags that is not S or B I* E to O.
TagSequence repair_bioes(std::span<const Tag> tags);

// Spans of a possibly malformed sequence: a chunk opens at B, S or a stray
// I/E and closes at E, S or before O, B, S. Equals bioes_to_spans on valid input.
std::vector<Span> lenient_spans(std::span<const Tag> tags);

EvalReport exact_match_score(std::span<const Span> predicted, std::span<const Span> gold);

ErrorTaxonomy classify_errors(std::span<const Span> predicted, std::span<const Span> gold,
                              std::span<const Span> other_type);

// Micro-averaged accumulation over a split.
class Evaluator {
 public:
  // Without repair, malformed predictions are decoded with lenient_spans.
  void add(std::span<const Tag> predicted, std::span<const Tag> gold, bool repair = true,
           std::span<const Span> other_type = {});
  void add_spans(std::span<const Span> predicted, std::span<const Span> gold,
                 std::span<const Span> other_type = {});
  EvalReport report() const;

 private:
  std::size_t correct_ = 0;
  std::size_t predicted_ = 0;
  std::size_t gold_ = 0;
  ErrorTaxonomy taxonomy_;
};

// One line: "C=.. M=.. N=.. P=.. R=.. F1=.. fp_bio_entity=.. ...".
std::string format_report(const EvalReport& report);
// "metric=value" per line, keys prefixed with prefix.
void write_summary(std::ostream& out, const EvalReport& report, const std::string& prefix = {});

}  // namespace cnet
