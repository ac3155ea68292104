#include "cnet/evaluation.hpp"

#include <algorithm>
#include <optional>
#include <cstdio>
#include <ostream>
#include <set>
#include <stdexcept>

namespace cnet {

ErrorTaxonomy& ErrorTaxonomy::operator+=(const ErrorTaxonomy& o) {
  bio_entity += o.bio_entity;
  span += o.span;
  other += o.other;
  false_negatives += o.false_negatives;
  return *this;
}

EvalReport report_from_counts(std::size_t correct, std::size_t predicted, std::size_t gold) {
  if (correct > std::min(predicted, gold)) {
    throw std::invalid_argument("correct count exceeds predicted or gold count");
  }
  EvalReport r;
  r.correct = correct;
  r.predicted = predicted;
  r.gold = gold;
  r.precision = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  r.recall = gold ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  const double pr = r.precision + r.recall;
  r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
  return r;
}

TagSequence repair_bioes(std::span<const Tag> tags) {
  TagSequence out(tags.begin(), tags.end());
  std::size_t t = 0;
  while (t < out.size()) {
    if (out[t] == Tag::O) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < out.size() && out[end] != Tag::O) ++end;
    // A run is valid when it is a concatenation of S and B I* E chunks.
    bool valid = true;
    bool inside = false;
    for (std::size_t k = t; k < end && valid; ++k) {
      switch (out[k]) {
        case Tag::S: valid = !inside; break;
        case Tag::B: valid = !inside; inside = true; break;
        case Tag::I: valid = inside; break;
        case Tag::E: valid = inside; inside = false; break;
        case Tag::O: break;
      }
    }
    if (inside) valid = false;
    if (!valid) std::fill(out.begin() + static_cast<std::ptrdiff_t>(t),
                          out.begin() + static_cast<std::ptrdiff_t>(end), Tag::O);
    t = end;
  }
  return out;
}

std::vector<Span> lenient_spans(std::span<const Tag> tags) {
  std::vector<Span> out;
  std::optional<std::size_t> open;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    switch (tags[t]) {
      case Tag::O:
        if (open) out.push_back({*open, t - 1});
        open.reset();
        break;
      case Tag::S:
        if (open) out.push_back({*open, t - 1});
        open.reset();
        out.push_back({t, t});
        break;
      case Tag::B:
        if (open) out.push_back({*open, t - 1});
        open = t;
        break;
      case Tag::I:
        if (!open) open = t;
        break;
      case Tag::E:
        out.push_back({open.value_or(t), t});
        open.reset();
        break;
    }
  }
  if (open) out.push_back({*open, tags.size() - 1});
  return out;
}

EvalReport exact_match_score(std::span<const Span> predicted, std::span<const Span> gold) {
  const std::set<Span> gold_set(gold.begin(), gold.end());
  std::size_t correct = 0;
  for (const Span& s : std::set<Span>(predicted.begin(), predicted.end())) {
    correct += gold_set.count(s);
  }
  return report_from_counts(correct, predicted.size(), gold.size());
}

ErrorTaxonomy classify_errors(std::span<const Span> predicted, std::span<const Span> gold,
                              std::span<const Span> other_type) {
  const std::set<Span> gold_set(gold.begin(), gold.end());
  const std::set<Span> pred_set(predicted.begin(), predicted.end());
  ErrorTaxonomy tax;
  auto overlaps_any = [](const Span& s, std::span<const Span> spans) {
    return std::any_of(spans.begin(), spans.end(), [&](const Span& o) { return s.overlaps(o); });
  };
  for (const Span& p : predicted) {
    if (gold_set.count(p)) continue;
    if (overlaps_any(p, other_type)) ++tax.bio_entity;
    else if (overlaps_any(p, gold)) ++tax.span;
    else ++tax.other;
  }
  for (const Span& g : gold) {
    if (!pred_set.count(g)) ++tax.false_negatives;
  }
  return tax;
}

void Evaluator::add(std::span<const Tag> predicted, std::span<const Tag> gold, bool repair,
                    std::span<const Span> other_type) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("Evaluator: prediction has " + std::to_string(predicted.size()) +
                                " tags, gold has " + std::to_string(gold.size()));
  }
  const auto pred_spans = repair ? bioes_to_spans(repair_bioes(predicted))
                                 : lenient_spans(predicted);
  add_spans(pred_spans, bioes_to_spans(gold), other_type);
}

void Evaluator::add_spans(std::span<const Span> predicted, std::span<const Span> gold,
                          std::span<const Span> other_type) {
  const EvalReport r = exact_match_score(predicted, gold);
  correct_ += r.correct;
  predicted_ += r.predicted;
  gold_ += r.gold;
  taxonomy_ += classify_errors(predicted, gold, other_type);
}

EvalReport Evaluator::report() const {
  EvalReport r = report_from_counts(correct_, predicted_, gold_);
  r.taxonomy = taxonomy_;
  return r;
}

std::string format_report(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "C=%zu M=%zu N=%zu P=%.4f R=%.4f F1=%.4f fp_bio_entity=%zu fp_span=%zu "
                "fp_other=%zu fn=%zu",
                r.correct, r.predicted, r.gold, r.precision, r.recall, r.f1,
                r.taxonomy.bio_entity, r.taxonomy.span, r.taxonomy.other,
                r.taxonomy.false_negatives);
  return buf;
}

void write_summary(std::ostream& out, const EvalReport& r, const std::string& prefix) {
  char buf[64];
  auto real = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    out << prefix << key << '=' << buf << '\n';
  };
  out << prefix << "correct=" << r.correct << '\n';
  out << prefix << "predicted=" << r.predicted << '\n';
  out << prefix << "gold=" << r.gold << '\n';
  real("precision", r.precision);
  real("recall", r.recall);
  real("f1", r.f1);
  out << prefix << "fp_bio_entity=" << r.taxonomy.bio_entity << '\n';
  out << prefix << "fp_span=" << r.taxonomy.span << '\n';
  out << prefix << "fp_other=" << r.taxonomy.other << '\n';
  out << prefix << "false_negatives=" << r.taxonomy.false_negatives << '\n';
}

}  // namespace cnet
