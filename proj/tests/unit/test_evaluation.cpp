#include <doctest.h>

#include <algorithm>
#include <functional>
#include <sstream>

#include "cnet/evaluation.hpp"
#include "synthetic.hpp"

using namespace cnet;

namespace {

void for_each_sequence(std::size_t len, const std::function<void(const TagSequence&)>& f) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < len; ++i) total *= kNumTags;
  for (std::size_t code = 0; code < total; ++code) {
    TagSequence p(len);
    std::size_t c = code;
    for (std::size_t t = 0; t < len; ++t, c /= kNumTags) p[t] = tag_from_index(c % kNumTags);
    f(p);
  }
}

std::vector<Span> random_spans(std::size_t len, Rng& rng) {
  return bioes_to_spans(bio_to_bioes(synth::random_bio(len, rng)));
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("repair examples") {
    CHECK(repair_bioes(tags_from_string("BEOS")) == tags_from_string("BEOS"));
    CHECK(repair_bioes(tags_from_string("IEO")) == tags_from_string("OOO"));
    CHECK(repair_bioes(tags_from_string("BOE")) == tags_from_string("OOO"));
    CHECK(repair_bioes(tags_from_string("SBE")) == tags_from_string("SBE"));
    CHECK(repair_bioes(tags_from_string("BIBE")) == tags_from_string("OOOO"));
  }

  TEST_CASE("lenient spans") {
    CHECK(lenient_spans(tags_from_string("IEO")) == std::vector<Span>{{0, 1}});
    CHECK(lenient_spans(tags_from_string("BOE")) == std::vector<Span>{{0, 0}, {2, 2}});
    CHECK(lenient_spans(tags_from_string("BIBE")) == std::vector<Span>{{0, 1}, {2, 3}});
  }

  TEST_CASE("repair is idempotent, valid and drop-only over every short sequence") {
    for (std::size_t len = 1; len <= 6; ++len) {
      for_each_sequence(len, [&](const TagSequence& raw) {
        const TagSequence once = repair_bioes(raw);
        CHECK(repair_bioes(once) == once);
        REQUIRE(is_valid_bioes(once));
        const auto kept = bioes_to_spans(once);
        const auto before = lenient_spans(raw);
        CHECK(kept.size() <= before.size());
        for (const Span& s : kept) CHECK(std::find(before.begin(), before.end(), s) != before.end());
        if (is_valid_bioes(raw)) {
          CHECK(once == raw);
          CHECK(lenient_spans(raw) == bioes_to_spans(raw));
        }
      });
    }
  }

  TEST_CASE("score arithmetic") {
    const EvalReport r = report_from_counts(3, 4, 5);
    CHECK(r.precision == 0.75);
    CHECK(r.recall == 0.6);
    CHECK(r.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
    const EvalReport perfect = report_from_counts(7, 7, 7);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.f1 == 1.0);
    const EvalReport none = report_from_counts(0, 0, 4);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(report_from_counts(0, 0, 0).f1 == 0.0);
  }

  TEST_CASE("swapping prediction and gold swaps precision and recall") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t len = 1 + rng.next() % 15;
      const auto a = random_spans(len, rng), b = random_spans(len, rng);
      const EvalReport ab = exact_match_score(a, b), ba = exact_match_score(b, a);
      CHECK(ab.precision == ba.recall);
      CHECK(ab.recall == ba.precision);
      CHECK(ab.f1 == ba.f1);
      CHECK(ab.correct <= std::min(ab.predicted, ab.gold));
    }
  }

  TEST_CASE("taxonomy rules") {
    const std::vector<Span> other = {{2, 3}};
    const std::vector<Span> gold = {{2, 4}};
    const std::vector<Span> p1 = {{2, 3}};
    CHECK(classify_errors(p1, {}, other).bio_entity == 1);
    const std::vector<Span> p2 = {{1, 4}};
    const std::vector<Span> far_other = {{8, 9}};
    CHECK(classify_errors(p2, gold, far_other).span == 1);
    const std::vector<Span> p3 = {{7, 7}};
    const ErrorTaxonomy t3 = classify_errors(p3, gold, other);
    CHECK(t3.other == 1);
    CHECK(t3.false_negatives == 1);
  }

  TEST_CASE("taxonomy partitions the false positives") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t len = 1 + rng.next() % 15;
      const auto pred = random_spans(len, rng), gold = random_spans(len, rng), other = random_spans(len, rng);
      const EvalReport r = exact_match_score(pred, gold);
      const ErrorTaxonomy t = classify_errors(pred, gold, other);
      CHECK(t.false_positives() == r.predicted - r.correct);
      CHECK(t.false_negatives == r.gold - r.correct);
    }
  }

  TEST_CASE("evaluator micro-averages and reports") {
    Evaluator ev;
    ev.add(tags_from_string("SOBE"), tags_from_string("SOBE"));
    ev.add(tags_from_string("BOEO"), tags_from_string("OOSO"));      // repaired: nothing predicted
    ev.add(tags_from_string("BOEO"), tags_from_string("OOSO"), false);  // raw: B and E chunks
    const EvalReport r = ev.report();
    CHECK(r.correct == 3);
    CHECK(r.predicted == 4);
    CHECK(r.gold == 4);
    const std::string line = format_report(r);
    CHECK(line.find("P=0.7500") != std::string::npos);
    std::ostringstream summary;
    write_summary(summary, r, "test.");
    CHECK(summary.str().find("test.f1=") != std::string::npos);
    CHECK(summary.str().find("test.fp_bio_entity=") != std::string::npos);
  }
}
