#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "cnet/corpus.hpp"
#include "cnet/tags.hpp"
#include "synthetic.hpp"

using namespace cnet;

namespace {

std::vector<Span> spans(std::initializer_list<std::pair<std::size_t, std::size_t>> list) {
  std::vector<Span> out;
  for (auto [s, e] : list) out.push_back({s, e});
  return out;
}

std::vector<LabeledSentence> numbered(std::size_t n) {
  std::vector<LabeledSentence> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].tokens = {"t" + std::to_string(i)};
    out[i].tags = {Tag::O};
  }
  return out;
}

}  // namespace

TEST_SUITE("tags") {
  TEST_CASE("letters round trip") {
    CHECK(tags_to_string(tags_from_string("BIOES")) == "BIOES");
    CHECK_THROWS(tag_from_letter('X'));
    CHECK(index_of(Tag::S) == 4);
  }

  TEST_CASE("BIO to BIOES examples") {
    CHECK(bio_to_bioes(tags_from_string("BIIO")) == tags_from_string("BIEO"));
    CHECK(bio_to_bioes(tags_from_string("BOB")) == tags_from_string("SOS"));
    CHECK(bio_to_bioes(tags_from_string("OO")) == tags_from_string("OO"));
    CHECK_THROWS(bio_to_bioes(tags_from_string("OI")));
    CHECK(bio_to_bioes(tags_from_string("OI"), true) == tags_from_string("OS"));
    CHECK(bioes_to_bio(tags_from_string("BIEOS")) == tags_from_string("BIIOB"));
  }

  TEST_CASE("BIOES to spans examples") {
    CHECK(bioes_to_spans(tags_from_string("SOBE")) == spans({{0, 0}, {2, 3}}));
    CHECK(bioes_to_spans(tags_from_string("OOO")).empty());
    CHECK(bioes_to_spans(tags_from_string("BIE")) == spans({{0, 2}}));
    CHECK_THROWS(bioes_to_spans(tags_from_string("BO")));
  }

  TEST_CASE("validity agrees with the transition table") {
    for (std::size_t len = 1; len <= 5; ++len) {
      std::size_t total = 1;
      for (std::size_t i = 0; i < len; ++i) total *= kNumTags;
      for (std::size_t code = 0; code < total; ++code) {
        TagSequence seq;
        for (std::size_t c = code, i = 0; i < len; ++i, c /= kNumTags) seq.push_back(tag_from_index(c % kNumTags));
        bool allowed = transition_allowed(kStartState, index_of(seq.front())) &&
                       transition_allowed(index_of(seq.back()), kStopState);
        for (std::size_t t = 1; t < len; ++t) {
          allowed = allowed && transition_allowed(index_of(seq[t - 1]), index_of(seq[t]));
        }
        CHECK(allowed == is_valid_bioes(seq));
      }
    }
  }

  TEST_CASE("random BIO sequences survive the scheme round trip") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
      const TagSequence bio = synth::random_bio(1 + rng.next() % 12, rng);
      REQUIRE(is_valid_bio(bio));
      const TagSequence bioes = bio_to_bioes(bio);
      CHECK(is_valid_bioes(bioes));
      CHECK(bioes_to_bio(bioes) == bio);
    }
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("parses a two-token sentence") {
    std::istringstream in("IL-2\tB-protein\ngene\tE-protein\n\n");
    const Corpus c = parse_conll(in);
    REQUIRE(c.sentences.size() == 1);
    CHECK(c.sentences[0].tokens == std::vector<std::string>{"IL-2", "gene"});
    CHECK(c.sentences[0].tags == tags_from_string("BE"));
    CHECK(c.entity_type == "protein");
  }

  TEST_CASE("repeated blank lines do not create empty sentences") {
    std::istringstream in("a\tO\n\n\nb\tS\n");
    CHECK(parse_conll(in).sentences.size() == 2);
  }

  TEST_CASE("malformed lines report their line number") {
    std::istringstream in("a\tO\nfoo bar baz\n");
    try {
      parse_conll(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    std::istringstream mixed("a\tB-x\nb\tE-y\n");
    CHECK_THROWS_AS(parse_conll(mixed), ParseError);
    std::istringstream bad_tag("a\tQ\n");
    CHECK_THROWS_AS(parse_conll(bad_tag), ParseError);
  }

  TEST_CASE("BIO input is converted and dangling I handled by option") {
    std::istringstream in("a\tB-x\nb\tI-x\nc\tI-x\nd\tO\n");
    ConllOptions o;
    o.scheme = TagScheme::kBio;
    CHECK(parse_conll(in, o).sentences[0].tags == tags_from_string("BIEO"));
    std::istringstream dangling("a\tO\nb\tI-x\n");
    CHECK_THROWS(parse_conll(dangling, o));
    std::istringstream dangling2("a\tO\nb\tI-x\n");
    o.lenient = true;
    CHECK(parse_conll(dangling2, o).sentences[0].tags == tags_from_string("OS"));
  }

  TEST_CASE("overlong sentences are rejected") {
    std::istringstream in("a\tO\nb\tO\nc\tO\n");
    ConllOptions o;
    o.max_sentence_length = 2;
    CHECK_THROWS(parse_conll(in, o));
  }

  TEST_CASE("normalized files reproduce byte for byte") {
    Rng rng(2);
    const auto words = synth::make_words(20, rng);
    std::vector<LabeledSentence> sentences;
    for (int i = 0; i < 30; ++i) {
      LabeledSentence s;
      const TagSequence bio = synth::random_bio(1 + rng.next() % 8, rng);
      s.tags = bio_to_bioes(bio);
      for (std::size_t t = 0; t < s.tags.size(); ++t) s.tokens.push_back(words[rng.next() % 20]);
      sentences.push_back(s);
    }
    std::ostringstream first;
    write_conll(first, sentences, "Gene");
    std::istringstream in(first.str());
    const Corpus c = parse_conll(in);
    std::ostringstream second;
    write_conll(second, c.sentences, c.entity_type);
    CHECK(first.str() == second.str());
    CHECK(c.entity_type == "Gene");
  }

  TEST_CASE("split_dev takes the tail") {
    auto [train, dev] = split_dev(numbered(10), 3);
    REQUIRE(train.size() == 7);
    REQUIRE(dev.size() == 3);
    CHECK(train.front().tokens[0] == "t0");
    CHECK(dev.front().tokens[0] == "t7");
    CHECK_THROWS(split_dev(numbered(10), 0));
    CHECK_THROWS(split_dev(numbered(10), 10));
  }

  TEST_CASE("batch sizes") {
    const std::vector<std::size_t> lengths(25, 3);
    const auto batches = make_batches(lengths, 10, 1);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].sentences.size() == 10);
    CHECK(batches[1].sentences.size() == 10);
    CHECK(batches[2].sentences.size() == 5);
    Rng rng(3);
    std::vector<std::size_t> varied;
    for (int i = 0; i < 17; ++i) varied.push_back(1 + rng.next() % 9);
    for (const auto& b : make_batches(varied, 1, 4)) {
      CHECK(b.padded_length == varied[b.sentences[0]]);
      CHECK(std::count(b.mask[0].begin(), b.mask[0].end(), 1) == static_cast<long>(b.padded_length));
    }
  }

  TEST_CASE("batching preserves the multiset of sentences") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.next() % 40;
      std::vector<std::size_t> lengths;
      for (std::size_t i = 0; i < n; ++i) lengths.push_back(1 + rng.next() % 10);
      const std::size_t bs = 1 + rng.next() % 12;
      std::vector<std::size_t> seen;
      for (const auto& b : make_batches(lengths, bs, rng.next())) {
        CHECK(b.sentences.size() <= bs);
        for (std::size_t r = 0; r < b.sentences.size(); ++r) {
          const std::size_t len = lengths[b.sentences[r]];
          for (std::size_t t = 0; t < b.padded_length; ++t) CHECK(b.mask[r][t] == (t < len ? 1 : 0));
        }
        seen.insert(seen.end(), b.sentences.begin(), b.sentences.end());
      }
      std::sort(seen.begin(), seen.end());
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      CHECK(seen == all);
    }
  }

  TEST_CASE("column input keeps every field") {
    std::istringstream in("a\tx\t1\nb\ty\t2\n\nc\tz\t3\n");
    const auto rows = parse_columns(in);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][1] == std::vector<std::string>{"b", "y", "2"});
  }
}
