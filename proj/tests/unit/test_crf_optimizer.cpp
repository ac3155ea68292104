#include <doctest.h>

#include <cmath>
#include <functional>

#include "cnet/crf.hpp"
#include "cnet/optimizer.hpp"
#include "synthetic.hpp"

using namespace cnet;

namespace {

void for_each_path(std::size_t len, const std::function<void(const TagSequence&)>& f) {
  std::size_t total = 1;
  for (std::size_t i = 0; i < len; ++i) total *= kNumTags;
  for (std::size_t code = 0; code < total; ++code) {
    TagSequence p(len);
    std::size_t c = code;
    for (std::size_t t = len; t-- > 0; c /= kNumTags) p[t] = tag_from_index(c % kNumTags);
    f(p);
  }
}

double loop_score(const Tensor& z, const Tensor& a, const TagSequence& p) {
  double s = a.at(kStartState, index_of(p[0])) + z.at(0, index_of(p[0]));
  for (std::size_t t = 1; t < p.size(); ++t) s += a.at(index_of(p[t - 1]), index_of(p[t])) + z.at(t, index_of(p[t]));
  return s + a.at(index_of(p.back()), kStopState);
}

}  // namespace

TEST_SUITE("crf") {
  TEST_CASE("emissions with zero weights equal the bias") {
    Rng rng(1);
    const Tensor h = synth::random_tensor({3, 4}, rng);
    const Tensor b = Tensor::vector({1, 2, 3, 4, 5});
    const Tensor z = emissions(h, Tensor({5, 4}), b);
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t j = 0; j < 5; ++j) CHECK(z.at(t, j) == b[j]);
    }
  }

  TEST_CASE("token loss") {
    const Tensor zeros({4, 5});
    CHECK(token_nll(zeros, tags_from_string("BIEO")) == doctest::Approx(4 * std::log(5.0)));
    Tensor peaked({1, 5});
    peaked.at(0, 2) = 50.0;
    CHECK(token_nll(peaked, tags_from_string("O")) < 1e-6);
    const Tensor z = Tensor::matrix(2, 5, {0.1, -0.3, 2.0, 0.5, 1.0, -1.0, 0.0, 0.3, 0.2, -0.5});
    double expected = 0.0;
    const std::size_t gold[] = {2, 3};
    for (std::size_t t = 0; t < 2; ++t) {
      double denom = 0.0;
      for (std::size_t j = 0; j < 5; ++j) denom += std::exp(z.at(t, j));
      expected -= std::log(std::exp(z.at(t, gold[t])) / denom);
    }
    CHECK(token_nll(z, tags_from_string("OE")) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("path scores") {
    Rng rng(2);
    const Tensor z = synth::random_tensor({4, 5}, rng);
    const TagSequence p = tags_from_string("BEOS");
    double direct = 0.0;
    for (std::size_t t = 0; t < 4; ++t) direct += z.at(t, index_of(p[t]));
    CHECK(path_score(z, Tensor({7, 7}), p) == doctest::Approx(direct));
    const Tensor a = synth::random_tensor({7, 7}, rng);
    CHECK(path_score(z, a, p) == doctest::Approx(loop_score(z, a, p)).epsilon(1e-14));
    const Tensor z1 = synth::random_tensor({1, 5}, rng);
    CHECK(path_score(z1, a, tags_from_string("I")) ==
          doctest::Approx(a.at(kStartState, 1) + z1.at(0, 1) + a.at(1, kStopState)));
  }

  TEST_CASE("partition function small cases") {
    CHECK(log_partition(Tensor({2, 5}), Tensor({7, 7})) == doctest::Approx(2 * std::log(5.0)));
    CHECK(crf_nll(Tensor({3, 5}), Tensor({7, 7}), tags_from_string("OOO")) ==
          doctest::Approx(3 * std::log(5.0)));
    Rng rng(3);
    const Tensor z = synth::random_tensor({1, 5}, rng);
    const Tensor a = synth::random_tensor({7, 7}, rng);
    double acc = 0.0;
    for (std::size_t y = 0; y < 5; ++y) acc += std::exp(a.at(kStartState, y) + z.at(0, y) + a.at(y, kStopState));
    CHECK(log_partition(z, a) == doctest::Approx(std::log(acc)).epsilon(1e-14));
    CHECK(total_loss(1.2, 0.8) == doctest::Approx(2.0));
  }

  TEST_CASE("partition bounds every path and the Viterbi path minimizes the loss") {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t len = 1 + trial % 4;
      const Tensor z = synth::random_tensor({len, 5}, rng, -2, 2);
      const Tensor a = synth::random_tensor({7, 7}, rng, -2, 2);
      const double logz = log_partition(z, a);
      const ViterbiResult v = viterbi(z, a);
      CHECK(logz >= v.score);
      const double best_nll = crf_nll(z, a, v.path);
      for_each_path(len, [&](const TagSequence& p) {
        CHECK(logz >= path_score(z, a, p));
        CHECK(best_nll <= crf_nll(z, a, p) + 1e-12);
      });
    }
  }

  TEST_CASE("marginals equal enumeration") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t len = 1 + trial % 4;
      const Tensor z = synth::random_tensor({len, 5}, rng, -2, 2);
      const Tensor a = synth::random_tensor({7, 7}, rng, -2, 2);
      const CrfMarginals m = crf_marginals(z, a);
      Tensor unary({len, 5}), trans({7, 7});
      const double logz = log_partition(z, a);
      for_each_path(len, [&](const TagSequence& p) {
        const double w = std::exp(loop_score(z, a, p) - logz);
        std::size_t prev = kStartState;
        for (std::size_t t = 0; t < len; ++t) {
          unary.at(t, index_of(p[t])) += w;
          trans.at(prev, index_of(p[t])) += w;
          prev = index_of(p[t]);
        }
        trans.at(prev, kStopState) += w;
      });
      CHECK(max_abs_difference(m.unary, unary) <= 1e-10);
      CHECK(max_abs_difference(m.transitions, trans) <= 1e-10);
      CHECK(m.log_partition == doctest::Approx(logz));
    }
  }

  TEST_CASE("Viterbi examples") {
    Rng rng(6);
    const Tensor z = synth::random_tensor({6, 5}, rng);
    const ViterbiResult v = viterbi(z, Tensor({7, 7}));
    for (std::size_t t = 0; t < 6; ++t) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < 5; ++j) best = z.at(t, j) > z.at(t, best) ? j : best;
      CHECK(index_of(v.path[t]) == best);
    }
    CHECK(viterbi(Tensor({3, 5}), Tensor({7, 7})).path == tags_from_string("BBB"));
  }

  TEST_CASE("shifting every emission keeps the path and shifts the score") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t len = 1 + rng.next() % 8;
      Tensor z = synth::random_tensor({len, 5}, rng);
      const Tensor a = synth::random_tensor({7, 7}, rng);
      const ViterbiResult before = viterbi(z, a);
      const double c = rng.uniform(-5, 5);
      for (double& v : z.data()) v += c;
      const ViterbiResult after = viterbi(z, a);
      CHECK(after.path == before.path);
      CHECK(after.score == doctest::Approx(before.score + len * c).epsilon(1e-12));
    }
  }

  TEST_CASE("constrained decoding yields valid BIOES") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t len = 1 + rng.next() % 8;
      const Tensor z = synth::random_tensor({len, 5}, rng, -3, 3);
      const Tensor a = synth::random_tensor({7, 7}, rng, -3, 3);
      const ViterbiResult v = viterbi(z, a, true);
      CHECK(is_valid_bioes(v.path));
      double best = -1e300;
      for_each_path(len, [&](const TagSequence& p) {
        if (len <= 5 && is_valid_bioes(p)) best = std::max(best, path_score(z, a, p));
      });
      if (len <= 5) CHECK(v.score == doctest::Approx(best).epsilon(1e-12));
    }
  }

  TEST_CASE("loss node gradients match finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t len = 1 + trial % 5;
      TensorMap p{{"z", synth::random_tensor({len, 5}, rng)}, {"A", synth::random_tensor({7, 7}, rng)}};
      const TagSequence gold = synth::random_tags(len, rng);
      const ad::LossBuilder f = [&](ad::Graph& g) {
        const ad::NodeId z = g.input("z");
        std::vector<ad::NodeId> rows;
        for (std::size_t t = 0; t < len; ++t) rows.push_back(g.row(z, t));
        return g.add(crf_nll_node(g, z, g.input("A"), gold), token_nll_node(g, rows, gold));
      };
      double loss = 0.0;
      ad::loss_gradients(f, p, &loss);
      CHECK(loss == doctest::Approx(crf_nll(p["z"], p["A"], gold) + token_nll(p["z"], gold)));
      CHECK(ad::finite_diff_check(f, p).max_relative_error <= 1e-5);
    }
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("learning rate schedule") {
    CHECK(lr_for_epoch(0) == 0.01);
    CHECK(lr_for_epoch(1) == doctest::Approx(0.0095).epsilon(1e-14));
    CHECK(lr_for_epoch(2) == doctest::Approx(0.009025).epsilon(1e-14));
  }

  TEST_CASE("AdaGrad steps") {
    Tensor p = Tensor::vector({1.0}), acc = Tensor::vector({0.0});
    adagrad_step(p, Tensor::vector({0.0}), acc, 0.01);
    CHECK(p[0] == 1.0);
    CHECK(acc[0] == 0.0);
    adagrad_step(p, Tensor::vector({-2.0}), acc, 0.01);
    CHECK(p[0] == doctest::Approx(1.01).epsilon(1e-9));
    Tensor q = Tensor::vector({0.0}), acc2 = Tensor::vector({0.0});
    adagrad_step(q, Tensor::vector({3.0}), acc2, 0.01);
    const double after_first = q[0];
    adagrad_step(q, Tensor::vector({4.0}), acc2, 0.01);
    CHECK(acc2[0] == 25.0);
    CHECK(q[0] - after_first == doctest::Approx(-0.01 * 4.0 / (5.0 + 1e-8)).epsilon(1e-14));
  }

  TEST_CASE("update skips frozen and unknown names; accumulators never shrink") {
    Rng rng(1);
    TensorMap params{{"a", synth::random_tensor({3}, rng)}, {"b", synth::random_tensor({2, 2}, rng)}};
    OptimizerState state;
    const TensorMap frozen_before = {{"b", params["b"]}};
    TensorMap last;
    for (int step = 0; step < 20; ++step) {
      ad::Gradients g{{"a", synth::random_tensor({3}, rng)},
                      {"b", synth::random_tensor({2, 2}, rng)},
                      {"ghost", synth::random_tensor({1}, rng)}};
      adagrad_update(params, g, state, 0.1, {"b"});
      for (const auto& [name, acc] : state.accumulators) {
        for (std::size_t i = 0; i < acc.size(); ++i) {
          CHECK(acc[i] >= 0.0);
          if (last.count(name)) CHECK(acc[i] >= last[name][i]);
        }
      }
      last = state.accumulators;
    }
    CHECK(bit_identical(params["b"], frozen_before.at("b")));
    CHECK(state.accumulators.count("b") == 0);
    CHECK(state.accumulators.count("ghost") == 0);
    CHECK(params.count("ghost") == 0);
  }

  TEST_CASE("dropout modes and scaling") {
    const Tensor x = Tensor({100}, 2.0);
    CHECK(bit_identical(apply_dropout(x, 0.0, DropoutMode::kTrain, 1), x));
    CHECK(bit_identical(apply_dropout(x, 0.5, DropoutMode::kEval, 1), x));
    const Tensor ones({1000000}, 1.0);
    const Tensor y = apply_dropout(ones, 0.5, DropoutMode::kTrain, 7);
    double total = 0.0;
    std::size_t zeros = 0;
    bool two_values = true;
    for (double v : y.data()) {
      total += v;
      zeros += v == 0.0;
      two_values = two_values && (v == 0.0 || v == 2.0);
    }
    CHECK(two_values);
    CHECK(std::abs(total / 1e6 - 1.0) <= 0.01);
    CHECK(std::abs(static_cast<double>(zeros) / 1e6 - 0.5) <= 0.01);
    CHECK(bit_identical(apply_dropout(ones, 0.5, DropoutMode::kTrain, 7), y));
    CHECK_THROWS(apply_dropout(ones, 1.0, DropoutMode::kTrain, 7));
  }
}
