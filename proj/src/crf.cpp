#include "cnet/crf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cnet {
namespace {

using Row = std::array<double, kNumTags>;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const Tensor& z, const Tensor& transitions) {
  if (z.rank() != 2 || z.cols() != kNumTags) {
    throw std::invalid_argument("crf: emissions must be T x 5, got " + shape_string(z.shape()));
  }
  if (transitions.shape() != Shape{kNumStates, kNumStates}) {
    throw std::invalid_argument("crf: transitions must be 7 x 7, got " +
                                shape_string(transitions.shape()));
  }
}

void check_path(const Tensor& z, std::span<const Tag> path) {
  if (path.size() != z.rows()) {
    throw std::invalid_argument("crf: path length " + std::to_string(path.size()) +
                                " does not match " + std::to_string(z.rows()) + " emissions");
  }
}

double lse(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

// alpha[t][j]: log-sum of scores of prefixes ending in tag j at position t.
std::vector<Row> forward_scores(const Tensor& z, const Tensor& a) {
  const std::size_t n = z.rows();
  std::vector<Row> alpha(n);
  for (std::size_t j = 0; j < kNumTags; ++j) alpha[0][j] = a.at(kStartState, j) + z.at(0, j);
  Row terms;
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      for (std::size_t i = 0; i < kNumTags; ++i) terms[i] = alpha[t - 1][i] + a.at(i, j);
      alpha[t][j] = lse(terms) + z.at(t, j);
    }
  }
  return alpha;
}

// beta[t][i]: log-sum of scores of suffixes after position t given tag i.
std::vector<Row> backward_scores(const Tensor& z, const Tensor& a) {
  const std::size_t n = z.rows();
  std::vector<Row> beta(n);
  for (std::size_t i = 0; i < kNumTags; ++i) beta[n - 1][i] = a.at(i, kStopState);
  Row terms;
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < kNumTags; ++i) {
      for (std::size_t j = 0; j < kNumTags; ++j) {
        terms[j] = a.at(i, j) + z.at(t + 1, j) + beta[t + 1][j];
      }
      beta[t][i] = lse(terms);
    }
  }
  return beta;
}

double final_log_partition(const std::vector<Row>& alpha, const Tensor& a) {
  Row terms;
  for (std::size_t j = 0; j < kNumTags; ++j) terms[j] = alpha.back()[j] + a.at(j, kStopState);
  return lse(terms);
}

class CrfNllOp final : public ad::CustomOp {
 public:
  explicit CrfNllOp(TagSequence gold) : gold_(std::move(gold)) {}

  std::string_view name() const override { return "crf_nll"; }

  Tensor forward(std::span<const Tensor* const> inputs) const override {
    return Tensor::scalar(crf_nll(*inputs[0], *inputs[1], gold_));
  }

  void backward(std::span<const Tensor* const> inputs, const Tensor&,
                const Tensor& output_adjoint,
                std::span<Tensor* const> input_adjoints) const override {
    const Tensor& z = *inputs[0];
    const double dy = output_adjoint[0];
    const CrfMarginals m = crf_marginals(z, *inputs[1]);
    Tensor& dz = *input_adjoints[0];
    Tensor& da = *input_adjoints[1];
    for (std::size_t i = 0; i < m.unary.size(); ++i) dz[i] += dy * m.unary[i];
    for (std::size_t i = 0; i < m.transitions.size(); ++i) da[i] += dy * m.transitions[i];
    std::size_t prev = kStartState;
    for (std::size_t t = 0; t < gold_.size(); ++t) {
      const std::size_t y = index_of(gold_[t]);
      dz.at(t, y) -= dy;
      da.at(prev, y) -= dy;
      prev = y;
    }
    da.at(prev, kStopState) -= dy;
  }

 private:
  TagSequence gold_;
};

}  // namespace

Tensor emissions(const Tensor& encoded, const Tensor& weight, const Tensor& bias) {
  if (encoded.rank() != 2 || weight.rank() != 2 || weight.rows() != kNumTags ||
      weight.cols() != encoded.cols() || bias.size() != kNumTags) {
    throw std::invalid_argument("emissions: incompatible shapes " +
                                shape_string(encoded.shape()) + ", W " +
                                shape_string(weight.shape()) + ", b " +
                                shape_string(bias.shape()));
  }
  Tensor z({encoded.rows(), kNumTags});
  for (std::size_t t = 0; t < encoded.rows(); ++t) {
    auto h = encoded.row(t);
    for (std::size_t j = 0; j < kNumTags; ++j) {
      auto w = weight.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < h.size(); ++k) acc += w[k] * h[k];
      z.at(t, j) = acc + bias[j];
    }
  }
  return z;
}

double token_nll(const Tensor& z, std::span<const Tag> gold) {
  if (z.rank() != 2 || z.cols() != kNumTags) {
    throw std::invalid_argument("token_nll: emissions must be T x 5");
  }
  check_path(z, gold);
  double loss = 0.0;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    loss += lse(z.row(t)) - z.at(t, index_of(gold[t]));
  }
  return loss;
}

double path_score(const Tensor& z, const Tensor& transitions, std::span<const Tag> path) {
  check_inputs(z, transitions);
  check_path(z, path);
  double score = 0.0;
  std::size_t prev = kStartState;
  for (std::size_t t = 0; t < path.size(); ++t) {
    const std::size_t y = index_of(path[t]);
    score += transitions.at(prev, y) + z.at(t, y);
    prev = y;
  }
  return score + transitions.at(prev, kStopState);
}

double log_partition(const Tensor& z, const Tensor& transitions) {
  check_inputs(z, transitions);
  return final_log_partition(forward_scores(z, transitions), transitions);
}

double crf_nll(const Tensor& z, const Tensor& transitions, std::span<const Tag> gold) {
  return log_partition(z, transitions) - path_score(z, transitions, gold);
}

CrfMarginals crf_marginals(const Tensor& z, const Tensor& a) {
  check_inputs(z, a);
  const std::size_t n = z.rows();
  const auto alpha = forward_scores(z, a);
  const auto beta = backward_scores(z, a);
  CrfMarginals m;
  m.log_partition = final_log_partition(alpha, a);
  const double log_z = m.log_partition;
  m.unary = Tensor({n, kNumTags});
  m.transitions = Tensor({kNumStates, kNumStates});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      m.unary.at(t, j) = std::exp(alpha[t][j] + beta[t][j] - log_z);
    }
  }
  for (std::size_t j = 0; j < kNumTags; ++j) {
    m.transitions.at(kStartState, j) = m.unary.at(0, j);
    m.transitions.at(j, kStopState) = m.unary.at(n - 1, j);
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t i = 0; i < kNumTags; ++i) {
      for (std::size_t j = 0; j < kNumTags; ++j) {
        m.transitions.at(i, j) +=
            std::exp(alpha[t - 1][i] + a.at(i, j) + z.at(t, j) + beta[t][j] - log_z);
      }
    }
  }
  return m;
}

ViterbiResult viterbi(const Tensor& z, const Tensor& transitions, bool constrained) {
  check_inputs(z, transitions);
  const std::size_t n = z.rows();
  auto trans = [&](std::size_t from, std::size_t to) {
    if (constrained && !transition_allowed(from, to)) return kNegInf;
    return transitions.at(from, to);
  };
  // best[t][i]: best suffix score after position t given tag i there.
  std::vector<Row> best(n);
  for (std::size_t i = 0; i < kNumTags; ++i) best[n - 1][i] = trans(i, kStopState);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < kNumTags; ++i) {
      double m = kNegInf;
      for (std::size_t j = 0; j < kNumTags; ++j) {
        m = std::max(m, trans(i, j) + z.at(t + 1, j) + best[t + 1][j]);
      }
      best[t][i] = m;
    }
  }
  // Decode left to right, taking the first maximizer at each position.
  ViterbiResult result;
  result.path.reserve(n);
  std::size_t prev = kStartState;
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t arg = 0;
    double m = kNegInf;
    for (std::size_t j = 0; j < kNumTags; ++j) {
      const double v = trans(prev, j) + z.at(t, j) + best[t][j];
      if (v > m) {
        m = v;
        arg = j;
      }
    }
    result.path.push_back(tag_from_index(arg));
    prev = arg;
  }
  result.score = path_score(z, transitions, result.path);
  return result;
}

ad::NodeId crf_nll_node(ad::Graph& g, ad::NodeId z, ad::NodeId transitions, TagSequence gold) {
  const ad::NodeId inputs[] = {z, transitions};
  return g.custom(std::make_shared<CrfNllOp>(std::move(gold)), inputs);
}

ad::NodeId token_nll_node(ad::Graph& g, std::span<const ad::NodeId> z_rows,
                          std::span<const Tag> gold) {
  if (z_rows.size() != gold.size() || z_rows.empty()) {
    throw std::invalid_argument("token_nll_node: emission/gold length mismatch");
  }
  std::vector<ad::NodeId> terms;
  terms.reserve(gold.size());
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const std::size_t y = index_of(gold[t]);
    terms.push_back(g.sub(g.log_sum_exp(z_rows[t]), g.slice(z_rows[t], y, y + 1)));
  }
  return g.sum(g.concat(terms));
}

}  // namespace cnet
