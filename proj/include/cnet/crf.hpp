#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "cnet/autodiff.hpp"
#include "cnet/tags.hpp"
#include "cnet/tensor.hpp"

// Linear-chain CRF over the five BIOES tags.
//
// Emissions z are T x 5. The transition matrix A is 7 x 7 over
// {B, I, O, E, S, START, STOP}; A[from][to]. A path y_1..y_T scores
//   sum_t (A[y_{t-1}][y_t] + z_t[y_t]) + A[y_T][STOP],  y_0 = START.

namespace cnet {

inline constexpr std::string_view kEmitWeightName = "emit/W";
inline constexpr std::string_view kEmitBiasName = "emit/b";
inline constexpr std::string_view kTransitionName = "crf/A";

// z_t = W h_t + b for every row of encoded (T x 2d).
Tensor emissions(const Tensor& encoded, const Tensor& weight, const Tensor& bias);

// -sum_t log softmax(z_t)[gold_t]
double token_nll(const Tensor& z, std::span<const Tag> gold);

double path_score(const Tensor& z, const Tensor& transitions, std::span<const Tag> path);

// log of the sum of exp(path_score) over all 5^T paths (forward algorithm).
double log_partition(const Tensor& z, const Tensor& transitions);

// log_partition - path_score(gold); the negative log-likelihood of gold.
double crf_nll(const Tensor& z, const Tensor& transitions, std::span<const Tag> gold);

inline double total_loss(double token_loss, double crf_loss) { return token_loss + crf_loss; }

struct CrfMarginals {
  Tensor unary;        // T x 5, P(y_t = j)
  Tensor transitions;  // 7 x 7, expected number of uses of each transition
  double log_partition = 0.0;
};

CrfMarginals crf_marginals(const Tensor& z, const Tensor& transitions);

struct ViterbiResult {
  TagSequence path;
  double score = 0.0;  // path_score of path
};

// Highest-scoring path. Among equal scores the lowest tag index wins, earlier
// positions first (the lexicographically smallest optimal path). With
// constrained set, structurally impossible BIOES transitions are excluded.
ViterbiResult viterbi(const Tensor& z, const Tensor& transitions, bool constrained = false);

// Graph node for crf_nll with gradients
//   dz = marginals - onehot(gold),  dA = expected counts - gold counts.
ad::NodeId crf_nll_node(ad::Graph& g, ad::NodeId z, ad::NodeId transitions, TagSequence gold);

// Graph node for token_nll over per-token emission vectors.
ad::NodeId token_nll_node(ad::Graph& g, std::span<const ad::NodeId> z_rows,
                          std::span<const Tag> gold);

}  // namespace cnet
