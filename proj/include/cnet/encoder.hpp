#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cnet/autodiff.hpp"
#include "cnet/rng.hpp"
#include "cnet/tensor.hpp"

namespace cnet {

enum class Direction { kForward, kBackward };

// Parameter names follow "lstm/fw/W_xi", "lstm/bw/b_o", ... with gates
// i (input), f (forget), c (candidate), o (output).
std::string lstm_param_name(Direction dir, std::string_view param, char gate);

struct LstmState {
  ad::NodeId h;
  ad::NodeId c;
};

// One step of
//   i = s(W_xi x + W_hi h + b_i), f = s(W_xf x + W_hf h + b_f),
//   c' = f * c + i * tanh(W_xc x + W_hc h + b_c),
//   o = s(W_xo x + W_ho h + b_o),  h' = o * tanh(c').
LstmState lstm_step(ad::Graph& g, ad::NodeId x, const LstmState& prev, Direction dir);

struct BiLstmOutput {
  std::vector<ad::NodeId> forward;   // h_t^f
  std::vector<ad::NodeId> backward;  // h_t^b
  std::vector<ad::NodeId> combined;  // [h_t^f, h_t^b]
};

// Forward states left to right and backward states right to left over the
// same inputs, each starting from zero h and c.
BiLstmOutput bilstm_encode(ad::Graph& g, std::span<const ad::NodeId> inputs,
                           std::size_t hidden);

// Xavier-uniform weights, zero biases except b_f = 1, for both directions.
void init_bilstm(TensorMap& params, std::size_t input_width, std::size_t hidden, Rng& rng);

}  // namespace cnet
