#include "cnet/encoder.hpp"

#include <stdexcept>

#include "cnet/embedding.hpp"

namespace cnet {
namespace {

constexpr char kGates[] = {'i', 'f', 'c', 'o'};

}  // namespace

std::string lstm_param_name(Direction dir, std::string_view param, char gate) {
  std::string name = dir == Direction::kForward ? "lstm/fw/" : "lstm/bw/";
  name += param;
  name += '_';
  name += gate;
  return name;
}

LstmState lstm_step(ad::Graph& g, ad::NodeId x, const LstmState& prev, Direction dir) {
  auto pre = [&](char gate) {
    const ad::NodeId wx = g.matmul(g.input(lstm_param_name(dir, "W_x", gate)), x);
    const ad::NodeId wh = g.matmul(g.input(lstm_param_name(dir, "W_h", gate)), prev.h);
    return g.add(g.add(wx, wh), g.input(lstm_param_name(dir, "b", gate)));
  };
  const ad::NodeId i = g.sigmoid(pre('i'));
  const ad::NodeId f = g.sigmoid(pre('f'));
  const ad::NodeId candidate = g.tanh(pre('c'));
  const ad::NodeId c = g.add(g.mul(f, prev.c), g.mul(i, candidate));
  const ad::NodeId o = g.sigmoid(pre('o'));
  const ad::NodeId h = g.mul(o, g.tanh(c));
  return {h, c};
}

BiLstmOutput bilstm_encode(ad::Graph& g, std::span<const ad::NodeId> inputs,
                           std::size_t hidden) {
  if (inputs.empty()) throw std::invalid_argument("bilstm_encode: empty sequence");
  const std::size_t n = inputs.size();
  const ad::NodeId zero = g.constant(Tensor({hidden}));

  BiLstmOutput out;
  out.forward.resize(n);
  out.backward.resize(n);
  LstmState state{zero, zero};
  for (std::size_t t = 0; t < n; ++t) {
    state = lstm_step(g, inputs[t], state, Direction::kForward);
    out.forward[t] = state.h;
  }
  state = {zero, zero};
  for (std::size_t t = n; t-- > 0;) {
    state = lstm_step(g, inputs[t], state, Direction::kBackward);
    out.backward[t] = state.h;
  }
  out.combined.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const ad::NodeId parts[] = {out.forward[t], out.backward[t]};
    out.combined.push_back(g.concat(parts));
  }
  return out;
}

void init_bilstm(TensorMap& params, std::size_t input_width, std::size_t hidden, Rng& rng) {
  for (Direction dir : {Direction::kForward, Direction::kBackward}) {
    for (char gate : kGates) {
      params[lstm_param_name(dir, "W_x", gate)] = xavier_uniform(hidden, input_width, rng);
      params[lstm_param_name(dir, "W_h", gate)] = xavier_uniform(hidden, hidden, rng);
      params[lstm_param_name(dir, "b", gate)] = Tensor({hidden}, gate == 'f' ? 1.0 : 0.0);
    }
  }
}

}  // namespace cnet
