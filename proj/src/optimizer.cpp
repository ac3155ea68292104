#include "cnet/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cnet {

double lr_for_epoch(std::size_t epoch, double base, double decay) {
  return base * std::pow(decay, static_cast<double>(epoch));
}

void adagrad_step(Tensor& param, const Tensor& grad, Tensor& accumulator, double lr,
                  double epsilon) {
  if (param.shape() != grad.shape() || param.shape() != accumulator.shape()) {
    throw std::invalid_argument("adagrad_step: shape mismatch " + shape_string(param.shape()) +
                                " / " + shape_string(grad.shape()) + " / " +
                                shape_string(accumulator.shape()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0) continue;
    accumulator[i] += g * g;
    param[i] -= lr * g / (std::sqrt(accumulator[i]) + epsilon);
  }
}

void adagrad_update(TensorMap& params, const ad::Gradients& grads, OptimizerState& state,
                    double lr, const std::set<std::string>& frozen) {
  for (const auto& [name, grad] : grads) {
    if (frozen.count(name)) continue;
    auto it = params.find(name);
    if (it == params.end()) continue;
    auto [acc, inserted] = state.accumulators.try_emplace(name, Tensor::zeros_like(it->second));
    adagrad_step(it->second, grad, acc->second, lr, state.epsilon);
  }
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& v : mask.data()) v = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

Tensor apply_dropout(const Tensor& x, double rate, DropoutMode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == DropoutMode::kEval || rate == 0.0) return x;
  Rng rng(seed);
  const Tensor mask = dropout_mask(x.shape(), rate, rng);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

}  // namespace cnet
