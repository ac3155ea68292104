#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>

#include "cnet/autodiff.hpp"
#include "cnet/rng.hpp"
#include "cnet/tensor.hpp"

namespace cnet {

// base * decay^epoch
double lr_for_epoch(std::size_t epoch, double base = 0.01, double decay = 0.95);

struct OptimizerState {
  // Sum of squared gradients per parameter, created zero on first use.
  TensorMap accumulators;
  double epsilon = 1e-8;
};

// accumulator += grad^2;  param -= lr * grad / (sqrt(accumulator) + epsilon)
void adagrad_step(Tensor& param, const Tensor& grad, Tensor& accumulator, double lr,
                  double epsilon = 1e-8);

// Applies adagrad_step to every parameter that has a gradient and is not in
// frozen. Gradients for names absent from params are ignored.
void adagrad_update(TensorMap& params, const ad::Gradients& grads, OptimizerState& state,
                    double lr, const std::set<std::string>& frozen = {});

enum class DropoutMode { kTrain, kEval };

// Inverted-dropout mask: 0 with probability rate, else 1 / (1 - rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

Tensor apply_dropout(const Tensor& x, double rate, DropoutMode mode, std::uint64_t seed);

}  // namespace cnet
