#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cnet/autodiff.hpp"

namespace cnet::ad {

double loss_value(const LossBuilder& builder, const TensorMap& params) {
  Graph g;
  g.set_check_finite(true);
  const NodeId root = builder(g);
  return g.evaluate(root, Bindings(params)).item();
}

Gradients loss_gradients(const LossBuilder& builder, const TensorMap& params,
                         double* loss) {
  Graph g;
  g.set_check_finite(true);
  const NodeId root = builder(g);
  const double value = g.evaluate(root, Bindings(params)).item();
  if (loss) *loss = value;
  return g.backward(root);
}

GradCheckResult compare_with_finite_differences(const LossBuilder& builder,
                                                TensorMap& params,
                                                const Gradients& analytic,
                                                const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) {
    throw std::invalid_argument("finite_diff_check: epsilon must be positive");
  }
  GradCheckResult result;
  for (auto& [name, tensor] : params) {
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), name) == options.only.end()) {
      continue;
    }
    auto grad_it = analytic.find(name);
    if (grad_it == analytic.end()) continue;
    const Tensor& grad = grad_it->second;
    if (grad.shape() != tensor.shape()) {
      throw std::invalid_argument("finite_diff_check: gradient for '" + name +
                                  "' has shape " + shape_string(grad.shape()) +
                                  ", parameter has " + shape_string(tensor.shape()));
    }
    std::size_t stride = 1;
    if (options.max_coordinates > 0 && tensor.size() > options.max_coordinates) {
      stride = (tensor.size() + options.max_coordinates - 1) / options.max_coordinates;
    }
    for (std::size_t i = 0; i < tensor.size(); i += stride) {
      const double original = tensor[i];
      tensor[i] = original + options.epsilon;
      const double plus = loss_value(builder, params);
      tensor[i] = original - options.epsilon;
      const double minus = loss_value(builder, params);
      tensor[i] = original;

      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = grad[i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.relative_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = rel;
        result.worst_parameter = name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult finite_diff_check(const LossBuilder& builder, TensorMap& params,
                                  const GradCheckOptions& options) {
  const double first = loss_value(builder, params);
  const double second = loss_value(builder, params);
  if (std::memcmp(&first, &second, sizeof(double)) != 0) {
    throw std::runtime_error(
        "finite_diff_check: loss is not deterministic between evaluations; "
        "fix the dropout masks (or evaluate in inference mode) first");
  }
  const Gradients analytic = loss_gradients(builder, params);
  return compare_with_finite_differences(builder, params, analytic, options);
}

}  // namespace cnet::ad
