#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cnet/tensor.hpp"

// Reverse-mode differentiation over an explicit expression graph.
//
// A Graph is built once per sentence: named input leaves stand for trainable
// parameters, constants carry fixed data (dropout masks, collaborator
// signals), and every other node is an operation on earlier nodes, so node
// order is a topological order. evaluate() computes the forward values of
// everything the root depends on; backward() then propagates adjoints from a
// scalar root back to the named inputs.
//
// A Graph is not thread-safe. Build one per worker.

namespace cnet::ad {

struct NodeId {
  std::uint32_t index = 0;
};

enum class OpKind {
  kInput,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kSigmoid,
  kTanh,
  kConcat,
  kStack,
  kSlice,
  kRow,
  kMaxOverAxis,
  kMaxElementwise,
  kSoftmax,
  kLogSumExp,
  kSum,
  kDropoutMask,
  kCustom,
};

std::string_view op_name(OpKind kind);

// An operation defined outside this module, with a hand-written gradient.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string_view name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) const = 0;
  // Accumulates d(root)/d(input_i) into *input_adjoints[i].
  virtual void backward(std::span<const Tensor* const> inputs,
                        const Tensor& output, const Tensor& output_adjoint,
                        std::span<Tensor* const> input_adjoints) const = 0;
};

// Non-owning name -> tensor bindings for the input leaves. The bound tensors
// must outlive every evaluate()/backward() that uses them.
class Bindings {
 public:
  Bindings() = default;
  explicit Bindings(const TensorMap& tensors, std::string_view prefix = {});

  void bind(std::string name, const Tensor& tensor);
  void bind_all(const TensorMap& tensors, std::string_view prefix = {});
  const Tensor* find(const std::string& name) const;

 private:
  std::unordered_map<std::string, const Tensor*> bound_;
};

using Gradients = TensorMap;

class Graph {
 public:
  Graph();

  // Leaves. input() returns the same node for repeated names.
  NodeId input(const std::string& name);
  NodeId constant(Tensor value);

  // y = A x (A matrix, x vector), C = A B, or C = A B^T with transpose_b.
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  // Elementwise product; either side may be a size-1 scalar.
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  // Concatenates vectors end to end.
  NodeId concat(std::span<const NodeId> parts);
  // Stacks equal-length vectors as the rows of a matrix.
  NodeId stack(std::span<const NodeId> rows);
  // Elements [begin, end) of a vector.
  NodeId slice(NodeId x, std::size_t begin, std::size_t end);
  // Row r of a matrix, as a vector.
  NodeId row(NodeId x, std::size_t r);
  // Matrix, axis 0: max of each column. Axis 1: max of each row.
  // Vector, axis 0: the scalar maximum. Ties go to the lowest index.
  NodeId max_over_axis(NodeId x, std::size_t axis);
  // Coordinatewise max over same-shaped operands; ties go to the first.
  NodeId max_elementwise(std::span<const NodeId> operands);
  NodeId softmax(NodeId x);
  NodeId log_sum_exp(NodeId x);
  NodeId sum(NodeId x);
  // x * mask with a fixed mask; the mask is data, not a parameter.
  NodeId dropout(NodeId x, Tensor mask);
  NodeId custom(std::shared_ptr<const CustomOp> op,
                std::span<const NodeId> inputs);

  const Tensor& evaluate(NodeId root, const Bindings& bindings);
  // Gradient of the scalar root w.r.t. every input leaf of the graph. Leaves
  // the root does not depend on get zero tensors.
  Gradients backward(NodeId root);

  const Tensor& value(NodeId node) const;
  const Tensor& adjoint(NodeId node) const;
  std::size_t size() const { return nodes_.size(); }

  // When on, evaluate() rejects NaN/Inf intermediates. Defaults to on in
  // debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Node(OpKind k, std::vector<NodeId> c = {}, std::string nm = {})
        : kind(k), children(std::move(c)), name(std::move(nm)) {}
    OpKind kind;
    std::vector<NodeId> children;
    std::string name;
    const Tensor* external = nullptr;
    Tensor value;
    Tensor adjoint;
    Tensor mask;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t axis = 0;
    bool transpose_b = false;
    std::vector<std::uint32_t> argmax;
    std::shared_ptr<const CustomOp> custom;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  const Tensor& val(const Node& n) const {
    return n.external ? *n.external : n.value;
  }
  void forward_node(Node& n);
  void backward_node(Node& n);
  [[noreturn]] void shape_error(const Node& n, const std::string& detail) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> inputs_;
  std::vector<char> live_;
  bool evaluated_ = false;
  NodeId evaluated_root_{};
  bool check_finite_;
};

// --- gradient verification -------------------------------------------------

// Adds nodes for a scalar loss to a fresh graph and returns the root. Called
// once per loss evaluation, so it must be deterministic.
using LossBuilder = std::function<NodeId(Graph&)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor),
  // which keeps round-off in near-zero gradients from dominating.
  double relative_floor = 1e-6;
  // Only check these parameters (all when empty).
  std::vector<std::string> only;
  // Check at most this many coordinates per parameter, evenly strided
  // (0 = every coordinate).
  std::size_t max_coordinates = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

double loss_value(const LossBuilder& builder, const TensorMap& params);
Gradients loss_gradients(const LossBuilder& builder, const TensorMap& params,
                         double* loss = nullptr);

// Central differences against backward(). Throws if two evaluations of the
// loss at the same point disagree (e.g. a dropout mask redrawn per call).
GradCheckResult finite_diff_check(const LossBuilder& builder,
                                  TensorMap& params,
                                  const GradCheckOptions& options = {});

// Same comparison against caller-supplied analytic gradients.
GradCheckResult compare_with_finite_differences(
    const LossBuilder& builder, TensorMap& params, const Gradients& analytic,
    const GradCheckOptions& options = {});

}  // namespace cnet::ad
