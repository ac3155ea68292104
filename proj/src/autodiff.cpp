#include "cnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cnet/kernels.hpp"

namespace cnet::ad {
namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp_of(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

void axpy(std::span<double> y, std::span<const double> x, double scale = 1.0) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kConcat: return "concat";
    case OpKind::kStack: return "stack";
    case OpKind::kSlice: return "slice";
    case OpKind::kRow: return "row";
    case OpKind::kMaxOverAxis: return "max_over_axis";
    case OpKind::kMaxElementwise: return "max_elementwise";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSumExp: return "log_sum_exp";
    case OpKind::kSum: return "sum";
    case OpKind::kDropoutMask: return "dropout";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

// --- Bindings ---------------------------------------------------------------

Bindings::Bindings(const TensorMap& tensors, std::string_view prefix) {
  bind_all(tensors, prefix);
}

void Bindings::bind(std::string name, const Tensor& tensor) {
  bound_[std::move(name)] = &tensor;
}

void Bindings::bind_all(const TensorMap& tensors, std::string_view prefix) {
  for (const auto& [name, t] : tensors) bind(std::string(prefix) + name, t);
}

const Tensor* Bindings::find(const std::string& name) const {
  auto it = bound_.find(name);
  return it == bound_.end() ? nullptr : it->second;
}

// --- Graph construction -----------------------------------------------------

Graph::Graph() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

NodeId Graph::push(Node node) {
  for (NodeId c : node.children) {
    if (c.index >= nodes_.size()) {
      throw std::invalid_argument(std::string(op_name(node.kind)) +
                                  ": child node does not belong to this graph");
    }
  }
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw std::out_of_range("node id out of range");
  }
  return nodes_[id.index];
}

NodeId Graph::input(const std::string& name) {
  auto it = inputs_.find(name);
  if (it != inputs_.end()) return it->second;
  Node n{OpKind::kInput, {}, name};
  NodeId id = push(std::move(n));
  inputs_.emplace(name, id);
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n{OpKind::kConstant, {}};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
  Node n{OpKind::kMatMul, {a, b}};
  n.transpose_b = transpose_b;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return push(Node{OpKind::kAdd, {a, b}}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Node{OpKind::kSub, {a, b}}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Node{OpKind::kMul, {a, b}}); }
NodeId Graph::sigmoid(NodeId x) { return push(Node{OpKind::kSigmoid, {x}}); }
NodeId Graph::tanh(NodeId x) { return push(Node{OpKind::kTanh, {x}}); }

NodeId Graph::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  return push(Node{OpKind::kConcat, {parts.begin(), parts.end()}});
}

NodeId Graph::stack(std::span<const NodeId> rows) {
  if (rows.empty()) throw std::invalid_argument("stack: no operands");
  return push(Node{OpKind::kStack, {rows.begin(), rows.end()}});
}

NodeId Graph::slice(NodeId x, std::size_t begin, std::size_t end) {
  if (begin >= end) {
    throw std::invalid_argument("slice: empty range [" + std::to_string(begin) +
                                ", " + std::to_string(end) + ")");
  }
  Node n{OpKind::kSlice, {x}};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

NodeId Graph::row(NodeId x, std::size_t r) {
  Node n{OpKind::kRow, {x}};
  n.begin = r;
  return push(std::move(n));
}

NodeId Graph::max_over_axis(NodeId x, std::size_t axis) {
  if (axis > 1) throw std::invalid_argument("max_over_axis: axis must be 0 or 1");
  Node n{OpKind::kMaxOverAxis, {x}};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::max_elementwise(std::span<const NodeId> operands) {
  if (operands.empty()) {
    throw std::invalid_argument("max_elementwise: no operands");
  }
  return push(Node{OpKind::kMaxElementwise, {operands.begin(), operands.end()}});
}

NodeId Graph::softmax(NodeId x) { return push(Node{OpKind::kSoftmax, {x}}); }
NodeId Graph::log_sum_exp(NodeId x) {
  return push(Node{OpKind::kLogSumExp, {x}});
}
NodeId Graph::sum(NodeId x) { return push(Node{OpKind::kSum, {x}}); }

NodeId Graph::dropout(NodeId x, Tensor mask) {
  Node n{OpKind::kDropoutMask, {x}};
  n.mask = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::custom(std::shared_ptr<const CustomOp> op,
                     std::span<const NodeId> inputs) {
  if (!op) throw std::invalid_argument("custom: null op");
  Node n{OpKind::kCustom, {inputs.begin(), inputs.end()}};
  n.custom = std::move(op);
  return push(std::move(n));
}

// --- Forward ----------------------------------------------------------------

void Graph::shape_error(const Node& n, const std::string& detail) const {
  std::string what = std::string(op_name(n.kind));
  if (n.kind == OpKind::kCustom) what += " (" + std::string(n.custom->name()) + ")";
  throw std::invalid_argument(what + ": shape mismatch: " + detail);
}

const Tensor& Graph::evaluate(NodeId root, const Bindings& bindings) {
  if (root.index >= nodes_.size()) throw std::out_of_range("evaluate: bad root");
  evaluated_ = false;

  for (auto& [name, id] : inputs_) {
    const Tensor* t = bindings.find(name);
    if (!t) throw std::invalid_argument("evaluate: input '" + name + "' is not bound");
    nodes_[id.index].external = t;
  }

  live_.assign(nodes_.size(), 0);
  live_[root.index] = 1;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (!live_[i]) continue;
    for (NodeId c : nodes_[i].children) live_[c.index] = 1;
  }

  for (std::size_t i = 0; i <= root.index; ++i) {
    if (!live_[i]) continue;
    Node& n = nodes_[i];
    if (n.kind == OpKind::kInput || n.kind == OpKind::kConstant) {
      if (check_finite_ && !val(n).all_finite()) {
        throw std::runtime_error("non-finite value in " +
                                 std::string(op_name(n.kind)) +
                                 (n.name.empty() ? "" : " '" + n.name + "'"));
      }
      continue;
    }
    forward_node(n);
    if (check_finite_ && !n.value.all_finite()) {
      throw std::runtime_error("non-finite value produced by " +
                               std::string(op_name(n.kind)) + " (node " +
                               std::to_string(i) + ")");
    }
  }
  evaluated_ = true;
  evaluated_root_ = root;
  return val(nodes_[root.index]);
}

void Graph::forward_node(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor& {
    return val(nodes_[n.children[k].index]);
  };
  switch (n.kind) {
    case OpKind::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2) shape_error(n, "left operand " + shape_string(a.shape()) + " is not a matrix");
      const std::size_t m = a.rows(), k = a.cols();
      if (b.rank() == 1 && !n.transpose_b) {
        if (b.size() != k) shape_error(n, shape_string(a.shape()) + " x " + shape_string(b.shape()));
        n.value = Tensor({m});
        kernels::gemv(a.data().data(), m, k, b.data().data(), n.value.data().data());
      } else if (b.rank() == 2) {
        const std::size_t inner = n.transpose_b ? b.cols() : b.rows();
        const std::size_t cols = n.transpose_b ? b.rows() : b.cols();
        if (inner != k) {
          shape_error(n, shape_string(a.shape()) + " x " + shape_string(b.shape()) +
                             (n.transpose_b ? "^T" : ""));
        }
        n.value = Tensor({m, cols});
        kernels::gemm(a.data().data(), b.data().data(), n.value.data().data(), m, k,
                      cols, n.transpose_b);
      } else {
        shape_error(n, shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) shape_error(n, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
      n.value = a;
      const double s = n.kind == OpKind::kAdd ? 1.0 : -1.0;
      axpy(n.value.data(), b.data(), s);
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() == b.shape()) {
        n.value = a;
        for (std::size_t i = 0; i < a.size(); ++i) n.value[i] *= b[i];
      } else if (a.is_scalar() || b.is_scalar()) {
        const Tensor& s = a.is_scalar() ? a : b;
        const Tensor& t = a.is_scalar() ? b : a;
        n.value = t;
        const double c = s[0];
        if (a.is_scalar()) {
          for (std::size_t i = 0; i < t.size(); ++i) n.value[i] = c * t[i];
        } else {
          for (std::size_t i = 0; i < t.size(); ++i) n.value[i] = t[i] * c;
        }
      } else {
        shape_error(n, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
      }
      break;
    }
    case OpKind::kSigmoid: {
      n.value = in(0);
      for (double& v : n.value.data()) v = stable_sigmoid(v);
      break;
    }
    case OpKind::kTanh: {
      n.value = in(0);
      for (double& v : n.value.data()) v = std::tanh(v);
      break;
    }
    case OpKind::kConcat: {
      std::vector<double> out;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        const Tensor& p = in(k);
        if (p.rank() != 1) shape_error(n, "operand " + shape_string(p.shape()) + " is not a vector");
        out.insert(out.end(), p.data().begin(), p.data().end());
      }
      n.value = Tensor::vector(std::move(out));
      break;
    }
    case OpKind::kStack: {
      const std::size_t width = in(0).size();
      std::vector<double> out;
      out.reserve(width * n.children.size());
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        const Tensor& p = in(k);
        if (p.rank() != 1 || p.size() != width) {
          shape_error(n, "row " + std::to_string(k) + " has shape " + shape_string(p.shape()) +
                             ", expected [" + std::to_string(width) + "]");
        }
        out.insert(out.end(), p.data().begin(), p.data().end());
      }
      n.value = Tensor::matrix(n.children.size(), width, std::move(out));
      break;
    }
    case OpKind::kSlice: {
      const Tensor& x = in(0);
      if (x.rank() != 1 || n.end > x.size()) {
        shape_error(n, "range [" + std::to_string(n.begin) + ", " + std::to_string(n.end) +
                           ") of " + shape_string(x.shape()));
      }
      n.value = Tensor::vector(std::vector<double>(x.data().begin() + n.begin,
                                                   x.data().begin() + n.end));
      break;
    }
    case OpKind::kRow: {
      const Tensor& x = in(0);
      if (x.rank() != 2 || n.begin >= x.rows()) {
        shape_error(n, "row " + std::to_string(n.begin) + " of " + shape_string(x.shape()));
      }
      auto r = x.row(n.begin);
      n.value = Tensor::vector(std::vector<double>(r.begin(), r.end()));
      break;
    }
    case OpKind::kMaxOverAxis: {
      const Tensor& x = in(0);
      if (x.rank() == 1) {
        if (n.axis != 0) shape_error(n, "axis 1 of vector " + shape_string(x.shape()));
        std::size_t best = 0;
        for (std::size_t i = 1; i < x.size(); ++i) {
          if (x[i] > x[best]) best = i;
        }
        n.argmax = {static_cast<std::uint32_t>(best)};
        n.value = Tensor::scalar(x[best]);
        break;
      }
      const std::size_t rows = x.rows(), cols = x.cols();
      if (n.axis == 0) {
        n.value = Tensor({cols});
        n.argmax.assign(cols, 0);
        for (std::size_t c = 0; c < cols; ++c) {
          std::size_t best = c;
          for (std::size_t r = 1; r < rows; ++r) {
            if (x[r * cols + c] > x[best]) best = r * cols + c;
          }
          n.argmax[c] = static_cast<std::uint32_t>(best);
          n.value[c] = x[best];
        }
      } else {
        n.value = Tensor({rows});
        n.argmax.assign(rows, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          std::size_t best = r * cols;
          for (std::size_t c = 1; c < cols; ++c) {
            if (x[r * cols + c] > x[best]) best = r * cols + c;
          }
          n.argmax[r] = static_cast<std::uint32_t>(best);
          n.value[r] = x[best];
        }
      }
      break;
    }
    case OpKind::kMaxElementwise: {
      const Tensor& first = in(0);
      n.value = first;
      n.argmax.assign(first.size(), 0);
      for (std::size_t k = 1; k < n.children.size(); ++k) {
        const Tensor& t = in(k);
        if (t.shape() != first.shape()) {
          shape_error(n, "operand " + std::to_string(k) + " " + shape_string(t.shape()) +
                             " vs " + shape_string(first.shape()));
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (t[i] > n.value[i]) {
            n.value[i] = t[i];
            n.argmax[i] = static_cast<std::uint32_t>(k);
          }
        }
      }
      break;
    }
    case OpKind::kSoftmax: {
      const Tensor& x = in(0);
      const double m = *std::max_element(x.data().begin(), x.data().end());
      n.value = x;
      double total = 0.0;
      for (double& v : n.value.data()) {
        v = std::exp(v - m);
        total += v;
      }
      for (double& v : n.value.data()) v /= total;
      break;
    }
    case OpKind::kLogSumExp:
      n.value = Tensor::scalar(log_sum_exp_of(in(0).data()));
      break;
    case OpKind::kSum: {
      double acc = 0.0;
      for (double v : in(0).data()) acc += v;
      n.value = Tensor::scalar(acc);
      break;
    }
    case OpKind::kDropoutMask: {
      const Tensor& x = in(0);
      if (x.shape() != n.mask.shape()) {
        shape_error(n, "input " + shape_string(x.shape()) + " vs mask " + shape_string(n.mask.shape()));
      }
      n.value = x;
      for (std::size_t i = 0; i < x.size(); ++i) n.value[i] *= n.mask[i];
      break;
    }
    case OpKind::kCustom: {
      std::vector<const Tensor*> inputs;
      inputs.reserve(n.children.size());
      for (std::size_t k = 0; k < n.children.size(); ++k) inputs.push_back(&in(k));
      n.value = n.custom->forward(inputs);
      break;
    }
    case OpKind::kInput:
    case OpKind::kConstant:
      break;
  }
}

// --- Backward ---------------------------------------------------------------

Gradients Graph::backward(NodeId root) {
  if (!evaluated_) throw std::logic_error("backward called before evaluate");
  if (root.index != evaluated_root_.index) {
    throw std::logic_error("backward root differs from the evaluated root");
  }
  const Tensor& out = val(nodes_[root.index]);
  if (!out.is_scalar()) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_string(out.shape()));
  }

  for (std::size_t i = 0; i <= root.index; ++i) {
    if (live_[i]) nodes_[i].adjoint = Tensor::zeros_like(val(nodes_[i]));
  }
  nodes_[root.index].adjoint[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    if (!live_[i]) continue;
    Node& n = nodes_[i];
    if (n.kind == OpKind::kInput || n.kind == OpKind::kConstant) continue;
    backward_node(n);
  }

  Gradients grads;
  for (const auto& [name, id] : inputs_) {
    const Node& n = nodes_[id.index];
    if (id.index <= root.index && live_[id.index]) {
      grads.emplace(name, n.adjoint);
    } else {
      grads.emplace(name, Tensor::zeros_like(*n.external));
    }
  }
  return grads;
}

void Graph::backward_node(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor& {
    return val(nodes_[n.children[k].index]);
  };
  auto adj = [&](std::size_t k) -> Tensor& {
    return nodes_[n.children[k].index].adjoint;
  };
  const Tensor& dy = n.adjoint;

  switch (n.kind) {
    case OpKind::kMatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t m = a.rows(), k = a.cols();
      if (b.rank() == 1) {
        kernels::ger_acc(adj(0).data().data(), m, k, dy.data().data(), b.data().data());
        kernels::gemv_t_acc(a.data().data(), m, k, dy.data().data(), adj(1).data().data());
      } else if (!n.transpose_b) {
        const std::size_t cols = b.cols();
        Tensor tmp({m, k});
        kernels::gemm(dy.data().data(), b.data().data(), tmp.data().data(), m, cols, k, true);
        axpy(adj(0).data(), tmp.data());
        kernels::gemm_tn_acc(a.data().data(), dy.data().data(), adj(1).data().data(), m, k, cols);
      } else {
        const std::size_t rows_b = b.rows();
        Tensor tmp({m, k});
        kernels::gemm(dy.data().data(), b.data().data(), tmp.data().data(), m, rows_b, k, false);
        axpy(adj(0).data(), tmp.data());
        kernels::gemm_tn_acc(dy.data().data(), a.data().data(), adj(1).data().data(), m, rows_b, k);
      }
      break;
    }
    case OpKind::kAdd:
      axpy(adj(0).data(), dy.data());
      axpy(adj(1).data(), dy.data());
      break;
    case OpKind::kSub:
      axpy(adj(0).data(), dy.data());
      axpy(adj(1).data(), dy.data(), -1.0);
      break;
    case OpKind::kMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() == b.shape()) {
        Tensor& da = adj(0);
        Tensor& db = adj(1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          da[i] += dy[i] * b[i];
          db[i] += dy[i] * a[i];
        }
      } else {
        const std::size_t s_idx = a.is_scalar() ? 0 : 1;
        const Tensor& s = in(s_idx);
        const Tensor& t = in(1 - s_idx);
        Tensor& ds = adj(s_idx);
        Tensor& dt = adj(1 - s_idx);
        double acc = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
          acc += dy[i] * t[i];
          dt[i] += dy[i] * s[0];
        }
        ds[0] += acc;
      }
      break;
    }
    case OpKind::kSigmoid: {
      Tensor& dx = adj(0);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const double y = n.value[i];
        dx[i] += dy[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::kTanh: {
      Tensor& dx = adj(0);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const double y = n.value[i];
        dx[i] += dy[i] * (1.0 - y * y);
      }
      break;
    }
    case OpKind::kConcat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        Tensor& dp = adj(k);
        axpy(dp.data(), dy.data().subspan(offset, dp.size()));
        offset += dp.size();
      }
      break;
    }
    case OpKind::kStack: {
      for (std::size_t k = 0; k < n.children.size(); ++k) axpy(adj(k).data(), dy.row(k));
      break;
    }
    case OpKind::kSlice:
      axpy(adj(0).data().subspan(n.begin, n.end - n.begin), dy.data());
      break;
    case OpKind::kRow:
      axpy(adj(0).row(n.begin), dy.data());
      break;
    case OpKind::kMaxOverAxis: {
      Tensor& dx = adj(0);
      for (std::size_t o = 0; o < n.argmax.size(); ++o) dx[n.argmax[o]] += dy[o];
      break;
    }
    case OpKind::kMaxElementwise: {
      for (std::size_t i = 0; i < n.argmax.size(); ++i) adj(n.argmax[i])[i] += dy[i];
      break;
    }
    case OpKind::kSoftmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * n.value[i];
      Tensor& dx = adj(0);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += n.value[i] * (dy[i] - dot);
      break;
    }
    case OpKind::kLogSumExp: {
      const Tensor& x = in(0);
      const double lse = n.value[0];
      Tensor& dx = adj(0);
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[0] * std::exp(x[i] - lse);
      break;
    }
    case OpKind::kSum: {
      Tensor& dx = adj(0);
      for (double& v : dx.data()) v += dy[0];
      break;
    }
    case OpKind::kDropoutMask: {
      Tensor& dx = adj(0);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * n.mask[i];
      break;
    }
    case OpKind::kCustom: {
      std::vector<const Tensor*> inputs;
      std::vector<Tensor*> adjoints;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        inputs.push_back(&in(k));
        adjoints.push_back(&adj(k));
      }
      n.custom->backward(inputs, n.value, dy, adjoints);
      break;
    }
    case OpKind::kInput:
    case OpKind::kConstant:
      break;
  }
}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = node(id);
  if (n.kind == OpKind::kConstant) return n.value;
  if (!evaluated_ || id.index >= live_.size() || !live_[id.index] ||
      id.index > evaluated_root_.index) {
    throw std::logic_error("value(): node was not computed by the last evaluate()");
  }
  return val(n);
}

const Tensor& Graph::adjoint(NodeId id) const {
  const Node& n = node(id);
  if (n.adjoint.empty()) throw std::logic_error("adjoint(): no backward pass reached this node");
  return n.adjoint;
}

}  // namespace cnet::ad
