#include "qsmlab/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace qsmlab::ad {

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Buffer& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::span<const double> values, bool requires_grad) {
  return from(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::from(Shape shape, Buffer values, bool requires_grad) {
  if (shape.empty() || shape.size() > 5) {
    throw DimensionError("tensor rank must be 1..5, got " + std::to_string(shape.size()));
  }
  if (ad::numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw ConfigError("requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, Buffer value, std::vector<Tensor> inputs,
                   BackwardFn backward, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->op = op;
#ifndef NDEBUG
  for (double v : node->value) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite output from ") + op);
  }
#endif
  const bool any = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->parents.reserve(inputs.size());
    for (auto& t : inputs) node->parents.push_back(t.ptr());
  }
  return Tensor(std::move(node));
}

ComputeGraph::ComputeGraph(const Tensor& loss) : loss_(loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward requires a scalar loss");
  }
  // Iterative post-order DFS; state 1 = on stack, 2 = done.
  std::unordered_map<Node*, int> state;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (loss.requires_grad()) stack.emplace_back(loss.node(), 0);
  state[loss.node()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      int& s = state[parent];
      assert(s != 1 && "cycle in compute graph");
      if (s == 0) {
        s = 1;
        stack.emplace_back(parent, 0);
      }
    } else {
      state[node] = 2;
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void ComputeGraph::backward() {
  if (order_.empty()) return;
  for (Node* n : order_) {
    if (!n->leaf) std::fill(n->grad_buffer().begin(), n->grad_buffer().end(), 0.0);
  }
  Node* root = order_.back();
  root->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (!n->leaf && n->backward) n->backward(*n);
  }
}

void backward(const Tensor& loss) { ComputeGraph(loss).backward(); }

Tensor& ParameterRegistry::add_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(t)});
  return params_.back().tensor;
}

Tensor& ParameterRegistry::add_buffer(std::string name, Tensor t) {
  buffers_.push_back({std::move(name), std::move(t)});
  return buffers_.back().tensor;
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) {
    auto g = p.tensor.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

std::size_t ParameterRegistry::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

ParameterRegistry ParameterRegistry::clone() const {
  ParameterRegistry out;
  for (const auto& p : params_) {
    out.add_parameter(p.name, Tensor::from(p.tensor.shape(), p.tensor.values()));
  }
  for (const auto& b : buffers_) out.add_buffer(b.name, b.tensor.detach());
  return out;
}

void ParameterRegistry::copy_values_from(const ParameterRegistry& other) {
  auto copy = [](std::vector<NamedTensor>& dst, const std::vector<NamedTensor>& src) {
    if (dst.size() != src.size()) throw DimensionError("parameter registries differ in size");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
        throw DimensionError("parameter mismatch at '" + dst[i].name + "'");
      }
      auto v = dst[i].tensor.mutable_values();
      std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), v.begin());
    }
  };
  copy(params_, other.params_);
  copy(buffers_, other.buffers_);
}

}  // namespace qsmlab::ad
