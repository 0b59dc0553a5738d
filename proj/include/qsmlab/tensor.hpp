#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "qsmlab/error.hpp"

namespace qsmlab::ad {

using Shape = std::vector<std::size_t>;

// Fixed 64-byte alignment keeps vectorised reductions in Eigen from taking
// address-dependent code paths, so results are bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t numel(const Shape& s);
std::string to_string(const Shape& s);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Propagates `self.grad` into the gradients of `self.parents`.
using BackwardFn = std::function<void(Node& self)>;

/// One value in the computation graph. Leaves own parameters and inputs;
/// interior nodes record their parents and a backward closure only when at
/// least one input requires a gradient.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::vector<NodePtr> parents;
  BackwardFn backward;
  const char* op = "leaf";

  // Zero-initialised gradient buffer of the right size.
  Buffer& grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
  static Tensor from(Shape shape, Buffer values, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access; for leaves (parameter init, optimizer updates).
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  void set_requires_grad(bool on);

  double item() const;
  // Leaf copy of the current values, cut from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

// While alive, ops on this thread record no graph (inference, validation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds the output node of an op. Parents and the backward closure are kept
// only when some input requires a gradient.
Tensor make_result(Shape shape, Buffer value, std::vector<Tensor> inputs,
                   BackwardFn backward, const char* op);

/// Nodes reachable from a scalar loss, in topological order (parents first).
class ComputeGraph {
 public:
  explicit ComputeGraph(const Tensor& loss);

  const std::vector<Node*>& order() const { return order_; }
  // Seeds d(loss) = 1, resets interior gradients, then visits every node once
  // in reverse topological order. Leaf gradients accumulate across calls.
  void backward();

 private:
  Tensor loss_;
  std::vector<Node*> order_;
};

void backward(const Tensor& loss);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Trainable parameters plus non-trainable buffers (batch-norm running stats).
class ParameterRegistry {
 public:
  Tensor& add_parameter(std::string name, Tensor t);
  Tensor& add_buffer(std::string name, Tensor t);

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<NamedTensor>& buffers() { return buffers_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }

  void zero_grad();
  std::size_t parameter_count() const;
  // Deep copy of values (gradients dropped).
  ParameterRegistry clone() const;
  // Copies values from a registry with identical names and shapes.
  void copy_values_from(const ParameterRegistry& other);

 private:
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

}  // namespace qsmlab::ad
