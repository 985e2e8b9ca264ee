#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ukd::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the node first receives gradient
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;  // empty for leaves

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array that records the operations applied to it when any
/// input requires gradients. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const;
  /// Leading dimension of a rank-2 tensor (1 for vectors).
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from a scalar root. Non-leaf gradients are recomputed
  /// on every call; leaf gradients accumulate across calls.
  void backward() const;

  /// Value copy with no graph history and requires_grad = false.
  Tensor detach() const;
  /// Deep copy of values as a fresh leaf.
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Graph construction for op implementations.
  static Tensor make_result(Shape shape, std::vector<double> value,
                            std::vector<Tensor> inputs, detail::BackwardFn backward);
  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

}  // namespace ukd::num
