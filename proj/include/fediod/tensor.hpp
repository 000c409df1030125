#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fediod {

using Shape = std::vector<std::size_t>;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One record on the tape. Inputs always carry a smaller sequence number than
// the node that consumes them, so sorting by sequence gives a topological order.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t seq = 0;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

/// Dense fp64 array with reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle; copies share the same storage. Operations on
/// tensors that require grad record themselves on the calling thread's tape,
/// and `backward()` replays the reachable part of the tape in exact reverse
/// insertion order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  /// Direct write access for optimizers and initializers; not recorded on the tape.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Position on the tape at creation time. Monotone per thread.
  std::uint64_t tape_position() const;
  const std::string& op_name() const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  Tensor clone() const;

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

enum class Reduce { sum, mean, max };

// Linear algebra and structure.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// a[m×n] + b[n] (or b[1×n]) added to every row.
Tensor add_row(const Tensor& a, const Tensor& b);

// Elementwise binary ops: equal shapes, or either side a single-element tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor exp(const Tensor& a);
/// Natural log; throws on non-positive input.
Tensor log(const Tensor& a);
/// log(max(a, floor)); gradient is zero where the floor is active.
Tensor clamped_log(const Tensor& a, double floor = 1e-12);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor reduce(Reduce op, const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
inline Tensor sum(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(Reduce::sum, a, axis);
}
inline Tensor mean(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(Reduce::mean, a, axis);
}
inline Tensor max(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(Reduce::max, a, axis);
}

/// Temperature softmax along the last axis (rank 1 or 2).
Tensor softmax_tau(const Tensor& z, double tau = 1.0);
/// Log-softmax along the last axis (rank 1 or 2).
Tensor log_softmax(const Tensor& z);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double k) { return scale(a, k); }
inline Tensor operator*(double k, const Tensor& a) { return scale(a, k); }

}  // namespace fediod
