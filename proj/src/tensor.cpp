#include "fediod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace fediod {

namespace {

thread_local std::uint64_t tape_counter = 0;

using NodePtr = std::shared_ptr<detail::Node>;

std::uint64_t next_position() { return ++tape_counter; }

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw TensorError("value count " + std::to_string(values.size()) + " does not match shape " +
                      shape_str(shape));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw TensorError("shape dimensions must be positive, got " + shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  n->seq = next_position();
  n->op = "leaf";
  return n;
}

void ensure_grad(detail::Node& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

// Builds the output node of an operation. The result joins the graph only when
// some input requires grad; otherwise it is a constant leaf.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<NodePtr> inputs, std::function<void(detail::Node&)> backward_fn) {
  for (double v : values) {
    if (!std::isfinite(v)) throw TensorError(std::string("non-finite value produced by ") + op);
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->seq = next_position();
  n->op = op;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (any) {
    n->requires_grad = true;
    n->leaf = false;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw TensorError(std::string(op) + ": undefined tensor");
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw TensorError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

template <class F, class G>
Tensor unary(const char* op, const Tensor& a, F f, G dfdx) {
  require_defined(a, op);
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a.node()}, [dfdx](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    ensure_grad(in);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
    }
  });
}

// Binary elementwise op with scalar broadcasting on either side.
// df returns {d/da, d/db} given (a, b, out).
template <class F, class DF>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DF df) {
  require_defined(a, op);
  require_defined(b, op);
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(out_shape);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  return make_result(op, out_shape, std::move(out), {a.node(), b.node()},
                     [df, a_scalar, b_scalar](detail::Node& self) {
                       auto& na = *self.inputs[0];
                       auto& nb = *self.inputs[1];
                       if (na.requires_grad) ensure_grad(na);
                       if (nb.requires_grad) ensure_grad(nb);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const std::size_t ia = a_scalar ? 0 : i;
                         const std::size_t ib = b_scalar ? 0 : i;
                         auto [da, db] = df(na.value[ia], nb.value[ib], self.value[i]);
                         if (na.requires_grad) na.grad[ia] += self.grad[i] * da;
                         if (nb.requires_grad) nb.grad[ib] += self.grad[i] * db;
                       }
                     });
}

struct AxisLayout {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisLayout layout_for(const Shape& s, std::size_t axis) {
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  l.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(make_leaf({n}, std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  std::vector<double> flat;
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw TensorError("ragged matrix literal");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor(make_leaf({r, c}, std::move(flat), requires_grad));
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw TensorError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw TensorError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= size()) throw TensorError("index out of range");
  return node_->value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank2(*this, "at");
  if (r >= shape()[0] || c >= shape()[1]) throw TensorError("index out of range");
  return node_->value[r * shape()[1] + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require_defined(*this, "set_requires_grad");
  if (!node_->leaf) throw TensorError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw TensorError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::uint64_t Tensor::tape_position() const {
  require_defined(*this, "tape_position");
  return node_->seq;
}

const std::string& Tensor::op_name() const {
  require_defined(*this, "op_name");
  return node_->op;
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(make_leaf(node_->shape, node_->value, false));
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  return Tensor(make_leaf(node_->shape, node_->value, node_->leaf && node_->requires_grad));
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (size() != 1) throw TensorError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (detail::Node* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  ensure_grad(*node_);
  node_->grad[0] += 1.0;
  for (detail::Node* n : order) {
    if (!n->leaf && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- structure

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw TensorError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](detail::Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      ensure_grad(na);
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * nb.value[p * n + j];
          na.grad[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      ensure_grad(nb);
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double x = na.value[i * k + p];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) nb.grad[p * n + j] += x * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto av = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a.node()}, [r, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    ensure_grad(in);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_size(shape) != a.size()) {
    throw TensorError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    ensure_grad(in);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_defined(a, "add_row");
  require_defined(b, "add_row");
  require_rank2(a, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (b.size() != n) {
    throw TensorError("add_row: row of " + shape_str(b.shape()) + " does not fit " + shape_str(a.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + bv[j];
  return make_result("add_row", {m, n}, std::move(out), {a.node(), b.node()}, [m, n](detail::Node& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (na.requires_grad) {
      ensure_grad(na);
      for (std::size_t i = 0; i < m * n; ++i) na.grad[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      ensure_grad(nb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) nb.grad[j] += self.grad[i * n + j];
    }
  });
}

// ---------------------------------------------------------------- elementwise

namespace {
struct Pair {
  double da, db;
};
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double, double) { return Pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double, double) { return Pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double x, double y, double) { return Pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(b, "div");
  for (double v : b.values()) {
    if (v == 0.0) throw TensorError("div: division by zero");
  }
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double x, double y, double) { return Pair{1.0 / y, -x / (y * y)}; });
}

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (double v : a.values()) {
    if (!(v > 0.0)) throw TensorError("log: non-positive argument " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamped_log(const Tensor& a, double floor) {
  if (!(floor > 0.0)) throw TensorError("clamped_log: floor must be positive");
  return unary("clamped_log", a, [floor](double x) { return std::log(std::max(x, floor)); },
               [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw TensorError("clamp: lo > hi");
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Tensor reduce(Reduce op, const Tensor& a, std::optional<std::size_t> axis) {
  require_defined(a, "reduce");
  if (a.size() == 0) throw TensorError("reduce: empty tensor");
  const char* name = op == Reduce::sum ? "sum" : (op == Reduce::mean ? "mean" : "max");

  Shape out_shape;
  AxisLayout l;
  if (axis) {
    if (*axis >= a.rank()) {
      throw TensorError(std::string(name) + ": axis " + std::to_string(*axis) + " out of range for " +
                        shape_str(a.shape()));
    }
    l = layout_for(a.shape(), *axis);
    out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
  } else {
    l.extent = a.size();
  }

  auto av = a.values();
  const std::size_t n_out = l.outer * l.inner;
  std::vector<double> out(n_out, 0.0);
  std::vector<std::size_t> argmax(op == Reduce::max ? n_out : 0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t dst = o * l.inner + i;
      if (op == Reduce::max) {
        std::size_t best = 0;
        double best_v = av[(o * l.extent) * l.inner + i];
        for (std::size_t j = 1; j < l.extent; ++j) {
          const double v = av[(o * l.extent + j) * l.inner + i];
          if (v > best_v) {
            best_v = v;
            best = j;
          }
        }
        out[dst] = best_v;
        argmax[dst] = best;
      } else {
        double acc = 0.0;
        for (std::size_t j = 0; j < l.extent; ++j) acc += av[(o * l.extent + j) * l.inner + i];
        out[dst] = op == Reduce::mean ? acc / static_cast<double>(l.extent) : acc;
      }
    }
  }
  return make_result(name, std::move(out_shape), std::move(out), {a.node()},
                     [op, l, argmax = std::move(argmax)](detail::Node& self) {
                       auto& in = *self.inputs[0];
                       ensure_grad(in);
                       const double k = op == Reduce::mean ? 1.0 / static_cast<double>(l.extent) : 1.0;
                       for (std::size_t o = 0; o < l.outer; ++o) {
                         for (std::size_t i = 0; i < l.inner; ++i) {
                           const std::size_t src = o * l.inner + i;
                           const double g = self.grad[src];
                           if (op == Reduce::max) {
                             in.grad[(o * l.extent + argmax[src]) * l.inner + i] += g;
                           } else {
                             for (std::size_t j = 0; j < l.extent; ++j) in.grad[(o * l.extent + j) * l.inner + i] += g * k;
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------- softmax

Tensor softmax_tau(const Tensor& z, double tau) {
  require_defined(z, "softmax_tau");
  if (!(tau > 0.0)) throw TensorError("softmax_tau: temperature must be positive");
  if (z.rank() != 1 && z.rank() != 2) throw TensorError("softmax_tau: expected rank 1 or 2");
  const std::size_t c = z.shape().back();
  const std::size_t rows = z.size() / c;
  auto zv = z.values();
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &zv[r * c];
    double* y = &out[r * c];
    const double m = *std::max_element(in, in + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp((in[j] - m) / tau);
      s += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  return make_result("softmax_tau", z.shape(), std::move(out), {z.node()}, [rows, c, tau](detail::Node& self) {
    auto& in = *self.inputs[0];
    ensure_grad(in);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &self.value[r * c];
      const double* g = &self.grad[r * c];
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) in.grad[r * c + j] += y[j] * (g[j] - dot) / tau;
    }
  });
}

Tensor log_softmax(const Tensor& z) {
  require_defined(z, "log_softmax");
  if (z.rank() != 1 && z.rank() != 2) throw TensorError("log_softmax: expected rank 1 or 2");
  const std::size_t c = z.shape().back();
  const std::size_t rows = z.size() / c;
  auto zv = z.values();
  std::vector<double> out(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &zv[r * c];
    const double m = *std::max_element(in, in + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(in[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = in[j] - lse;
  }
  return make_result("log_softmax", z.shape(), std::move(out), {z.node()}, [rows, c](detail::Node& self) {
    auto& in = *self.inputs[0];
    ensure_grad(in);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &self.value[r * c];
      const double* g = &self.grad[r * c];
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += g[j];
      for (std::size_t j = 0; j < c; ++j) in.grad[r * c + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

}  // namespace fediod
