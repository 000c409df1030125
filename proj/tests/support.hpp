#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fediod/tensor.hpp"

namespace fediod::testing {

/// Norm-wise relative error between two gradient vectors.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(std::max(na, nb)), 1e-12);
  return std::sqrt(diff) / denom;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

/// Central differences of a scalar-valued f with respect to every entry of `leaves`.
inline std::vector<double> numeric_grad(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h = 1e-5) {
  std::vector<double> out;
  for (auto& leaf : leaves) {
    auto v = leaf.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = f().item();
      v[i] = keep - h;
      const double down = f().item();
      v[i] = keep;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

/// Reverse-mode gradient of f with respect to `leaves`, concatenated in order.
inline std::vector<double> analytic_grad(const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
  for (auto& l : leaves) l.zero_grad();
  f().backward();
  std::vector<double> out;
  for (auto& l : leaves) {
    if (l.has_grad()) {
      auto g = l.grad();
      out.insert(out.end(), g.begin(), g.end());
    } else {
      out.insert(out.end(), l.size(), 0.0);
    }
  }
  return out;
}

inline double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double h = 1e-5) {
  return rel_error(analytic_grad(f, leaves), numeric_grad(f, leaves, h));
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Random probability vector of length c, strictly positive entries.
inline std::vector<double> random_simplex(std::size_t c, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(c);
  double s = 0.0;
  for (auto& x : v) s += (x = e(rng) + 1e-9);
  for (auto& x : v) x /= s;
  return v;
}

}  // namespace fediod::testing
