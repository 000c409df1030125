#include "fediod/optim.hpp"

#include <cmath>
#include <numbers>

namespace fediod {

namespace {

void check_trainable(const std::vector<Tensor>& params, const char* who) {
  for (const auto& p : params) {
    if (!p.defined() || !p.requires_grad()) {
      throw TensorError(std::string(who) + ": parameter does not require grad (frozen?)");
    }
  }
}

}  // namespace

Adam::Adam(std::vector<Tensor> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  check_trainable(params_, "Adam");
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.has_grad()) throw TensorError("Adam: parameter " + shape_str(p.shape()) + " has no gradient");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_values();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g[j];
      v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
  check_trainable(params_, "Sgd");
}

void Sgd::step() {
  for (auto& p : params_) {
    if (!p.has_grad()) throw TensorError("Sgd: parameter " + shape_str(p.shape()) + " has no gradient");
    auto w = p.mutable_values();
    auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr_ * g[j];
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_annealing(double lr0, std::size_t t, std::size_t total) {
  if (total == 0 || t >= total) return 0.0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total)));
}

}  // namespace fediod
