#pragma once

// A miniature distillation setup (K teachers, C classes, tiny MLPs with tanh
// hidden layers so finite differences never straddle a ReLU kink).

#include <vector>

#include "fediod/distill.hpp"
#include "fediod/nets.hpp"

namespace fediod::testing {

struct Mini {
  std::vector<Network> teachers;
  std::vector<std::vector<double>> priors;
  std::vector<double> pi;
  DistillHp hp;
  DistillState state;
  Tensor noise;
  std::vector<Tensor> real;

  std::vector<const Network*> teacher_ptrs() const {
    std::vector<const Network*> out;
    for (const auto& t : teachers) out.push_back(&t);
    return out;
  }
};

inline std::vector<Network> mini_discs(std::size_t k, std::size_t d, std::uint64_t seed) {
  std::vector<Network> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(Network::build(Role::discriminator, {d, 5, 4}, Activation::tanh, seed + 30 + i));
  return out;
}

inline Mini make_mini(std::uint64_t seed = 1, std::size_t k = 2, std::size_t c = 2, std::size_t d = 3,
                      std::size_t batch = 4, std::size_t noise_dim = 4) {
  std::vector<Network> teachers;
  std::vector<std::vector<std::size_t>> counts;
  for (std::size_t i = 0; i < k; ++i) {
    auto t = Network::build(Role::teacher, {d, 6, c}, Activation::tanh, seed + 10 + i);
    t.freeze();
    teachers.push_back(t);
    std::vector<std::size_t> row(c);
    for (std::size_t j = 0; j < c; ++j) row[j] = 1 + (7 * i + 3 * j + seed) % 11;
    counts.push_back(row);
  }
  DistillHp hp;
  hp.batch_size = batch;
  std::vector<double> pi(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += (pi[i] = 1.0 + static_cast<double>(i));
  for (auto& p : pi) p /= total;

  Mini m{teachers,
         prior_ratio_table(counts),
         pi,
         hp,
         DistillState(Network::build(Role::generator, {noise_dim, 8, d}, Activation::tanh, seed + 1),
                      Network::build(Role::student, {d, 6, c}, Activation::tanh, seed + 2), mini_discs(k, d, seed), hp),
         Tensor(),
         {}};
  Rng rng(seed + 99);
  m.noise = sample_noise({noise_dim}, batch, rng);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> v(batch * d);
    for (auto& x : v) x = u(rng);
    m.real.push_back(Tensor::from({batch, d}, v));
  }
  return m;
}

}  // namespace fediod::testing
