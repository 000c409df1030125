#include <doctest.h>

#include <cmath>
#include <random>

#include "fediod/distill.hpp"
#include "mini.hpp"
#include "support.hpp"

using namespace fediod;
using fediod::testing::gradient_error;
using fediod::testing::make_mini;
using fediod::testing::random_simplex;
using fediod::testing::random_tensor;

namespace {

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

Tensor probs_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), rows.front().size()}, flat);
}

Tensor col(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n, 1}, std::move(v));
}

}  // namespace

TEST_CASE("shannon entropy") {
  CHECK(shannon_entropy(std::vector<double>{0, 1, 0}) == 0.0);
  CHECK(shannon_entropy(std::vector<double>{.25, .25, .25, .25}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(std::abs(shannon_entropy(std::vector<double>{.5, .25, .25}) - 1.039721) <= 1e-6);
  CHECK(shannon_entropy(std::vector<double>{.5, .25, .25}) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(shannon_entropy(std::vector<double>{.5, .6}), DistillError);
  CHECK_THROWS_AS(shannon_entropy(std::vector<double>{1.5, -.5}), DistillError);
}

TEST_CASE("loss_conf examples") {
  std::vector<double> half{0.5, 0.5};
  auto onehot = probs_tensor({{1, 0}, {0, 1}});
  CHECK(loss_conf({onehot, onehot}, half).item() == 0.0);
  auto uni = probs_tensor({{.25, .25, .25, .25}});
  CHECK(loss_conf({uni, uni}, half).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  auto q1 = probs_tensor({{.5, .5}});
  auto q2 = probs_tensor({{1, 0}});
  CHECK(loss_conf({q1, q2}, half).item() == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(loss_conf({q1, q2}, std::vector<double>{1.0}), DistillError);
  CHECK_THROWS_AS(loss_conf({q1, q2}, std::vector<double>{0.7, 0.7}), DistillError);
}

TEST_CASE("jsd examples and identities") {
  std::vector<double> half{0.5, 0.5};
  CHECK(jsd({{.2, .8}, {.2, .8}}, half) == doctest::Approx(0.0));
  CHECK(jsd({{1, 0}, {0, 1}}, half) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 4, c = 2 + trial % 5;
    std::vector<std::vector<double>> q;
    for (std::size_t i = 0; i < k; ++i) q.push_back(random_simplex(c, rng));
    auto w = random_simplex(k, rng);
    std::vector<double> mix(c, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < c; ++j) mix[j] += w[i] * q[i][j];
    double kl_form = 0.0;
    for (std::size_t i = 0; i < k; ++i) kl_form += w[i] * kl(q[i], mix);
    const double j = jsd(q, w);
    CHECK(std::abs(j - kl_form) <= 1e-10);
    CHECK(j >= -1e-15);
    CHECK(j <= std::log(static_cast<double>(k)) + 1e-12);
  }
}

TEST_CASE("loss_unique") {
  std::vector<double> half{0.5, 0.5};
  auto a = probs_tensor({{.3, .7}, {.9, .1}});
  CHECK(loss_unique({a, a}, half).item() == doctest::Approx(0.0));
  CHECK(loss_unique({probs_tensor({{1, 0}}), probs_tensor({{0, 1}})}, half).item() ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-14));

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 3;
    std::vector<Tensor> qs;
    for (std::size_t i = 0; i < k; ++i) qs.push_back(probs_tensor({random_simplex(3, rng), random_simplex(3, rng)}));
    auto w = random_simplex(k, rng);
    const double u = loss_unique(qs, w).item();
    CHECK(u <= 1e-15);
    CHECK(u >= -std::log(static_cast<double>(k)) - 1e-12);
  }
}

TEST_CASE("gan losses") {
  auto half = col({0.5, 0.5, 0.5});
  CHECK(discriminator_loss(half, half).item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
  auto perfect = discriminator_loss(col({1.0, 1.0}), col({0.0, 0.0})).item();
  CHECK(perfect >= 0.0);
  CHECK(perfect < 1e-9);
  auto g = gan_losses(half, half, 0.25);
  CHECK(g.generator.item() == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(discriminator_loss(col({1.5}), col({0.5})), DistillError);

  std::mt19937_64 rng(3);
  auto d = random_tensor({6, 1}, rng, 0.01, 0.99);
  generator_adversarial_loss(d, 0.3).backward();
  for (double v : d.grad()) CHECK(v < 0.0);
}

TEST_CASE("importance weights") {
  SUBCASE("single node gets everything") {
    auto iw = importance_weights({{1.0, 1.0}}, {col({0.2, 0.9})}, std::vector<double>{0.5});
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t c = 0; c < 2; ++c) CHECK(iw.at(s, 0, c) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("symmetric nodes split evenly") {
    auto iw = importance_weights({{1.0 / 3}, {1.0 / 3}, {1.0 / 3}}, {col({0.4}), col({0.4}), col({0.4})},
                                 std::vector<double>{0.5, 0.5, 0.5});
    for (std::size_t k = 0; k < 3; ++k) CHECK(iw.at(0, k, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("worked example: priors [0.75, 0.25], score ratios [1, 2]") {
    auto iw = importance_weights({{0.75}, {0.25}}, {col({0.5}), col({0.5})}, std::vector<double>{0.5, 0.25});
    CHECK(iw.unnormalized[0].item() == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(iw.unnormalized[1].item() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::abs(iw.at(0, 0, 0) - 0.6) <= 1e-12);
    CHECK(std::abs(iw.at(0, 1, 0) - 0.4) <= 1e-12);
  }
  SUBCASE("class held by nobody is a configuration error") {
    CHECK_THROWS_AS(importance_weights({{0.5, 0.0}, {0.5, 0.0}}, {col({0.5}), col({0.5})}, std::vector<double>{.5, .5}),
                    DistillError);
    CHECK_THROWS_AS(prior_ratio_table({{1, 0}, {2, 0}}), DistillError);
  }
  SUBCASE("normalization and scale consistency on random draws") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t k = 2 + trial % 3, c = 3, b = 5;
      std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(c));
      for (auto& row : counts)
        for (auto& x : row) x = 1 + rng() % 20;
      const auto priors = prior_ratio_table(counts);
      std::vector<Tensor> d;
      std::vector<double> running, scaled;
      std::vector<Tensor> z;
      for (std::size_t i = 0; i < k; ++i) {
        d.push_back(random_tensor({b, 1}, rng, 0.05, 0.95, false));
        running.push_back(0.1 + 0.8 * (rng() % 100) / 100.0);
        scaled.push_back(running.back() * 3.7);
        z.push_back(random_tensor({b, c}, rng, -4, 4, false));
      }
      auto iw = importance_weights(priors, d, running);
      auto iw2 = importance_weights(priors, d, scaled);
      auto a = aggregate_logits(z, iw);
      auto a2 = aggregate_logits(z, iw2);
      auto s = random_tensor({b, c}, rng, -4, 4, false);
      CHECK(std::abs(loss_mimic(s, a).item() - loss_mimic(s, a2).item()) <= 1e-12);
      for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t j = 0; j < c; ++j) {
          double total = 0.0, lo = 1e300, hi = -1e300;
          for (std::size_t i = 0; i < k; ++i) {
            total += iw.at(n, i, j);
            CHECK(iw.at(n, i, j) >= 0.0);
            CHECK(std::abs(iw.at(n, i, j) - iw2.at(n, i, j)) <= 1e-12);
            lo = std::min(lo, z[i].at(n, j));
            hi = std::max(hi, z[i].at(n, j));
          }
          CHECK(std::abs(total - 1.0) <= 1e-9);
          CHECK(a.at(n, j) >= lo - 1e-12);
          CHECK(a.at(n, j) <= hi + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("aggregate logits") {
  auto z1 = Tensor::matrix({{2, 0}});
  auto z2 = Tensor::matrix({{0, 2}});
  auto iw = importance_weights({{0.6, 0.6}, {0.4, 0.4}}, {col({0.5}), col({0.5})}, std::vector<double>{.5, .5});
  auto a = aggregate_logits({z1, z2}, iw);
  CHECK(std::abs(a.at(0) - 1.2) <= 1e-12);
  CHECK(std::abs(a.at(1) - 0.8) <= 1e-12);

  auto only = importance_weights({{1.0, 1.0}}, {col({0.3})}, std::vector<double>{.5});
  auto same = aggregate_logits({z1}, only);
  CHECK(same.at(0) == 2.0);
  CHECK(same.at(1) == 0.0);

  auto z = Tensor::matrix({{1.5, -0.5}});
  auto fixed = aggregate_logits({z, z}, iw);
  CHECK(fixed.at(0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(fixed.at(1) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK_THROWS_AS(aggregate_logits({z1, Tensor::matrix({{1, 2, 3}})}, iw), DistillError);
}

TEST_CASE("loss_mimic") {
  auto s = Tensor::matrix({{1, 0}});
  CHECK(loss_mimic(s, s).item() == 0.0);
  CHECK(loss_mimic(s, Tensor::matrix({{0, 1}})).item() == 2.0);
  CHECK_THROWS_AS(loss_mimic(s, Tensor::matrix({{0, 1, 2}})), DistillError);

  std::mt19937_64 rng(5);
  auto st = random_tensor({4, 3}, rng);
  auto at = random_tensor({4, 3}, rng, -1, 1, false);
  loss_mimic(st, at).backward();
  for (std::size_t i = 0; i < st.size(); ++i) CHECK(st.grad()[i] == doctest::Approx(2.0 * (st.at(i) - at.at(i)) / 4.0));
  CHECK(gradient_error([&] { return loss_mimic(st, at); }, {st}) <= 1e-6);
}

TEST_CASE("every loss term matches central differences on the miniature setup") {
  auto m = make_mini(3);
  std::mt19937_64 rng(6);
  const auto& pi = m.pi;
  auto z1 = random_tensor({4, 2}, rng, -2, 2);
  auto z2 = random_tensor({4, 2}, rng, -2, 2);
  auto probs = [&] { return std::vector<Tensor>{softmax_tau(z1, 1.0), softmax_tau(z2, 1.0)}; };
  CHECK(gradient_error([&] { return loss_conf(probs(), pi); }, {z1, z2}) <= 1e-4);
  CHECK(gradient_error([&] { return loss_unique(probs(), pi); }, {z1, z2}) <= 1e-4);

  auto& disc = m.state.discriminators[0];
  auto x = random_tensor({4, 3}, rng);
  auto d_leaves = disc.parameters();
  d_leaves.push_back(x);
  CHECK(gradient_error(
            [&] {
              return discriminator_loss(discriminator_scalar(disc.forward(m.real[0])),
                                        discriminator_scalar(disc.forward(x)));
            },
            d_leaves) <= 1e-4);
  CHECK(gradient_error([&] { return generator_adversarial_loss(discriminator_scalar(disc.forward(x)), pi[0]); },
                       d_leaves) <= 1e-4);

  auto s = random_tensor({4, 2}, rng);
  CHECK(gradient_error([&] { return loss_mimic(s, add(z1, z2)); }, {s, z1, z2}) <= 1e-4);

  auto g_leaves = m.state.generator.parameters();
  auto total = [&] {
    return generator_objective(m.state, m.teacher_ptrs(), m.noise, m.priors, pi, m.hp).total;
  };
  CHECK(gradient_error(total, g_leaves) <= 1e-4);
}

TEST_CASE("distill_step keeps teachers frozen and bundles valid") {
  auto m = make_mini(4, 3, 3, 3, 6);
  std::vector<std::uint64_t> before;
  for (const auto& t : m.teachers) before.push_back(t.checksum());
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    auto b = distill_step(m.state, m.teacher_ptrs(), m.real, m.priors, m.pi, rng, m.hp);
    CHECK(b.step_index == static_cast<std::size_t>(i));
    CHECK(b.l_gan_per_node.size() == 3);
    CHECK_NOTHROW(b.validate());
    CHECK(b.l_conf >= 0.0);
    CHECK(b.l_unique <= 0.0);
    CHECK(b.l_mimic >= 0.0);
  }
  for (std::size_t k = 0; k < m.teachers.size(); ++k) CHECK(m.teachers[k].checksum() == before[k]);
  for (double r : m.state.d_real_running) CHECK(r >= m.hp.running_floor);
}

TEST_CASE("distill_step updates each network exactly once") {
  auto m = make_mini(5);
  const auto g0 = m.state.generator.checksum(), s0 = m.state.student.checksum();
  const auto d0 = m.state.discriminators[0].checksum();
  Rng rng(2);
  distill_step(m.state, m.teacher_ptrs(), m.real, m.priors, m.pi, rng, m.hp);
  CHECK(m.state.generator.checksum() != g0);
  CHECK(m.state.student.checksum() != s0);
  CHECK(m.state.discriminators[0].checksum() != d0);
  CHECK(m.state.generator_opt.steps_taken() == 1);
  CHECK(m.state.student_opt.steps_taken() == 1);
  for (const auto& opt : m.state.discriminator_opts) CHECK(opt.steps_taken() == 1);
}

TEST_CASE("distill_step rejects unfrozen teachers") {
  auto m = make_mini(6);
  auto live = Network::build(Role::teacher, {3, 6, 2}, Activation::tanh, 1);
  std::vector<const Network*> teachers{&m.teachers[0], &live};
  Rng rng(3);
  CHECK_THROWS_AS(distill_step(m.state, teachers, m.real, m.priors, m.pi, rng, m.hp), DistillError);
}

TEST_CASE("student alone drives the mimic loss down on a fixed batch") {
  auto m = make_mini(7, 2, 2, 3, 16);
  m.hp.update_generator = false;
  m.hp.update_discriminators = false;
  m.hp.lr_student = 1e-2;
  m.state.student_opt.set_lr(1e-2);
  Rng rng(4);
  Rng noise_rng(5);
  const Tensor noise = sample_noise(m.state.noise, 16, noise_rng);
  std::vector<double> window_means;
  double acc = 0.0;
  for (int i = 0; i < 200; ++i) {
    acc += distill_step(m.state, m.teacher_ptrs(), m.real, m.priors, m.pi, rng, m.hp, nullptr, noise).l_mimic;
    if ((i + 1) % 20 == 0) {
      window_means.push_back(acc / 20.0);
      acc = 0.0;
    }
  }
  for (std::size_t w = 1; w < window_means.size(); ++w) CHECK(window_means[w] <= window_means[w - 1]);
  CHECK(window_means.back() < 0.5 * window_means.front());
}

TEST_CASE("loss bundle validation") {
  LossBundle ok;
  ok.l_gan_per_node = {1.0};
  ok.l_conf = 0.3;
  ok.l_unique = -0.1;
  ok.l_mimic = 1.0;
  CHECK_NOTHROW(ok.validate());
  auto bad = ok;
  bad.l_conf = -0.5;
  CHECK_THROWS_AS(bad.validate(), DistillError);
  bad = ok;
  bad.l_mimic = std::nan("");
  CHECK_THROWS_AS(bad.validate(), DistillError);
}
