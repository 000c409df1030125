#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fediod/nets.hpp"
#include "fediod/optim.hpp"
#include "fediod/tensor.hpp"

namespace fediod {

class DistillError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Realized losses of one distillation step.
struct LossBundle {
  std::size_t step_index = 0;
  std::vector<double> l_gan_per_node;  // discriminator loss of each node
  double l_gan_generator = 0.0;        // sum of the pi_k-weighted generator adversarial terms
  double l_conf = 0.0;
  double l_unique = 0.0;
  double l_mimic = 0.0;

  /// Throws DistillError when an invariant is broken.
  void validate() const;
};

/// Per-sample, per-class weights over the K teachers.
struct ImportanceWeights {
  std::vector<Tensor> pi;            // K tensors, batch x C, normalized over k
  std::vector<Tensor> unnormalized;  // K tensors, batch x C

  std::size_t num_nodes() const { return pi.size(); }
  double at(std::size_t sample, std::size_t k, std::size_t c) const;
};

// ---- scalar helpers on plain probability vectors

/// -sum q log q in nats, with 0 log 0 = 0. Throws on a non-probability input.
double shannon_entropy(std::span<const double> q);
/// H(q_bar) - sum_k pi_k H(q_k) for K probability rows.
double jsd(const std::vector<std::vector<double>>& probs, std::span<const double> pi);

// ---- differentiable loss terms

/// Entropy of each row of a batch x C probability tensor, shape {batch}.
Tensor row_entropy(const Tensor& probs);
/// Per-sample weighted JSD over K teachers' batch x C probabilities, shape {batch}.
Tensor jsd_rows(const std::vector<Tensor>& teacher_probs, std::span<const double> pi);
/// Batch mean of sum_k pi_k H(q_k).
Tensor loss_conf(const std::vector<Tensor>& teacher_probs, std::span<const double> pi);
/// Batch mean of -JSD(q_1..q_K).
Tensor loss_unique(const std::vector<Tensor>& teacher_probs, std::span<const double> pi);

/// -mean log d_real - mean log(1 - d_fake).
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake);
/// -pi_k mean log d_fake (non-saturating generator term).
Tensor generator_adversarial_loss(const Tensor& d_fake, double pi_k);

struct GanLosses {
  Tensor discriminator;
  Tensor generator;
};
GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake, double pi_k);

/// K x C table of count_k(c) / sum_k' count_k'(c). Throws if a class has no samples anywhere.
std::vector<std::vector<double>> prior_ratio_table(const std::vector<std::vector<std::size_t>>& label_counts);

/// pi_hat_k^c(x) = prior[k][c] * d_k(x) / d_real_running[k], normalized over k.
/// `d_scalar` holds one batch x 1 score tensor per node.
ImportanceWeights importance_weights(const std::vector<std::vector<double>>& prior_ratios,
                                     const std::vector<Tensor>& d_scalar, std::span<const double> d_real_running);

/// A = sum_k pi_k (.) z_k.
Tensor aggregate_logits(const std::vector<Tensor>& teacher_logits, const ImportanceWeights& iw);

/// Batch mean of the squared L2 distance between rows.
Tensor loss_mimic(const Tensor& student_logits, const Tensor& aggregated_logits);

// ---- the full step

struct DistillHp {
  std::size_t batch_size = 64;
  double tau = 1.0;
  double lambda_conf = 1.0;
  double lambda_unique = 1.0;
  double lambda_mimic = 1.0;
  double lambda_gan = 1.0;
  double lr_generator = 1e-3;
  double lr_student = 1e-3;
  double lr_discriminator = 1e-3;
  /// Cosine annealing horizon; 0 keeps learning rates constant.
  std::size_t total_steps = 0;
  double ema_decay = 0.9;
  double running_floor = 1e-6;
  bool update_generator = true;
  bool update_discriminators = true;
  bool update_student = true;

  bool operator==(const DistillHp&) const = default;
};

/// Lets the federation layer observe and transform what crosses the node/server boundary.
class ExchangeHooks {
 public:
  virtual ~ExchangeHooks() = default;
  virtual void on_generated_batch(std::size_t /*node*/, const Tensor& /*x*/) {}
  virtual Tensor on_logits(std::size_t /*node*/, const Tensor& z) { return z; }
  virtual Tensor on_scores(std::size_t /*node*/, const Tensor& s) { return s; }
};

/// Server-side generator/student plus the per-node discriminators.
struct DistillState {
  Network generator;
  Network student;
  std::vector<Network> discriminators;
  Adam generator_opt;
  Adam student_opt;
  std::vector<Adam> discriminator_opts;
  std::vector<double> d_real_running;
  std::size_t step = 0;
  NoiseSpec noise;

  DistillState(Network g, Network s, std::vector<Network> discs, const DistillHp& hp);
};

/// Everything the generator's objective depends on, kept for inspection and gradient checks.
struct GeneratorObjective {
  Tensor x;
  std::vector<Tensor> teacher_logits;
  std::vector<Tensor> teacher_probs;
  std::vector<Tensor> d_fake;
  ImportanceWeights weights;
  Tensor aggregated;
  Tensor student_logits;
  Tensor conf, unique, mimic, gan, total;
};

/// L_conf + L_unique + sum_k loss_G_k - L_mimic (each scaled by its lambda), evaluated at `noise`.
GeneratorObjective generator_objective(const DistillState& state, const std::vector<const Network*>& teachers,
                                       const Tensor& noise, const std::vector<std::vector<double>>& prior_ratios,
                                       std::span<const double> pi, const DistillHp& hp, ExchangeHooks* hooks = nullptr);

/// One step of the input/output distillation loop: every D_k, then G, then S.
/// `real_batches[k]` is a batch drawn from node k's private shard.
LossBundle distill_step(DistillState& state, const std::vector<const Network*>& teachers,
                        const std::vector<Tensor>& real_batches, const std::vector<std::vector<double>>& prior_ratios,
                        std::span<const double> pi, Rng& rng, const DistillHp& hp, ExchangeHooks* hooks = nullptr,
                        const std::optional<Tensor>& fixed_noise = std::nullopt);

}  // namespace fediod
