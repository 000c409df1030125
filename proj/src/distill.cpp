#include "fediod/distill.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace fediod {

namespace {

constexpr double kLogFloor = 1e-12;

void check_weights(std::span<const double> pi, std::size_t k, const char* who) {
  if (pi.size() != k) {
    throw DistillError(std::string(who) + ": " + std::to_string(pi.size()) + " weights for " + std::to_string(k) +
                       " teachers");
  }
  double total = 0.0;
  for (double w : pi) {
    if (!(w >= 0.0)) throw DistillError(std::string(who) + ": negative weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw DistillError(std::string(who) + ": weights do not sum to 1");
}

void check_same_shapes(const std::vector<Tensor>& ts, const char* who) {
  if (ts.empty()) throw DistillError(std::string(who) + ": no teachers");
  for (const auto& t : ts) {
    if (t.rank() != 2 || t.shape() != ts.front().shape()) {
      throw DistillError(std::string(who) + ": teacher outputs must share one batch x C shape");
    }
  }
}

Tensor weighted_sum(const std::vector<Tensor>& ts, std::span<const double> w) {
  Tensor acc = scale(ts[0], w[0]);
  for (std::size_t k = 1; k < ts.size(); ++k) acc = add(acc, scale(ts[k], w[k]));
  return acc;
}

}  // namespace

void LossBundle::validate() const {
  auto bad = [this](const std::string& what) {
    std::ostringstream os;
    os << "step " << step_index << ": " << what << " (conf=" << l_conf << ", unique=" << l_unique
       << ", mimic=" << l_mimic << ")";
    throw DistillError(os.str());
  };
  for (double v : l_gan_per_node)
    if (!std::isfinite(v)) bad("non-finite discriminator loss");
  if (!std::isfinite(l_conf) || !std::isfinite(l_unique) || !std::isfinite(l_mimic) || !std::isfinite(l_gan_generator))
    bad("non-finite loss");
  if (l_conf < -1e-12) bad("negative confidence loss");
  if (l_unique > 1e-12) bad("positive uniqueness loss");
  if (l_mimic < 0.0) bad("negative mimic loss");
}

double ImportanceWeights::at(std::size_t sample, std::size_t k, std::size_t c) const {
  return pi.at(k).at(sample, c);
}

// ------------------------------------------------------------------ scalars

double shannon_entropy(std::span<const double> q) {
  double total = 0.0;
  for (double v : q) {
    if (!(v >= 0.0)) throw DistillError("entropy: negative or NaN probability");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-6) throw DistillError("entropy: probabilities sum to " + std::to_string(total));
  double h = 0.0;
  for (double v : q)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double jsd(const std::vector<std::vector<double>>& probs, std::span<const double> pi) {
  if (probs.empty()) throw DistillError("jsd: no distributions");
  check_weights(pi, probs.size(), "jsd");
  const std::size_t c = probs.front().size();
  std::vector<double> mix(c, 0.0);
  double inner = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k].size() != c) throw DistillError("jsd: rows differ in length");
    inner += pi[k] * shannon_entropy(probs[k]);
    for (std::size_t j = 0; j < c; ++j) mix[j] += pi[k] * probs[k][j];
  }
  return shannon_entropy(mix) - inner;
}

// ------------------------------------------------------------------ tensor losses

Tensor row_entropy(const Tensor& probs) {
  if (probs.rank() != 2) throw DistillError("row_entropy expects batch x C probabilities");
  return neg(sum(mul(probs, clamped_log(probs, kLogFloor)), 1));
}

Tensor jsd_rows(const std::vector<Tensor>& teacher_probs, std::span<const double> pi) {
  check_same_shapes(teacher_probs, "jsd");
  check_weights(pi, teacher_probs.size(), "jsd");
  const Tensor mix = weighted_sum(teacher_probs, pi);
  std::vector<Tensor> h;
  for (const auto& q : teacher_probs) h.push_back(row_entropy(q));
  return sub(row_entropy(mix), weighted_sum(h, pi));
}

Tensor loss_conf(const std::vector<Tensor>& teacher_probs, std::span<const double> pi) {
  check_same_shapes(teacher_probs, "loss_conf");
  check_weights(pi, teacher_probs.size(), "loss_conf");
  std::vector<Tensor> h;
  for (const auto& q : teacher_probs) h.push_back(row_entropy(q));
  return mean(weighted_sum(h, pi));
}

Tensor loss_unique(const std::vector<Tensor>& teacher_probs, std::span<const double> pi) {
  return neg(mean(jsd_rows(teacher_probs, pi)));
}

namespace {
void check_scores(const Tensor& s, const char* who) {
  for (double v : s.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DistillError(std::string(who) + ": score outside [0, 1]");
  }
}
}  // namespace

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  check_scores(d_real, "discriminator_loss");
  check_scores(d_fake, "discriminator_loss");
  return sub(neg(mean(clamped_log(d_real, kLogFloor))), mean(clamped_log(add_scalar(neg(d_fake), 1.0), kLogFloor)));
}

Tensor generator_adversarial_loss(const Tensor& d_fake, double pi_k) {
  check_scores(d_fake, "generator_adversarial_loss");
  return scale(mean(clamped_log(d_fake, kLogFloor)), -pi_k);
}

GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake, double pi_k) {
  return {discriminator_loss(d_real, d_fake), generator_adversarial_loss(d_fake, pi_k)};
}

std::vector<std::vector<double>> prior_ratio_table(const std::vector<std::vector<std::size_t>>& label_counts) {
  if (label_counts.empty()) throw DistillError("no label statistics");
  const std::size_t c_count = label_counts.front().size();
  std::vector<std::vector<double>> out(label_counts.size(), std::vector<double>(c_count, 0.0));
  for (std::size_t c = 0; c < c_count; ++c) {
    std::size_t total = 0;
    for (const auto& row : label_counts) total += row.at(c);
    if (total == 0) throw DistillError("class " + std::to_string(c) + " is held by no node");
    for (std::size_t k = 0; k < label_counts.size(); ++k)
      out[k][c] = static_cast<double>(label_counts[k][c]) / static_cast<double>(total);
  }
  return out;
}

ImportanceWeights importance_weights(const std::vector<std::vector<double>>& prior_ratios,
                                     const std::vector<Tensor>& d_scalar, std::span<const double> d_real_running) {
  const std::size_t k_count = prior_ratios.size();
  if (k_count == 0 || d_scalar.size() != k_count || d_real_running.size() != k_count) {
    throw DistillError("importance_weights: node count mismatch");
  }
  const std::size_t c_count = prior_ratios.front().size();
  ImportanceWeights iw;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!(d_real_running[k] > 0.0)) throw DistillError("importance_weights: running real score must be positive");
    if (d_scalar[k].rank() != 2 || d_scalar[k].dim(1) != 1) {
      throw DistillError("importance_weights: scores must be batch x 1");
    }
    const Tensor prior = Tensor::from({1, c_count}, prior_ratios[k]);
    // (batch x 1) * (1 x C) is the outer product: every class column scaled by the score ratio.
    iw.unnormalized.push_back(matmul(scale(d_scalar[k], 1.0 / d_real_running[k]), prior));
  }
  Tensor total = iw.unnormalized[0];
  for (std::size_t k = 1; k < k_count; ++k) total = add(total, iw.unnormalized[k]);
  const auto tv = total.values();
  for (std::size_t i = 0; i < tv.size(); ++i) {
    if (!(tv[i] > 0.0)) {
      throw DistillError("importance_weights: class " + std::to_string(i % c_count) +
                         " has zero total weight (no node holds it?)");
    }
  }
  for (const auto& u : iw.unnormalized) iw.pi.push_back(div(u, total));
  return iw;
}

Tensor aggregate_logits(const std::vector<Tensor>& teacher_logits, const ImportanceWeights& iw) {
  check_same_shapes(teacher_logits, "aggregate_logits");
  if (iw.pi.size() != teacher_logits.size()) throw DistillError("aggregate_logits: weight/teacher count mismatch");
  Tensor acc;
  for (std::size_t k = 0; k < teacher_logits.size(); ++k) {
    if (iw.pi[k].shape() != teacher_logits[k].shape()) throw DistillError("aggregate_logits: shape mismatch");
    Tensor term = mul(iw.pi[k], teacher_logits[k]);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

Tensor loss_mimic(const Tensor& student_logits, const Tensor& aggregated_logits) {
  if (student_logits.rank() != 2 || student_logits.shape() != aggregated_logits.shape()) {
    throw DistillError("loss_mimic: shape mismatch " + shape_str(student_logits.shape()) + " vs " +
                       shape_str(aggregated_logits.shape()));
  }
  return mean(sum(square(sub(student_logits, aggregated_logits)), 1));
}

// ------------------------------------------------------------------ state and step

namespace {
std::vector<Adam> make_disc_opts(const std::vector<Network>& discs, double lr) {
  std::vector<Adam> out;
  for (const auto& d : discs) out.emplace_back(d.parameters(), AdamOptions{.lr = lr});
  return out;
}
}  // namespace

DistillState::DistillState(Network g, Network s, std::vector<Network> discs, const DistillHp& hp)
    : generator(std::move(g)),
      student(std::move(s)),
      discriminators(std::move(discs)),
      generator_opt(generator.parameters(), AdamOptions{.lr = hp.lr_generator}),
      student_opt(student.parameters(), AdamOptions{.lr = hp.lr_student}),
      discriminator_opts(make_disc_opts(discriminators, hp.lr_discriminator)),
      d_real_running(discriminators.size(), 0.5) {
  noise.dim = generator.input_dim();
  if (generator.role() != Role::generator || student.role() != Role::student) {
    throw DistillError("distillation state needs a generator and a student");
  }
}

GeneratorObjective generator_objective(const DistillState& state, const std::vector<const Network*>& teachers,
                                       const Tensor& noise, const std::vector<std::vector<double>>& prior_ratios,
                                       std::span<const double> pi, const DistillHp& hp, ExchangeHooks* hooks) {
  const std::size_t k_count = teachers.size();
  if (k_count == 0 || state.discriminators.size() != k_count) {
    throw DistillError("generator_objective: need one discriminator per teacher");
  }
  GeneratorObjective obj;
  obj.x = state.generator.forward(noise);

  std::vector<Tensor> d_sent;
  std::vector<Tensor> gan_terms;
  for (std::size_t k = 0; k < k_count; ++k) {
    Tensor z = teachers[k]->forward(obj.x);
    if (hooks) z = hooks->on_logits(k, z);
    obj.teacher_logits.push_back(z);
    obj.teacher_probs.push_back(softmax_tau(z, hp.tau));

    Tensor d = discriminator_scalar(state.discriminators[k].forward(obj.x));
    obj.d_fake.push_back(d);
    gan_terms.push_back(generator_adversarial_loss(d, pi[k]));
    Tensor s = hooks ? hooks->on_scores(k, d) : d;
    d_sent.push_back(clamp(s, kLogFloor, 1e12));
  }

  obj.conf = loss_conf(obj.teacher_probs, pi);
  obj.unique = loss_unique(obj.teacher_probs, pi);
  obj.gan = gan_terms[0];
  for (std::size_t k = 1; k < k_count; ++k) obj.gan = add(obj.gan, gan_terms[k]);

  obj.weights = importance_weights(prior_ratios, d_sent, state.d_real_running);
  obj.aggregated = aggregate_logits(obj.teacher_logits, obj.weights);
  obj.student_logits = state.student.forward(obj.x);
  obj.mimic = loss_mimic(obj.student_logits, obj.aggregated);

  obj.total = add(add(scale(obj.conf, hp.lambda_conf), scale(obj.unique, hp.lambda_unique)),
                  sub(scale(obj.gan, hp.lambda_gan), scale(obj.mimic, hp.lambda_mimic)));
  return obj;
}

LossBundle distill_step(DistillState& state, const std::vector<const Network*>& teachers,
                        const std::vector<Tensor>& real_batches, const std::vector<std::vector<double>>& prior_ratios,
                        std::span<const double> pi, Rng& rng, const DistillHp& hp, ExchangeHooks* hooks,
                        const std::optional<Tensor>& fixed_noise) {
  const std::size_t k_count = teachers.size();
  if (real_batches.size() != k_count || state.discriminators.size() != k_count) {
    throw DistillError("distill_step: expected one real batch and one discriminator per node");
  }
  for (const auto* t : teachers) {
    if (!t->frozen()) throw DistillError("distill_step: teachers must be frozen before distillation");
  }
  check_weights(pi, k_count, "distill_step");

  LossBundle bundle;
  bundle.step_index = state.step;
  try {
    if (hp.total_steps > 0) {
      state.generator_opt.set_lr(cosine_annealing(hp.lr_generator, state.step, hp.total_steps));
      state.student_opt.set_lr(cosine_annealing(hp.lr_student, state.step, hp.total_steps));
      for (auto& opt : state.discriminator_opts)
        opt.set_lr(cosine_annealing(hp.lr_discriminator, state.step, hp.total_steps));
    }

    const Tensor noise = fixed_noise ? *fixed_noise : sample_noise(state.noise, hp.batch_size, rng);
    const Tensor x_fixed = state.generator.forward(noise).detach();
    if (hooks)
      for (std::size_t k = 0; k < k_count; ++k) hooks->on_generated_batch(k, x_fixed);

    // Local discriminators.
    for (std::size_t k = 0; k < k_count; ++k) {
      auto& disc = state.discriminators[k];
      const Tensor d_real = discriminator_scalar(disc.forward(real_batches[k]));
      const Tensor d_fake = discriminator_scalar(disc.forward(x_fixed));
      const Tensor loss_d = discriminator_loss(d_real, d_fake);
      bundle.l_gan_per_node.push_back(loss_d.item());
      if (hp.update_discriminators) {
        state.discriminator_opts[k].zero_grad();
        loss_d.backward();
        state.discriminator_opts[k].step();
      }
      const double batch_real = mean(d_real).item();
      const double blended = state.step == 0 ? batch_real
                                             : hp.ema_decay * state.d_real_running[k] + (1.0 - hp.ema_decay) * batch_real;
      state.d_real_running[k] = std::max(hp.running_floor, blended);
    }

    // Generator.
    const GeneratorObjective obj = generator_objective(state, teachers, noise, prior_ratios, pi, hp, hooks);
    bundle.l_conf = obj.conf.item();
    bundle.l_unique = obj.unique.item();
    bundle.l_mimic = obj.mimic.item();
    bundle.l_gan_generator = obj.gan.item();
    if (hp.update_generator) {
      state.generator_opt.zero_grad();
      obj.total.backward();
      state.generator_opt.step();
    }

    // Student mimics the aggregated teachers on the same transfer batch.
    if (hp.update_student) {
      const Tensor target = obj.aggregated.detach();
      const Tensor loss_s = loss_mimic(state.student.forward(obj.x.detach()), target);
      state.student_opt.zero_grad();
      loss_s.backward();
      state.student_opt.step();
    }
  } catch (const TensorError& e) {
    throw DistillError("distillation step " + std::to_string(state.step) + " aborted: " + e.what());
  }
  ++state.step;
  bundle.validate();
  return bundle;
}

}  // namespace fediod
