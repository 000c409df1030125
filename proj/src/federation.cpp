#include "fediod/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fediod {

namespace {

// Seed streams, so every component draws from its own generator.
enum Stream : std::uint64_t {
  kGenerator = 1,
  kStudent = 2,
  kFedAvgServer = 3,
  kDistill = 4,
  kCentral = 5,
  kTeacherBase = 100,
  kDiscriminatorBase = 200,
  kNodeRngBase = 300,
  kDpBase = 400,
};

Tensor one_hot(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<double> v(idx.size() * data.num_classes, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) v[i * data.num_classes + static_cast<std::size_t>(data.labels[idx[i]])] = 1.0;
  return Tensor::from({idx.size(), data.num_classes}, std::move(v));
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

double accuracy_on(const Network& model, const Dataset& data, const std::vector<std::size_t>& idx) {
  const Tensor logits = model.forward(data.input_batch(idx)).detach();
  const std::size_t c = logits.dim(1);
  auto v = logits.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (argmax_row(v.subspan(i * c, c)) == static_cast<std::size_t>(data.labels[idx[i]])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Routes every node/server exchange of the distillation loop through the ledger,
// applying the DP sanitizer to node->server payloads when enabled.
class LedgerHooks : public ExchangeHooks {
 public:
  LedgerHooks(FederationState& state, const DpConfig& dp) : state_(state), dp_(dp) {
    for (std::size_t k = 0; k < state.num_nodes(); ++k) rngs_.emplace_back(derive_seed(state.seed, kDpBase + k));
  }

  void on_generated_batch(std::size_t k, const Tensor& x) override {
    state_.ledger.record(std::string(kServer), node_name(k), PayloadKind::generated_batch, x.size(), state_.round);
  }

  Tensor on_logits(std::size_t k, const Tensor& z) override { return release(k, z, PayloadKind::logits); }
  Tensor on_scores(std::size_t k, const Tensor& s) override { return release(k, s, PayloadKind::disc_scores); }

  std::size_t sanitize_calls() const { return sanitize_calls_; }

 private:
  Tensor release(std::size_t k, const Tensor& t, PayloadKind kind) {
    Tensor out = t;
    if (dp_.enabled) {
      auto v = t.values();
      const double f = clip_factor(v, dp_.clip_norm);
      const auto noisy = sanitize(v, dp_, rngs_[k]);
      ++sanitize_calls_;
      // Released value = f * t + noise, with f and noise constants, so gradients still flow through t.
      std::vector<double> noise(noisy.size());
      for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = noisy[i] - f * v[i];
      out = add(scale(t, f), Tensor::from(t.shape(), std::move(noise)));
    }
    state_.ledger.record(node_name(k), std::string(kServer), kind, t.size(), state_.round, dp_.enabled);
    return out;
  }

  FederationState& state_;
  DpConfig dp_;
  std::vector<Rng> rngs_;
  std::size_t sanitize_calls_ = 0;
};

void record_eval(RunReport& report, std::size_t point, double acc) {
  report.eval_points.push_back(point);
  report.accuracy.push_back(acc);
  report.final_accuracy = acc;
}

}  // namespace

std::vector<std::size_t> full_arch(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> a{in};
  a.insert(a.end(), hidden.begin(), hidden.end());
  a.push_back(out);
  return a;
}

void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
  if (xs.empty()) throw FederationError("mean/std of an empty series");
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  stddev = std::sqrt(ss / static_cast<double>(xs.size()));
}

bool FederationState::all_teachers_frozen() const {
  return std::all_of(nodes.begin(), nodes.end(), [](const LocalNode& n) { return n.teacher.frozen(); });
}

FederationState make_federation(const Dataset& train, const Dataset& test, PartitionSpec partition, ArchSpec arch,
                                std::uint64_t seed) {
  const std::size_t k_count = partition.num_nodes();
  if (k_count == 0) throw FederationError("federation needs at least one node");
  if (!arch.per_node_teacher_hidden.empty() && arch.per_node_teacher_hidden.size() != k_count) {
    throw FederationError("per-node teacher architectures must list exactly K entries");
  }
  if (test.dim != train.dim || test.num_classes != train.num_classes) {
    throw FederationError("train and test sets disagree on dim or class count");
  }
  FederationState st;
  st.train = &train;
  st.test = &test;
  st.seed = seed;
  st.arch = arch;
  for (std::size_t k = 0; k < k_count; ++k) {
    LocalNode node;
    node.id = k;
    node.shard = partition.node_indices[k];
    for (std::size_t i : node.shard) {
      if (i >= train.size()) throw FederationError("partition index outside the training set");
    }
    const auto& hidden = arch.per_node_teacher_hidden.empty() ? arch.teacher_hidden : arch.per_node_teacher_hidden[k];
    node.teacher = Network::build(Role::teacher, full_arch(train.dim, hidden, train.num_classes), arch.hidden,
                                  derive_seed(seed, kTeacherBase + k));
    node.discriminator =
        Network::build(Role::discriminator, full_arch(train.dim, arch.discriminator_hidden, arch.patch * arch.patch),
                       arch.hidden, derive_seed(seed, kDiscriminatorBase + k));
    node.label_counts = partition.label_histogram[k];
    node.rng.seed(derive_seed(seed, kNodeRngBase + k));
    st.nodes.push_back(std::move(node));
  }
  st.partition = std::move(partition);
  return st;
}

double evaluate(const Network& model, const Dataset& test) {
  if (test.size() == 0) throw FederationError("cannot evaluate on an empty test set");
  if (model.input_dim() != test.dim || model.output_dim() != test.num_classes) {
    throw FederationError("model dims do not match the test set");
  }
  return accuracy_on(model, test, all_indices(test));
}

TrainLog train_classifier(Network& model, const Dataset& data, const std::vector<std::size_t>& indices,
                          const LocalTrainHp& hp, Rng& rng) {
  if (indices.empty()) throw FederationError("cannot train on an empty shard");
  if (hp.batch_size == 0) throw FederationError("batch size must be positive");
  std::optional<Sgd> sgd;
  std::optional<Adam> adam;
  if (hp.optimizer == OptimizerKind::sgd) {
    sgd.emplace(model.parameters(), hp.lr);
  } else {
    adam.emplace(model.parameters(), AdamOptions{.lr = hp.lr});
  }
  TrainLog log;
  std::vector<std::size_t> order = indices;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + hp.batch_size)));
      const Tensor logits = model.forward(data.input_batch(idx));
      const Tensor loss = neg(mean(sum(mul(one_hot(data, idx), log_softmax(logits)), 1)));
      if (sgd) {
        sgd->zero_grad();
        loss.backward();
        sgd->step();
      } else {
        adam->zero_grad();
        loss.backward();
        adam->step();
      }
      total += loss.item();
      ++batches;
    }
    log.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  log.final_train_accuracy = accuracy_on(model, data, indices);
  return log;
}

TrainLog local_train(FederationState& state, std::size_t k, const LocalTrainHp& hp) {
  if (state.phase != Phase::local_training) throw FederationError("local training after the local phase ended");
  auto& node = state.nodes.at(k);
  if (node.teacher.frozen()) throw FederationError("teacher " + std::to_string(k) + " is already trained and frozen");
  if (node.shard.empty()) throw FederationError("node " + std::to_string(k) + " has an empty shard");
  node.train_log = train_classifier(node.teacher, *state.train, node.shard, hp, node.rng);
  node.teacher.freeze();
  return node.train_log;
}

void local_train_all(FederationState& state, const LocalTrainHp& hp) {
  for (std::size_t k = 0; k < state.num_nodes(); ++k) {
    if (!state.nodes[k].teacher.frozen()) local_train(state, k, hp);
  }
  state.phase = Phase::distillation;
}

std::size_t expected_fediod_bytes(std::size_t k, std::size_t batch, std::size_t d, std::size_t c, std::size_t steps) {
  return k * kBytesPerElement * c + steps * k * kBytesPerElement * batch * (d + c + 1);
}

RunReport run_fediod(FederationState& state, const FediodHp& hp) {
  if (!state.all_teachers_frozen()) throw FederationError("distillation requires every teacher to be trained and frozen");
  if (state.phase == Phase::done) throw FederationError("this federation already finished");
  if (hp.eval_interval == 0) throw FederationError("eval_interval must be positive");
  hp.dp.validate();
  state.phase = Phase::distillation;

  const Dataset& train = *state.train;
  const std::size_t k_count = state.num_nodes();
  RunReport report;
  report.mode = "fediod";

  std::vector<std::vector<std::size_t>> counts;
  for (std::size_t k = 0; k < k_count; ++k) {
    state.ledger.record(node_name(k), std::string(kServer), PayloadKind::label_counts, train.num_classes, state.round);
    counts.push_back(state.nodes[k].label_counts);
  }
  const auto priors = prior_ratio_table(counts);
  const auto pi = local_weights(state.partition);

  DistillHp dh = hp.distill;
  dh.total_steps = hp.cosine_schedule ? hp.steps : 0;

  Network generator = Network::build(Role::generator, full_arch(state.arch.noise_dim, state.arch.generator_hidden, train.dim),
                                     state.arch.hidden, derive_seed(state.seed, kGenerator));
  Network student = Network::build(Role::student, full_arch(train.dim, state.arch.student_hidden, train.num_classes),
                                   state.arch.hidden, derive_seed(state.seed, kStudent));
  std::vector<Network> discs;
  for (auto& n : state.nodes) discs.push_back(n.discriminator);
  DistillState ds(std::move(generator), std::move(student), std::move(discs), dh);

  std::vector<const Network*> teachers;
  for (const auto& n : state.nodes) teachers.push_back(&n.teacher);

  LedgerHooks hooks(state, hp.dp);
  Rng rng(derive_seed(state.seed, kDistill));
  for (std::size_t step = 0; step < hp.steps; ++step) {
    state.round = step + 1;
    std::vector<Tensor> real;
    for (auto& node : state.nodes) {
      std::uniform_int_distribution<std::size_t> pick(0, node.shard.size() - 1);
      std::vector<std::size_t> idx(dh.batch_size);
      for (auto& i : idx) i = node.shard[pick(node.rng)];
      real.push_back(train.input_batch(idx));
    }
    report.losses.push_back(distill_step(ds, teachers, real, priors, pi, rng, dh, &hooks));
    if ((step + 1) % hp.eval_interval == 0 || step + 1 == hp.steps) {
      record_eval(report, step + 1, evaluate(ds.student, *state.test));
    }
  }

  for (std::size_t k = 0; k < k_count; ++k) state.nodes[k].discriminator = ds.discriminators[k];
  state.generator = ds.generator;
  state.student = ds.student;
  state.phase = Phase::done;
  report.ledger_bytes = state.ledger.bytes_by_kind();
  report.sanitize_calls = hooks.sanitize_calls();
  return report;
}

Network fedavg_round(const Network& server, FederationState& state, const LocalTrainHp& hp, std::size_t round) {
  const std::size_t p = server.parameter_count();
  const auto pi = local_weights(state.partition);
  state.round = round;
  std::vector<double> avg(p, 0.0);
  for (std::size_t k = 0; k < state.num_nodes(); ++k) {
    auto& node = state.nodes[k];
    state.ledger.record(std::string(kServer), node_name(k), PayloadKind::model_params, p, round);
    Network local = server.clone();
    train_classifier(local, *state.train, node.shard, hp, node.rng);
    state.ledger.record(node_name(k), std::string(kServer), PayloadKind::model_params, p, round);
    const auto flat = local.flat_parameters();
    for (std::size_t i = 0; i < p; ++i) avg[i] += pi[k] * flat[i];
  }
  Network next = server.clone();
  next.set_flat_parameters(avg);
  return next;
}

RunReport run_fedavg(FederationState& state, const FedAvgHp& hp) {
  const auto& ref = state.nodes.front().teacher;
  for (const auto& n : state.nodes) {
    if (n.teacher.arch() != ref.arch() || n.teacher.hidden_activation() != ref.hidden_activation()) {
      throw FederationError("FedAvg averages parameters elementwise and needs one shared architecture; node " +
                            std::to_string(n.id) + " differs from node 0");
    }
  }
  if (hp.eval_interval == 0) throw FederationError("eval_interval must be positive");
  RunReport report;
  report.mode = "fedavg";

  Network server = Network::build(Role::student, ref.arch(), ref.hidden_activation(), derive_seed(state.seed, kFedAvgServer));
  for (std::size_t r = 1; r <= hp.rounds; ++r) {
    server = fedavg_round(server, state, hp.local, r);
    if (r % hp.eval_interval == 0 || r == hp.rounds) record_eval(report, r, evaluate(server, *state.test));
  }
  state.student = server;
  state.phase = Phase::done;
  report.ledger_bytes = state.ledger.bytes_by_kind();
  return report;
}

RunReport run_standalone(FederationState& state, const LocalTrainHp& hp) {
  RunReport report;
  report.mode = "standalone";
  for (std::size_t k = 0; k < state.num_nodes(); ++k) {
    if (!state.nodes[k].teacher.frozen()) local_train(state, k, hp);
    report.node_accuracy.push_back(evaluate(state.nodes[k].teacher, *state.test));
  }
  mean_std(report.node_accuracy, report.mean_accuracy, report.std_accuracy);
  record_eval(report, hp.epochs, report.mean_accuracy);
  report.ledger_bytes = state.ledger.bytes_by_kind();
  return report;
}

RunReport run_centralized(const Dataset& train, const Dataset& test, const ArchSpec& arch, const LocalTrainHp& hp,
                          std::uint64_t seed) {
  RunReport report;
  report.mode = "centralized";
  Network model = Network::build(Role::student, full_arch(train.dim, arch.student_hidden, train.num_classes), arch.hidden,
                                 derive_seed(seed, kCentral));
  Rng rng(derive_seed(seed, kCentral + 1));
  train_classifier(model, train, all_indices(train), hp, rng);
  record_eval(report, hp.epochs, evaluate(model, test));
  report.mean_accuracy = report.final_accuracy;
  return report;
}

}  // namespace fediod
