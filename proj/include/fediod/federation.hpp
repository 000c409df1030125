#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fediod/data.hpp"
#include "fediod/distill.hpp"
#include "fediod/ledger.hpp"
#include "fediod/nets.hpp"
#include "fediod/privacy.hpp"

namespace fediod {

class FederationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hidden-layer widths per role; input/output widths come from the data.
struct ArchSpec {
  std::vector<std::size_t> teacher_hidden{64, 64};
  /// Optional per-node override of teacher_hidden (size K when present).
  std::vector<std::vector<std::size_t>> per_node_teacher_hidden;
  std::vector<std::size_t> student_hidden{64, 64};
  std::vector<std::size_t> generator_hidden{128, 128};
  std::vector<std::size_t> discriminator_hidden{64};
  std::size_t noise_dim = 32;
  std::size_t patch = 2;
  Activation hidden = Activation::relu;

  bool operator==(const ArchSpec&) const = default;
};

std::vector<std::size_t> full_arch(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out);

enum class OptimizerKind { sgd, adam };

struct LocalTrainHp {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 0.05;
  OptimizerKind optimizer = OptimizerKind::sgd;

  bool operator==(const LocalTrainHp&) const = default;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  double final_train_accuracy = 0.0;
};

struct LocalNode {
  std::size_t id = 0;
  std::vector<std::size_t> shard;  // indices into the training set
  Network teacher;
  Network discriminator;
  std::vector<std::size_t> label_counts;
  Rng rng;
  TrainLog train_log;
};

enum class Phase { local_training, distillation, done };

struct FederationState {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  PartitionSpec partition;
  ArchSpec arch;
  std::vector<LocalNode> nodes;
  CommLedger ledger;
  std::size_t round = 0;
  Phase phase = Phase::local_training;
  std::uint64_t seed = 0;
  std::optional<Network> generator;
  std::optional<Network> student;

  std::size_t num_nodes() const { return nodes.size(); }
  bool all_teachers_frozen() const;
};

/// Builds K nodes over `partition` with teachers/discriminators seeded from `seed`.
/// The datasets must outlive the state.
FederationState make_federation(const Dataset& train, const Dataset& test, PartitionSpec partition, ArchSpec arch,
                                std::uint64_t seed);

/// Fraction of argmax-correct predictions; ties go to the lowest class index.
double evaluate(const Network& model, const Dataset& test);

/// Mean cross-entropy training over `indices` of `data`.
TrainLog train_classifier(Network& model, const Dataset& data, const std::vector<std::size_t>& indices,
                          const LocalTrainHp& hp, Rng& rng);

/// Trains node k's teacher on its shard and freezes it. No communication.
TrainLog local_train(FederationState& state, std::size_t k, const LocalTrainHp& hp);
/// Trains every teacher and moves the state to the distillation phase.
void local_train_all(FederationState& state, const LocalTrainHp& hp);

struct RunReport {
  std::string mode;
  std::vector<std::size_t> eval_points;
  std::vector<double> accuracy;
  double final_accuracy = 0.0;
  std::vector<double> node_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  std::vector<LossBundle> losses;
  std::map<std::string, std::size_t> ledger_bytes;
  std::size_t sanitize_calls = 0;
};

struct FediodHp {
  DistillHp distill;
  std::size_t steps = 1000;
  std::size_t eval_interval = 50;
  bool cosine_schedule = true;
  DpConfig dp;

  bool operator==(const FediodHp&) const = default;
};

/// Stage two of the protocol: one-way distillation from the frozen teachers into the server student.
RunReport run_fediod(FederationState& state, const FediodHp& hp);

struct FedAvgHp {
  std::size_t rounds = 20;
  LocalTrainHp local;
  std::size_t eval_interval = 1;

  bool operator==(const FedAvgHp&) const = default;
};

/// One round: broadcast `server`, local training on every shard, pi_k-weighted average of the uploads.
Network fedavg_round(const Network& server, FederationState& state, const LocalTrainHp& hp, std::size_t round);

/// Parameter-averaging baseline. Requires one shared architecture across nodes.
RunReport run_fedavg(FederationState& state, const FedAvgHp& hp);

/// Each node trains on its own shard only; reports mean and population std of test accuracy.
RunReport run_standalone(FederationState& state, const LocalTrainHp& hp);

/// One model trained on the pooled training set.
RunReport run_centralized(const Dataset& train, const Dataset& test, const ArchSpec& arch, const LocalTrainHp& hp,
                          std::uint64_t seed);

/// Closed-form FedIOD ledger total: label counts once, then per step K * 8 * batch * (d + C + 1).
std::size_t expected_fediod_bytes(std::size_t k, std::size_t batch, std::size_t d, std::size_t c, std::size_t steps);

void mean_std(const std::vector<double>& xs, double& mean, double& stddev);

}  // namespace fediod
