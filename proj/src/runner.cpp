#include "fediod/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fediod/idx.hpp"
#include "fediod/svg.hpp"
#include "json.hpp"

namespace fediod {

using nlohmann::json;

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg) {
  if (cfg.kind == "blobs") {
    Dataset all = make_blobs(cfg.classes, cfg.per_class, cfg.dim, cfg.spread, cfg.seed);
    return split_holdout(all, cfg.test_fraction, derive_seed(cfg.seed, 1));
  }
  if (cfg.kind == "idx") {
    Dataset train = load_idx(cfg.train_images, cfg.train_labels, cfg.dim);
    if (cfg.test_images.empty()) return split_holdout(train, cfg.test_fraction, derive_seed(cfg.seed, 1));
    Dataset test = load_idx(cfg.test_images, cfg.test_labels, cfg.dim, train.num_classes);
    return {std::move(train), std::move(test)};
  }
  throw ConfigError("dataset.kind: expected blobs or idx");
}

SeedResult run_seed(const RunConfig& cfg, const Dataset& train, const Dataset& test, std::uint64_t seed) {
  SeedResult out;
  out.seed = seed;
  if (cfg.mode == Mode::centralized) {
    out.report = run_centralized(train, test, cfg.arch, cfg.local, seed);
    return out;
  }

  PartitionSpec partition = dirichlet_partition(train, cfg.nodes, cfg.alpha, seed);
  spdlog::debug("seed {}: partition mean TV distance {:.4f}", seed, mean_tv_distance(partition));
  FederationState state = make_federation(train, test, std::move(partition), cfg.arch, seed);

  switch (cfg.mode) {
    case Mode::fediod: {
      local_train_all(state, cfg.local);
      std::vector<double> teacher_acc;
      for (const auto& n : state.nodes) {
        teacher_acc.push_back(evaluate(n.teacher, test));
        out.teacher_checksums_before.push_back(n.teacher.checksum());
      }
      out.report = run_fediod(state, cfg.fediod);
      out.report.node_accuracy = teacher_acc;
      mean_std(teacher_acc, out.report.mean_accuracy, out.report.std_accuracy);
      for (const auto& n : state.nodes) out.teacher_checksums_after.push_back(n.teacher.checksum());
      break;
    }
    case Mode::fedavg:
      out.report = run_fedavg(state, cfg.fedavg);
      break;
    case Mode::standalone:
      out.report = run_standalone(state, cfg.local);
      break;
    case Mode::centralized:
      break;
  }
  out.ledger = state.ledger;
  return out;
}

ExperimentReport run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.config = cfg;
  auto [train, test] = load_datasets(cfg.dataset);
  spdlog::info("{} mode: {} train / {} test samples, {} classes, dim {}", to_string(cfg.mode), train.size(), test.size(),
               train.num_classes, train.dim);

  std::vector<double> finals;
  for (std::uint64_t seed : cfg.seeds) {
    const auto t0 = std::chrono::steady_clock::now();
    rep.seeds.push_back(run_seed(cfg, train, test, seed));
    const auto& r = rep.seeds.back().report;
    finals.push_back(r.final_accuracy);
    for (const auto& [kind, bytes] : r.ledger_bytes) rep.ledger_totals[kind] += bytes;
    spdlog::info("seed {}: final accuracy {:.4f} ({:.1f}s)", seed, r.final_accuracy,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  mean_std(finals, rep.final_mean, rep.final_std);
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::string report_json(const ExperimentReport& rep, bool include_wall_clock) {
  json j;
  j["config"] = json::parse(write_config(rep.config));
  j["mode"] = to_string(rep.config.mode);
  json seeds = json::array();
  for (const auto& s : rep.seeds) {
    const auto& r = s.report;
    json e;
    e["seed"] = s.seed;
    e["eval_points"] = r.eval_points;
    e["accuracy"] = r.accuracy;
    e["final_accuracy"] = r.final_accuracy;
    if (!r.node_accuracy.empty()) {
      e["node_accuracy"] = r.node_accuracy;
      e["node_accuracy_mean"] = r.mean_accuracy;
      e["node_accuracy_std"] = r.std_accuracy;
    }
    e["ledger_bytes"] = r.ledger_bytes;
    if (rep.config.mode == Mode::fediod) {
      e["sanitize_calls"] = r.sanitize_calls;
      e["teachers_unchanged"] = s.teacher_checksums_before == s.teacher_checksums_after;
    }
    seeds.push_back(std::move(e));
  }
  j["seeds"] = std::move(seeds);
  j["final_mean"] = rep.final_mean;
  j["final_std"] = rep.final_std;
  j["ledger_totals"] = rep.ledger_totals;
  j["losses_csv"] = "losses.csv";
  j["ledger_csv"] = "ledger.csv";
  if (include_wall_clock) j["wall_clock_seconds"] = rep.wall_clock_seconds;
  return j.dump(2) + "\n";
}

std::string losses_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,step";
  for (std::size_t k = 0; k < rep.config.nodes; ++k) os << ",l_gan_" << k;
  os << ",l_conf,l_unique,l_mimic,l_gan_generator\n";
  for (const auto& s : rep.seeds) {
    for (const auto& l : s.report.losses) {
      os << s.seed << ',' << l.step_index;
      for (double g : l.l_gan_per_node) os << ',' << g;
      os << ',' << l.l_conf << ',' << l.l_unique << ',' << l.l_mimic << ',' << l.l_gan_generator << '\n';
    }
  }
  return os.str();
}

std::string ledger_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  bool header = false;
  for (const auto& s : rep.seeds) {
    std::istringstream in(s.ledger.to_csv());
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        if (!header) os << "seed," << line << '\n';
        header = true;
        continue;
      }
      os << s.seed << ',' << line << '\n';
    }
  }
  if (!header) os << "seed," << CommLedger().to_csv();
  return os.str();
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + p.string() + "' failed");
}

}  // namespace

void write_outputs(const ExperimentReport& rep, const std::string& dir) {
  std::filesystem::path root(dir);
  std::filesystem::create_directories(root);
  write_file(root / "report.json", report_json(rep));
  write_file(root / "losses.csv", losses_csv(rep));
  write_file(root / "ledger.csv", ledger_csv(rep));

  std::vector<Series> series;
  for (const auto& s : rep.seeds) {
    Series line{"seed " + std::to_string(s.seed), {}, s.report.accuracy};
    for (auto p : s.report.eval_points) line.x.push_back(static_cast<double>(p));
    series.push_back(std::move(line));
  }
  const char* x_label = rep.config.mode == Mode::fedavg ? "round" : rep.config.mode == Mode::fediod ? "step" : "epoch";
  emit_svg(series, (root / "accuracy.svg").string(), x_label, "test accuracy");
}

}  // namespace fediod
