#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fediod/config.hpp"
#include "fediod/runner.hpp"
#include "fediod/svg.hpp"
#include "json.hpp"

using namespace fediod;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::size_t occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

RunConfig tiny(Mode mode) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.dataset.per_class = 30;
  cfg.dataset.classes = 3;
  cfg.nodes = 3;
  cfg.alpha = 0.5;
  cfg.seeds = {0, 1, 2};
  cfg.arch.teacher_hidden = {8};
  cfg.arch.student_hidden = {8};
  cfg.arch.generator_hidden = {8};
  cfg.arch.discriminator_hidden = {6};
  cfg.arch.noise_dim = 4;
  cfg.local.epochs = 5;
  cfg.fediod.steps = 12;
  cfg.fediod.eval_interval = 4;
  cfg.fediod.distill.batch_size = 8;
  cfg.fedavg.rounds = 3;
  cfg.fedavg.local.epochs = 2;
  return cfg;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fediod_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal config fills in defaults") {
  const auto cfg = parse_config_text(R"({"mode": "fediod", "dataset": {"kind": "blobs"}})");
  CHECK(cfg.mode == Mode::fediod);
  CHECK(cfg.fediod.distill.tau == 1.0);
  CHECK(cfg.nodes == RunConfig{}.nodes);
  CHECK(cfg.alpha == RunConfig{}.alpha);
  CHECK(cfg.seeds == RunConfig{}.seeds);
}

TEST_CASE("mode and dataset are required") {
  CHECK(error_of(R"({"dataset": {}})").find("mode") != std::string::npos);
  CHECK(error_of(R"({"mode": "fedavg"})").find("dataset") != std::string::npos);
  CHECK(error_of(R"({"mode": "bogus", "dataset": {}})").find("bogus") != std::string::npos);
}

TEST_CASE("invalid values name the offending field") {
  CHECK(error_of(R"({"mode": "fediod", "dataset": {}, "alpha": -1})").find("alpha") != std::string::npos);
  CHECK(error_of(R"({"mode": "fediod", "dataset": {}, "nodes": 0})").find("nodes") != std::string::npos);
  CHECK(error_of(R"({"mode": "fediod", "dataset": {}, "distill": {"tau": 0}})").find("tau") != std::string::npos);
  CHECK(error_of(R"({"mode": "fediod", "dataset": {}, "seeds": []})").find("seeds") != std::string::npos);
}

TEST_CASE("unknown keys are rejected") {
  CHECK(error_of(R"({"mode": "fediod", "dataset": {}, "foo": 1})").find("foo") != std::string::npos);
  CHECK(error_of(R"({"mode": "fediod", "dataset": {"bar": 1}})").find("bar") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config survives a write/parse round trip") {
  auto cfg = tiny(Mode::fedavg);
  cfg.arch.per_node_teacher_hidden = {{4}, {5, 5}, {6}};
  cfg.fediod.dp = DpConfig{true, 2.0, 0.3};
  cfg.fediod.distill.lambda_mimic = 0.03;
  cfg.local.optimizer = OptimizerKind::adam;
  cfg.seeds = {5, 17};
  cfg.output_dir = "somewhere/else";
  CHECK(parse_config_text(write_config(cfg)) == cfg);
  CHECK(parse_config_text(write_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("svg rendering") {
  const auto one = render_svg({{"acc", {0, 1, 2}, {0.5, 0.5, 0.5}}}, "step", "accuracy");
  CHECK(one.rfind("<svg", 0) == 0);
  CHECK(occurrences(one, "<polyline") == 1);
  const auto two = render_svg({{"a", {0, 1}, {0.1, 0.2}}, {"b", {0, 1}, {0.3, 0.1}}}, "step", "accuracy");
  CHECK(occurrences(two, "<polyline") == 2);
  CHECK(two.find("legend") != std::string::npos);
  CHECK_THROWS(render_svg({}, "x", "y"));
  CHECK_THROWS(render_svg({{"a", {0, 1}, {0.1}}}, "x", "y"));
  CHECK_THROWS(render_svg({{"a", {0}, {NAN}}}, "x", "y"));
  CHECK_THROWS(emit_svg({{"a", {0}, {1}}}, "/nonexistent/dir/plot.svg", "x", "y"));
}

TEST_CASE("experiments are deterministic apart from wall clock") {
  const auto cfg = tiny(Mode::fediod);
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(report_json(a, false) == report_json(b, false));
  CHECK(losses_csv(a) == losses_csv(b));
  CHECK(ledger_csv(a) == ledger_csv(b));
  CHECK(report_json(a, true).find("wall_clock_seconds") != std::string::npos);
  CHECK(report_json(a, false).find("wall_clock_seconds") == std::string::npos);
}

TEST_CASE("seed aggregation and fediod traffic in the report") {
  const auto rep = run_experiment(tiny(Mode::fediod));
  REQUIRE(rep.seeds.size() == 3);
  double mean = 0;
  for (const auto& s : rep.seeds) mean += s.report.final_accuracy;
  mean /= 3;
  double var = 0;
  for (const auto& s : rep.seeds) var += (s.report.final_accuracy - mean) * (s.report.final_accuracy - mean);
  CHECK(rep.final_mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(rep.final_std == doctest::Approx(std::sqrt(var / 3)).epsilon(1e-12));

  const auto j = nlohmann::json::parse(report_json(rep));
  CHECK(j["mode"] == "fediod");
  CHECK(j["seeds"].size() == 3);
  for (const auto& s : rep.seeds) {
    CHECK(s.ledger.bytes(PayloadKind::model_params) == 0);
    CHECK(s.teacher_checksums_before == s.teacher_checksums_after);
  }
  for (const auto& s : j["seeds"]) CHECK(s["teachers_unchanged"] == true);

  const auto csv = losses_csv(rep);
  CHECK(csv.rfind("seed,step,l_gan_0,l_gan_1,l_gan_2,l_conf,l_unique,l_mimic,l_gan_generator", 0) == 0);
  CHECK(occurrences(csv, "\n") == 1 + 3 * 12);
}

TEST_CASE("write_outputs produces every artifact") {
  const auto dir = scratch("outputs");
  const auto rep = run_experiment(tiny(Mode::fedavg));
  write_outputs(rep, (dir / "nested").string());
  for (const char* f : {"report.json", "losses.csv", "ledger.csv", "accuracy.svg"})
    CHECK(fs::exists(dir / "nested" / f));
  CHECK(nlohmann::json::parse(slurp(dir / "nested" / "report.json"))["mode"] == "fedavg");
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("exe");
  const std::string exe = FEDIOD_CLI_PATH;
  auto cfg = tiny(Mode::standalone);
  cfg.output_dir = (dir / "out").string();
  {
    std::ofstream(dir / "good.json") << write_config(cfg);
    std::ofstream(dir / "bad.json") << R"({"mode": "fediod", "dataset": {}, "alpha": -1})";
    std::ofstream(dir / "a.pgm") << "P2\n3 2\n255\n1 1 0\n0 0 2\n";
  }
  const std::string quiet = " >" + (dir / "stdout.txt").string() + " 2>" + (dir / "stderr.txt").string();
  auto run = [&](const std::string& args) { return std::system(("FEDIOD_LOG=off " + exe + " " + args + quiet).c_str()); };

  CHECK(run("run " + (dir / "good.json").string() + " --seed-override 4") == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  const auto j = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  CHECK(j["seeds"].size() == 1);
  CHECK(j["seeds"][0]["seed"] == 4);

  CHECK(run("run " + (dir / "bad.json").string()) != 0);
  CHECK(slurp(dir / "stderr.txt").find("alpha") != std::string::npos);
  CHECK(run("run " + (dir / "missing.json").string()) != 0);
  CHECK(run("") != 0);

  CHECK(run("metrics " + (dir / "a.pgm").string() + " " + (dir / "a.pgm").string()) == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "stdout.txt"));
  CHECK(m["dice"] == 1.0);
  CHECK(m["aji"] == 1.0);
  CHECK(m["hd95"] == 0.0);
  fs::remove_all(dir);
}
