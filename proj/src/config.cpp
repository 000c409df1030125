#include "fediod/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fediod {

using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::fediod: return "fediod";
    case Mode::fedavg: return "fedavg";
    case Mode::standalone: return "standalone";
    case Mode::centralized: return "centralized";
  }
  return "?";
}

Mode mode_from_string(const std::string& s) {
  if (s == "fediod") return Mode::fediod;
  if (s == "fedavg") return Mode::fedavg;
  if (s == "standalone") return Mode::standalone;
  if (s == "centralized") return Mode::centralized;
  throw ConfigError("mode: unknown mode '" + s + "' (expected fediod, fedavg, standalone or centralized)");
}

namespace {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

// Walks one JSON object, remembering which keys were read so leftovers can be reported.
class Reader {
 public:
  Reader(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const char* key) const { return j_ && j_->contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(has(key) ? &j_->at(key) : nullptr, name(key));
  }

  void get(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(name(key) + ": expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::uint64_t& out, int) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(name(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(name(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(name(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(name(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = take(key)) out = widths(*v, name(key));
  }
  void get(const char* key, std::vector<std::vector<std::size_t>>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(name(key) + ": expected a list of lists");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) out.push_back(widths((*v)[i], name(key) + "[" + std::to_string(i) + "]"));
    }
  }
  void get_seeds(const char* key, std::vector<std::uint64_t>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(name(key) + ": expected a list of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) throw ConfigError(name(key) + ": expected non-negative integers");
        out.push_back(e.get<std::uint64_t>());
      }
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [key, value] : j_->items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + name(key.c_str()) + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    return has(key) ? &j_->at(key) : nullptr;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  static std::vector<std::size_t> widths(const json& v, const std::string& field) {
    if (!v.is_array()) throw ConfigError(field + ": expected a list of layer widths");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) throw ConfigError(field + ": layer widths must be non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_local(Reader r, LocalTrainHp& hp) {
  r.get("epochs", hp.epochs);
  r.get("batch_size", hp.batch_size);
  r.get("lr", hp.lr);
  std::string opt = optimizer_name(hp.optimizer);
  r.get("optimizer", opt);
  if (opt == "sgd") hp.optimizer = OptimizerKind::sgd;
  else if (opt == "adam") hp.optimizer = OptimizerKind::adam;
  else throw ConfigError("optimizer: expected sgd or adam, got '" + opt + "'");
  r.finish();
}

json local_json(const LocalTrainHp& hp) {
  return {{"epochs", hp.epochs}, {"batch_size", hp.batch_size}, {"lr", hp.lr}, {"optimizer", optimizer_name(hp.optimizer)}};
}

void require(bool ok, const std::string& field, const std::string& constraint) {
  if (!ok) throw ConfigError(field + ": " + constraint);
}

void check_widths(const std::vector<std::size_t>& w, const std::string& field) {
  for (auto x : w) require(x > 0, field, "layer widths must be positive");
}

void check_local(const LocalTrainHp& hp, const std::string& prefix) {
  require(hp.batch_size > 0, prefix + ".batch_size", "must be positive");
  require(hp.lr > 0.0 && std::isfinite(hp.lr), prefix + ".lr", "must be positive");
}

}  // namespace

void RunConfig::validate() const {
  require(nodes >= 1, "nodes", "must be at least 1");
  require(alpha > 0.0 && std::isfinite(alpha), "alpha", "must be positive");
  require(!seeds.empty(), "seeds", "must be a nonempty list");
  require(!output_dir.empty(), "output_dir", "must not be empty");

  const auto& d = dataset;
  require(d.kind == "blobs" || d.kind == "idx", "dataset.kind", "expected blobs or idx");
  require(d.dim >= 2, "dataset.dim", "must be at least 2");
  require(d.test_fraction > 0.0 && d.test_fraction < 1.0, "dataset.test_fraction", "must lie in (0, 1)");
  if (d.kind == "blobs") {
    require(d.classes >= 2, "dataset.classes", "must be at least 2");
    require(d.per_class >= 1, "dataset.per_class", "must be at least 1");
    require(d.spread >= 0.0 && std::isfinite(d.spread), "dataset.spread", "must be non-negative");
  } else {
    require(!d.train_images.empty(), "dataset.train_images", "required for idx datasets");
    require(!d.train_labels.empty(), "dataset.train_labels", "required for idx datasets");
    require(d.test_images.empty() == d.test_labels.empty(), "dataset.test_images",
            "test_images and test_labels must be given together");
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d.dim))));
    require(side * side == d.dim, "dataset.dim", "must be a perfect square for idx images");
  }

  check_widths(arch.teacher_hidden, "arch.teacher");
  check_widths(arch.student_hidden, "arch.student");
  check_widths(arch.generator_hidden, "arch.generator");
  check_widths(arch.discriminator_hidden, "arch.discriminator");
  if (!arch.per_node_teacher_hidden.empty()) {
    require(arch.per_node_teacher_hidden.size() == nodes, "arch.per_node_teacher", "needs exactly one entry per node");
    for (const auto& w : arch.per_node_teacher_hidden) check_widths(w, "arch.per_node_teacher");
  }
  require(arch.noise_dim >= 1, "arch.noise_dim", "must be at least 1");
  require(arch.patch >= 1, "arch.patch", "must be at least 1");

  check_local(local, "local");
  check_local(fedavg.local, "fedavg.local");
  require(fedavg.rounds >= 1, "fedavg.rounds", "must be at least 1");
  require(fedavg.eval_interval >= 1, "fedavg.eval_interval", "must be positive");

  const auto& h = fediod.distill;
  require(fediod.steps >= 1, "distill.steps", "must be at least 1");
  require(fediod.eval_interval >= 1, "distill.eval_interval", "must be positive");
  require(h.batch_size >= 1, "distill.batch_size", "must be positive");
  require(h.tau > 0.0 && std::isfinite(h.tau), "distill.tau", "must be positive");
  require(h.lambda_conf >= 0.0, "distill.lambda_conf", "must be non-negative");
  require(h.lambda_unique >= 0.0, "distill.lambda_unique", "must be non-negative");
  require(h.lambda_mimic >= 0.0, "distill.lambda_mimic", "must be non-negative");
  require(h.lambda_gan >= 0.0, "distill.lambda_gan", "must be non-negative");
  require(h.lr_generator > 0.0, "distill.lr_generator", "must be positive");
  require(h.lr_student > 0.0, "distill.lr_student", "must be positive");
  require(h.lr_discriminator > 0.0, "distill.lr_discriminator", "must be positive");
  require(h.ema_decay >= 0.0 && h.ema_decay < 1.0, "distill.ema_decay", "must lie in [0, 1)");
  require(h.running_floor > 0.0, "distill.running_floor", "must be positive");

  require(fediod.dp.noise_multiplier >= 0.0, "dp.noise_multiplier", "must be non-negative");
  if (fediod.dp.enabled) require(fediod.dp.clip_norm > 0.0, "dp.clip_norm", "must be positive when dp is enabled");
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Reader root(&j, "");
  RunConfig cfg;
  if (!root.has("mode")) throw ConfigError("mode: required");
  if (!root.has("dataset")) throw ConfigError("dataset: required");

  std::string mode;
  root.get("mode", mode);
  cfg.mode = mode_from_string(mode);
  root.get("output_dir", cfg.output_dir);
  root.get("nodes", cfg.nodes);
  root.get("alpha", cfg.alpha);
  root.get_seeds("seeds", cfg.seeds);

  {
    Reader r = root.child("dataset");
    auto& d = cfg.dataset;
    r.get("kind", d.kind);
    r.get("classes", d.classes);
    r.get("per_class", d.per_class);
    r.get("dim", d.dim);
    r.get("spread", d.spread);
    r.get("seed", d.seed, 0);
    r.get("test_fraction", d.test_fraction);
    r.get("train_images", d.train_images);
    r.get("train_labels", d.train_labels);
    r.get("test_images", d.test_images);
    r.get("test_labels", d.test_labels);
    r.finish();
  }
  {
    Reader r = root.child("arch");
    auto& a = cfg.arch;
    r.get("teacher", a.teacher_hidden);
    r.get("per_node_teacher", a.per_node_teacher_hidden);
    r.get("student", a.student_hidden);
    r.get("generator", a.generator_hidden);
    r.get("discriminator", a.discriminator_hidden);
    r.get("noise_dim", a.noise_dim);
    r.get("patch", a.patch);
    std::string act(to_string(a.hidden));
    r.get("activation", act);
    try {
      a.hidden = activation_from_string(act);
    } catch (const std::exception&) {
      throw ConfigError("arch.activation: unknown activation '" + act + "'");
    }
    r.finish();
  }
  read_local(root.child("local"), cfg.local);
  {
    Reader r = root.child("distill");
    auto& f = cfg.fediod;
    auto& h = f.distill;
    r.get("steps", f.steps);
    r.get("eval_interval", f.eval_interval);
    r.get("cosine_schedule", f.cosine_schedule);
    r.get("batch_size", h.batch_size);
    r.get("tau", h.tau);
    r.get("lambda_conf", h.lambda_conf);
    r.get("lambda_unique", h.lambda_unique);
    r.get("lambda_mimic", h.lambda_mimic);
    r.get("lambda_gan", h.lambda_gan);
    r.get("lr_generator", h.lr_generator);
    r.get("lr_student", h.lr_student);
    r.get("lr_discriminator", h.lr_discriminator);
    r.get("ema_decay", h.ema_decay);
    r.get("running_floor", h.running_floor);
    r.finish();
  }
  {
    Reader r = root.child("fedavg");
    r.get("rounds", cfg.fedavg.rounds);
    r.get("eval_interval", cfg.fedavg.eval_interval);
    read_local(r.child("local"), cfg.fedavg.local);
    r.finish();
  }
  {
    Reader r = root.child("dp");
    r.get("enabled", cfg.fediod.dp.enabled);
    r.get("clip_norm", cfg.fediod.dp.clip_norm);
    r.get("noise_multiplier", cfg.fediod.dp.noise_multiplier);
    r.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string write_config(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& a = cfg.arch;
  const auto& f = cfg.fediod;
  const auto& h = f.distill;
  json j;
  j["mode"] = to_string(cfg.mode);
  j["output_dir"] = cfg.output_dir;
  j["nodes"] = cfg.nodes;
  j["alpha"] = cfg.alpha;
  j["seeds"] = cfg.seeds;
  j["dataset"] = {{"kind", d.kind},
                  {"classes", d.classes},
                  {"per_class", d.per_class},
                  {"dim", d.dim},
                  {"spread", d.spread},
                  {"seed", d.seed},
                  {"test_fraction", d.test_fraction},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels}};
  j["arch"] = {{"teacher", a.teacher_hidden},
               {"per_node_teacher", a.per_node_teacher_hidden},
               {"student", a.student_hidden},
               {"generator", a.generator_hidden},
               {"discriminator", a.discriminator_hidden},
               {"noise_dim", a.noise_dim},
               {"patch", a.patch},
               {"activation", std::string(to_string(a.hidden))}};
  j["local"] = local_json(cfg.local);
  j["distill"] = {{"steps", f.steps},
                  {"eval_interval", f.eval_interval},
                  {"cosine_schedule", f.cosine_schedule},
                  {"batch_size", h.batch_size},
                  {"tau", h.tau},
                  {"lambda_conf", h.lambda_conf},
                  {"lambda_unique", h.lambda_unique},
                  {"lambda_mimic", h.lambda_mimic},
                  {"lambda_gan", h.lambda_gan},
                  {"lr_generator", h.lr_generator},
                  {"lr_student", h.lr_student},
                  {"lr_discriminator", h.lr_discriminator},
                  {"ema_decay", h.ema_decay},
                  {"running_floor", h.running_floor}};
  j["fedavg"] = {{"rounds", cfg.fedavg.rounds},
                 {"eval_interval", cfg.fedavg.eval_interval},
                 {"local", local_json(cfg.fedavg.local)}};
  j["dp"] = {{"enabled", f.dp.enabled}, {"clip_norm", f.dp.clip_norm}, {"noise_multiplier", f.dp.noise_multiplier}};
  return j.dump(2) + "\n";
}

}  // namespace fediod
