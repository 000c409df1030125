#include "fediod/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace fediod {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Tensor Dataset::input_batch(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw DataError("empty batch");
  std::vector<double> v;
  v.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    if (i >= size()) throw DataError("sample index out of range");
    v.insert(v.end(), inputs.begin() + static_cast<std::ptrdiff_t>(i * dim),
             inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
  return Tensor::from({indices.size(), dim}, std::move(v));
}

Tensor Dataset::all_inputs() const {
  if (size() == 0) throw DataError("empty dataset");
  return Tensor::from({size(), dim}, inputs);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name = name;
  out.dim = dim;
  out.num_classes = num_classes;
  for (std::size_t i : indices) {
    if (i >= size()) throw DataError("sample index out of range");
    out.inputs.insert(out.inputs.end(), inputs.begin() + static_cast<std::ptrdiff_t>(i * dim),
                      inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (inputs.size() != labels.size() * dim) throw DataError("input/label count mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DataError("label out of range");
  }
  for (double v : inputs) {
    if (!(v >= -1.0 && v <= 1.0)) throw DataError("input value outside [-1, 1]");
  }
}

Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed) {
  if (num_classes < 2) throw DataError("make_blobs needs at least 2 classes");
  if (dim < 2) throw DataError("make_blobs needs dim >= 2");
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  ds.name = "blobs";
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.inputs.reserve(num_classes * per_class * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    std::vector<double> center(dim, 0.0);
    center[0] = 0.7 * std::cos(angle);
    center[1] = 0.7 * std::sin(angle);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        ds.inputs.push_back(std::clamp(center[j] + spread * n01(rng), -1.0, 1.0));
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DataError("holdout fraction must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> keep, held;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    keep.insert(keep.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(held.begin(), held.end());
  return {ds.subset(keep), ds.subset(held)};
}

namespace {

std::vector<double> sample_dirichlet(double alpha, std::size_t k, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  for (;;) {
    double total = 0.0;
    for (double& v : p) {
      v = gamma(rng);
      total += v;
    }
    if (total > 0.0 && std::isfinite(total)) {
      for (double& v : p) v /= total;
      return p;
    }
  }
}

PartitionSpec finish(const Dataset& ds, std::vector<std::vector<std::size_t>> nodes, double alpha,
                     std::uint64_t seed) {
  PartitionSpec spec;
  spec.alpha = alpha;
  spec.seed = seed;
  spec.label_histogram.assign(nodes.size(), std::vector<std::size_t>(ds.num_classes, 0));
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    std::sort(nodes[k].begin(), nodes[k].end());
    for (std::size_t i : nodes[k]) ++spec.label_histogram[k][static_cast<std::size_t>(ds.labels[i])];
  }
  spec.node_indices = std::move(nodes);
  return spec;
}

}  // namespace

PartitionSpec dirichlet_partition(const Dataset& ds, std::size_t num_nodes, double alpha, std::uint64_t seed) {
  if (num_nodes == 0) throw DataError("need at least one node");
  if (!(alpha > 0.0)) throw DataError("Dirichlet alpha must be positive");
  if (ds.size() < num_nodes) throw DataError("dataset has fewer samples than nodes");

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<std::vector<std::size_t>> nodes;
  for (int attempt = 0; attempt < 100; ++attempt) {
    nodes.assign(num_nodes, {});
    for (auto idx : by_class) {
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto p = sample_dirichlet(alpha, num_nodes, rng);
      const double n = static_cast<double>(idx.size());
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t k = 0; k < num_nodes; ++k) {
        cum += p[k];
        const std::size_t end =
            (k + 1 == num_nodes) ? idx.size() : std::min(idx.size(), static_cast<std::size_t>(std::llround(cum * n)));
        for (std::size_t j = start; j < std::max(start, end); ++j) nodes[k].push_back(idx[j]);
        start = std::max(start, end);
      }
    }
    if (std::none_of(nodes.begin(), nodes.end(), [](const auto& v) { return v.empty(); })) break;
  }
  // Repair: hand one sample from the currently largest node to each empty node.
  for (auto& node : nodes) {
    if (!node.empty()) continue;
    auto largest = std::max_element(nodes.begin(), nodes.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    std::sort(largest->begin(), largest->end());
    node.push_back(largest->back());
    largest->pop_back();
  }
  return finish(ds, std::move(nodes), alpha, seed);
}

PartitionSpec iid_partition(const Dataset& ds, std::size_t num_nodes, std::uint64_t seed) {
  if (num_nodes == 0) throw DataError("need at least one node");
  if (ds.size() < num_nodes) throw DataError("dataset has fewer samples than nodes");
  Rng rng(seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> nodes(num_nodes);
  for (std::size_t i = 0; i < order.size(); ++i) nodes[i % num_nodes].push_back(order[i]);
  return finish(ds, std::move(nodes), 0.0, seed);
}

double local_weight(const PartitionSpec& spec, std::size_t k) {
  if (k >= spec.num_nodes()) throw DataError("node index out of range");
  std::size_t total = 0;
  for (const auto& n : spec.node_indices) total += n.size();
  return static_cast<double>(spec.node_indices[k].size()) / static_cast<double>(total);
}

std::vector<double> local_weights(const PartitionSpec& spec) {
  std::vector<double> w(spec.num_nodes());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = local_weight(spec, k);
  return w;
}

double class_prior_ratio(const PartitionSpec& spec, std::size_t k, std::size_t c) {
  if (k >= spec.num_nodes() || c >= spec.num_classes()) throw DataError("node or class index out of range");
  std::size_t total = 0;
  for (const auto& row : spec.label_histogram) total += row[c];
  if (total == 0) throw DataError("class " + std::to_string(c) + " is absent from every node");
  return static_cast<double>(spec.label_histogram[k][c]) / static_cast<double>(total);
}

double mean_tv_distance(const PartitionSpec& spec) {
  const std::size_t C = spec.num_classes();
  std::vector<double> global(C, 0.0);
  double n = 0.0;
  for (const auto& row : spec.label_histogram)
    for (std::size_t c = 0; c < C; ++c) {
      global[c] += static_cast<double>(row[c]);
      n += static_cast<double>(row[c]);
    }
  for (double& g : global) g /= n;
  double acc = 0.0;
  for (const auto& row : spec.label_histogram) {
    const double size = static_cast<double>(std::accumulate(row.begin(), row.end(), std::size_t{0}));
    double tv = 0.0;
    for (std::size_t c = 0; c < C; ++c) tv += std::fabs(static_cast<double>(row[c]) / size - global[c]);
    acc += 0.5 * tv;
  }
  return acc / static_cast<double>(spec.num_nodes());
}

std::string PartitionSpec::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["seed"] = seed;
  j["node_indices"] = node_indices;
  j["label_histogram"] = label_histogram;
  return j.dump();
}

PartitionSpec PartitionSpec::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  PartitionSpec spec;
  spec.alpha = j.at("alpha").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.node_indices = j.at("node_indices").get<std::vector<std::vector<std::size_t>>>();
  spec.label_histogram = j.at("label_histogram").get<std::vector<std::vector<std::size_t>>>();
  if (spec.node_indices.size() != spec.label_histogram.size()) throw DataError("partition JSON node count mismatch");
  return spec;
}

}  // namespace fediod
