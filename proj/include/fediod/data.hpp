#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fediod/nets.hpp"
#include "fediod/tensor.hpp"

namespace fediod {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labeled samples; inputs are row-major N x dim with values in [-1, 1].
struct Dataset {
  std::string name;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
  Tensor input_batch(const std::vector<std::size_t>& indices) const;
  Tensor all_inputs() const;
  /// Copies the selected rows into a new dataset.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

/// Per-node sample ownership produced by a Dirichlet split.
struct PartitionSpec {
  std::vector<std::vector<std::size_t>> node_indices;
  std::vector<std::vector<std::size_t>> label_histogram;  // K x C
  double alpha = 0.0;
  std::uint64_t seed = 0;

  std::size_t num_nodes() const { return node_indices.size(); }
  std::size_t num_classes() const { return label_histogram.empty() ? 0 : label_histogram.front().size(); }
  std::size_t node_size(std::size_t k) const { return node_indices.at(k).size(); }

  std::string to_json() const;
  static PartitionSpec from_json(const std::string& text);
};

/// Gaussian clusters around C centers evenly spaced on a circle of radius 0.7
/// in the first two coordinates; remaining coordinates are centered at 0.
Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed);

/// Stratified holdout: roughly `fraction` of each class goes to the second dataset.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, std::uint64_t seed);

/// Class-wise Dirichlet split across `num_nodes` nodes. Every node ends with at least one sample.
PartitionSpec dirichlet_partition(const Dataset& ds, std::size_t num_nodes, double alpha, std::uint64_t seed);

/// Even IID split (round-robin over a shuffled order).
PartitionSpec iid_partition(const Dataset& ds, std::size_t num_nodes, std::uint64_t seed);

/// |X'_k| / sum_k' |X'_k'|.
double local_weight(const PartitionSpec& spec, std::size_t k);
std::vector<double> local_weights(const PartitionSpec& spec);

/// count_k(c) / sum_k' count_k'(c).
double class_prior_ratio(const PartitionSpec& spec, std::size_t k, std::size_t c);

/// Mean over nodes of the total-variation distance between the node's label
/// distribution and the pooled label distribution.
double mean_tv_distance(const PartitionSpec& spec);

}  // namespace fediod
