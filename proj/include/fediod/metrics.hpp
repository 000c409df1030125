#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fediod/nets.hpp"

namespace fediod {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<bool> bits;  // row-major

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w);
  bool at(std::size_t r, std::size_t c) const { return bits[r * width + c]; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits[r * width + c] = v; }
  std::size_t count() const;
};

/// 0 is background; instances are labeled 1..n_instances.
struct InstanceMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::size_t> ids;
  std::size_t n_instances = 0;

  InstanceMap() = default;
  InstanceMap(std::size_t h, std::size_t w);
  std::size_t at(std::size_t r, std::size_t c) const { return ids[r * width + c]; }
  void set(std::size_t r, std::size_t c, std::size_t id) { ids[r * width + c] = id; }
  /// Recomputes n_instances and checks every id in 1..n has at least one pixel.
  void validate();
  BinaryMask foreground() const;
};

/// 2|y & yhat| / (|y| + |yhat|); 1 when both are empty.
double dice(const BinaryMask& y, const BinaryMask& yhat);

/// (TP / |y|, TN / |not y|); a zero denominator yields 1.
std::pair<double, double> sens_spec(const BinaryMask& y, const BinaryMask& yhat);

/// Foreground pixels with at least one background 4-neighbour (outside the image counts as background).
BinaryMask boundary(const BinaryMask& m);

/// Exact squared Euclidean distance from every pixel to the nearest set pixel of `m`.
std::vector<double> squared_distance_transform(const BinaryMask& m);

/// Linear-interpolated quantile q in [0, 1] of unsorted values.
double quantile(std::vector<double> values, double q);

/// Symmetric 95th-percentile boundary distance in pixels.
double hd95(const BinaryMask& y, const BinaryMask& yhat);

/// Aggregated Jaccard Index with greedy, non-repeating matching in ground-truth order.
double aji(const InstanceMap& y, const InstanceMap& yhat);

/// Size-weighted object Dice averaged over both matching directions.
double object_dice(const InstanceMap& y, const InstanceMap& yhat);

/// 4-connected component labeling of a binary mask.
InstanceMap connected_components(const BinaryMask& m);

/// IS_k = exp(mean_x KL(q_k(x) || mean_x q_k(x))) for each teacher, combined as sum_k pi_k IS_k.
double adapted_inception_score(const Tensor& generated, const std::vector<const Network*>& teachers,
                               std::span<const double> pi, double tau = 1.0);

/// exp(mean KL(p_i || p_bar)) for rows of a batch x C probability matrix.
double inception_score_from_probs(const Tensor& probs);

/// Plain PGM (P2) reader/writer; nonzero pixels are foreground / instance ids.
InstanceMap read_pgm_instances(const std::string& path);
BinaryMask read_pgm_mask(const std::string& path);
InstanceMap parse_pgm(const std::string& text);
std::string to_pgm(const InstanceMap& m);

}  // namespace fediod
