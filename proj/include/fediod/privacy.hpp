#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fediod/nets.hpp"

namespace fediod {

/// Gaussian-mechanism parameters: clip to `clip_norm`, then add N(0, (sigma * clip_norm)^2) per coordinate.
struct DpConfig {
  bool enabled = false;
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;

  void validate() const;
  bool operator==(const DpConfig&) const = default;
};

/// Clips `v` to L2 norm `cfg.clip_norm` and adds isotropic Gaussian noise.
/// A disabled config returns the input unchanged. Throws on non-finite input.
std::vector<double> sanitize(std::span<const double> v, const DpConfig& cfg, Rng& rng);

/// min(1, C / ||v||), the factor applied by clipping.
double clip_factor(std::span<const double> v, double clip_norm);

/// ||clip(v)||_2.
double clipped_norm_bound(std::span<const double> v, double clip_norm);

}  // namespace fediod
