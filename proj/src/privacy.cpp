#include "fediod/privacy.hpp"

#include <cmath>
#include <stdexcept>

namespace fediod {

namespace {

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void DpConfig::validate() const {
  if (enabled && !(clip_norm > 0.0)) throw std::invalid_argument("dp.clip_norm must be positive when DP is enabled");
  if (!(noise_multiplier >= 0.0)) throw std::invalid_argument("dp.noise_multiplier must be non-negative");
}

double clip_factor(std::span<const double> v, double clip_norm) {
  const double norm = l2(v);
  return norm > clip_norm ? clip_norm / norm : 1.0;
}

double clipped_norm_bound(std::span<const double> v, double clip_norm) { return clip_factor(v, clip_norm) * l2(v); }

std::vector<double> sanitize(std::span<const double> v, const DpConfig& cfg, Rng& rng) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("sanitize: non-finite payload value");
  }
  std::vector<double> out(v.begin(), v.end());
  if (!cfg.enabled) return out;
  cfg.validate();
  const double f = clip_factor(v, cfg.clip_norm);
  const double sd = cfg.noise_multiplier * cfg.clip_norm;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& x : out) {
    x *= f;
    if (sd > 0.0) x += sd * noise(rng);
  }
  return out;
}

}  // namespace fediod
