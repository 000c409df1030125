#pragma once

// Deliberately naive reference implementations used to check the metric code.

#include <algorithm>
#include <functional>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "fediod/metrics.hpp"

namespace fediod::oracle {

using Pixel = std::pair<long, long>;

inline std::set<Pixel> pixels(const BinaryMask& m) {
  std::set<Pixel> out;
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = 0; c < m.width; ++c)
      if (m.at(r, c)) out.insert({static_cast<long>(r), static_cast<long>(c)});
  return out;
}

inline std::map<std::size_t, std::set<Pixel>> instances(const InstanceMap& m) {
  std::map<std::size_t, std::set<Pixel>> out;
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = 0; c < m.width; ++c)
      if (m.at(r, c)) out[m.at(r, c)].insert({static_cast<long>(r), static_cast<long>(c)});
  return out;
}

inline std::size_t inter(const std::set<Pixel>& a, const std::set<Pixel>& b) {
  std::size_t n = 0;
  for (const auto& p : a) n += b.count(p);
  return n;
}

inline double dice(const BinaryMask& y, const BinaryMask& p) {
  auto a = pixels(y), b = pixels(p);
  if (a.empty() && b.empty()) return 1.0;
  return 2.0 * inter(a, b) / static_cast<double>(a.size() + b.size());
}

inline std::pair<double, double> sens_spec(const BinaryMask& y, const BinaryMask& p) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < y.bits.size(); ++i) {
    if (y.bits[i] && p.bits[i]) ++tp;
    if (y.bits[i] && !p.bits[i]) ++fn;
    if (!y.bits[i] && !p.bits[i]) ++tn;
    if (!y.bits[i] && p.bits[i]) ++fp;
  }
  return {tp + fn == 0 ? 1.0 : tp / (tp + fn), tn + fp == 0 ? 1.0 : tn / (tn + fp)};
}

inline std::vector<Pixel> border(const BinaryMask& m) {
  std::vector<Pixel> out;
  const long h = static_cast<long>(m.height), w = static_cast<long>(m.width);
  auto on = [&](long r, long c) { return r >= 0 && c >= 0 && r < h && c < w && m.at(r, c); };
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      if (on(r, c) && (!on(r - 1, c) || !on(r + 1, c) || !on(r, c - 1) || !on(r, c + 1))) out.push_back({r, c});
  return out;
}

inline double percentile95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double pos = 0.95 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (pos - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

/// All-pairs boundary distances.
inline double hd95(const BinaryMask& y, const BinaryMask& p) {
  const auto a = border(y), b = border(p);
  auto directed = [](const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
    std::vector<double> d;
    for (const auto& u : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& v : to) {
        const double dr = static_cast<double>(u.first - v.first), dc = static_cast<double>(u.second - v.second);
        best = std::min(best, std::sqrt(dr * dr + dc * dc));
      }
      d.push_back(best);
    }
    return percentile95(d);
  };
  return std::max(directed(a, b), directed(b, a));
}

inline double jaccard(const std::set<Pixel>& a, const std::set<Pixel>& b) {
  const double i = static_cast<double>(inter(a, b));
  return i / (static_cast<double>(a.size() + b.size()) - i);
}

/// Greedy in ground-truth order, no reuse, over explicit pixel sets.
inline double aji(const InstanceMap& y, const InstanceMap& p) {
  const auto gt = instances(y), pr = instances(p);
  std::set<std::size_t> used;
  double num = 0, den = 0;
  for (const auto& [i, gi] : gt) {
    std::size_t best = 0;
    double best_j = 0.0;
    for (const auto& [j, pj] : pr) {
      if (used.count(j)) continue;
      const double jac = jaccard(gi, pj);
      if (jac > best_j) {
        best_j = jac;
        best = j;
      }
    }
    if (best) {
      used.insert(best);
      const auto& pj = pr.at(best);
      num += static_cast<double>(inter(gi, pj));
      den += static_cast<double>(gi.size() + pj.size() - inter(gi, pj));
    } else {
      den += static_cast<double>(gi.size());
    }
  }
  for (const auto& [j, pj] : pr)
    if (!used.count(j)) den += static_cast<double>(pj.size());
  return den == 0 ? 1.0 : num / den;
}

/// AJI with the best possible one-to-one assignment, found by trying every injection.
inline double aji_exhaustive(const InstanceMap& y, const InstanceMap& p) {
  const auto gt = instances(y), pr = instances(p);
  std::vector<std::size_t> gids, pids;
  for (const auto& [i, _] : gt) gids.push_back(i);
  for (const auto& [j, _] : pr) pids.push_back(j);
  double best = 0.0;
  // choice[g] = index into pids or -1 (unmatched)
  std::vector<int> choice(gids.size(), -1);
  std::function<void(std::size_t, std::set<int>&)> rec = [&](std::size_t g, std::set<int>& taken) {
    if (g == gids.size()) {
      double num = 0, den = 0;
      for (std::size_t a = 0; a < gids.size(); ++a) {
        const auto& gi = gt.at(gids[a]);
        if (choice[a] < 0) {
          den += static_cast<double>(gi.size());
          continue;
        }
        const auto& pj = pr.at(pids[static_cast<std::size_t>(choice[a])]);
        num += static_cast<double>(inter(gi, pj));
        den += static_cast<double>(gi.size() + pj.size() - inter(gi, pj));
      }
      for (std::size_t b = 0; b < pids.size(); ++b)
        if (!taken.count(static_cast<int>(b))) den += static_cast<double>(pr.at(pids[b]).size());
      best = std::max(best, den == 0 ? 1.0 : num / den);
      return;
    }
    choice[g] = -1;
    rec(g + 1, taken);
    for (std::size_t b = 0; b < pids.size(); ++b) {
      if (taken.count(static_cast<int>(b))) continue;
      taken.insert(static_cast<int>(b));
      choice[g] = static_cast<int>(b);
      rec(g + 1, taken);
      taken.erase(static_cast<int>(b));
    }
    choice[g] = -1;
  };
  std::set<int> taken;
  rec(0, taken);
  return best;
}

inline double object_dice(const InstanceMap& y, const InstanceMap& p) {
  const auto gt = instances(y), pr = instances(p);
  if (gt.empty() && pr.empty()) return 1.0;
  if (gt.empty() || pr.empty()) return 0.0;
  auto side = [](const std::map<std::size_t, std::set<Pixel>>& from, const std::map<std::size_t, std::set<Pixel>>& to) {
    double total = 0;
    for (const auto& [_, s] : from) total += static_cast<double>(s.size());
    double acc = 0;
    for (const auto& [_, s] : from) {
      const std::set<Pixel>* partner = nullptr;
      double best = 0.0;
      for (const auto& [__, t] : to) {
        const double j = jaccard(s, t);
        if (j > best) {
          best = j;
          partner = &t;
        }
      }
      if (!partner) continue;
      const double d = 2.0 * static_cast<double>(inter(s, *partner)) / static_cast<double>(s.size() + partner->size());
      acc += static_cast<double>(s.size()) / total * d;
    }
    return acc;
  };
  return 0.5 * (side(gt, pr) + side(pr, gt));
}

/// exp(mean_i sum_c p_ic log(p_ic / pbar_c)) with the marginal recomputed inside the loop.
inline double inception_score(const std::vector<std::vector<double>>& p) {
  const std::size_t n = p.size(), c = p.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      double pbar = 0.0;
      for (std::size_t m = 0; m < n; ++m) pbar += p[m][j];
      pbar /= static_cast<double>(n);
      if (p[i][j] > 0) total += p[i][j] * std::log(p[i][j] / pbar);
    }
  }
  return std::exp(total / static_cast<double>(n));
}

// ---- random inputs

inline BinaryMask random_mask(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
  BinaryMask m(h, w);
  std::bernoulli_distribution on(density);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = on(rng);
  return m;
}

/// Up to `max_objects` overlapping rectangles painted in order, ids compacted to 1..n.
inline InstanceMap random_instances(std::size_t h, std::size_t w, std::size_t max_objects, std::mt19937_64& rng) {
  InstanceMap m(h, w);
  std::uniform_int_distribution<std::size_t> count(0, max_objects);
  const std::size_t n = count(rng);
  for (std::size_t id = 1; id <= n; ++id) {
    std::uniform_int_distribution<std::size_t> rr(0, h - 1), cc(0, w - 1);
    std::size_t r0 = rr(rng), r1 = rr(rng), c0 = cc(rng), c1 = cc(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    r1 = std::min(r1, r0 + h / 2);
    c1 = std::min(c1, c0 + w / 2);
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) m.set(r, c, id);
  }
  std::map<std::size_t, std::size_t> remap;
  for (auto id : m.ids)
    if (id) remap.emplace(id, 0);
  std::size_t next = 0;
  for (auto& [_, v] : remap) v = ++next;
  for (auto& id : m.ids)
    if (id) id = remap[id];
  m.validate();
  return m;
}

}  // namespace fediod::oracle
