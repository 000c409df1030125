#include "fediod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

namespace fediod {

namespace {

void check_dims(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2, const char* who) {
  if (h1 != h2 || w1 != w2) {
    throw MetricError(std::string(who) + ": dimension mismatch " + std::to_string(h1) + "x" + std::to_string(w1) +
                      " vs " + std::to_string(h2) + "x" + std::to_string(w2));
  }
}

// Contingency statistics between two instance maps.
struct Overlap {
  std::vector<std::size_t> size_a, size_b;         // index 0 unused
  std::vector<std::vector<std::size_t>> inter;     // [i][j], 1-based
  std::size_t total_a = 0, total_b = 0;
};

Overlap overlap(const InstanceMap& a, const InstanceMap& b) {
  Overlap o;
  o.size_a.assign(a.n_instances + 1, 0);
  o.size_b.assign(b.n_instances + 1, 0);
  o.inter.assign(a.n_instances + 1, std::vector<std::size_t>(b.n_instances + 1, 0));
  for (std::size_t p = 0; p < a.ids.size(); ++p) {
    const std::size_t i = a.ids[p], j = b.ids[p];
    if (i > a.n_instances || j > b.n_instances) throw MetricError("instance id exceeds n_instances");
    if (i) ++o.size_a[i];
    if (j) ++o.size_b[j];
    if (i && j) ++o.inter[i][j];
  }
  for (std::size_t i = 1; i <= a.n_instances; ++i) o.total_a += o.size_a[i];
  for (std::size_t j = 1; j <= b.n_instances; ++j) o.total_b += o.size_b[j];
  return o;
}

double iou(std::size_t inter, std::size_t sa, std::size_t sb) {
  return static_cast<double>(inter) / static_cast<double>(sa + sb - inter);
}

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void edt_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < inf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d, d + n, inf);
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == inf) continue;
    const double fq = f[q] + static_cast<double>(q * q);
    double s = 0.0;
    for (;;) {
      const double vk = static_cast<double>(v[k]);
      s = (fq - (f[v[k]] + vk * vk)) / (2.0 * (static_cast<double>(q) - vk));
      // z[0] is -inf, so k never underflows.
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

BinaryMask::BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, false) {
  if (h == 0 || w == 0) throw MetricError("mask dimensions must be positive");
}

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

InstanceMap::InstanceMap(std::size_t h, std::size_t w) : height(h), width(w), ids(h * w, 0) {
  if (h == 0 || w == 0) throw MetricError("instance map dimensions must be positive");
}

void InstanceMap::validate() {
  n_instances = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end());
  std::vector<bool> seen(n_instances + 1, false);
  for (std::size_t id : ids) seen[id] = true;
  for (std::size_t i = 1; i <= n_instances; ++i) {
    if (!seen[i]) throw MetricError("instance id " + std::to_string(i) + " has no pixels");
  }
}

BinaryMask InstanceMap::foreground() const {
  BinaryMask m(height, width);
  for (std::size_t p = 0; p < ids.size(); ++p) m.bits[p] = ids[p] != 0;
  return m;
}

double dice(const BinaryMask& y, const BinaryMask& yhat) {
  check_dims(y.height, y.width, yhat.height, yhat.width, "dice");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t p = 0; p < y.bits.size(); ++p) {
    a += y.bits[p];
    b += yhat.bits[p];
    inter += y.bits[p] && yhat.bits[p];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::pair<double, double> sens_spec(const BinaryMask& y, const BinaryMask& yhat) {
  check_dims(y.height, y.width, yhat.height, yhat.width, "sens_spec");
  std::size_t tp = 0, pos = 0, tn = 0, negs = 0;
  for (std::size_t p = 0; p < y.bits.size(); ++p) {
    if (y.bits[p]) {
      ++pos;
      tp += yhat.bits[p];
    } else {
      ++negs;
      tn += !yhat.bits[p];
    }
  }
  const double sens = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 1.0;
  const double spec = negs ? static_cast<double>(tn) / static_cast<double>(negs) : 1.0;
  return {sens, spec};
}

BinaryMask boundary(const BinaryMask& m) {
  BinaryMask b(m.height, m.width);
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      const bool edge = r == 0 || c == 0 || r + 1 == m.height || c + 1 == m.width || !m.at(r - 1, c) ||
                        !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
      if (edge) b.set(r, c);
    }
  }
  return b;
}

std::vector<double> squared_distance_transform(const BinaryMask& m) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t h = m.height, w = m.width;
  std::vector<double> grid(h * w);
  for (std::size_t p = 0; p < grid.size(); ++p) grid[p] = m.bits[p] ? 0.0 : inf;
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w)), d(std::max(h, w));
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = grid[r * w + c];
    edt_1d(f.data(), d.data(), h, v, z);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = d[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    edt_1d(&grid[r * w], d.data(), w, v, z);
    std::copy(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(w), grid.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return grid;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw MetricError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double hd95(const BinaryMask& y, const BinaryMask& yhat) {
  check_dims(y.height, y.width, yhat.height, yhat.width, "hd95");
  if (y.count() == 0 || yhat.count() == 0) throw MetricError("hd95: both masks must be nonempty");
  const BinaryMask by = boundary(y), bh = boundary(yhat);
  auto directed = [](const BinaryMask& from, const BinaryMask& to) {
    const auto dt = squared_distance_transform(to);
    std::vector<double> dists;
    for (std::size_t p = 0; p < from.bits.size(); ++p)
      if (from.bits[p]) dists.push_back(std::sqrt(dt[p]));
    return quantile(std::move(dists), 0.95);
  };
  return std::max(directed(by, bh), directed(bh, by));
}

double aji(const InstanceMap& y, const InstanceMap& yhat) {
  check_dims(y.height, y.width, yhat.height, yhat.width, "aji");
  const Overlap o = overlap(y, yhat);
  std::vector<bool> used(yhat.n_instances + 1, false);
  std::size_t inter_sum = 0, union_sum = 0;
  for (std::size_t i = 1; i <= y.n_instances; ++i) {
    std::size_t best = 0;
    double best_iou = 0.0;
    for (std::size_t j = 1; j <= yhat.n_instances; ++j) {
      if (used[j] || o.inter[i][j] == 0) continue;
      const double v = iou(o.inter[i][j], o.size_a[i], o.size_b[j]);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (best) {
      used[best] = true;
      inter_sum += o.inter[i][best];
      union_sum += o.size_a[i] + o.size_b[best] - o.inter[i][best];
    } else {
      union_sum += o.size_a[i];
    }
  }
  for (std::size_t j = 1; j <= yhat.n_instances; ++j)
    if (!used[j]) union_sum += o.size_b[j];
  if (union_sum == 0) return 1.0;
  return static_cast<double>(inter_sum) / static_cast<double>(union_sum);
}

double object_dice(const InstanceMap& y, const InstanceMap& yhat) {
  check_dims(y.height, y.width, yhat.height, yhat.width, "object_dice");
  const Overlap o = overlap(y, yhat);
  if (o.total_a == 0 && o.total_b == 0) return 1.0;
  if (o.total_a == 0 || o.total_b == 0) return 0.0;

  // One direction: each object weighted by its share of foreground, scored by Dice
  // against its best-IoU partner (0 when nothing overlaps).
  auto side = [&](std::size_t n, std::size_t m, const std::vector<std::size_t>& sz, const std::vector<std::size_t>& sz_other,
                  std::size_t total, auto inter_of) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      std::size_t best = 0;
      double best_iou = 0.0;
      for (std::size_t j = 1; j <= m; ++j) {
        const std::size_t in = inter_of(i, j);
        if (in == 0) continue;
        const double v = iou(in, sz[i], sz_other[j]);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      if (!best) continue;
      const double d = 2.0 * static_cast<double>(inter_of(i, best)) / static_cast<double>(sz[i] + sz_other[best]);
      acc += static_cast<double>(sz[i]) / static_cast<double>(total) * d;
    }
    return acc;
  };
  const double gt_side =
      side(y.n_instances, yhat.n_instances, o.size_a, o.size_b, o.total_a, [&](std::size_t i, std::size_t j) { return o.inter[i][j]; });
  const double pred_side =
      side(yhat.n_instances, y.n_instances, o.size_b, o.size_a, o.total_b, [&](std::size_t j, std::size_t i) { return o.inter[i][j]; });
  return 0.5 * (gt_side + pred_side);
}

InstanceMap connected_components(const BinaryMask& m) {
  InstanceMap out(m.height, m.width);
  std::size_t next = 0;
  std::queue<std::pair<std::size_t, std::size_t>> q;
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      if (!m.at(r, c) || out.at(r, c)) continue;
      out.set(r, c, ++next);
      q.emplace(r, c);
      while (!q.empty()) {
        auto [cr, cc] = q.front();
        q.pop();
        auto visit = [&](std::size_t nr, std::size_t nc) {
          if (m.at(nr, nc) && !out.at(nr, nc)) {
            out.set(nr, nc, next);
            q.emplace(nr, nc);
          }
        };
        if (cr > 0) visit(cr - 1, cc);
        if (cr + 1 < m.height) visit(cr + 1, cc);
        if (cc > 0) visit(cr, cc - 1);
        if (cc + 1 < m.width) visit(cr, cc + 1);
      }
    }
  }
  out.n_instances = next;
  return out;
}

double inception_score_from_probs(const Tensor& probs) {
  if (probs.rank() != 2 || probs.dim(0) == 0) throw MetricError("inception score needs a batch x C probability matrix");
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  auto v = probs.values();
  std::vector<double> marginal(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) marginal[j] += v[i * c + j] / static_cast<double>(n);
  double kl_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double p = v[i * c + j];
      if (p > 0.0) kl_sum += p * std::log(p / marginal[j]);
    }
  }
  return std::exp(kl_sum / static_cast<double>(n));
}

double adapted_inception_score(const Tensor& generated, const std::vector<const Network*>& teachers,
                               std::span<const double> pi, double tau) {
  if (!generated.defined() || generated.rank() != 2 || generated.dim(0) < 2) {
    throw MetricError("adapted inception score needs a batch of at least two generated samples");
  }
  if (teachers.empty() || pi.size() != teachers.size()) throw MetricError("one weight per teacher required");
  const Tensor x = generated.detach();
  double score = 0.0;
  for (std::size_t k = 0; k < teachers.size(); ++k) {
    score += pi[k] * inception_score_from_probs(softmax_tau(teachers[k]->forward(x).detach(), tau));
  }
  return score;
}

InstanceMap parse_pgm(const std::string& text) {
  std::istringstream lines(text);
  std::string line, body;
  while (std::getline(lines, line)) {
    const auto hash = line.find('#');
    body += line.substr(0, hash) + ' ';
  }
  std::istringstream in(body);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  if (!(in >> magic) || magic != "P2") throw MetricError("PGM: expected plain 'P2' header");
  if (!(in >> w >> h >> maxval) || w == 0 || h == 0) throw MetricError("PGM: bad dimensions");
  InstanceMap m(h, w);
  std::map<std::size_t, std::size_t> relabel;
  std::vector<std::size_t> raw(h * w);
  for (auto& v : raw) {
    if (!(in >> v)) throw MetricError("PGM: truncated pixel grid");
    if (v > maxval) throw MetricError("PGM: pixel exceeds maxval");
    if (v) relabel[v] = 0;
  }
  std::size_t next = 0;
  for (auto& [k, id] : relabel) id = ++next;
  for (std::size_t p = 0; p < raw.size(); ++p) m.ids[p] = raw[p] ? relabel[raw[p]] : 0;
  m.n_instances = next;
  return m;
}

std::string to_pgm(const InstanceMap& m) {
  std::ostringstream os;
  os << "P2\n" << m.width << ' ' << m.height << '\n' << std::max<std::size_t>(m.n_instances, 1) << '\n';
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) os << (c ? " " : "") << m.at(r, c);
    os << '\n';
  }
  return os.str();
}

InstanceMap read_pgm_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pgm(ss.str());
}

BinaryMask read_pgm_mask(const std::string& path) { return read_pgm_instances(path).foreground(); }

}  // namespace fediod
