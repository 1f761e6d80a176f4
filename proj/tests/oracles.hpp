#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance suite. Deliberately brute force.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "tapetrack/mrf.hpp"
#include "tapetrack/pbp.hpp"
#include "tapetrack/raster.hpp"

namespace oracle {

using tapetrack::Vec3;

// Short edges counted directly from the row sizes: neighbours within a row
// plus every pair across adjacent rows.
inline int short_edge_count(const std::vector<int>& rows) {
  int count = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    count += rows[r] - 1;
    if (r + 1 < rows.size()) count += rows[r] * rows[r + 1];
  }
  return count;
}

// Neighbour count of each edge by pairwise endpoint comparison.
inline std::vector<int> pairwise_neighbor_counts(const std::vector<tapetrack::TapeEdge>& edges) {
  std::vector<int> omega(edges.size(), 0);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    for (std::size_t j = 0; j < edges.size(); ++j) {
      if (i != j && (edges[i].a == edges[j].a || edges[i].a == edges[j].b || edges[i].b == edges[j].a ||
                     edges[i].b == edges[j].b)) {
        ++omega[i];
      }
    }
  }
  return omega;
}

// Squared Euclidean distance from (x, y) to the nearest set pixel, O(N) per
// query; -1 for an empty mask.
inline long nearest_mask_sq_distance(const tapetrack::Image8& mask, int x, int y) {
  long best = -1;
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask(u, v)) continue;
      const long d = static_cast<long>(u - x) * (u - x) + static_cast<long>(v - y) * (v - y);
      if (best < 0 || d < best) best = d;
    }
  }
  return best;
}

inline double nearest_mask_distance(const tapetrack::Image8& mask, int x, int y) {
  return std::sqrt(static_cast<double>(nearest_mask_sq_distance(mask, x, y)));
}

inline tapetrack::Image8 random_mask(std::mt19937_64& gen, int max_side) {
  std::uniform_int_distribution<int> side(1, max_side);
  const int w = side(gen);
  const int h = side(gen);
  tapetrack::Image8 mask(w, h, 0);
  const double density = std::uniform_real_distribution<double>(0.002, 0.3)(gen);
  std::bernoulli_distribution on(density);
  for (auto& m : mask.data) m = on(gen) ? 255 : 0;
  mask(static_cast<int>(gen() % static_cast<std::uint64_t>(w)), static_cast<int>(gen() % static_cast<std::uint64_t>(h))) = 255;
  return mask;
}

// Random tree: node k > 0 attaches to a uniformly chosen earlier
// node, then labels are shuffled.
inline tapetrack::PairGraph random_tree(std::mt19937_64& gen, int n) {
  std::vector<int> label(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) label[static_cast<std::size_t>(i)] = i;
  std::shuffle(label.begin(), label.end(), gen);
  std::vector<std::pair<int, int>> edges;
  for (int k = 1; k < n; ++k) {
    const int parent = static_cast<int>(gen() % static_cast<std::uint64_t>(k));
    int a = label[static_cast<std::size_t>(parent)];
    int b = label[static_cast<std::size_t>(k)];
    if (gen() % 2) std::swap(a, b);
    edges.emplace_back(a, b);
  }
  return tapetrack::PairGraph(n, std::move(edges));
}

// Integer-valued tables keep sums exact so ties are decided identically.
inline tapetrack::ParticleTables random_tables(std::mt19937_64& gen, const tapetrack::PairGraph& g, int max_particles) {
  std::uniform_int_distribution<int> count(1, max_particles);
  std::uniform_int_distribution<int> value(0, 40);
  tapetrack::ParticleTables t;
  std::vector<int> sizes;
  for (int s = 0; s < g.node_count; ++s) {
    const int k = count(gen);
    sizes.push_back(k);
    Eigen::VectorXd u(k);
    for (int i = 0; i < k; ++i) u(i) = value(gen);
    t.unary.push_back(u);
  }
  for (const auto& [a, b] : g.edges) {
    Eigen::MatrixXd m(sizes[static_cast<std::size_t>(a)], sizes[static_cast<std::size_t>(b)]);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = value(gen);
    }
    t.pairwise.push_back(m);
  }
  return t;
}

inline double labelling_energy(const tapetrack::PairGraph& g, const tapetrack::ParticleTables& t,
                               const std::vector<int>& x) {
  double e = 0.0;
  for (int s = 0; s < g.node_count; ++s) e += t.unary[static_cast<std::size_t>(s)](x[static_cast<std::size_t>(s)]);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    e += t.pairwise[k](x[static_cast<std::size_t>(g.edges[k].first)], x[static_cast<std::size_t>(g.edges[k].second)]);
  }
  return e;
}

// Minimum over the full product space of particle choices.
inline double min_labelling_energy(const tapetrack::PairGraph& g, const tapetrack::ParticleTables& t) {
  std::vector<int> x(static_cast<std::size_t>(g.node_count), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    best = std::min(best, labelling_energy(g, t, x));
    int s = 0;
    while (s < g.node_count) {
      auto& xs = x[static_cast<std::size_t>(s)];
      if (++xs < t.unary[static_cast<std::size_t>(s)].size()) break;
      xs = 0;
      ++s;
    }
    if (s == g.node_count) break;
  }
  return best;
}

// Kolmogorov distance between the empirical CDF of `xs` and `cdf`.
template <typename Cdf>
double kolmogorov_distance(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

// Indices of the k nearest points, sorted by (distance, index).
inline std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, int k) {
  std::vector<std::pair<double, int>> all;
  for (std::size_t i = 0; i < pts.size(); ++i) all.emplace_back((pts[i] - q).squaredNorm(), static_cast<int>(i));
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < static_cast<int>(all.size()); ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

// Segment a -> b meets the open ball (c, r): solve |a + u (b - a) - c|^2 = r^2
// and test whether the root interval overlaps [0, 1].
inline bool segment_hits_sphere(const Vec3& a, const Vec3& b, const Vec3& c, double r) {
  const Vec3 d = b - a;
  const Vec3 f = a - c;
  const double qa = d.dot(d);
  const double qb = 2.0 * f.dot(d);
  const double qc = f.dot(f) - r * r;
  if (qc < 0.0) return true;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc <= 0.0) return false;
  const double sq = std::sqrt(disc);
  const double u0 = (-qb - sq) / (2.0 * qa);
  const double u1 = (-qb + sq) / (2.0 * qa);
  return u0 < 1.0 && u1 > 0.0;
}

// Bilinear lookup written out per camera, with the border clamp and penalty.
inline double manual_image_cost(const std::vector<tapetrack::CostRaster>& rasters,
                                const std::vector<tapetrack::CameraModel>& cameras, const Vec3& p) {
  double sum = 0.0;
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    const auto& cam = cameras[c];
    const auto& g = rasters[c].values;
    const Vec3 q = cam.rotation * p + cam.translation;
    if (q.z() <= 0.0) {
      sum += tapetrack::kCostMax;
      continue;
    }
    const double u = cam.fx * q.x() / q.z() + cam.cx;
    const double v = cam.fy * q.y() / q.z() + cam.cy;
    const double uc = std::min(std::max(u, 0.0), g.width - 1.0);
    const double vc = std::min(std::max(v, 0.0), g.height - 1.0);
    const int i0 = static_cast<int>(std::floor(uc));
    const int j0 = static_cast<int>(std::floor(vc));
    const int i1 = std::min(i0 + 1, g.width - 1);
    const int j1 = std::min(j0 + 1, g.height - 1);
    const double a = uc - i0;
    const double b = vc - j0;
    sum += g(i0, j0) * (1 - a) * (1 - b) + g(i1, j0) * a * (1 - b) + g(i0, j1) * (1 - a) * b + g(i1, j1) * a * b;
    sum += std::sqrt((u - uc) * (u - uc) + (v - vc) * (v - vc));
  }
  return sum;
}

// Energies accumulated term by term in separate sums.
struct TermSums {
  double unary = 0.0;
  double t[4] = {0.0, 0.0, 0.0, 0.0};
  double total() const { return unary + t[0] + t[1] + t[2] + t[3]; }
};

inline TermSums mrf1_terms(const std::vector<tapetrack::MRFNodeState>& x, const tapetrack::TapeTopology& topo,
                           const tapetrack::MRFParams& prm, const tapetrack::FrameContext& ctx) {
  TermSums out;
  for (const auto& s : x) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : ctx.feasibility) best = std::min(best, (s.position - f).norm());
    out.unary += best;
  }
  for (const auto& e : topo.all_edges()) {
    const double target = e.nominal.norm();
    for (int dir = 0; dir < 2; ++dir) {
      const auto& s = x[static_cast<std::size_t>(dir ? e.b : e.a)];
      const auto& t = x[static_cast<std::size_t>(dir ? e.a : e.b)];
      const Vec3 p = s.position - t.position;
      const Vec3 n = ctx.normal_at(0.5 * (s.position + t.position));
      const double len = std::sqrt(p.x() * p.x() + p.y() * p.y() + p.z() * p.z());
      out.t[0] += prm.theta1 * std::pow(len - s.d, 2);
      out.t[1] += prm.theta2 * std::pow(p.dot(n), 2);
      if (len < prm.d_min) out.t[2] += prm.theta3 * std::pow(std::exp(prm.d_min - len), 2);
      out.t[3] += prm.theta4 * std::pow(len - target, 2);
    }
  }
  return out;
}

inline TermSums mrf2_terms(const std::vector<tapetrack::MRFNodeState>& x, const tapetrack::TapeTopology& topo,
                           const tapetrack::MRFParams& prm, const tapetrack::FrameContext& ctx,
                           const std::vector<tapetrack::CostRaster>& rasters,
                           const std::vector<tapetrack::CameraModel>& cameras) {
  TermSums out;
  for (const auto& s : x) out.unary += manual_image_cost(rasters, cameras, s.position);
  for (const auto& e : topo.short_edges()) {
    const double target = e.nominal.norm();
    for (int dir = 0; dir < 2; ++dir) {
      const Vec3 ps = x[static_cast<std::size_t>(dir ? e.b : e.a)].position;
      const Vec3 pt = x[static_cast<std::size_t>(dir ? e.a : e.b)].position;
      const Vec3 mid = 0.5 * (ps + pt);
      const Vec3 p = ps - pt;
      out.t[0] += prm.theta5 * (manual_image_cost(rasters, cameras, ps) + manual_image_cost(rasters, cameras, pt) -
                                2.0 * manual_image_cost(rasters, cameras, mid));
      out.t[1] += prm.theta6 * std::pow(p.dot(ctx.normal_at(mid)), 2);
      out.t[2] += prm.theta7 * std::pow(p.dot(ctx.misalignment_axis(mid, e)), 2);
      out.t[3] += prm.theta8 * std::pow(p.norm() - target, 2);
    }
  }
  return out;
}

}  // namespace oracle
