#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tapetrack/error.hpp"
#include "tapetrack/geometry.hpp"

namespace tapetrack {

inline constexpr double kDefaultRowSpacing = 22.0;     // d_target_long [mm]
inline constexpr double kDefaultColumnSpacing = 13.0;  // d_target_trans [mm]

enum class EdgeClass { longitudinal, transverse, long_range };

inline const char* to_string(EdgeClass c) {
  switch (c) {
    case EdgeClass::longitudinal: return "longitudinal";
    case EdgeClass::transverse: return "transverse";
    case EdgeClass::long_range: return "long";
  }
  return "?";
}

struct TapeDot {
  int row = 0;
  int col = 0;
};

struct TapeEdge {
  int a = 0;
  int b = 0;
  EdgeClass cls = EdgeClass::transverse;
  // Nominal flat-layout offset b - a as (along stripe, across stripe) [mm].
  Vec2 nominal = Vec2::Zero();

  double nominal_length() const { return nominal.norm(); }
};

// Number of short (solid) edges of a stripe with n_row rows that starts and
// ends with a two-dot row.
inline int target_edge_count(int n_row) {
  if (n_row < 1) throw Error("invalid-rows", "n_row must be >= 1, got " + std::to_string(n_row));
  return (n_row / 2) * 2 + (n_row + 1) / 2 + (n_row - 1) * 6;
}

// A-priori dot/edge graph of the perforated stripe. Rows alternate 2,3,...,2
// dots; 2-dot rows sit at +-trans/2 from the midline, 3-dot rows at
// {-trans, 0, +trans}. Columns increase along tangent x normal.
struct TapeTopology {
  int n_row = 0;
  double d_target_long = kDefaultRowSpacing;
  double d_target_trans = kDefaultColumnSpacing;
  std::vector<int> row_sizes;
  std::vector<int> row_start;
  std::vector<TapeDot> dots;
  std::vector<TapeEdge> transverse_edges;
  std::vector<TapeEdge> longitudinal_edges;
  std::vector<TapeEdge> long_edges;
  int n_e = 0;

  int dot_count() const { return static_cast<int>(dots.size()); }
  int index(int row, int col) const { return row_start[static_cast<std::size_t>(row)] + col; }

  // Flat-layout coordinates (along, across) of a dot, stripe centred at 0.
  Vec2 layout(int dot) const {
    const auto& d = dots[static_cast<std::size_t>(dot)];
    const double along = (d.row - 0.5 * (n_row - 1)) * d_target_long;
    const int size = row_sizes[static_cast<std::size_t>(d.row)];
    const double across = (d.col - 0.5 * (size - 1)) * d_target_trans;
    return {along, across};
  }

  std::vector<TapeEdge> short_edges() const {
    std::vector<TapeEdge> out = transverse_edges;
    out.insert(out.end(), longitudinal_edges.begin(), longitudinal_edges.end());
    return out;
  }

  std::vector<TapeEdge> all_edges() const {
    std::vector<TapeEdge> out = short_edges();
    out.insert(out.end(), long_edges.begin(), long_edges.end());
    return out;
  }
};

inline TapeTopology build_topology(int n_row, double d_target_long = kDefaultRowSpacing,
                                   double d_target_trans = kDefaultColumnSpacing) {
  if (n_row < 1 || n_row % 2 == 0) {
    throw Error("invalid-rows", "n_row must be odd and >= 1 so the stripe starts and ends with a two-dot row, got " +
                                    std::to_string(n_row));
  }
  if (!(d_target_long > 0.0) || !(d_target_trans > 0.0)) {
    throw Error("invalid-rows", "target distances must be positive");
  }
  TapeTopology topo;
  topo.n_row = n_row;
  topo.d_target_long = d_target_long;
  topo.d_target_trans = d_target_trans;
  for (int r = 0; r < n_row; ++r) {
    topo.row_start.push_back(static_cast<int>(topo.dots.size()));
    const int size = (r % 2 == 0) ? 2 : 3;
    topo.row_sizes.push_back(size);
    for (int c = 0; c < size; ++c) topo.dots.push_back({r, c});
  }

  auto make_edge = [&](int a, int b, EdgeClass cls) {
    return TapeEdge{a, b, cls, topo.layout(b) - topo.layout(a)};
  };
  for (int r = 0; r < n_row; ++r) {
    const int size = topo.row_sizes[static_cast<std::size_t>(r)];
    for (int c = 0; c + 1 < size; ++c) {
      topo.transverse_edges.push_back(make_edge(topo.index(r, c), topo.index(r, c + 1), EdgeClass::transverse));
    }
    if (r + 1 < n_row) {
      const int next = topo.row_sizes[static_cast<std::size_t>(r + 1)];
      for (int c = 0; c < size; ++c) {
        for (int k = 0; k < next; ++k) {
          topo.longitudinal_edges.push_back(
              make_edge(topo.index(r, c), topo.index(r + 1, k), EdgeClass::longitudinal));
        }
      }
    }
  }
  // Anti-folding connections: same column two rows apart, and the outer
  // pair of every 3-dot row.
  for (int r = 0; r + 2 < n_row; ++r) {
    for (int c = 0; c < topo.row_sizes[static_cast<std::size_t>(r)]; ++c) {
      topo.long_edges.push_back(make_edge(topo.index(r, c), topo.index(r + 2, c), EdgeClass::long_range));
    }
  }
  for (int r = 0; r < n_row; ++r) {
    if (topo.row_sizes[static_cast<std::size_t>(r)] == 3) {
      topo.long_edges.push_back(make_edge(topo.index(r, 0), topo.index(r, 2), EdgeClass::long_range));
    }
  }
  topo.n_e = target_edge_count(n_row);
  return topo;
}

// |Omega_e| for every short edge, counting short edges sharing an endpoint.
inline std::vector<int> short_edge_neighbor_counts(const TapeTopology& topo) {
  const auto edges = topo.short_edges();
  std::vector<int> degree(static_cast<std::size_t>(topo.dot_count()), 0);
  for (const auto& e : edges) {
    ++degree[static_cast<std::size_t>(e.a)];
    ++degree[static_cast<std::size_t>(e.b)];
  }
  std::vector<int> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    out.push_back(degree[static_cast<std::size_t>(e.a)] + degree[static_cast<std::size_t>(e.b)] - 2);
  }
  return out;
}

struct TapeTemplate {
  std::vector<Vec3> node_positions;
  std::vector<double> node_distances;
  bool extrapolated = false;  // some rows fell outside the fitted curve range
};

// Local stripe frame at curve parameter t: tangent, surface normal
// (orthogonalised against the tangent) and across-stripe direction.
struct StripeFrame {
  Vec3 tangent;
  Vec3 normal;
  Vec3 across;
};

inline StripeFrame stripe_frame(const SpineCurve& curve, const NormalField& normals, double t) {
  StripeFrame f;
  f.tangent = curve.tangent(t);
  Vec3 n = normals.query(curve.point(t));
  n -= n.dot(f.tangent) * f.tangent;
  if (n.norm() < 1e-9) n = f.tangent.unitOrthogonal();
  f.normal = n.normalized();
  f.across = f.tangent.cross(f.normal).normalized();
  return f;
}

// Lays the stripe along the curve: rows at arc-length steps of d_target_long
// centred on the middle of the fitted range (shifted by `arc_offset` mm),
// dots offset across the stripe.
inline TapeTemplate build_template(const SpineCurve& curve, const NormalField& normals, const TapeTopology& topo,
                                   double arc_offset = 0.0) {
  TapeTemplate tmpl;
  const double t_center = 0.5 * (curve.t_min + curve.t_max);
  tmpl.node_positions.resize(static_cast<std::size_t>(topo.dot_count()));
  tmpl.node_distances.assign(static_cast<std::size_t>(topo.dot_count()), topo.d_target_long);
  for (int r = 0; r < topo.n_row; ++r) {
    const double along = arc_offset + (r - 0.5 * (topo.n_row - 1)) * topo.d_target_long;
    const double t = curve.parameter_at_arc_length(t_center, along);
    if (t < curve.t_min - 1e-9 || t > curve.t_max + 1e-9) tmpl.extrapolated = true;
    const StripeFrame frame = stripe_frame(curve, normals, t);
    const Vec3 base = curve.point(t);
    for (int c = 0; c < topo.row_sizes[static_cast<std::size_t>(r)]; ++c) {
      const int idx = topo.index(r, c);
      tmpl.node_positions[static_cast<std::size_t>(idx)] = base + topo.layout(idx).y() * frame.across;
    }
  }
  return tmpl;
}

}  // namespace tapetrack
