#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "tapetrack/tape.hpp"

using namespace tapetrack;

namespace {

NormalField constant_field(const Vec3& n) { return NormalField({{Vec3::Zero(), n}}, 30.0); }

SpineCurve straight_curve(const Vec3& origin, const Vec3& axis, double half) {
  SpineCurve c;
  c.axis = axis.normalized();
  c.origin = origin;
  c.coeffs.col(0) = origin;
  c.coeffs.col(1) = c.axis;
  c.t_min = -half;
  c.t_max = half;
  return c;
}

}  // namespace

TEST(TargetEdgeCount, Examples) {
  EXPECT_EQ(target_edge_count(1), 1);
  EXPECT_EQ(target_edge_count(3), 16);
  EXPECT_EQ(target_edge_count(9), 61);
  try {
    target_edge_count(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-rows");
  }
}

TEST(Topology, EdgeCountMatchesEnumeration) {
  for (int n = 1; n <= 15; n += 2) {
    const TapeTopology t = build_topology(n);
    std::vector<int> rows;
    for (int r = 0; r < n; ++r) rows.push_back(r % 2 == 0 ? 2 : 3);
    EXPECT_EQ(t.row_sizes, rows);
    const int oracle = oracle::short_edge_count(rows);
    EXPECT_EQ(target_edge_count(n), oracle) << n;
    EXPECT_EQ(static_cast<int>(t.short_edges().size()), oracle) << n;
    EXPECT_EQ(t.dot_count(), 2 * ((n + 1) / 2) + 3 * (n / 2));
  }
}

TEST(Topology, ThreeAndNineRows) {
  const TapeTopology t3 = build_topology(3);
  EXPECT_EQ(t3.dot_count(), 7);
  EXPECT_EQ(t3.transverse_edges.size(), 4u);
  EXPECT_EQ(t3.longitudinal_edges.size(), 12u);
  const TapeTopology t9 = build_topology(9);
  EXPECT_EQ(t9.dot_count(), 22);
  EXPECT_EQ(t9.n_e, 61);
}

TEST(Topology, AdjacentRowsContributeSixLongitudinalEdges) {
  const TapeTopology t = build_topology(7);
  std::vector<int> per_gap(6, 0);
  for (const auto& e : t.longitudinal_edges) {
    const int ra = t.dots[static_cast<std::size_t>(e.a)].row;
    const int rb = t.dots[static_cast<std::size_t>(e.b)].row;
    ASSERT_EQ(std::abs(ra - rb), 1);
    ++per_gap[static_cast<std::size_t>(std::min(ra, rb))];
  }
  for (int c : per_gap) EXPECT_EQ(c, 6);
}

TEST(Topology, EvenRowsRejected) {
  for (int n : {0, 2, 4, -1}) {
    try {
      build_topology(n);
      FAIL() << n;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "invalid-rows");
    }
  }
  EXPECT_THROW(build_topology(3, 0.0, 13.0), Error);
}

TEST(Topology, NeighbourCountBounds) {
  for (int n = 3; n <= 15; n += 2) {
    const TapeTopology t = build_topology(n);
    const auto edges = t.short_edges();
    const std::vector<int> omega = oracle::pairwise_neighbor_counts(edges);
    EXPECT_EQ(short_edge_neighbor_counts(t), omega);
    EXPECT_EQ(*std::min_element(omega.begin(), omega.end()), 6) << n;
    // An interior 2-dot row (degree 12) first exists at five rows.
    EXPECT_EQ(*std::max_element(omega.begin(), omega.end()), n == 3 ? 9 : 12) << n;
  }
}

TEST(Topology, ExtremeNeighbourCountsAtExpectedEdges) {
  const TapeTopology t = build_topology(9);
  const auto edges = t.short_edges();
  const auto omega = short_edge_neighbor_counts(t);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].cls != EdgeClass::transverse) continue;
    const int row = t.dots[static_cast<std::size_t>(edges[i].a)].row;
    if (row == 0 || row == 8) {
      EXPECT_EQ(omega[i], 6);
    } else if (row % 2 == 0) {
      EXPECT_EQ(omega[i], 12);
    }
  }
}

TEST(Topology, LongEdgesSpanTwoRowsOrColumns) {
  const TapeTopology t = build_topology(9);
  for (const auto& e : t.long_edges) {
    const auto& a = t.dots[static_cast<std::size_t>(e.a)];
    const auto& b = t.dots[static_cast<std::size_t>(e.b)];
    const bool two_rows = std::abs(a.row - b.row) == 2 && a.col == b.col;
    const bool two_cols = a.row == b.row && std::abs(a.col - b.col) == 2;
    EXPECT_TRUE(two_rows || two_cols);
    const double base = two_rows ? t.d_target_long : t.d_target_trans;
    EXPECT_NEAR(e.nominal_length(), 2.0 * base, 1e-12);
  }
}

TEST(Template, StraightCurveIsFlatLayout) {
  const TapeTopology t = build_topology(9);
  const SpineCurve c = straight_curve(Vec3(10, 20, 30), Vec3(0.2, 1, 0.1), 120);
  const Vec3 axis = c.axis;
  Vec3 n = Vec3(0, 0, 1) - Vec3(0, 0, 1).dot(axis) * axis;
  const TapeTemplate tmpl = build_template(c, constant_field(n.normalized()), t);
  ASSERT_EQ(tmpl.node_positions.size(), 22u);
  for (std::size_t i = 0; i < 22; ++i) {
    for (std::size_t j = i + 1; j < 22; ++j) {
      const double d3 = (tmpl.node_positions[i] - tmpl.node_positions[j]).norm();
      const double d2 = (t.layout(static_cast<int>(i)) - t.layout(static_cast<int>(j))).norm();
      EXPECT_NEAR(d3, d2, 1e-9);
    }
  }
  for (double d : tmpl.node_distances) EXPECT_EQ(d, t.d_target_long);
  EXPECT_FALSE(tmpl.extrapolated);
}

TEST(Template, NodeCountMatchesTopology) {
  for (int n : {1, 3, 5, 7, 9}) {
    const TapeTopology t = build_topology(n);
    const TapeTemplate tmpl =
        build_template(straight_curve(Vec3::Zero(), Vec3::UnitY(), 200), constant_field(Vec3::UnitZ()), t);
    EXPECT_EQ(static_cast<int>(tmpl.node_positions.size()), t.dot_count());
    for (const auto& p : tmpl.node_positions) EXPECT_TRUE(p.allFinite());
  }
}

TEST(Template, QuarterCircleRowSpacing) {
  // Cubic fitted to a quarter circle of radius 500 mm.
  std::vector<Vec3> arc;
  for (int i = 0; i <= 60; ++i) {
    const double a = std::numbers::pi / 2 * i / 60.0;
    arc.emplace_back(500 * std::cos(a), 500 * std::sin(a), 0.0);
  }
  const SpineCurve c = fit_curve(arc, Vec3(-1, 1, 0));
  const TapeTopology t = build_topology(9);
  const TapeTemplate tmpl = build_template(c, constant_field(Vec3::UnitZ()), t);
  // Oracle: row centres (2-dot rows: midpoint; 3-dot rows: middle dot) and a
  // dense polyline arc length between consecutive centres.
  std::vector<Vec3> centres;
  for (int r = 0; r < 9; ++r) {
    const auto& P = tmpl.node_positions;
    centres.push_back(r % 2 == 0 ? Vec3(0.5 * (P[static_cast<std::size_t>(t.index(r, 0))] +
                                              P[static_cast<std::size_t>(t.index(r, 1))]))
                                 : P[static_cast<std::size_t>(t.index(r, 1))]);
  }
  for (int r = 0; r + 1 < 9; ++r) {
    const double ta = c.parameter_of(centres[static_cast<std::size_t>(r)]);
    const double tb = c.parameter_of(centres[static_cast<std::size_t>(r + 1)]);
    double len = 0.0;
    const int steps = 20000;
    for (int k = 0; k < steps; ++k) {
      len += (c.point(ta + (tb - ta) * (k + 1) / steps) - c.point(ta + (tb - ta) * k / steps)).norm();
    }
    EXPECT_NEAR(len, 22.0, 1e-3);
    const double chord = (centres[static_cast<std::size_t>(r + 1)] - centres[static_cast<std::size_t>(r)]).norm();
    EXPECT_NEAR(chord, 22.0, 0.22);
  }
}

TEST(Template, ShortCurveExtrapolates) {
  const TapeTopology t = build_topology(9);
  const TapeTemplate tmpl =
      build_template(straight_curve(Vec3::Zero(), Vec3::UnitY(), 30), constant_field(Vec3::UnitZ()), t);
  EXPECT_TRUE(tmpl.extrapolated);
  EXPECT_NEAR((tmpl.node_positions[0] - tmpl.node_positions[21]).norm(),
              (t.layout(0) - t.layout(21)).norm(), 1e-9);
}
