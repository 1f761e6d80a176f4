#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "tapetrack/error.hpp"
#include "tapetrack/geometry.hpp"
#include "tapetrack/pbp.hpp"
#include "tapetrack/raster.hpp"
#include "tapetrack/tape.hpp"

namespace tapetrack {

struct MRFParams {
  // MRF1: length vs d, normal orthogonality, minimal distance, target length.
  double theta1 = 1.0;
  double theta2 = 50.0;
  double theta3 = 10.0;
  double theta4 = 5.0;
  // MRF2: image midpoint, normal orthogonality, direction, target length.
  double theta5 = 1.0;
  double theta6 = 50.0;
  double theta7 = 50.0;
  double theta8 = 5.0;
  double d_min = 7.0;
  int particle_count = 30;
  int mrf1_iterations = 40;
  int mrf2_iterations = 60;
  int knn_k = 3;
  double slice_width = 10.0;
  int slice_max_steps = 8;
  double temperature = 1.0;
  int inner_sweeps = 8;
  std::uint64_t rng_seed = 1;

  void validate() const {
    const double w[] = {theta1, theta2, theta3, theta4, theta5, theta6, theta7, theta8};
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error("invalid-params", "MRF weights must be finite and >= 0");
    }
    if (!(d_min > 0.0)) throw Error("invalid-params", "d_min must be > 0");
    if (particle_count < 2) throw Error("invalid-params", "particle_count must be >= 2");
    if (mrf1_iterations < 0 || mrf2_iterations < 0 || knn_k < 0 || inner_sweeps < 1 || slice_max_steps < 1) {
      throw Error("invalid-params", "iteration counts must be non-negative");
    }
    if (!(slice_width >= 0.0) || !(temperature > 0.0)) {
      throw Error("invalid-params", "slice_width must be >= 0 and temperature > 0");
    }
  }
};

// Node variable. MRF2 ignores d.
struct MRFNodeState {
  Vec3 position = Vec3::Zero();
  double d = 0.0;
};

struct ParticleSet {
  int node_id = 0;
  std::vector<MRFNodeState> particles;
};

// Per-frame data shared by both MRFs: feasibility points F, fitted spine and
// normal field.
struct FrameContext {
  std::vector<Vec3> feasibility;
  SpineCurve curve;
  NormalField normals;

  // Field normal at p, orthogonalised against the spine tangent at p.
  Vec3 normal_at(const Vec3& p) const {
    const Vec3 tangent = curve.tangent(curve.parameter_of(p));
    Vec3 n = normals.query(p);
    n -= n.dot(tangent) * tangent;
    if (n.norm() < 1e-9) n = tangent.unitOrthogonal();
    return n.normalized();
  }

  // Unit direction the edge should follow at p (flat-layout offset mapped
  // onto tangent and across-stripe axes).
  Vec3 intended_direction(const Vec3& p, const TapeEdge& e) const {
    const Vec3 tangent = curve.tangent(curve.parameter_of(p));
    const Vec3 normal = normal_at(p);
    const Vec3 across = tangent.cross(normal).normalized();
    return (e.nominal.x() * tangent + e.nominal.y() * across).normalized();
  }

  // Unit vector in the local tangent plane orthogonal to the intended
  // direction; <p_st, alpha_perp> vanishes for aligned edges.
  Vec3 misalignment_axis(const Vec3& p, const TapeEdge& e) const {
    const Vec3 normal = normal_at(p);
    return normal.cross(intended_direction(p, e)).normalized();
  }

  double nearest_distance(const Vec3& p) const {
    if (feasibility.empty()) throw Error("empty-feasibility", "feasibility set is empty");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : feasibility) best = std::min(best, (p - f).squaredNorm());
    return std::sqrt(best);
  }

  // Indices of the k nearest feasibility points (ties by index).
  std::vector<int> k_nearest(const Vec3& p, int k) const {
    std::vector<int> idx(feasibility.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), [&](int a, int b) {
      const double da = (feasibility[static_cast<std::size_t>(a)] - p).squaredNorm();
      const double db = (feasibility[static_cast<std::size_t>(b)] - p).squaredNorm();
      return da < db || (da == db && a < b);
    });
    idx.resize(count);
    return idx;
  }
};

// Target length of an edge: its flat-layout length (long edges span two rows
// or two columns and so get twice the base spacing).
inline double edge_target(const TapeEdge& e) { return e.nominal_length(); }

// --- MRF1 -----------------------------------------------------------------

inline double mrf1_unary(const MRFNodeState& s, const FrameContext& ctx) { return ctx.nearest_distance(s.position); }

// Directed term psi_st with the normal supplied by the caller.
inline double mrf1_pair_term(const MRFNodeState& s, const MRFNodeState& t, double target, const Vec3& normal,
                             const MRFParams& prm) {
  const Vec3 p = s.position - t.position;
  const double len = p.norm();
  const double dn = p.dot(normal);
  double e = prm.theta1 * (len - s.d) * (len - s.d) + prm.theta2 * dn * dn +
             prm.theta4 * (len - target) * (len - target);
  if (len < prm.d_min) {
    const double x = std::exp(prm.d_min - len);
    e += prm.theta3 * x * x;
  }
  return e;
}

inline double mrf1_binary(const MRFNodeState& s, const MRFNodeState& t, const TapeEdge& edge, const MRFParams& prm,
                          const FrameContext& ctx) {
  return mrf1_pair_term(s, t, edge_target(edge), ctx.normal_at(0.5 * (s.position + t.position)), prm);
}

// Unaries plus both directed binaries of every edge (short and long).
inline double mrf1_total_energy(const std::vector<MRFNodeState>& states, const TapeTopology& topo,
                                const MRFParams& prm, const FrameContext& ctx) {
  double e = 0.0;
  for (const auto& s : states) e += mrf1_unary(s, ctx);
  for (const auto& edge : topo.all_edges()) {
    const auto& a = states[static_cast<std::size_t>(edge.a)];
    const auto& b = states[static_cast<std::size_t>(edge.b)];
    e += mrf1_binary(a, b, edge, prm, ctx) + mrf1_binary(b, a, edge, prm, ctx);
  }
  return e;
}

// --- MRF2 -----------------------------------------------------------------

struct RasterView {
  const CameraModel* camera = nullptr;
  const CostRaster* raster = nullptr;
};

inline std::vector<RasterView> align_views(const std::vector<CostRaster>& rasters,
                                           const std::vector<CameraModel>& cameras) {
  std::vector<RasterView> views;
  for (const auto& r : rasters) {
    const auto cam = std::find_if(cameras.begin(), cameras.end(), [&](const CameraModel& c) { return c.id == r.camera_id; });
    if (cam == cameras.end()) {
      throw Error("raster-camera-mismatch", "no camera for raster " + std::to_string(r.camera_id));
    }
    views.push_back({&*cam, &r});
  }
  return views;
}

inline double image_cost(const Vec3& p, const std::vector<RasterView>& views) {
  double e = 0.0;
  for (const auto& v : views) e += raster_cost(*v.raster, *v.camera, p);
  return e;
}

inline double mrf2_unary(const MRFNodeState& s, const std::vector<RasterView>& views) {
  return image_cost(s.position, views);
}

inline double mrf2_unary(const MRFNodeState& s, const std::vector<CostRaster>& rasters,
                         const std::vector<CameraModel>& cameras) {
  return mrf2_unary(s, align_views(rasters, cameras));
}

// Directed term psi_st given the image costs of both endpoints.
inline double mrf2_pair_term(const Vec3& ps, double cost_s, const Vec3& pt, double cost_t,
                             const std::vector<RasterView>& views, double target, const Vec3& normal,
                             const Vec3& misalignment, const MRFParams& prm) {
  const Vec3 p = ps - pt;
  const double len = p.norm();
  const double dn = p.dot(normal);
  const double da = p.dot(misalignment);
  const double mid = image_cost(0.5 * (ps + pt), views);
  return prm.theta5 * (cost_s + cost_t - 2.0 * mid) + prm.theta6 * dn * dn + prm.theta7 * da * da +
         prm.theta8 * (len - target) * (len - target);
}

inline double mrf2_binary(const MRFNodeState& s, const MRFNodeState& t, const TapeEdge& edge, const MRFParams& prm,
                          const FrameContext& ctx, const std::vector<RasterView>& views) {
  if (edge.cls == EdgeClass::long_range) {
    throw Error("invalid-edge-class", "image refinement uses short edges only");
  }
  const Vec3 mid = 0.5 * (s.position + t.position);
  return mrf2_pair_term(s.position, image_cost(s.position, views), t.position, image_cost(t.position, views), views,
                        edge_target(edge), ctx.normal_at(mid), ctx.misalignment_axis(mid, edge), prm);
}

inline double mrf2_total_energy(const std::vector<MRFNodeState>& states, const TapeTopology& topo,
                                const MRFParams& prm, const FrameContext& ctx, const std::vector<RasterView>& views) {
  double e = 0.0;
  for (const auto& s : states) e += mrf2_unary(s, views);
  for (const auto& edge : topo.short_edges()) {
    const auto& a = states[static_cast<std::size_t>(edge.a)];
    const auto& b = states[static_cast<std::size_t>(edge.b)];
    e += mrf2_binary(a, b, edge, prm, ctx, views) + mrf2_binary(b, a, edge, prm, ctx, views);
  }
  return e;
}

// --- particles ---------------------------------------------------------------

inline bool same_state(const MRFNodeState& a, const MRFNodeState& b, double tol = 1e-9) {
  return (a.position - b.position).cwiseAbs().maxCoeff() <= tol && std::abs(a.d - b.d) <= tol;
}

// Base particles, plus neighbour positions, plus the k nearest feasibility
// points to the node's current position; duplicates (1e-9) removed. Added
// particles keep the current d.
inline ParticleSet augment_particles(const ParticleSet& base, const MRFNodeState& current,
                                     const std::vector<MRFNodeState>& neighbor_states, const FrameContext& ctx,
                                     int k) {
  ParticleSet out;
  out.node_id = base.node_id;
  auto add = [&](const MRFNodeState& s) {
    for (const auto& q : out.particles) {
      if (same_state(q, s)) return;
    }
    out.particles.push_back(s);
  };
  for (const auto& s : base.particles) add(s);
  for (const auto& n : neighbor_states) add({n.position, current.d});
  for (int i : ctx.k_nearest(current.position, k)) add({ctx.feasibility[static_cast<std::size_t>(i)], current.d});
  return out;
}

namespace detail {

inline PairGraph edge_graph(int node_count, const std::vector<TapeEdge>& edges) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(edges.size());
  for (const auto& e : edges) pairs.emplace_back(e.a, e.b);
  return PairGraph(node_count, std::move(pairs));
}

struct NodeStateAccess {
  using State = MRFNodeState;
  static double coordinate(const State& s, int k) { return k < 3 ? s.position(k) : s.d; }
  static void set_coordinate(State& s, int k, double v) {
    if (k < 3) {
      s.position(k) = v;
    } else {
      s.d = v;
    }
  }
};

}  // namespace detail

// MRF1 over all edges (short and anti-folding), states (x, y, z, d).
class Mrf1Model : public detail::NodeStateAccess {
public:
  static constexpr int dims = 4;

  Mrf1Model(const TapeTopology& topo, const FrameContext& ctx, const MRFParams& prm)
      : topo_(topo), ctx_(ctx), prm_(prm), edges_(topo.all_edges()), graph_(detail::edge_graph(topo.dot_count(), edges_)) {
    targets_.reserve(edges_.size());
    for (const auto& e : edges_) targets_.push_back(edge_target(e));
  }

  static bool admissible(const State& s) { return s.d > 0.0 && s.position.allFinite() && std::isfinite(s.d); }

  const PairGraph& graph() const { return graph_; }

  void prepare(const std::vector<State>& current) {
    normals_.resize(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Vec3 mid = 0.5 * (current[static_cast<std::size_t>(edges_[e].a)].position +
                              current[static_cast<std::size_t>(edges_[e].b)].position);
      normals_[e] = ctx_.normal_at(mid);
    }
  }

  double unary(int, const State& s) const { return mrf1_unary(s, ctx_); }

  double pairwise(int e, const State& a, const State& b) const {
    const auto k = static_cast<std::size_t>(e);
    return mrf1_pair_term(a, b, targets_[k], normals_[k], prm_) + mrf1_pair_term(b, a, targets_[k], normals_[k], prm_);
  }

  Eigen::MatrixXd pairwise_table(int e, const std::vector<State>& pa, const std::vector<State>& pb,
                                 const Eigen::VectorXd&, const Eigen::VectorXd&) const {
    Eigen::MatrixXd table(static_cast<Eigen::Index>(pa.size()), static_cast<Eigen::Index>(pb.size()));
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t j = 0; j < pb.size(); ++j) {
        table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pairwise(e, pa[i], pb[j]);
      }
    }
    return table;
  }

  std::vector<State> augment(int node, std::vector<State> base, const std::vector<State>& current) const {
    std::vector<State> neighbors;
    for (const auto& inc : graph_.incidence[static_cast<std::size_t>(node)]) {
      neighbors.push_back(current[static_cast<std::size_t>(inc.other)]);
    }
    ParticleSet set{node, std::move(base)};
    return augment_particles(set, current[static_cast<std::size_t>(node)], neighbors, ctx_, prm_.knn_k).particles;
  }

  double total_energy(const std::vector<State>& states) const { return mrf1_total_energy(states, topo_, prm_, ctx_); }

private:
  const TapeTopology& topo_;
  const FrameContext& ctx_;
  const MRFParams& prm_;
  std::vector<TapeEdge> edges_;
  PairGraph graph_;
  std::vector<double> targets_;
  std::vector<Vec3> normals_;
};

// MRF2 over short edges only, positions only, image-driven.
class Mrf2Model : public detail::NodeStateAccess {
public:
  static constexpr int dims = 3;

  Mrf2Model(const TapeTopology& topo, const FrameContext& ctx, const MRFParams& prm, std::vector<RasterView> views)
      : topo_(topo), ctx_(ctx), prm_(prm), views_(std::move(views)), edges_(topo.short_edges()),
        graph_(detail::edge_graph(topo.dot_count(), edges_)) {
    targets_.reserve(edges_.size());
    for (const auto& e : edges_) targets_.push_back(edge_target(e));
  }

  static bool admissible(const State& s) { return s.position.allFinite(); }

  const PairGraph& graph() const { return graph_; }

  void prepare(const std::vector<State>& current) {
    normals_.resize(edges_.size());
    axes_.resize(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Vec3 mid = 0.5 * (current[static_cast<std::size_t>(edges_[e].a)].position +
                              current[static_cast<std::size_t>(edges_[e].b)].position);
      normals_[e] = ctx_.normal_at(mid);
      axes_[e] = ctx_.misalignment_axis(mid, edges_[e]);
    }
  }

  double unary(int, const State& s) const { return mrf2_unary(s, views_); }

  double pairwise(int e, const State& a, const State& b) const {
    return pair_with_costs(e, a, image_cost(a.position, views_), b, image_cost(b.position, views_));
  }

  Eigen::MatrixXd pairwise_table(int e, const std::vector<State>& pa, const std::vector<State>& pb,
                                 const Eigen::VectorXd& ua, const Eigen::VectorXd& ub) const {
    Eigen::MatrixXd table(static_cast<Eigen::Index>(pa.size()), static_cast<Eigen::Index>(pb.size()));
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t j = 0; j < pb.size(); ++j) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        table(ii, jj) = pair_with_costs(e, pa[i], ua(ii), pb[j], ub(jj));
      }
    }
    return table;
  }

  std::vector<State> augment(int node, std::vector<State> base, const std::vector<State>& current) const {
    std::vector<State> neighbors;
    for (const auto& inc : graph_.incidence[static_cast<std::size_t>(node)]) {
      neighbors.push_back(current[static_cast<std::size_t>(inc.other)]);
    }
    ParticleSet set{node, std::move(base)};
    return augment_particles(set, current[static_cast<std::size_t>(node)], neighbors, ctx_, prm_.knn_k).particles;
  }

  double total_energy(const std::vector<State>& states) const {
    return mrf2_total_energy(states, topo_, prm_, ctx_, views_);
  }

private:
  // Both directed terms; they coincide because every term is symmetric in s, t.
  double pair_with_costs(int e, const State& a, double ca, const State& b, double cb) const {
    const auto k = static_cast<std::size_t>(e);
    return 2.0 * mrf2_pair_term(a.position, ca, b.position, cb, views_, targets_[k], normals_[k], axes_[k], prm_);
  }

  const TapeTopology& topo_;
  const FrameContext& ctx_;
  const MRFParams& prm_;
  std::vector<RasterView> views_;
  std::vector<TapeEdge> edges_;
  PairGraph graph_;
  std::vector<double> targets_;
  std::vector<Vec3> normals_;
  std::vector<Vec3> axes_;
};

inline PbpOptions pbp_options(const MRFParams& prm, int iterations, std::uint64_t seed) {
  PbpOptions opt;
  opt.iterations = iterations;
  opt.particle_count = prm.particle_count;
  opt.inner_sweeps = prm.inner_sweeps;
  opt.slice_width = prm.slice_width;
  opt.slice_max_steps = prm.slice_max_steps;
  opt.temperature = prm.temperature;
  opt.seed = seed;
  return opt;
}

inline PbpResult<MRFNodeState> run_mrf1(const TapeTopology& topo, const FrameContext& ctx, const MRFParams& prm,
                                        std::vector<MRFNodeState> initial, std::uint64_t seed) {
  prm.validate();
  Mrf1Model model(topo, ctx, prm);
  return run_pbp(model, std::move(initial), pbp_options(prm, prm.mrf1_iterations, seed));
}

inline PbpResult<MRFNodeState> run_mrf2(const TapeTopology& topo, const FrameContext& ctx, const MRFParams& prm,
                                        const std::vector<RasterView>& views, std::vector<MRFNodeState> initial,
                                        std::uint64_t seed) {
  prm.validate();
  Mrf2Model model(topo, ctx, prm, views);
  return run_pbp(model, std::move(initial), pbp_options(prm, prm.mrf2_iterations, seed));
}

}  // namespace tapetrack
