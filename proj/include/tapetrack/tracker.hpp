#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "tapetrack/blp.hpp"
#include "tapetrack/candidates.hpp"
#include "tapetrack/geometry.hpp"
#include "tapetrack/mrf.hpp"
#include "tapetrack/raster.hpp"
#include "tapetrack/sampling.hpp"
#include "tapetrack/tape.hpp"

namespace tapetrack {

struct TrackerConfig {
  CandidateThresholds candidate;
  double th3 = 0.0;  // <= 0: 0.55 * min(d_targets)
  double th4 = 0.0;  // <= 0: 1.45 * max(d_targets)
  SelectionOptions selection{6, 12, 0.5, 200'000};
  MRFParams mrf;
  double normal_radius = kDefaultNormalRadius;
  Vec3 up = Vec3::UnitY();
  double template_search_rows = 2.0;  // template slide range, in rows
  double template_search_step = 1.0;  // [mm]
  // Spine fit degree drops to 2 (then 1) when the support spans less than
  // these fractions of the tape length.
  double cubic_min_coverage = 0.6;
  double quadratic_min_coverage = 0.3;

  double lower_band(const TapeTopology& topo) const {
    return th3 > 0.0 ? th3 : 0.55 * std::min(topo.d_target_long, topo.d_target_trans);
  }
  double upper_band(const TapeTopology& topo) const {
    return th4 > 0.0 ? th4 : 1.45 * std::max(topo.d_target_long, topo.d_target_trans);
  }
};

struct TrackResult {
  int frame = 0;
  std::vector<Vec3> positions;  // per topology dot
  std::vector<Vec3> initial_positions;  // template before MRF1
  std::vector<Vec3> mrf1_positions;
  bool low_confidence = false;
  std::vector<std::string> notes;
  std::vector<double> mrf1_trace;
  std::vector<double> mrf2_trace;
  int candidate_count = 0;
  int cloud_edges = 0;
  int selected_edges = 0;
  int achieved_n_e = 0;
};

namespace detail {

// Point closest (least squares) to all camera optical axes.
inline Vec3 camera_focus(const std::vector<CameraModel>& cameras) {
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& cam : cameras) {
    const Vec3 dir = cam.rotation.row(2).transpose().normalized();
    const Mat3 p = Mat3::Identity() - dir * dir.transpose();
    a += p;
    b += p * cam.center();
  }
  Eigen::FullPivLU<Mat3> lu(a);
  if (lu.rank() < 3) {
    Vec3 mean = Vec3::Zero();
    for (const auto& cam : cameras) mean += cam.center();
    return cameras.empty() ? mean : Vec3(mean / static_cast<double>(cameras.size()));
  }
  return lu.solve(b);
}

// Straight vertical stripe through `center` facing the mean camera position.
inline std::vector<Vec3> fallback_template(const TapeTopology& topo, const std::vector<CameraModel>& cameras,
                                           const Vec3& center, const Vec3& up) {
  SpineCurve curve;
  curve.axis = up.normalized();
  curve.origin = center;
  curve.coeffs.col(0) = center;
  curve.coeffs.col(1) = curve.axis;
  const double half = 0.5 * (topo.n_row - 1) * topo.d_target_long + 1.0;
  curve.t_min = -half;
  curve.t_max = half;
  Vec3 view = Vec3::Zero();
  for (const auto& cam : cameras) view += cam.center() - center;
  view -= view.dot(curve.axis) * curve.axis;
  if (view.norm() < 1e-9) view = curve.axis.unitOrthogonal();
  NormalField field({{center, view.normalized()}}, 0.0);
  return build_template(curve, field, topo).node_positions;
}

// Points that keep at least `k` cloud neighbours after repeatedly dropping
// points with fewer. Ghosts off the tape rarely have more than two.
inline std::vector<CandidatePoint> point_core(const EdgeCloud& cloud, int k) {
  const std::size_t n = cloud.points.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : cloud.edges) {
    adj[static_cast<std::size_t>(e.i)].push_back(e.j);
    adj[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  std::vector<int> deg(n);
  std::vector<char> alive(n, 1);
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i) {
    deg[i] = static_cast<int>(adj[i].size());
    if (deg[i] < k) {
      alive[i] = 0;
      stack.push_back(static_cast<int>(i));
    }
  }
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[static_cast<std::size_t>(v)]) {
      const auto ws = static_cast<std::size_t>(w);
      if (alive[ws] && --deg[ws] < k) {
        alive[ws] = 0;
        stack.push_back(w);
      }
    }
  }
  std::vector<CandidatePoint> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.push_back(cloud.points[i]);
  }
  return out;
}

}  // namespace detail

// Full per-frame pipeline: candidates, edge cloud, edge selection, template
// initialisation, MRF1, then MRF2 when cost rasters are available.
inline TrackResult track_frame(const TapeTopology& topo, const std::vector<CameraModel>& cameras,
                               const std::vector<CameraDetections>& detections,
                               const std::vector<CostRaster>& rasters, const TrackerConfig& cfg, int frame) {
  cfg.mrf.validate();
  TrackResult out;
  out.frame = frame;

  std::vector<CandidatePoint> candidates = build_candidates(detections, cameras, cfg.candidate);
  out.candidate_count = static_cast<int>(candidates.size());
  EdgeCloud cloud = build_edge_cloud(std::move(candidates), cfg.lower_band(topo), cfg.upper_band(topo));
  out.cloud_edges = static_cast<int>(cloud.edges.size());

  const EdgeSelection sel = solve_selection(make_selection_problem(cloud, target_edge_count(topo.n_row)), cfg.selection);
  out.achieved_n_e = sel.achieved_n_e;
  if (!sel.proven_optimal) out.notes.emplace_back("blp-node-limit");

  std::vector<CandidatePoint> support;
  if (sel.feasible && sel.achieved_n_e > 0) {
    std::vector<char> used(cloud.points.size(), 0);
    for (std::size_t e = 0; e < cloud.edges.size(); ++e) {
      if (!sel.selected[e]) continue;
      ++out.selected_edges;
      used[static_cast<std::size_t>(cloud.edges[e].i)] = 1;
      used[static_cast<std::size_t>(cloud.edges[e].j)] = 1;
    }
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      if (used[i]) support.push_back(cloud.points[i]);
    }
  } else {
    out.low_confidence = true;
    out.notes.emplace_back("blp-infeasible");
    support = detail::point_core(cloud, 3);
    if (support.size() < 4) support = cloud.points;
  }

  FrameContext ctx;
  bool fitted = false;
  if (support.size() >= 4) {
    try {
      auto [curve, normals] = fit_curve_and_normals(support, cfg.normal_radius, cfg.up);
      // Support covering a small part of the tape cannot pin a cubic, and
      // extrapolating one over the rest of the tape folds it back.
      const double covered = (curve.t_max - curve.t_min) / std::max((topo.n_row - 1) * topo.d_target_long, 1e-9);
      if (covered < cfg.cubic_min_coverage) {
        std::tie(curve, normals) = fit_curve_and_normals(support, cfg.normal_radius, cfg.up,
                                                         covered < cfg.quadratic_min_coverage ? 1 : 2);
      }
      ctx.curve = std::move(curve);
      ctx.normals = std::move(normals);
      fitted = true;
    } catch (const Error&) {
    }
  }
  if (!fitted) {
    out.low_confidence = true;
    out.notes.emplace_back("template-only");
    Vec3 center = detail::camera_focus(cameras);
    if (!cloud.points.empty()) {
      center = Vec3::Zero();
      for (const auto& p : cloud.points) center += p.position;
      center /= static_cast<double>(cloud.points.size());
    }
    out.positions = detail::fallback_template(topo, cameras, center, cfg.up);
    return out;
  }
  for (const auto& p : support) ctx.feasibility.push_back(p.position);

  // Slide the template along the spine to the offset best explained by F
  // and, when available, the images. A partial F alone cannot tell shifts by
  // two rows apart; the tape mask can. Both terms are in row-spacing units
  // and capped so that single outliers do not dominate.
  const std::vector<RasterView> views = rasters.empty() ? std::vector<RasterView>{} : align_views(rasters, cameras);
  const double row = topo.d_target_long;
  const double image_scale = views.empty() ? 0.0 : 1.0 / (kMaxIntensity * static_cast<double>(views.size()));
  TapeTemplate best_tmpl;
  double best_score = std::numeric_limits<double>::infinity();
  // A fit covering only part of the tape is centred off the tape middle by
  // up to half the missing length.
  const double span = (ctx.curve.point(ctx.curve.t_max) - ctx.curve.point(ctx.curve.t_min)).norm();
  const double missing = std::max(0.0, (topo.n_row - 1) * row - span);
  const double range = cfg.template_search_rows * row + 0.5 * missing;
  const int steps = static_cast<int>(std::floor(range / cfg.template_search_step));
  for (int k = -steps; k <= steps; ++k) {
    TapeTemplate tmpl = build_template(ctx.curve, ctx.normals, topo, k * cfg.template_search_step);
    double score = 0.0;
    for (const auto& p : tmpl.node_positions) {
      score += std::min(ctx.nearest_distance(p), row);
      if (!views.empty()) score += row * std::min(image_cost(p, views) * image_scale, 2.0);
    }
    if (score < best_score) {
      best_score = score;
      best_tmpl = std::move(tmpl);
    }
  }
  if (best_tmpl.extrapolated) out.notes.emplace_back("curve-too-short");

  out.initial_positions = best_tmpl.node_positions;
  std::vector<MRFNodeState> states(best_tmpl.node_positions.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i] = {best_tmpl.node_positions[i], best_tmpl.node_distances[i]};
  }
  auto mrf1 = run_mrf1(topo, ctx, cfg.mrf, std::move(states), stream_key(cfg.mrf.rng_seed, static_cast<std::uint64_t>(frame), 1));
  out.mrf1_trace = mrf1.energy_trace;
  states = std::move(mrf1.states);
  for (const auto& s : states) out.mrf1_positions.push_back(s.position);

  if (rasters.empty()) {
    out.notes.emplace_back("no-refine");
  } else {
    std::vector<Vec3> positions;
    for (const auto& s : states) positions.push_back(s.position);
    try {
      ctx.curve = fit_curve(positions, cfg.up);
    } catch (const Error&) {
    }
    auto mrf2 = run_mrf2(topo, ctx, cfg.mrf, views, std::move(states),
                         stream_key(cfg.mrf.rng_seed, static_cast<std::uint64_t>(frame), 2));
    out.mrf2_trace = mrf2.energy_trace;
    states = std::move(mrf2.states);
  }
  for (const auto& s : states) out.positions.push_back(s.position);
  return out;
}

}  // namespace tapetrack
