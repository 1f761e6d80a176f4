#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tapetrack/candidates.hpp"
#include "tapetrack/error.hpp"
#include "tapetrack/geometry.hpp"
#include "tapetrack/raster.hpp"
#include "tapetrack/sampling.hpp"
#include "tapetrack/tape.hpp"

namespace tapetrack {

struct SceneConfig {
  int n_row = 9;
  double d_target_long = kDefaultRowSpacing;
  double d_target_trans = kDefaultColumnSpacing;

  int camera_count = 6;
  double arc_degrees = 180.0;
  double camera_distance = 1500.0;
  std::vector<double> elevations_deg = {0.0, 35.0, -15.0, 20.0, 50.0, -5.0};  // cycled over the cameras
  int width = 1224;
  int height = 800;
  double focal = 1800.0;
  double max_view_angle_deg = 60.0;  // dots seen more obliquely are not detected

  // Sagittal bend z(s) = A sin(omega * frame + phase) s^2, s in [0, 1] along the spine.
  double spine_length = 400.0;
  double bend_amplitude = 80.0;
  double bend_omega = 0.15;
  double bend_phase = std::numbers::pi / 4.0;

  int frame_count = 10;
  double pixel_noise_sigma = 0.0;
  double detection_dropout_prob = 0.0;

  int occluder_count = 0;
  double occluder_radius = 30.0;
  double occluder_volume = 1000.0;  // cube edge [mm]
  double occluder_speed = 40.0;     // [mm / frame]

  double dot_radius = 5.0;
  double tape_half_width = 25.0;
  double tape_margin = 10.0;  // tape beyond the first and last row [mm]
  int tape_gray = 110;

  int keypoint_stations = 6;
  double keypoint_lateral = 70.0;
  double keypoint_groove = 6.0;  // keypoints sit this far above the tape along its normal

  std::vector<std::pair<int, int>> hidden_dots;  // (row, col) invisible in every camera
  bool render_images = true;
  std::uint64_t rng_seed = 1;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error("invalid-config", what); };
    if (camera_count < 2) fail("camera_count must be >= 2");
    if (!(arc_degrees > 0.0) || !(camera_distance > 0.0) || !(focal > 0.0)) fail("camera geometry must be > 0");
    if (width <= 0 || height <= 0) fail("resolution must be > 0");
    if (!(spine_length > 0.0) || !(dot_radius > 0.0) || !(tape_half_width > 0.0)) fail("tape dimensions must be > 0");
    if (!(d_target_long > 0.0) || !(d_target_trans > 0.0)) fail("target distances must be > 0");
    if (frame_count < 0 || occluder_count < 0) fail("counts must be >= 0");
    if (!(occluder_radius >= 0.0) || !(occluder_volume > 0.0)) fail("occluder dimensions must be >= 0");
    if (!(pixel_noise_sigma >= 0.0)) fail("pixel_noise_sigma must be >= 0");
    if (!(detection_dropout_prob >= 0.0 && detection_dropout_prob <= 1.0)) fail("dropout must be in [0, 1]");
    if (keypoint_stations < 1) fail("keypoint_stations must be >= 1");
    if (elevations_deg.empty()) fail("elevations_deg must not be empty");
    if (!(max_view_angle_deg > 0.0 && max_view_angle_deg <= 90.0)) fail("max_view_angle_deg must be in (0, 90]");
  }
};

struct Sphere {
  Vec3 center;
  double radius;
};

struct FrameTruth {
  int frame = 0;
  std::vector<Vec3> dots;
  std::vector<Vec3> dot_normals;
  std::vector<std::vector<std::uint8_t>> visible;  // [dot][camera index]
  std::vector<int> visibility;                     // cameras seeing each dot
  std::vector<Sphere> occluders;
  std::vector<std::pair<Vec3, Vec3>> keypoints;    // pairs flanking the spine
  double bend = 0.0;                               // current amplitude [mm]
};

struct FrameImages {
  std::vector<Image8> dots;   // per camera
  std::vector<Image8> masks;  // per camera
};

struct SceneFrame {
  FrameTruth truth;
  std::vector<CameraDetections> detections;
  std::vector<std::vector<int>> blob_dots;  // [camera index][blob id] -> dot index
  FrameImages images;
};

// Visibility per dot and camera: in frustum, viewed within max_view_angle of
// its normal, and the segment from the camera centre to the dot misses every
// occluder.
inline std::vector<std::vector<std::uint8_t>> compute_visibility(const std::vector<Vec3>& dots,
                                                                 const std::vector<Vec3>& normals,
                                                                 const std::vector<CameraModel>& cameras,
                                                                 const std::vector<Sphere>& occluders,
                                                                 double max_view_angle_deg = 90.0) {
  const double min_cos = std::cos(max_view_angle_deg * std::numbers::pi / 180.0);
  std::vector<std::vector<std::uint8_t>> vis(dots.size(), std::vector<std::uint8_t>(cameras.size(), 0));
  for (std::size_t i = 0; i < dots.size(); ++i) {
    for (std::size_t c = 0; c < cameras.size(); ++c) {
      const CameraModel& cam = cameras[c];
      const auto pix = try_project(cam, dots[i]);
      if (!pix || !cam.in_frame(*pix)) continue;
      const Vec3 center = cam.center();
      const Vec3 seg = dots[i] - center;
      const double facing = -normals[i].dot(seg) / (normals[i].norm() * seg.norm());
      if (!(facing > 0.0) || facing < min_cos) continue;
      bool blocked = false;
      for (const auto& s : occluders) {
        if (!(s.radius > 0.0)) continue;
        const double u = std::clamp((s.center - center).dot(seg) / seg.squaredNorm(), 0.0, 1.0);
        if ((center + u * seg - s.center).squaredNorm() < s.radius * s.radius) {
          blocked = true;
          break;
        }
      }
      vis[i][c] = blocked ? 0 : 1;
    }
  }
  return vis;
}

inline std::vector<int> visibility_counts(const std::vector<std::vector<std::uint8_t>>& vis) {
  std::vector<int> out;
  out.reserve(vis.size());
  for (const auto& row : vis) out.push_back(static_cast<int>(std::count(row.begin(), row.end(), 1)));
  return out;
}

namespace detail {

inline constexpr std::uint64_t kOccluderStream = 0x4F43434CULL;
inline constexpr std::uint64_t kDetectionStream = 0x44455443ULL;

// Fills the convex polygon `poly` (pixel coordinates) into `mask`.
inline void fill_convex(Image8& mask, const std::vector<Vec2>& poly) {
  double min_x = poly[0].x(), max_x = min_x, min_y = poly[0].y(), max_y = min_y;
  for (const auto& p : poly) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  const int x0 = std::max(0, static_cast<int>(std::ceil(min_x)));
  const int x1 = std::min(mask.width - 1, static_cast<int>(std::floor(max_x)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(min_y)));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::floor(max_y)));
  const std::size_t n = poly.size();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      bool pos = false, neg = false;
      for (std::size_t k = 0; k < n; ++k) {
        const Vec2& a = poly[k];
        const Vec2& b = poly[(k + 1) % n];
        const double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
        if (cross > 0.0) pos = true;
        if (cross < 0.0) neg = true;
      }
      if (!(pos && neg)) mask(x, y) = 255;
    }
  }
}

}  // namespace detail

class Scene {
public:
  explicit Scene(SceneConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    topo_ = build_topology(cfg_.n_row, cfg_.d_target_long, cfg_.d_target_trans);
    for (const auto& [r, c] : cfg_.hidden_dots) {
      if (r < 0 || r >= topo_.n_row || c < 0 || c >= topo_.row_sizes[static_cast<std::size_t>(r)]) {
        throw Error("invalid-config", "hidden dot outside the topology");
      }
    }
    const Vec3 target = spine(0).point(0.0);
    const double arc = cfg_.arc_degrees * std::numbers::pi / 180.0;
    for (int k = 0; k < cfg_.camera_count; ++k) {
      const double theta = -0.5 * arc + arc * (k + 0.5) / cfg_.camera_count;
      const double elev =
          cfg_.elevations_deg[static_cast<std::size_t>(k) % cfg_.elevations_deg.size()] * std::numbers::pi / 180.0;
      const Vec3 dir(std::sin(theta) * std::cos(elev), std::sin(elev), std::cos(theta) * std::cos(elev));
      cameras_.push_back(look_at_camera(k, target + cfg_.camera_distance * dir, target, Vec3::UnitY(), cfg_.focal,
                                        cfg_.width, cfg_.height));
    }
    Rng rng(cfg_.rng_seed, detail::kOccluderStream);
    for (int i = 0; i < cfg_.occluder_count; ++i) {
      Vec3 p;
      for (int k = 0; k < 3; ++k) p(k) = target(k) + rng.uniform(-0.5, 0.5) * cfg_.occluder_volume;
      occluder_start_.push_back(p);
    }
    occluder_center_ = target;

    const FrameTruth first = truth(0);
    bool any = false;
    for (const auto& d : first.dots) {
      for (const auto& cam : cameras_) {
        const auto pix = try_project(cam, d);
        any = any || (pix && cam.in_frame(*pix));
      }
    }
    if (!any) throw Error("scene-misconfigured", "tape lies outside every camera frustum");
  }

  const SceneConfig& config() const { return cfg_; }
  const TapeTopology& topology() const { return topo_; }
  const std::vector<CameraModel>& cameras() const { return cameras_; }

  double bend(int frame) const {
    return cfg_.bend_amplitude * std::sin(cfg_.bend_omega * frame + cfg_.bend_phase);
  }

  // Spine of frame f: x = 0, y = t, z = bend * s^2 with s = (t + L/2) / L.
  SpineCurve spine(int frame) const {
    const double len = cfg_.spine_length;
    const double a = bend(frame);
    SpineCurve c;
    c.axis = Vec3::UnitY();
    c.origin = Vec3::Zero();
    c.coeffs.col(0) = Vec3(0.0, 0.0, a / 4.0);
    c.coeffs.col(1) = Vec3(0.0, 1.0, a / len);
    c.coeffs.col(2) = Vec3(0.0, 0.0, a / (len * len));
    c.t_min = -0.5 * len;
    c.t_max = 0.5 * len;
    return c;
  }

  // Exact surface normals sampled densely along the spine.
  NormalField surface_normals(const SpineCurve& c) const {
    std::vector<NormalField::Sample> samples;
    for (double t = c.t_min; t <= c.t_max + 1e-9; t += 2.0) {
      const Vec3 d = c.derivative(t);
      samples.push_back({c.point(t), Vec3(0.0, -d.z(), d.y()).normalized()});
    }
    return NormalField(std::move(samples), 1.0);
  }

  std::vector<Sphere> occluders(int frame) const {
    std::vector<Sphere> out;
    const double v = cfg_.occluder_volume;
    for (const auto& start : occluder_start_) {
      Vec3 p = start;
      double rel = p.y() - occluder_center_.y() + 0.5 * v - cfg_.occluder_speed * frame;
      rel = std::fmod(rel, v);
      if (rel < 0.0) rel += v;
      p.y() = occluder_center_.y() - 0.5 * v + rel;
      out.push_back({p, cfg_.occluder_radius});
    }
    return out;
  }

  FrameTruth truth(int frame) const {
    FrameTruth t;
    t.frame = frame;
    t.bend = bend(frame);
    const SpineCurve c = spine(frame);
    const NormalField field = surface_normals(c);
    t.dots = build_template(c, field, topo_).node_positions;
    const double t_center = 0.5 * (c.t_min + c.t_max);
    for (int r = 0; r < topo_.n_row; ++r) {
      const double along = (r - 0.5 * (topo_.n_row - 1)) * topo_.d_target_long;
      const StripeFrame f = stripe_frame(c, field, c.parameter_at_arc_length(t_center, along));
      for (int k = 0; k < topo_.row_sizes[static_cast<std::size_t>(r)]; ++k) t.dot_normals.push_back(f.normal);
    }
    t.occluders = occluders(frame);
    t.visible = compute_visibility(t.dots, t.dot_normals, cameras_, t.occluders, cfg_.max_view_angle_deg);
    for (const auto& [r, col] : cfg_.hidden_dots) {
      auto& row = t.visible[static_cast<std::size_t>(topo_.index(r, col))];
      std::fill(row.begin(), row.end(), 0);
    }
    t.visibility = visibility_counts(t.visible);
    const int stations = cfg_.keypoint_stations;
    for (int k = 0; k < stations; ++k) {
      const double tk = c.t_min + (k + 0.5) * (c.t_max - c.t_min) / stations;
      const StripeFrame f = stripe_frame(c, field, tk);
      const Vec3 base = c.point(tk) + cfg_.keypoint_groove * f.normal;
      t.keypoints.emplace_back(base - cfg_.keypoint_lateral * f.across, base + cfg_.keypoint_lateral * f.across);
    }
    return t;
  }

  SceneFrame frame(int f) const { return frame(f, cfg_.render_images); }

  SceneFrame frame(int f, bool with_images) const {
    SceneFrame out;
    out.truth = truth(f);
    const auto& dots = out.truth.dots;
    for (std::size_t c = 0; c < cameras_.size(); ++c) {
      const CameraModel& cam = cameras_[c];
      struct Emitted {
        Vec2 center;
        double radius;
        int dot;
      };
      std::vector<Emitted> emitted;
      for (std::size_t i = 0; i < dots.size(); ++i) {
        if (!out.truth.visible[i][c]) continue;
        Rng rng(cfg_.rng_seed ^ detail::kDetectionStream, static_cast<std::uint64_t>(f), c, i);
        Vec2 pix = project(cam, dots[i]);
        if (cfg_.pixel_noise_sigma > 0.0) {
          const double nx = rng.normal();
          const double ny = rng.normal();
          pix += cfg_.pixel_noise_sigma * Vec2(nx, ny);
        }
        if (cfg_.detection_dropout_prob > 0.0 && rng.uniform() < cfg_.detection_dropout_prob) continue;
        if (!cam.in_frame(pix)) continue;
        const double depth = cam.to_camera(dots[i]).z();
        emitted.push_back({pix, 0.5 * (cam.fx + cam.fy) * cfg_.dot_radius / depth, static_cast<int>(i)});
      }
      std::sort(emitted.begin(), emitted.end(), [](const Emitted& a, const Emitted& b) {
        return a.center.x() < b.center.x() || (a.center.x() == b.center.x() && a.center.y() < b.center.y());
      });
      CameraDetections det;
      det.camera_id = cam.id;
      std::vector<int> ids;
      for (std::size_t k = 0; k < emitted.size(); ++k) {
        det.blobs.push_back({cam.id, static_cast<int>(k), emitted[k].center, emitted[k].radius});
        ids.push_back(emitted[k].dot);
      }
      out.detections.push_back(std::move(det));
      out.blob_dots.push_back(std::move(ids));
    }
    if (with_images) out.images = render(out.truth, f);
    return out;
  }

  // Tape mask (front-facing tape surface) and dot image (bright raised-cosine
  // discs on mid-gray tape over a black background) per camera.
  FrameImages render(const FrameTruth& truth, int frame) const {
    FrameImages img;
    const SpineCurve c = spine(frame);
    const NormalField field = surface_normals(c);
    const double t_center = 0.5 * (c.t_min + c.t_max);
    const double half_len = 0.5 * (topo_.n_row - 1) * topo_.d_target_long + cfg_.tape_margin;
    const double t0 = c.parameter_at_arc_length(t_center, -half_len);
    const double t1 = c.parameter_at_arc_length(t_center, half_len);
    const int segments = std::max(1, static_cast<int>(std::ceil((t1 - t0) / 4.0)));
    std::vector<StripeFrame> frames;
    std::vector<Vec3> bases;
    for (int k = 0; k <= segments; ++k) {
      const double t = t0 + (t1 - t0) * k / segments;
      frames.push_back(stripe_frame(c, field, t));
      bases.push_back(c.point(t));
    }
    const double w = cfg_.tape_half_width;
    const auto gray = static_cast<std::uint8_t>(std::clamp(cfg_.tape_gray, 0, 255));
    for (std::size_t ci = 0; ci < cameras_.size(); ++ci) {
      const CameraModel& cam = cameras_[ci];
      const Vec3 eye = cam.center();
      Image8 mask(cam.width, cam.height, 0);
      for (int k = 0; k < segments; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const Vec3 mid = 0.5 * (bases[uk] + bases[uk + 1]);
        if (frames[uk].normal.dot(mid - eye) >= 0.0) continue;
        const Vec3 corners[4] = {bases[uk] - w * frames[uk].across, bases[uk + 1] - w * frames[uk + 1].across,
                                 bases[uk + 1] + w * frames[uk + 1].across, bases[uk] + w * frames[uk].across};
        std::vector<Vec2> poly;
        for (const auto& p : corners) {
          const auto pix = try_project(cam, p);
          if (!pix) break;
          poly.push_back(*pix);
        }
        if (poly.size() == 4) detail::fill_convex(mask, poly);
      }
      Image8 dots(cam.width, cam.height, 0);
      for (std::size_t i = 0; i < mask.data.size(); ++i) dots.data[i] = mask.data[i] ? gray : 0;
      for (std::size_t d = 0; d < truth.dots.size(); ++d) {
        if (!truth.visible[d][ci]) continue;
        const Vec3& p = truth.dots[d];
        const Vec3& n = truth.dot_normals[d];
        const Vec2 center = project(cam, p);
        const double reach = cam.fx * cfg_.dot_radius / cam.to_camera(p).z() + 2.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(center.x() - reach)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(center.x() + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(center.y() - reach)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(center.y() + reach)));
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const Vec3 ray = cam.ray_direction(Vec2(x, y));
            const double denom = ray.dot(n);
            if (std::abs(denom) < 1e-12) continue;
            const Vec3 hit = eye + ((p - eye).dot(n) / denom) * ray;
            const double rho = (hit - p).norm();
            if (rho >= cfg_.dot_radius) continue;
            const double profile = 0.5 * (1.0 + std::cos(std::numbers::pi * rho / cfg_.dot_radius));
            const auto value = static_cast<std::uint8_t>(std::lround(gray + (255.0 - gray) * profile));
            dots(x, y) = std::max(dots(x, y), value);
            mask(x, y) = 255;
          }
        }
      }
      // Occluders in front of the tape hide both the dots and the tape mask.
      for (const auto& sph : truth.occluders) {
        if (!(sph.radius > 0.0) || truth.dots.empty()) continue;
        const Vec3 cc = cam.to_camera(sph.center);
        if (cc.z() <= sph.radius) continue;
        std::size_t nearest = 0;
        for (std::size_t d = 1; d < truth.dots.size(); ++d) {
          if ((truth.dots[d] - sph.center).squaredNorm() < (truth.dots[nearest] - sph.center).squaredNorm()) nearest = d;
        }
        if (cc.z() >= cam.to_camera(truth.dots[nearest]).z()) continue;
        const Vec2 center = project(cam, sph.center);
        const double reach = cam.fx * sph.radius / (cc.z() - sph.radius) + 2.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(center.x() - reach)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(center.x() + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(center.y() - reach)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(center.y() + reach)));
        for (int y = y0; y <= y1; ++y) {
          for (int x = x0; x <= x1; ++x) {
            const Vec3 ray = cam.ray_direction(Vec2(x, y)).normalized();
            const Vec3 rel = sph.center - eye;
            const double along = rel.dot(ray);
            if (along > 0.0 && (rel - along * ray).squaredNorm() < sph.radius * sph.radius) {
              mask(x, y) = 0;
              dots(x, y) = 0;
            }
          }
        }
      }
      img.dots.push_back(std::move(dots));
      img.masks.push_back(std::move(mask));
    }
    return img;
  }

private:
  SceneConfig cfg_;
  TapeTopology topo_;
  std::vector<CameraModel> cameras_;
  std::vector<Vec3> occluder_start_;
  Vec3 occluder_center_ = Vec3::Zero();
};

inline Scene generate_scene(const SceneConfig& config) { return Scene(config); }

inline std::vector<CostRaster> build_cost_rasters(const FrameImages& images, const std::vector<CameraModel>& cameras) {
  std::vector<CostRaster> out;
  for (std::size_t c = 0; c < images.dots.size(); ++c) {
    out.push_back(build_cost_raster(images.dots[c], images.masks[c], cameras[c]));
  }
  return out;
}

}  // namespace tapetrack
