#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <queue>
#include <tuple>
#include <vector>

#include "tapetrack/geometry.hpp"
#include "tapetrack/raster.hpp"

namespace tapetrack {

struct Blob {
  int camera_id = 0;
  int blob_id = 0;
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
};

struct CameraDetections {
  int camera_id = 0;
  std::vector<Blob> blobs;
};

// Connected components (8-neighbourhood) of pixels >= threshold with at
// least `min_area` pixels. Centre is the intensity-weighted centroid.
template <typename Pixel>
std::vector<Blob> detect_blobs(const Grid<Pixel>& raster, double threshold, int min_area, int camera_id = 0) {
  std::vector<Blob> blobs;
  if (raster.empty()) return blobs;
  Grid<int> label(raster.width, raster.height, 0);
  std::vector<std::pair<int, int>> stack;
  int next_label = 0;
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      if (label(x, y) != 0 || static_cast<double>(raster(x, y)) < threshold) continue;
      ++next_label;
      label(x, y) = next_label;
      stack.assign(1, {x, y});
      double sw = 0.0, sx = 0.0, sy = 0.0;
      int area = 0;
      while (!stack.empty()) {
        const auto [px, py] = stack.back();
        stack.pop_back();
        const double w = static_cast<double>(raster(px, py));
        sw += w;
        sx += w * px;
        sy += w * py;
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx;
            const int ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= raster.width || ny >= raster.height) continue;
            if (label(nx, ny) != 0 || static_cast<double>(raster(nx, ny)) < threshold) continue;
            label(nx, ny) = next_label;
            stack.emplace_back(nx, ny);
          }
        }
      }
      if (area < min_area || sw <= 0.0) continue;
      Blob b;
      b.camera_id = camera_id;
      b.blob_id = static_cast<int>(blobs.size());
      b.center = Vec2(sx / sw, sy / sw);
      b.radius = std::sqrt(area / std::numbers::pi);
      blobs.push_back(b);
    }
  }
  return blobs;
}

// Triangulated 3D candidate with the cameras and blobs that produced it.
struct CandidatePoint {
  Vec3 position = Vec3::Zero();
  std::map<int, int> blobs;  // camera id -> blob id
  Vec3 normal = Vec3::UnitZ();

  std::vector<int> cameras() const {
    std::vector<int> out;
    for (const auto& [cam, blob] : blobs) out.push_back(cam);
    return out;
  }
};

struct CandidateThresholds {
  double th1 = 2.0;  // back-projection gate [px]
  double th2 = 8.0;  // merge distance [mm]
};

namespace detail {

struct BlobIndex {
  std::map<std::pair<int, int>, Vec2> centers;
  std::map<int, const CameraModel*> cameras;

  const Vec2* center(int camera, int blob) const {
    auto it = centers.find({camera, blob});
    return it == centers.end() ? nullptr : &it->second;
  }
};

inline bool reprojects_within(const BlobIndex& index, const std::map<int, int>& blobs, const Vec3& p, double th1) {
  for (const auto& [cam_id, blob_id] : blobs) {
    const auto cam = index.cameras.find(cam_id);
    const Vec2* c = index.center(cam_id, blob_id);
    if (cam == index.cameras.end() || c == nullptr) return false;
    const auto pix = try_project(*cam->second, p);
    if (!pix || (*pix - *c).norm() >= th1) return false;
  }
  return true;
}

}  // namespace detail

// Mutual triangulation of all cross-camera blob pairs gated by th1, then
// greedy closest-pair-first merging of candidates closer than th2 whose
// midpoint still reprojects within th1 into every participating view.
inline std::vector<CandidatePoint> build_candidates(const std::vector<CameraDetections>& detections,
                                                    const std::vector<CameraModel>& cameras,
                                                    const CandidateThresholds& th = {}) {
  if (cameras.size() < 2) throw Error("too-few-cameras", "candidate generation needs at least 2 cameras");
  detail::BlobIndex index;
  for (const auto& cam : cameras) index.cameras[cam.id] = &cam;
  for (const auto& det : detections) {
    for (const auto& b : det.blobs) index.centers[{det.camera_id, b.blob_id}] = b.center;
  }

  std::vector<CandidatePoint> points;
  for (std::size_t a = 0; a < detections.size(); ++a) {
    const auto cam_a = index.cameras.find(detections[a].camera_id);
    if (cam_a == index.cameras.end()) continue;
    for (std::size_t b = a + 1; b < detections.size(); ++b) {
      const auto cam_b = index.cameras.find(detections[b].camera_id);
      if (cam_b == index.cameras.end() || cam_b->first == cam_a->first) continue;
      const CameraModel& ca = *cam_a->second;
      const CameraModel& cb = *cam_b->second;
      for (const auto& ba : detections[a].blobs) {
        for (const auto& bb : detections[b].blobs) {
          Triangulation tri;
          try {
            tri = triangulate_pair(ca, cb, ba.center, bb.center);
          } catch (const Error&) {
            continue;
          }
          if (!(tri.residual < th.th1)) continue;
          CandidatePoint p;
          p.position = tri.point;
          p.blobs[ca.id] = ba.blob_id;
          p.blobs[cb.id] = bb.blob_id;
          const Vec3 va = (tri.point - ca.center()).normalized();
          const Vec3 vb = (tri.point - cb.center()).normalized();
          p.normal = -(va + vb).normalized();
          points.push_back(std::move(p));
        }
      }
    }
  }

  using Pair = std::tuple<double, std::size_t, std::size_t>;
  std::priority_queue<Pair, std::vector<Pair>, std::greater<>> queue;
  std::vector<char> alive(points.size(), 1);
  auto push_pairs_with = [&](std::size_t j) {
    for (std::size_t i = 0; i < j; ++i) {
      if (!alive[i]) continue;
      const double d = (points[i].position - points[j].position).norm();
      if (d < th.th2) queue.emplace(d, i, j);
    }
  };
  for (std::size_t j = 0; j < points.size(); ++j) push_pairs_with(j);

  while (!queue.empty()) {
    const auto [dist, i, j] = queue.top();
    queue.pop();
    if (!alive[i] || !alive[j]) continue;
    const CandidatePoint& p1 = points[i];
    const CandidatePoint& p2 = points[j];
    std::map<int, int> merged = p1.blobs;
    bool conflict = false;
    for (const auto& [cam, blob] : p2.blobs) {
      auto [it, inserted] = merged.emplace(cam, blob);
      if (!inserted && it->second != blob) {
        conflict = true;
        break;
      }
    }
    if (conflict) continue;
    const Vec3 mid = 0.5 * (p1.position + p2.position);
    if (!detail::reprojects_within(index, merged, mid, th.th1)) continue;
    CandidatePoint p3;
    p3.position = mid;
    p3.blobs = std::move(merged);
    const Vec3 nsum = p1.normal + p2.normal;
    p3.normal = nsum.norm() > 1e-12 ? nsum.normalized() : p1.normal;
    alive[i] = alive[j] = 0;
    points.push_back(std::move(p3));
    alive.push_back(1);
    push_pairs_with(points.size() - 1);
  }

  std::vector<CandidatePoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (alive[i]) out.push_back(std::move(points[i]));
  }
  return out;
}

struct CloudEdge {
  int i = 0;
  int j = 0;
  double length = 0.0;
};

struct EdgeCloud {
  std::vector<CandidatePoint> points;
  std::vector<CloudEdge> edges;
};

// All point pairs with th3 < distance < th4 (strict), i < j.
inline EdgeCloud build_edge_cloud(std::vector<CandidatePoint> points, double th3, double th4) {
  if (!(th3 < th4)) throw Error("invalid-thresholds", "edge band requires th3 < th4");
  EdgeCloud cloud;
  cloud.points = std::move(points);
  const int n = static_cast<int>(cloud.points.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = (cloud.points[static_cast<std::size_t>(i)].position -
                        cloud.points[static_cast<std::size_t>(j)].position)
                           .norm();
      if (d > th3 && d < th4) cloud.edges.push_back({i, j, d});
    }
  }
  return cloud;
}

}  // namespace tapetrack
