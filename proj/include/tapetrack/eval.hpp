#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "tapetrack/error.hpp"
#include "tapetrack/geometry.hpp"

namespace tapetrack {

struct NodeEstimate {
  int row = 0;
  int col = 0;
  Vec3 position = Vec3::Zero();
};

struct PointErrors {
  std::vector<double> per_dot;  // in truth order
  double mean = 0.0;
};

// Per-dot Euclidean error, nodes matched by (row, col).
inline PointErrors point_error(const std::vector<NodeEstimate>& tracks, const std::vector<NodeEstimate>& truth) {
  if (tracks.size() != truth.size()) throw Error("alignment-error", "track and truth node counts differ");
  std::map<std::pair<int, int>, const NodeEstimate*> by_id;
  for (const auto& n : tracks) {
    if (!by_id.emplace(std::make_pair(n.row, n.col), &n).second) throw Error("alignment-error", "duplicate node id");
  }
  PointErrors out;
  for (const auto& t : truth) {
    const auto it = by_id.find({t.row, t.col});
    if (it == by_id.end()) {
      throw Error("alignment-error", "no track for node (" + std::to_string(t.row) + ", " + std::to_string(t.col) + ")");
    }
    out.per_dot.push_back((it->second->position - t.position).norm());
  }
  if (!out.per_dot.empty()) {
    out.mean = std::accumulate(out.per_dot.begin(), out.per_dot.end(), 0.0) / static_cast<double>(out.per_dot.size());
  }
  return out;
}

struct Plane {
  Vec3 point;
  Vec3 normal;

  double distance(const Vec3& p) const { return std::abs((p - point).dot(normal)); }
};

// Total least-squares plane: centroid and smallest principal direction.
inline Plane fit_plane(const std::vector<Vec3>& points) {
  if (points.size() < 4) throw Error("underdetermined-plane", "plane segment needs at least 4 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  return {c, eig.eigenvectors().col(0).normalized()};
}

// Fits n_planes planes to keypoint pairs split into contiguous groups along
// the spine (principal axis of the keypoints) and returns the mean distance
// of the truth dots to their nearest plane.
inline double plane_baseline(const std::vector<std::pair<Vec3, Vec3>>& keypoints, int n_planes,
                             const std::vector<Vec3>& truth_dots) {
  if (n_planes < 1) throw Error("underdetermined-plane", "need at least one plane");
  std::vector<Vec3> all;
  for (const auto& [a, b] : keypoints) {
    all.push_back(a);
    all.push_back(b);
  }
  if (all.size() < 4) throw Error("underdetermined-plane", "plane segment needs at least 4 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : all) c += p;
  c /= static_cast<double>(all.size());
  // Spine direction: the principal axis of the pair midpoints.
  Mat3 mid_cov = Mat3::Zero();
  for (const auto& [a, b] : keypoints) {
    const Vec3 m = 0.5 * (a + b) - c;
    mid_cov += m * m.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(mid_cov);
  const Vec3 axis = eig.eigenvectors().col(2);

  std::vector<std::size_t> order(keypoints.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return (keypoints[i].first + keypoints[i].second).dot(axis) < (keypoints[j].first + keypoints[j].second).dot(axis);
  });

  std::vector<Plane> planes;
  const std::size_t k = keypoints.size();
  for (int g = 0; g < n_planes; ++g) {
    const std::size_t lo = k * static_cast<std::size_t>(g) / static_cast<std::size_t>(n_planes);
    const std::size_t hi = k * static_cast<std::size_t>(g + 1) / static_cast<std::size_t>(n_planes);
    std::vector<Vec3> seg;
    for (std::size_t i = lo; i < hi; ++i) {
      seg.push_back(keypoints[order[i]].first);
      seg.push_back(keypoints[order[i]].second);
    }
    planes.push_back(fit_plane(seg));
  }
  if (truth_dots.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& d : truth_dots) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : planes) best = std::min(best, p.distance(d));
    sum += best;
  }
  return sum / static_cast<double>(truth_dots.size());
}

// Dots seen by exactly k cameras, k = 0..camera_count.
inline std::vector<int> visibility_histogram(const std::vector<int>& counts, int camera_count) {
  std::vector<int> hist(static_cast<std::size_t>(camera_count) + 1, 0);
  for (int c : counts) {
    if (c < 0 || c > camera_count) throw Error("invalid-visibility", "visibility count out of range");
    ++hist[static_cast<std::size_t>(c)];
  }
  return hist;
}

struct FrameMetrics {
  int frame = 0;
  double mean_error = 0.0;
  std::vector<double> per_dot;
  double baseline[3] = {0.0, 0.0, 0.0};
  std::vector<int> visibility;  // histogram
  double occluded_error = std::numeric_limits<double>::quiet_NaN();  // mean over dots seen by no camera
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;

  double mean_error() const {
    if (frames.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : frames) s += f.mean_error;
    return s / static_cast<double>(frames.size());
  }
  double mean_baseline(int planes) const {
    if (frames.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : frames) s += f.baseline[planes - 1];
    return s / static_cast<double>(frames.size());
  }
  // Pooled over every dot of every frame.
  double pooled_error() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames) {
      for (double e : f.per_dot) s += e;
      n += f.per_dot.size();
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
  std::vector<int> visibility() const {
    std::vector<int> total;
    for (const auto& f : frames) {
      if (total.size() < f.visibility.size()) total.resize(f.visibility.size(), 0);
      for (std::size_t k = 0; k < f.visibility.size(); ++k) total[k] += f.visibility[k];
    }
    return total;
  }
};

}  // namespace tapetrack
