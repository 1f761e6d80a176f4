#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tapetrack/error.hpp"

namespace tapetrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDegenerateRayAngleDeg = 0.1;

// Ideal pinhole camera. rotation/translation map world to camera frame:
// X_cam = rotation * X_world + translation. Units are mm and px.
struct CameraModel {
  int id = 0;
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 0;
  int height = 0;

  Vec3 center() const { return -rotation.transpose() * translation; }

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  // Unit world-frame direction of the ray through pixel `pix`.
  Vec3 ray_direction(const Vec2& pix) const {
    const Vec3 local((pix.x() - cx) / fx, (pix.y() - cy) / fy, 1.0);
    return (rotation.transpose() * local).normalized();
  }

  bool in_frame(const Vec2& pix) const {
    return pix.x() >= 0.0 && pix.y() >= 0.0 && pix.x() <= width - 1.0 && pix.y() <= height - 1.0;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error("invalid-camera", "camera " + std::to_string(id) + " has non-positive focal length");
    }
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw Error("invalid-camera", "camera " + std::to_string(id) + " rotation is not a proper rotation");
    }
  }
};

// Camera looking from `eye` at `target`; image y grows downward when `up`
// points up in the world.
inline CameraModel look_at_camera(int id, const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                                  int width, int height) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  CameraModel cam;
  cam.id = id;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  cam.width = width;
  cam.height = height;
  return cam;
}

// Non-throwing projection for inner loops; empty when the point is not in
// front of the camera.
inline std::optional<Vec2> try_project(const CameraModel& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  if (!(pc.z() > 0.0)) return std::nullopt;
  return Vec2(camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy);
}

inline Vec2 project(const CameraModel& camera, const Vec3& point) {
  if (auto pix = try_project(camera, point)) return *pix;
  throw Error("behind-camera", "point has non-positive depth in camera " + std::to_string(camera.id));
}

struct Triangulation {
  Vec3 point;
  double residual = 0.0;  // max reprojection error over both views [px]
};

// Two-view linear least-squares triangulation: the point minimising the
// summed squared distance to both viewing rays (the midpoint of the common
// perpendicular). The normal matrix is a commutative sum, so swapping the
// views gives a bit-identical result.
inline Triangulation triangulate_pair(const CameraModel& cam_a, const CameraModel& cam_b, const Vec2& pix_a,
                                      const Vec2& pix_b) {
  const Vec3 ca = cam_a.center();
  const Vec3 cb = cam_b.center();
  const Vec3 da = cam_a.ray_direction(pix_a);
  const Vec3 db = cam_b.ray_direction(pix_b);

  const double cos_angle = std::clamp(std::abs(da.dot(db)), 0.0, 1.0);
  const double angle_deg = std::acos(cos_angle) * 180.0 / std::numbers::pi;
  if ((ca - cb).norm() < 1e-9 || angle_deg < kDegenerateRayAngleDeg) {
    throw Error("degenerate-pair", "rays of cameras " + std::to_string(cam_a.id) + " and " +
                                       std::to_string(cam_b.id) + " are (nearly) parallel");
  }

  const Mat3 pa = Mat3::Identity() - da * da.transpose();
  const Mat3 pb = Mat3::Identity() - db * db.transpose();
  const Mat3 lhs = pa + pb;
  const Vec3 rhs = pa * ca + pb * cb;
  const Vec3 x = lhs.ldlt().solve(rhs);

  Triangulation out;
  out.point = x;
  const Vec2 ra = project(cam_a, x);
  const Vec2 rb = project(cam_b, x);
  out.residual = std::max((ra - pix_a).norm(), (rb - pix_b).norm());
  return out;
}

// Cubic space curve p(t) = coeffs * [1, t, t^2, t^3]^T with
// t = <p - origin, axis>. Outside [t_min, t_max] the curve continues along
// the end tangent.
struct SpineCurve {
  Vec3 axis = Vec3::UnitY();
  Vec3 origin = Vec3::Zero();
  Eigen::Matrix<double, 3, 4> coeffs = Eigen::Matrix<double, 3, 4>::Zero();
  double t_min = 0.0;
  double t_max = 0.0;

  Vec3 polynomial(double t) const {
    return coeffs * Eigen::Vector4d(1.0, t, t * t, t * t * t);
  }
  Vec3 polynomial_derivative(double t) const {
    return coeffs * Eigen::Vector4d(0.0, 1.0, 2.0 * t, 3.0 * t * t);
  }

  Vec3 point(double t) const {
    if (t < t_min) return polynomial(t_min) + (t - t_min) * polynomial_derivative(t_min);
    if (t > t_max) return polynomial(t_max) + (t - t_max) * polynomial_derivative(t_max);
    return polynomial(t);
  }

  Vec3 derivative(double t) const { return polynomial_derivative(std::clamp(t, t_min, t_max)); }

  Vec3 tangent(double t) const { return derivative(t).normalized(); }

  double parameter_of(const Vec3& p) const { return (p - origin).dot(axis); }

  // Arc length from t0 to t1 (signed), 8-point Gauss-Legendre per panel.
  double arc_length(double t0, double t1) const {
    static constexpr double kNodes[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                         0.9602898564975363};
    static constexpr double kWeights[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                           0.1012285362903763};
    const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / 10.0)));
    const double h = (t1 - t0) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double mid = t0 + (p + 0.5) * h;
      for (int k = 0; k < 4; ++k) {
        const double off = 0.5 * h * kNodes[k];
        total += kWeights[k] * (derivative(mid - off).norm() + derivative(mid + off).norm());
      }
    }
    return 0.5 * h * total;
  }

  // Parameter reached after travelling `length` (signed) from t0.
  double parameter_at_arc_length(double t0, double length) const {
    double t = t0 + length / std::max(derivative(t0).norm(), 1e-12);
    for (int iter = 0; iter < 50; ++iter) {
      const double err = arc_length(t0, t) - length;
      if (std::abs(err) < 1e-12) break;
      t -= err / std::max(derivative(t).norm(), 1e-12);
    }
    return t;
  }
};

// Smooth field of unit normals: Gaussian-weighted average of sample normals,
// renormalised. Falls back to the nearest sample when the weighted sum
// cancels (norm < 1e-6) or the radius is zero.
class NormalField {
public:
  struct Sample {
    Vec3 position;
    Vec3 normal;
  };

  NormalField() = default;
  NormalField(std::vector<Sample> samples, double smoothing_radius)
      : samples_(std::move(samples)), radius_(smoothing_radius) {
    for (auto& s : samples_) s.normal.normalize();
  }

  const std::vector<Sample>& samples() const { return samples_; }
  double smoothing_radius() const { return radius_; }
  bool empty() const { return samples_.empty(); }

  Vec3 query(const Vec3& q) const {
    if (samples_.empty()) throw Error("empty-normal-field", "normal field has no samples");
    if (radius_ > 0.0) {
      const double inv = 1.0 / (2.0 * radius_ * radius_);
      Vec3 sum = Vec3::Zero();
      for (const auto& s : samples_) sum += std::exp(-(q - s.position).squaredNorm() * inv) * s.normal;
      const double n = sum.norm();
      if (n >= 1e-6) return sum / n;
    }
    return nearest(q).normal;
  }

  const Sample& nearest(const Vec3& q) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const double d = (q - samples_[i].position).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return samples_[best];
  }

private:
  std::vector<Sample> samples_;
  double radius_ = 30.0;
};

inline constexpr double kDefaultNormalRadius = 30.0;

// Fits the spine curve (polynomial of `degree` 1..3, cubic by default) to a
// point set. The axis is the first principal component, oriented so that
// axis . up >= 0.
inline SpineCurve fit_curve(const std::vector<Vec3>& points, const Vec3& up = Vec3::UnitY(), int degree = 3) {
  if (degree < 1 || degree > 3) throw Error("invalid-degree", "curve degree must be 1, 2 or 3");
  if (points.size() < 4) {
    throw Error("underdetermined-fit", "need at least 4 points, got " + std::to_string(points.size()));
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 axis = eig.eigenvectors().col(2).normalized();
  if (axis.dot(up) < 0.0) axis = -axis;

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = (points[static_cast<std::size_t>(i)] - centroid).dot(axis);
  const double scale = std::max(t.cwiseAbs().maxCoeff(), 1e-300);

  // Solve in the scaled parameter u = t / scale for conditioning.
  Eigen::MatrixXd design(n, degree + 1);
  Eigen::MatrixXd rhs(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = t(i) / scale;
    double power = 1.0;
    for (int k = 0; k <= degree; ++k, power *= u) design(i, k) = power;
    rhs.row(i) = points[static_cast<std::size_t>(i)].transpose();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (scale < 1e-9 || qr.rank() < degree + 1) {
    throw Error("underdetermined-fit", "points do not spread along the principal axis");
  }
  const Eigen::MatrixXd sol = qr.solve(rhs);  // (degree + 1) x 3

  SpineCurve curve;
  curve.axis = axis;
  curve.origin = centroid;
  curve.coeffs.setZero();
  double s = 1.0;
  for (int k = 0; k <= degree; ++k) {
    curve.coeffs.col(k) = sol.row(k).transpose() / s;
    s *= scale;
  }
  curve.t_min = t.minCoeff();
  curve.t_max = t.maxCoeff();
  return curve;
}

// `points` is any range of elements with `.position` and `.normal`.
template <typename PointRange>
std::pair<SpineCurve, NormalField> fit_curve_and_normals(const PointRange& points,
                                                         double smoothing_radius = kDefaultNormalRadius,
                                                         const Vec3& up = Vec3::UnitY(), int degree = 3) {
  std::vector<Vec3> positions;
  std::vector<NormalField::Sample> samples;
  for (const auto& p : points) {
    positions.push_back(p.position);
    samples.push_back({p.position, p.normal});
  }
  SpineCurve curve = fit_curve(positions, up, degree);
  return {std::move(curve), NormalField(std::move(samples), smoothing_radius)};
}

}  // namespace tapetrack
