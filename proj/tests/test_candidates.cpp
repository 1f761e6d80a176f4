#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "tapetrack/candidates.hpp"

using namespace tapetrack;

namespace {

void draw_disc(Grid<double>& img, double cx, double cy, double r, double value) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img(x, y) = value;
    }
  }
}

std::vector<CameraModel> ring_cameras(int count) {
  std::vector<CameraModel> cams;
  for (int k = 0; k < count; ++k) {
    const double a = -1.0 + 2.0 * k / std::max(1, count - 1);
    const Vec3 eye(1500 * std::sin(a), 150.0 * (k % 2), 1500 * std::cos(a));
    cams.push_back(look_at_camera(k + 1, eye, Vec3::Zero(), Vec3::UnitY(), 1500, 1224, 800));
  }
  return cams;
}

std::vector<CameraDetections> observe(const std::vector<CameraModel>& cams, const std::vector<Vec3>& points) {
  std::vector<CameraDetections> out;
  for (const auto& c : cams) {
    CameraDetections d;
    d.camera_id = c.id;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d.blobs.push_back({c.id, static_cast<int>(i), project(c, points[i]), 4.0});
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace

TEST(DetectBlobs, SymmetricDiscCentroid) {
  Grid<double> img(200, 120, 0.0);
  draw_disc(img, 100.0, 60.0, 5.0, 255.0);
  const auto blobs = detect_blobs(img, 128.0, 3);
  ASSERT_EQ(blobs.size(), 1u);
  EXPECT_NEAR(blobs[0].center.x(), 100.0, 0.05);
  EXPECT_NEAR(blobs[0].center.y(), 60.0, 0.05);
  EXPECT_GT(blobs[0].radius, 0.0);
}

TEST(DetectBlobs, TwoDiscs) {
  Grid<double> img(200, 120, 0.0);
  draw_disc(img, 60.0, 60.0, 5.0, 255.0);
  draw_disc(img, 100.0, 60.0, 5.0, 255.0);
  EXPECT_EQ(detect_blobs(img, 128.0, 3).size(), 2u);
}

TEST(DetectBlobs, NoisyDiscMonteCarlo) {
  std::uniform_real_distribution<double> off(-0.5, 0.5);
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 gen(static_cast<std::uint64_t>(seed));
    std::normal_distribution<double> noise(0.0, 0.05 * 255.0);
    const double cx = 50.0 + off(gen);
    const double cy = 40.0 + off(gen);
    Grid<double> img(100, 80, 0.0);
    draw_disc(img, cx, cy, 5.0, 255.0);
    for (auto& v : img.data) v = std::clamp(v + noise(gen), 0.0, 255.0);
    const auto blobs = detect_blobs(img, 128.0, 5);
    ASSERT_EQ(blobs.size(), 1u) << seed;
    // Oracle: unweighted centroid of the rendered (noise-free) disc pixels.
    double sx = 0, sy = 0;
    int n = 0;
    for (int y = 0; y < 80; ++y) {
      for (int x = 0; x < 100; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= 25.0) {
          sx += x;
          sy += y;
          ++n;
        }
      }
    }
    EXPECT_LT((blobs[0].center - Vec2(sx / n, sy / n)).norm(), 0.3) << seed;
    EXPECT_LT((blobs[0].center - Vec2(cx, cy)).norm(), 0.3) << seed;
  }
}

TEST(DetectBlobs, EmptyRaster) { EXPECT_TRUE(detect_blobs(Grid<double>(), 1.0, 1).empty()); }

TEST(Candidates, ThreeViewFusion) {
  const auto cams = ring_cameras(3);
  const Vec3 x(12, -7, 4);
  const auto pts = build_candidates(observe(cams, {x}), cams);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].cameras(), (std::vector<int>{1, 2, 3}));
  EXPECT_LT((pts[0].position - x).norm(), 1e-6);
  EXPECT_NEAR(pts[0].normal.norm(), 1.0, 1e-9);
}

TEST(Candidates, GateRejectsUnrelatedBlobs) {
  const auto cams = ring_cameras(2);
  // Two dots at very different heights: cross pairs violate the epipolar gate.
  std::vector<CameraDetections> det(2);
  det[0].camera_id = 1;
  det[1].camera_id = 2;
  det[0].blobs.push_back({1, 0, project(cams[0], Vec3(0, -100, 0)), 4});
  det[1].blobs.push_back({2, 0, project(cams[1], Vec3(0, 100, 0)), 4});
  EXPECT_TRUE(build_candidates(det, cams).empty());
}

TEST(Candidates, TooFewCameras) {
  const auto cams = ring_cameras(1);
  try {
    build_candidates({}, cams);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "too-few-cameras");
  }
}

TEST(Candidates, MergedPointsStayGatedAndFunctional) {
  const auto cams = ring_cameras(6);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-80, 80);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<Vec3> dots;
  for (int i = 0; i < 20; ++i) dots.emplace_back(u(gen), u(gen), 0.2 * u(gen));
  auto det = observe(cams, dots);
  for (auto& d : det) {
    for (auto& b : d.blobs) b.center += Vec2(noise(gen), noise(gen));
  }
  const CandidateThresholds th;
  const auto pts = build_candidates(det, cams, th);
  std::map<std::pair<int, int>, Vec2> centers;
  for (const auto& d : det) {
    for (const auto& b : d.blobs) centers[{d.camera_id, b.blob_id}] = b.center;
  }
  for (const auto& p : pts) {
    EXPECT_GE(p.blobs.size(), 2u);
    EXPECT_NEAR(p.normal.norm(), 1.0, 1e-9);
    for (const auto& [cam, blob] : p.blobs) {
      const auto& c = *std::find_if(cams.begin(), cams.end(), [&](const CameraModel& m) { return m.id == cam; });
      EXPECT_LT((project(c, p.position) - centers[{cam, blob}]).norm(), th.th1);
    }
  }
  // Every dot is explained by a nearby candidate.
  for (const auto& d : dots) {
    double best = 1e9;
    for (const auto& p : pts) best = std::min(best, (p.position - d).norm());
    EXPECT_LT(best, 3.0);
  }
}

TEST(EdgeCloud, BandIsStrict) {
  std::vector<CandidatePoint> two(2);
  two[1].position = Vec3(15.0, 0, 0);
  EXPECT_EQ(build_edge_cloud(two, 10.0, 20.0).edges.size(), 1u);
  two[1].position = Vec3(10.0, 0, 0);
  EXPECT_EQ(build_edge_cloud(two, 10.0, 20.0).edges.size(), 0u);
  two[1].position = Vec3(20.0, 0, 0);
  EXPECT_EQ(build_edge_cloud(two, 10.0, 20.0).edges.size(), 0u);
  try {
    build_edge_cloud(two, 20.0, 20.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid-thresholds");
  }
}

TEST(EdgeCloud, PermutationInvariant) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-40, 40);
  std::vector<CandidatePoint> pts(30);
  for (auto& p : pts) p.position = Vec3(u(gen), u(gen), u(gen));
  auto edge_set = [](const EdgeCloud& c) {
    std::set<std::pair<std::tuple<double, double, double>, std::tuple<double, double, double>>> s;
    for (const auto& e : c.edges) {
      const Vec3& a = c.points[static_cast<std::size_t>(e.i)].position;
      const Vec3& b = c.points[static_cast<std::size_t>(e.j)].position;
      auto ta = std::make_tuple(a.x(), a.y(), a.z());
      auto tb = std::make_tuple(b.x(), b.y(), b.z());
      s.emplace(std::min(ta, tb), std::max(ta, tb));
      EXPECT_LT(e.i, e.j);
    }
    return s;
  };
  const auto ref = edge_set(build_edge_cloud(pts, 7.0, 32.0));
  std::shuffle(pts.begin(), pts.end(), gen);
  EXPECT_EQ(edge_set(build_edge_cloud(pts, 7.0, 32.0)), ref);
  EXPECT_FALSE(ref.empty());
}
