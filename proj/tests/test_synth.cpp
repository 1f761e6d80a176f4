#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "tapetrack/synth.hpp"

using namespace tapetrack;

namespace {

SceneConfig quick(int occluders, std::uint64_t seed = 1) {
  SceneConfig c;
  c.occluder_count = occluders;
  c.rng_seed = seed;
  c.render_images = false;
  return c;
}

// Visibility written out from the definition: inside the image, facing the
// camera within the view-angle limit, and no sphere on the sight line.
std::vector<int> oracle_counts(const FrameTruth& t, const std::vector<CameraModel>& cams, double max_angle_deg) {
  std::vector<int> out;
  for (std::size_t i = 0; i < t.dots.size(); ++i) {
    int n = 0;
    for (const auto& cam : cams) {
      const Vec3 pc = cam.rotation * t.dots[i] + cam.translation;
      if (pc.z() <= 0) continue;
      const double u = cam.fx * pc.x() / pc.z() + cam.cx;
      const double v = cam.fy * pc.y() / pc.z() + cam.cy;
      if (u < 0 || v < 0 || u > cam.width - 1 || v > cam.height - 1) continue;
      const Vec3 eye = -cam.rotation.transpose() * cam.translation;
      const Vec3 to_eye = (eye - t.dots[i]).normalized();
      const double angle = std::acos(std::clamp(to_eye.dot(t.dot_normals[i].normalized()), -1.0, 1.0));
      if (angle >= std::numbers::pi / 2 || angle > max_angle_deg * std::numbers::pi / 180.0 + 1e-12) continue;
      bool hit = false;
      for (const auto& s : t.occluders) hit = hit || (s.radius > 0 && oracle::segment_hits_sphere(eye, t.dots[i], s.center, s.radius));
      n += !hit;
    }
    out.push_back(n);
  }
  return out;
}

}  // namespace

TEST(Scene, SameSeedIsIdentical) {
  SceneConfig c;
  c.pixel_noise_sigma = 0.7;
  c.detection_dropout_prob = 0.1;
  c.occluder_count = 20;
  const Scene a(c), b(c);
  const SceneFrame fa = a.frame(3), fb = b.frame(3);
  ASSERT_EQ(fa.detections.size(), fb.detections.size());
  for (std::size_t k = 0; k < fa.detections.size(); ++k) {
    ASSERT_EQ(fa.detections[k].blobs.size(), fb.detections[k].blobs.size());
    for (std::size_t j = 0; j < fa.detections[k].blobs.size(); ++j) {
      EXPECT_EQ(fa.detections[k].blobs[j].center, fb.detections[k].blobs[j].center);
    }
  }
  for (std::size_t k = 0; k < fa.images.dots.size(); ++k) {
    EXPECT_EQ(fa.images.dots[k].data, fb.images.dots[k].data);
    EXPECT_EQ(fa.images.masks[k].data, fb.images.masks[k].data);
  }
}

TEST(Scene, NoiselessBlobsAreExactProjections) {
  const Scene s(quick(0));
  for (int f : {0, 4, 9}) {
    const SceneFrame fr = s.frame(f);
    int emitted = 0, visible = 0;
    for (int v : fr.truth.visibility) visible += v;
    for (std::size_t c = 0; c < fr.detections.size(); ++c) {
      for (std::size_t j = 0; j < fr.detections[c].blobs.size(); ++j) {
        const int dot = fr.blob_dots[c][j];
        const Vec2 ref = project(s.cameras()[c], fr.truth.dots[static_cast<std::size_t>(dot)]);
        EXPECT_LT((fr.detections[c].blobs[j].center - ref).norm(), 1e-9);
        EXPECT_TRUE(fr.truth.visible[static_cast<std::size_t>(dot)][c]);
        ++emitted;
      }
    }
    EXPECT_EQ(emitted, visible);
  }
}

TEST(Scene, ZeroRadiusOccludersChangeNothing) {
  SceneConfig c = quick(100);
  c.occluder_radius = 0.0;
  const Scene a(c), b(quick(0));
  for (int f = 0; f < 10; ++f) EXPECT_EQ(a.truth(f).visible, b.truth(f).visible);
}

TEST(Visibility, MatchesQuadraticSolveOracle) {
  for (int occ : {0, 50, 100, 200}) {
    const Scene s(quick(occ, 3));
    std::vector<int> hist(7, 0), ref(7, 0);
    for (int f = 0; f < 10; ++f) {
      const FrameTruth t = s.truth(f);
      const auto oc = oracle_counts(t, s.cameras(), s.config().max_view_angle_deg);
      EXPECT_EQ(t.visibility, oc) << occ << " " << f;
      for (std::size_t i = 0; i < oc.size(); ++i) {
        ++hist[static_cast<std::size_t>(t.visibility[i])];
        ++ref[static_cast<std::size_t>(oc[i])];
      }
    }
    EXPECT_EQ(hist, ref);
  }
}

TEST(Visibility, SphereOnSightLineBlocks) {
  const CameraModel cam = look_at_camera(0, Vec3(0, 0, -500), Vec3::Zero(), Vec3::UnitY(), 500, 100, 100);
  const std::vector<Vec3> dots = {Vec3::Zero()}, normals = {Vec3(0, 0, -1)};
  EXPECT_EQ(compute_visibility(dots, normals, {cam}, {})[0][0], 1);
  EXPECT_EQ(compute_visibility(dots, normals, {cam}, {{Vec3(0, 0, -250), 10.0}})[0][0], 0);
  EXPECT_EQ(compute_visibility(dots, normals, {cam}, {{Vec3(50, 0, -250), 10.0}})[0][0], 1);
  // Back-facing and oblique dots.
  EXPECT_EQ(compute_visibility(dots, {Vec3(0, 0, 1)}, {cam}, {})[0][0], 0);
  EXPECT_EQ(compute_visibility(dots, {Vec3(0, 1, -0.5)}, {cam}, {}, 60.0)[0][0], 0);
}

TEST(Visibility, MoreOccludersNeverIncreaseCounts) {
  for (std::uint64_t seed : {1u, 2u}) {
    const Scene a(quick(50, seed)), b(quick(100, seed));
    for (int f = 0; f < 10; ++f) {
      const auto va = a.truth(f).visibility, vb = b.truth(f).visibility;
      for (std::size_t i = 0; i < va.size(); ++i) EXPECT_LE(vb[i], va[i]);
    }
  }
}

TEST(Visibility, HiddenDotsSeenByNoCamera) {
  SceneConfig c = quick(0);
  c.hidden_dots = {{4, 1}, {0, 0}};
  const Scene s(c);
  const FrameTruth t = s.truth(2);
  EXPECT_EQ(t.visibility[static_cast<std::size_t>(s.topology().index(4, 1))], 0);
  EXPECT_EQ(t.visibility[0], 0);
  c.hidden_dots = {{1, 3}};
  EXPECT_THROW(Scene{c}, Error);
}

TEST(Render, DotDiscsLieInsideMask) {
  SceneConfig c;
  c.occluder_count = 100;
  const Scene s(c);
  for (int f : {0, 5}) {
    const SceneFrame fr = s.frame(f);
    for (std::size_t k = 0; k < fr.images.dots.size(); ++k) {
      const auto& d = fr.images.dots[k];
      const auto& m = fr.images.masks[k];
      for (std::size_t i = 0; i < d.data.size(); ++i) {
        if (d.data[i]) {
          ASSERT_EQ(m.data[i], 255) << k << " " << i;
        }
      }
    }
  }
}

TEST(Render, VisibleDotCentresAreBright) {
  const Scene s(SceneConfig{});
  const SceneFrame fr = s.frame(1);
  for (std::size_t i = 0; i < fr.truth.dots.size(); ++i) {
    for (std::size_t c = 0; c < s.cameras().size(); ++c) {
      if (!fr.truth.visible[i][c]) continue;
      const Vec2 p = project(s.cameras()[c], fr.truth.dots[i]);
      EXPECT_GT(fr.images.dots[c](static_cast<int>(std::lround(p.x())), static_cast<int>(std::lround(p.y()))), 200);
    }
  }
}

TEST(Scene, DotsFollowTheTopology) {
  const Scene s(quick(0));
  const FrameTruth t = s.truth(0);
  const TapeTopology& topo = s.topology();
  ASSERT_EQ(t.dots.size(), 22u);
  for (const auto& e : topo.short_edges()) {
    const double len = (t.dots[static_cast<std::size_t>(e.a)] - t.dots[static_cast<std::size_t>(e.b)]).norm();
    EXPECT_NEAR(len, e.nominal_length(), 0.5);
  }
  EXPECT_EQ(t.keypoints.size(), 6u);
}

TEST(Scene, Misconfigured) {
  SceneConfig c = quick(0);
  c.width = 1;
  c.height = 1;
  try {
    Scene{c};
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "scene-misconfigured");
  }
  c = quick(0);
  c.camera_count = 1;
  EXPECT_THROW(Scene{c}, Error);
  c = quick(0);
  c.detection_dropout_prob = 1.5;
  EXPECT_THROW(Scene{c}, Error);
}
