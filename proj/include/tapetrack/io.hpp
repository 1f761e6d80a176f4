#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "tapetrack/candidates.hpp"
#include "tapetrack/error.hpp"
#include "tapetrack/eval.hpp"
#include "tapetrack/geometry.hpp"
#include "tapetrack/synth.hpp"
#include "tapetrack/tape.hpp"
#include "tapetrack/tracker.hpp"

namespace tapetrack {

using json = nlohmann::json;

// --- files -------------------------------------------------------------------

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing-file", path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("malformed-json", path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot write " + path);
  out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

// Typed field access; type mismatches become "invalid-config" errors that name
// the field.
template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error("invalid-config", where + "." + key + ": " + e.what());
  }
}

template <typename T>
T require_field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error("invalid-input", where + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error("invalid-input", where + "." + key + ": " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error("invalid-config", where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error("invalid-config", where + ": unknown key \"" + key + "\"");
  }
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error("invalid-input", where + ": expected 3 numbers");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const json::exception& e) {
    throw Error("invalid-input", where + ": " + e.what());
  }
}

}  // namespace detail

// --- calibration ---------------------------------------------------------------

inline json calibration_to_json(const std::vector<CameraModel>& cameras) {
  json out = json::array();
  for (const auto& c : cameras) {
    json r = json::array();
    for (int i = 0; i < 3; ++i) {
      for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
    }
    out.push_back({{"id", c.id},
                   {"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy},
                   {"rotation", r},
                   {"translation", detail::vec3_json(c.translation)},
                   {"width", c.width},
                   {"height", c.height}});
  }
  return out;
}

inline std::vector<CameraModel> calibration_from_json(const json& j) {
  if (!j.is_array()) throw Error("invalid-input", "calibration must be an array of cameras");
  std::vector<CameraModel> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string where = "calibration[" + std::to_string(k) + "]";
    const json& c = j[k];
    CameraModel cam;
    cam.id = detail::require_field<int>(c, "id", where);
    cam.fx = detail::require_field<double>(c, "fx", where);
    cam.fy = detail::require_field<double>(c, "fy", where);
    cam.cx = detail::require_field<double>(c, "cx", where);
    cam.cy = detail::require_field<double>(c, "cy", where);
    const auto r = detail::require_field<std::vector<double>>(c, "rotation", where);
    if (r.size() != 9) throw Error("invalid-input", where + ".rotation: expected 9 numbers");
    for (int i = 0; i < 9; ++i) cam.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
    cam.translation = detail::json_vec3(c.at("translation"), where + ".translation");
    cam.width = detail::require_field<int>(c, "width", where);
    cam.height = detail::require_field<int>(c, "height", where);
    cam.validate();
    out.push_back(cam);
  }
  return out;
}

// --- tape ----------------------------------------------------------------------

inline json tape_to_json(const TapeTopology& t) {
  return {{"n_row", t.n_row}, {"d_target_long_mm", t.d_target_long}, {"d_target_trans_mm", t.d_target_trans}};
}

inline TapeTopology tape_from_json(const json& j) {
  return build_topology(detail::require_field<int>(j, "n_row", "tape"),
                        detail::require_field<double>(j, "d_target_long_mm", "tape"),
                        detail::require_field<double>(j, "d_target_trans_mm", "tape"));
}

// --- detections ------------------------------------------------------------------

struct FrameDetections {
  int frame = 0;
  std::vector<CameraDetections> cameras;
};

inline json detections_to_json(const FrameDetections& d) {
  json cams = json::array();
  for (const auto& c : d.cameras) {
    json blobs = json::array();
    for (const auto& b : c.blobs) {
      blobs.push_back({{"id", b.blob_id}, {"x", b.center.x()}, {"y", b.center.y()}, {"r", b.radius}});
    }
    cams.push_back({{"id", c.camera_id}, {"blobs", blobs}});
  }
  return {{"frame", d.frame}, {"cameras", cams}};
}

inline FrameDetections detections_from_json(const json& j) {
  FrameDetections out;
  out.frame = detail::require_field<int>(j, "frame", "detections");
  const std::string where = "detections[frame " + std::to_string(out.frame) + "]";
  const json& cams = j.at("cameras");
  if (!cams.is_array()) throw Error("invalid-input", where + ".cameras must be an array");
  for (const auto& c : cams) {
    CameraDetections det;
    det.camera_id = detail::require_field<int>(c, "id", where);
    for (const auto& b : c.at("blobs")) {
      Blob blob;
      blob.camera_id = det.camera_id;
      blob.blob_id = detail::require_field<int>(b, "id", where);
      blob.center = Vec2(detail::require_field<double>(b, "x", where), detail::require_field<double>(b, "y", where));
      blob.radius = b.contains("r") ? detail::require_field<double>(b, "r", where) : 1.0;
      det.blobs.push_back(blob);
    }
    out.cameras.push_back(std::move(det));
  }
  return out;
}

// --- truth -----------------------------------------------------------------------

inline json truth_to_json(const FrameTruth& t, const TapeTopology& topo) {
  json dots = json::array();
  for (int i = 0; i < topo.dot_count(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    dots.push_back({{"row", topo.dots[k].row},
                    {"col", topo.dots[k].col},
                    {"x", t.dots[k].x()},
                    {"y", t.dots[k].y()},
                    {"z", t.dots[k].z()},
                    {"visibility", t.visibility[k]}});
  }
  json kps = json::array();
  for (const auto& [a, b] : t.keypoints) kps.push_back(json::array({detail::vec3_json(a), detail::vec3_json(b)}));
  return {{"frame", t.frame}, {"dots", dots}, {"keypoints", kps}};
}

struct TruthRecord {
  int frame = 0;
  std::vector<NodeEstimate> dots;
  std::vector<int> visibility;
  std::vector<std::pair<Vec3, Vec3>> keypoints;
};

inline TruthRecord truth_from_json(const json& j) {
  TruthRecord out;
  out.frame = detail::require_field<int>(j, "frame", "truth");
  const std::string where = "truth[frame " + std::to_string(out.frame) + "]";
  for (const auto& d : j.at("dots")) {
    out.dots.push_back({detail::require_field<int>(d, "row", where), detail::require_field<int>(d, "col", where),
                        Vec3(detail::require_field<double>(d, "x", where), detail::require_field<double>(d, "y", where),
                             detail::require_field<double>(d, "z", where))});
    out.visibility.push_back(d.contains("visibility") ? detail::require_field<int>(d, "visibility", where) : -1);
  }
  if (j.contains("keypoints")) {
    for (const auto& kp : j.at("keypoints")) {
      if (!kp.is_array() || kp.size() != 2) throw Error("invalid-input", where + ".keypoints: expected pairs");
      out.keypoints.emplace_back(detail::json_vec3(kp[0], where), detail::json_vec3(kp[1], where));
    }
  }
  return out;
}

// --- tracks ----------------------------------------------------------------------

inline json track_to_json(const TrackResult& r, const TapeTopology& topo) {
  json nodes = json::array();
  for (int i = 0; i < topo.dot_count(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    nodes.push_back({{"row", topo.dots[k].row},
                     {"col", topo.dots[k].col},
                     {"x", r.positions[k].x()},
                     {"y", r.positions[k].y()},
                     {"z", r.positions[k].z()}});
  }
  return {{"frame", r.frame}, {"nodes", nodes}, {"confidence", r.low_confidence ? "low" : "normal"}, {"notes", r.notes}};
}

struct TrackRecord {
  int frame = 0;
  std::vector<NodeEstimate> nodes;
  bool low_confidence = false;
};

inline TrackRecord track_from_json(const json& j) {
  TrackRecord out;
  out.frame = detail::require_field<int>(j, "frame", "tracks");
  const std::string where = "tracks[frame " + std::to_string(out.frame) + "]";
  for (const auto& n : j.at("nodes")) {
    out.nodes.push_back({detail::require_field<int>(n, "row", where), detail::require_field<int>(n, "col", where),
                         Vec3(detail::require_field<double>(n, "x", where), detail::require_field<double>(n, "y", where),
                              detail::require_field<double>(n, "z", where))});
  }
  const auto conf = detail::require_field<std::string>(j, "confidence", where);
  if (conf != "normal" && conf != "low") throw Error("invalid-input", where + ".confidence: " + conf);
  out.low_confidence = conf == "low";
  return out;
}

// --- pipeline config ---------------------------------------------------------------

struct PipelineConfig {
  SceneConfig scene;
  TrackerConfig tracker;
  std::string tape_path;  // optional tape JSON overriding the scene's stripe
  std::uint64_t seed = 1;

  // Seed feeds the scene generator and the particle samplers.
  void apply_seed(std::uint64_t s) {
    seed = s;
    scene.rng_seed = s;
    tracker.mrf.rng_seed = s;
  }
};

inline PipelineConfig config_from_json(const json& j) {
  using detail::read_field;
  PipelineConfig c;
  detail::reject_unknown(j, {"seed", "tape", "scene", "thresholds", "selection", "mrf", "template"}, "config");
  std::uint64_t seed = c.seed;
  read_field(j, "seed", seed, "config");
  read_field(j, "tape", c.tape_path, "config");
  if (j.contains("scene")) {
    const json& s = j["scene"];
    detail::reject_unknown(s,
                           {"n_row", "d_target_long_mm", "d_target_trans_mm", "camera_count", "arc_degrees",
                            "camera_distance", "elevations_deg", "width", "height", "focal", "max_view_angle_deg",
                            "spine_length", "bend_amplitude", "bend_omega", "bend_phase", "frame_count",
                            "pixel_noise_sigma", "detection_dropout_prob", "occluder_count", "occluder_radius",
                            "occluder_volume", "occluder_speed", "dot_radius", "tape_half_width", "tape_margin",
                            "tape_gray", "keypoint_stations", "keypoint_lateral", "keypoint_groove", "hidden_dots",
                            "render_images"},
                           "scene");
    auto& sc = c.scene;
    read_field(s, "n_row", sc.n_row, "scene");
    read_field(s, "d_target_long_mm", sc.d_target_long, "scene");
    read_field(s, "d_target_trans_mm", sc.d_target_trans, "scene");
    read_field(s, "camera_count", sc.camera_count, "scene");
    read_field(s, "arc_degrees", sc.arc_degrees, "scene");
    read_field(s, "camera_distance", sc.camera_distance, "scene");
    read_field(s, "elevations_deg", sc.elevations_deg, "scene");
    read_field(s, "width", sc.width, "scene");
    read_field(s, "height", sc.height, "scene");
    read_field(s, "focal", sc.focal, "scene");
    read_field(s, "max_view_angle_deg", sc.max_view_angle_deg, "scene");
    read_field(s, "spine_length", sc.spine_length, "scene");
    read_field(s, "bend_amplitude", sc.bend_amplitude, "scene");
    read_field(s, "bend_omega", sc.bend_omega, "scene");
    read_field(s, "bend_phase", sc.bend_phase, "scene");
    read_field(s, "frame_count", sc.frame_count, "scene");
    read_field(s, "pixel_noise_sigma", sc.pixel_noise_sigma, "scene");
    read_field(s, "detection_dropout_prob", sc.detection_dropout_prob, "scene");
    read_field(s, "occluder_count", sc.occluder_count, "scene");
    read_field(s, "occluder_radius", sc.occluder_radius, "scene");
    read_field(s, "occluder_volume", sc.occluder_volume, "scene");
    read_field(s, "occluder_speed", sc.occluder_speed, "scene");
    read_field(s, "dot_radius", sc.dot_radius, "scene");
    read_field(s, "tape_half_width", sc.tape_half_width, "scene");
    read_field(s, "tape_margin", sc.tape_margin, "scene");
    read_field(s, "tape_gray", sc.tape_gray, "scene");
    read_field(s, "keypoint_stations", sc.keypoint_stations, "scene");
    read_field(s, "keypoint_lateral", sc.keypoint_lateral, "scene");
    read_field(s, "keypoint_groove", sc.keypoint_groove, "scene");
    read_field(s, "hidden_dots", sc.hidden_dots, "scene");
    read_field(s, "render_images", sc.render_images, "scene");
  }
  auto& tc = c.tracker;
  if (j.contains("thresholds")) {
    const json& t = j["thresholds"];
    detail::reject_unknown(t, {"th1", "th2", "th3", "th4"}, "thresholds");
    read_field(t, "th1", tc.candidate.th1, "thresholds");
    read_field(t, "th2", tc.candidate.th2, "thresholds");
    read_field(t, "th3", tc.th3, "thresholds");
    read_field(t, "th4", tc.th4, "thresholds");
  }
  if (j.contains("selection")) {
    const json& s = j["selection"];
    detail::reject_unknown(s, {"min_neighbors", "max_neighbors", "floor_fraction", "node_limit"}, "selection");
    read_field(s, "min_neighbors", tc.selection.min_neighbors, "selection");
    read_field(s, "max_neighbors", tc.selection.max_neighbors, "selection");
    read_field(s, "floor_fraction", tc.selection.floor_fraction, "selection");
    read_field(s, "node_limit", tc.selection.node_limit, "selection");
  }
  if (j.contains("mrf")) {
    const json& m = j["mrf"];
    detail::reject_unknown(m,
                           {"theta1", "theta2", "theta3", "theta4", "theta5", "theta6", "theta7", "theta8", "d_min",
                            "particle_count", "mrf1_iterations", "mrf2_iterations", "knn_k", "slice_width",
                            "slice_max_steps", "temperature", "inner_sweeps", "normal_radius"},
                           "mrf");
    auto& p = tc.mrf;
    read_field(m, "theta1", p.theta1, "mrf");
    read_field(m, "theta2", p.theta2, "mrf");
    read_field(m, "theta3", p.theta3, "mrf");
    read_field(m, "theta4", p.theta4, "mrf");
    read_field(m, "theta5", p.theta5, "mrf");
    read_field(m, "theta6", p.theta6, "mrf");
    read_field(m, "theta7", p.theta7, "mrf");
    read_field(m, "theta8", p.theta8, "mrf");
    read_field(m, "d_min", p.d_min, "mrf");
    read_field(m, "particle_count", p.particle_count, "mrf");
    read_field(m, "mrf1_iterations", p.mrf1_iterations, "mrf");
    read_field(m, "mrf2_iterations", p.mrf2_iterations, "mrf");
    read_field(m, "knn_k", p.knn_k, "mrf");
    read_field(m, "slice_width", p.slice_width, "mrf");
    read_field(m, "slice_max_steps", p.slice_max_steps, "mrf");
    read_field(m, "temperature", p.temperature, "mrf");
    read_field(m, "inner_sweeps", p.inner_sweeps, "mrf");
    read_field(m, "normal_radius", tc.normal_radius, "mrf");
  }
  if (j.contains("template")) {
    const json& t = j["template"];
    detail::reject_unknown(t, {"search_rows", "search_step", "cubic_min_coverage", "quadratic_min_coverage"}, "template");
    read_field(t, "search_rows", tc.template_search_rows, "template");
    read_field(t, "search_step", tc.template_search_step, "template");
    read_field(t, "cubic_min_coverage", tc.cubic_min_coverage, "template");
    read_field(t, "quadratic_min_coverage", tc.quadratic_min_coverage, "template");
  }
  c.apply_seed(seed);
  c.scene.validate();
  c.tracker.mrf.validate();
  return c;
}

// --- metrics -------------------------------------------------------------------------

inline std::string metrics_csv(const MetricsReport& report, int camera_count) {
  std::ostringstream out;
  out.precision(17);
  out << "frame,mean_error_mm,baseline1_mm,baseline2_mm,baseline3_mm";
  for (int k = 0; k <= camera_count; ++k) out << ",vis" << k;
  out << "\n";
  for (const auto& f : report.frames) {
    out << f.frame << "," << f.mean_error << "," << f.baseline[0] << "," << f.baseline[1] << "," << f.baseline[2];
    for (int k = 0; k <= camera_count; ++k) {
      out << "," << (static_cast<std::size_t>(k) < f.visibility.size() ? f.visibility[static_cast<std::size_t>(k)] : 0);
    }
    out << "\n";
  }
  return out.str();
}

inline json metrics_summary(const MetricsReport& report) {
  double occluded = 0.0;
  int occluded_frames = 0;
  for (const auto& f : report.frames) {
    if (f.occluded_error == f.occluded_error) {
      occluded += f.occluded_error;
      ++occluded_frames;
    }
  }
  return {{"frames", report.frames.size()},
          {"mean_error_mm", report.mean_error()},
          {"pooled_error_mm", report.pooled_error()},
          {"baseline_mm", json::array({report.mean_baseline(1), report.mean_baseline(2), report.mean_baseline(3)})},
          {"occluded_error_mm", occluded_frames ? json(occluded / occluded_frames) : json(nullptr)},
          {"visibility", report.visibility()}};
}

// Metrics of one frame against its truth record.
inline FrameMetrics frame_metrics(const TrackRecord& track, const TruthRecord& truth, int camera_count) {
  FrameMetrics m;
  m.frame = truth.frame;
  const PointErrors e = point_error(track.nodes, truth.dots);
  m.mean_error = e.mean;
  m.per_dot = e.per_dot;
  std::vector<Vec3> dots;
  for (const auto& d : truth.dots) dots.push_back(d.position);
  if (!truth.keypoints.empty()) {
    for (int n = 1; n <= 3; ++n) m.baseline[n - 1] = plane_baseline(truth.keypoints, n, dots);
  }
  bool known = !truth.visibility.empty();
  for (int v : truth.visibility) known = known && v >= 0;
  if (known) {
    m.visibility = visibility_histogram(truth.visibility, camera_count);
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < truth.visibility.size(); ++i) {
      if (truth.visibility[i] == 0) {
        s += e.per_dot[i];
        ++n;
      }
    }
    if (n) m.occluded_error = s / n;
  }
  return m;
}

}  // namespace tapetrack
