// tapetrack: synth / track / eval over a scene bundle directory.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tapetrack/io.hpp"
#include "tapetrack/raster.hpp"
#include "tapetrack/synth.hpp"
#include "tapetrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace tapetrack;

namespace {

struct Failure {
  int exit_code;
  std::string code;
  std::string message;
  std::string path;
};

struct FrameRange {
  int first = 0;
  int last = -1;  // inclusive; -1 means open
  bool contains(int f) const { return f >= first && (last < 0 || f <= last); }
};

FrameRange parse_range(const std::string& text) {
  FrameRange r;
  if (text.empty()) return r;
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      r.first = r.last = std::stoi(text);
    } else {
      r.first = std::stoi(text.substr(0, dots));
      const std::string tail = text.substr(dots + 2);
      r.last = tail.empty() ? -1 : std::stoi(tail);
    }
  } catch (const std::exception&) {
    throw Failure{2, "invalid-arguments", "bad frame range \"" + text + "\"", ""};
  }
  if (r.first < 0 || (r.last >= 0 && r.last < r.first)) {
    throw Failure{2, "invalid-arguments", "bad frame range \"" + text + "\"", ""};
  }
  return r;
}

// Input errors (missing or malformed files, bad config) exit with 2 and name
// the offending path.
template <typename F>
auto load(const std::string& path, F&& parse) {
  try {
    return parse(read_json(path));
  } catch (const Error& e) {
    throw Failure{2, e.code(), e.what(), path};
  } catch (const json::exception& e) {
    throw Failure{2, "invalid-input", e.what(), path};
  }
}

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::string scene_dir;
  std::string tracks_path;
  std::string frames;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

PipelineConfig resolve_config(const Options& opt) {
  PipelineConfig cfg = opt.config_path.empty() ? config_from_json(json::object())
                                               : load(opt.config_path, [](const json& j) { return config_from_json(j); });
  if (const char* env = std::getenv("TAPE_TRACK_SEED")) {
    try {
      cfg.apply_seed(std::stoull(env));
    } catch (const std::exception&) {
      throw Failure{2, "invalid-arguments", std::string("TAPE_TRACK_SEED is not an unsigned integer: ") + env, ""};
    }
  }
  if (opt.seed) cfg.apply_seed(*opt.seed);
  return cfg;
}

std::string image_path(const std::string& dir, const char* kind, int cam, int frame) {
  return (fs::path(dir) / kind / ("cam" + std::to_string(cam) + "_frame" + std::to_string(frame) + ".pgm")).string();
}

// --- synth -------------------------------------------------------------------

int run_synth(const Options& opt) {
  PipelineConfig cfg = resolve_config(opt);
  if (!cfg.tape_path.empty()) {
    const TapeTopology t = load(cfg.tape_path, [](const json& j) { return tape_from_json(j); });
    cfg.scene.n_row = t.n_row;
    cfg.scene.d_target_long = t.d_target_long;
    cfg.scene.d_target_trans = t.d_target_trans;
  }
  const FrameRange range = parse_range(opt.frames);
  const Scene scene(cfg.scene);
  const auto& cams = scene.cameras();
  write_json((fs::path(opt.out_dir) / "calibration.json").string(), calibration_to_json(cams));
  write_json((fs::path(opt.out_dir) / "tape.json").string(), tape_to_json(scene.topology()));
  json detections = json::array();
  json truth = json::array();
  if (cfg.scene.render_images) {
    fs::create_directories(fs::path(opt.out_dir) / "masks");
    fs::create_directories(fs::path(opt.out_dir) / "dots");
  }
  for (int f = 0; f < cfg.scene.frame_count; ++f) {
    if (!range.contains(f)) continue;
    const SceneFrame fr = scene.frame(f);
    detections.push_back(detections_to_json({f, fr.detections}));
    truth.push_back(truth_to_json(fr.truth, scene.topology()));
    for (std::size_t c = 0; c < fr.images.dots.size(); ++c) {
      write_pgm(image_path(opt.out_dir, "masks", cams[c].id, f), fr.images.masks[c]);
      write_pgm(image_path(opt.out_dir, "dots", cams[c].id, f), fr.images.dots[c]);
    }
  }
  write_json((fs::path(opt.out_dir) / "detections.json").string(), detections);
  write_json((fs::path(opt.out_dir) / "truth.json").string(), truth);
  std::cout << json{{"written", opt.out_dir}, {"frames", detections.size()}}.dump() << "\n";
  return 0;
}

// --- track -------------------------------------------------------------------

// Rasters for one frame when every camera has a mask and a dot image.
std::vector<CostRaster> load_rasters(const std::string& dir, const std::vector<CameraModel>& cams, int frame) {
  std::vector<CostRaster> out;
  for (const auto& cam : cams) {
    const std::string mp = image_path(dir, "masks", cam.id, frame);
    const std::string dp = image_path(dir, "dots", cam.id, frame);
    if (!fs::exists(mp) || !fs::exists(dp)) return {};
    try {
      const Image16 mask16 = read_pgm(mp);
      Image8 mask(mask16.width, mask16.height, 0);
      for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = mask16.data[i] ? 255 : 0;
      out.push_back(build_cost_raster(read_pgm(dp), mask, cam));
    } catch (const Error& e) {
      throw Failure{2, e.code(), e.what(), dp};
    }
  }
  return out;
}

int run_track(const Options& opt) {
  const PipelineConfig cfg = resolve_config(opt);
  const std::string dir = opt.scene_dir.empty() ? "." : opt.scene_dir;
  const auto cams = load((fs::path(dir) / "calibration.json").string(),
                         [](const json& j) { return calibration_from_json(j); });
  TapeTopology topo;
  const std::string tape_path = !cfg.tape_path.empty()                     ? cfg.tape_path
                                : fs::exists(fs::path(dir) / "tape.json") ? (fs::path(dir) / "tape.json").string()
                                                                           : std::string();
  if (tape_path.empty()) {
    topo = build_topology(cfg.scene.n_row, cfg.scene.d_target_long, cfg.scene.d_target_trans);
  } else {
    topo = load(tape_path, [](const json& j) { return tape_from_json(j); });
  }
  const std::string det_path = (fs::path(dir) / "detections.json").string();
  const auto frames = load(det_path, [](const json& j) {
    if (!j.is_array()) throw Error("invalid-input", "detections must be an array of frames");
    std::vector<FrameDetections> out;
    for (const auto& f : j) out.push_back(detections_from_json(f));
    return out;
  });
  const FrameRange range = parse_range(opt.frames);
  std::vector<const FrameDetections*> todo;
  for (const auto& f : frames) {
    if (range.contains(f.frame)) todo.push_back(&f);
  }
  std::sort(todo.begin(), todo.end(), [](auto* a, auto* b) { return a->frame < b->frame; });

  std::vector<json> records(todo.size());
  std::vector<std::optional<Failure>> failures(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        const auto rasters = load_rasters(dir, cams, todo[i]->frame);
        const TrackResult r = track_frame(topo, cams, todo[i]->cameras, rasters, cfg.tracker, todo[i]->frame);
        records[i] = track_to_json(r, topo);
      } catch (const Failure& f) {
        failures[i] = f;
      } catch (const Error& e) {
        failures[i] = Failure{1, e.code(), e.what(), det_path};
      }
    }
  };
  const int jobs = std::clamp(opt.jobs, 1, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& f : failures) {
    if (f) throw *f;
  }
  const std::string out_path = (fs::path(opt.out_dir) / "tracks.json").string();
  write_json(out_path, json(records));
  std::cout << json{{"written", out_path}, {"frames", records.size()}}.dump() << "\n";
  return 0;
}

// --- eval --------------------------------------------------------------------

int run_eval(const Options& opt) {
  const std::string dir = opt.scene_dir.empty() ? "." : opt.scene_dir;
  const std::string tracks_path =
      opt.tracks_path.empty() ? (fs::path(opt.out_dir) / "tracks.json").string() : opt.tracks_path;
  const auto cams = load((fs::path(dir) / "calibration.json").string(),
                         [](const json& j) { return calibration_from_json(j); });
  const auto truth = load((fs::path(dir) / "truth.json").string(), [](const json& j) {
    std::vector<TruthRecord> out;
    for (const auto& f : j) out.push_back(truth_from_json(f));
    return out;
  });
  const auto tracks = load(tracks_path, [](const json& j) {
    std::vector<TrackRecord> out;
    for (const auto& f : j) out.push_back(track_from_json(f));
    return out;
  });
  const FrameRange range = parse_range(opt.frames);
  MetricsReport report;
  const int camera_count = static_cast<int>(cams.size());
  for (const auto& t : tracks) {
    if (!range.contains(t.frame)) continue;
    const auto it = std::find_if(truth.begin(), truth.end(), [&](const auto& r) { return r.frame == t.frame; });
    if (it == truth.end()) {
      throw Failure{2, "alignment-error", "no truth for frame " + std::to_string(t.frame), tracks_path};
    }
    try {
      report.frames.push_back(frame_metrics(t, *it, camera_count));
    } catch (const Error& e) {
      throw Failure{2, e.code(), e.what(), tracks_path};
    }
  }
  std::sort(report.frames.begin(), report.frames.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
  write_text((fs::path(opt.out_dir) / "metrics.csv").string(), metrics_csv(report, camera_count));
  json summary = metrics_summary(report);
  write_json((fs::path(opt.out_dir) / "summary.json").string(), summary);
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view tracking of perforated kinesiology tape markers"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Pipeline config JSON");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--frames", opt.frames, "Frame range a..b (inclusive)");
    sub->add_option("--seed", seed, "Seed (overrides TAPE_TRACK_SEED and the config)");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene bundle");
  common(synth);
  auto* track = app.add_subcommand("track", "Track the tape in every frame of a scene bundle");
  common(track);
  track->add_option("--scene", opt.scene_dir, "Scene bundle directory");
  track->add_option("--jobs", opt.jobs, "Frames tracked in parallel")->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("eval", "Score tracks against the scene truth");
  common(eval);
  eval->add_option("--scene", opt.scene_dir, "Scene bundle directory");
  eval->add_option("--tracks", opt.tracks_path, "Tracks JSON (default <out>/tracks.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (app.get_subcommands().front()->count("--seed")) opt.seed = seed;

  try {
    if (synth->parsed()) return run_synth(opt);
    if (track->parsed()) return run_track(opt);
    return run_eval(opt);
  } catch (const Failure& f) {
    json err{{"error", f.code}, {"message", f.message}};
    if (!f.path.empty()) err["path"] = f.path;
    std::cerr << err.dump() << "\n";
    return f.exit_code;
  } catch (const Error& e) {
    const int code = e.code().rfind("invalid", 0) == 0 ? 2 : 1;
    std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}
