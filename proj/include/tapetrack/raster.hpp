#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "tapetrack/error.hpp"
#include "tapetrack/geometry.hpp"

namespace tapetrack {

// Row-major 2D grid.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return data.empty(); }
  T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

using Image8 = Grid<std::uint8_t>;
using Image16 = Grid<std::uint16_t>;

inline constexpr double kMaxIntensity = 255.0;
inline constexpr double kCostMax = 1e6;

// 1D squared Euclidean distance transform of a sampled function
// (lower envelope of parabolas).
inline void distance_transform_1d(const double* f, int n, double* out, std::vector<int>& v, std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    auto intersect = [&](int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
    double s = intersect(v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) {
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(out, out + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    out[q] = double(q - p) * (q - p) + f[p];
  }
}

// Exact squared Euclidean distance (in pixels) from every cell to the nearest
// set cell of `mask`; +inf everywhere when the mask is empty.
inline Grid<double> squared_distance_transform(const Image8& mask) {
  const int w = mask.width;
  const int h = mask.height;
  constexpr double inf = std::numeric_limits<double>::infinity();
  Grid<double> out(w, h, inf);
  for (std::size_t i = 0; i < mask.data.size(); ++i) out.data[i] = mask.data[i] ? 0.0 : inf;
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col_in(static_cast<std::size_t>(h));
  std::vector<double> col_out(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col_in[static_cast<std::size_t>(y)] = out(x, y);
    distance_transform_1d(col_in.data(), h, col_out.data(), v, z);
    for (int y = 0; y < h; ++y) out(x, y) = col_out[static_cast<std::size_t>(y)];
  }
  std::vector<double> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    double* r = &out(0, y);
    std::copy(r, r + w, row.begin());
    distance_transform_1d(row.data(), w, r, v, z);
  }
  return out;
}

// Per-camera image cost field: inverted dot image inside the tape mask,
// I_max + Euclidean distance to the mask outside.
struct CostRaster {
  int camera_id = 0;
  Grid<double> values;
  bool degenerate = false;  // built from an empty mask

  int width() const { return values.width; }
  int height() const { return values.height; }

  // Bilinear sample at fractional pixel (x, y). Outside the grid the nearest
  // border position is sampled and the distance to it is added.
  double sample(double x, double y) const {
    const double max_x = values.width - 1.0;
    const double max_y = values.height - 1.0;
    const double cx = std::clamp(x, 0.0, max_x);
    const double cy = std::clamp(y, 0.0, max_y);
    const double dx = x - cx;
    const double dy = y - cy;
    const double penalty = (dx == 0.0 && dy == 0.0) ? 0.0 : std::sqrt(dx * dx + dy * dy);
    const int x0 = std::min(static_cast<int>(cx), values.width - 1);
    const int y0 = std::min(static_cast<int>(cy), values.height - 1);
    const int x1 = std::min(x0 + 1, values.width - 1);
    const int y1 = std::min(y0 + 1, values.height - 1);
    const double ax = cx - x0;
    const double ay = cy - y0;
    const double top = (1.0 - ax) * values(x0, y0) + ax * values(x1, y0);
    const double bottom = (1.0 - ax) * values(x0, y1) + ax * values(x1, y1);
    return (1.0 - ay) * top + ay * bottom + penalty;
  }
};

template <typename Pixel>
CostRaster build_cost_raster(const Grid<Pixel>& dot_image, const Image8& mask, const CameraModel& camera,
                             double i_max = kMaxIntensity) {
  if (dot_image.width != mask.width || dot_image.height != mask.height || dot_image.empty()) {
    throw Error("raster-size", "dot image and mask must share the camera resolution");
  }
  if ((camera.width && camera.width != mask.width) || (camera.height && camera.height != mask.height)) {
    throw Error("raster-size", "raster size does not match camera " + std::to_string(camera.id));
  }
  CostRaster raster;
  raster.camera_id = camera.id;
  raster.values = Grid<double>(mask.width, mask.height, 0.0);
  const bool any = std::any_of(mask.data.begin(), mask.data.end(), [](auto m) { return m != 0; });
  if (!any) {
    raster.degenerate = true;
    const double cx = 0.5 * (mask.width - 1);
    const double cy = 0.5 * (mask.height - 1);
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) raster.values(x, y) = i_max + std::hypot(x - cx, y - cy);
    }
    return raster;
  }
  const Grid<double> dist2 = squared_distance_transform(mask);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    raster.values.data[i] = mask.data[i] ? i_max - static_cast<double>(dot_image.data[i])
                                         : i_max + std::sqrt(dist2.data[i]);
  }
  return raster;
}

// Sum over cameras of the raster value at the projection of `p`; a camera
// that sees `p` behind it contributes kCostMax.
inline double raster_cost(const CostRaster& raster, const CameraModel& camera, const Vec3& p) {
  const auto pix = try_project(camera, p);
  if (!pix) return kCostMax;
  return raster.sample(pix->x(), pix->y());
}

// --- PGM (P5) -------------------------------------------------------------

template <typename Pixel>
void write_pgm(const std::string& path, const Grid<Pixel>& img) {
  static_assert(sizeof(Pixel) == 1 || sizeof(Pixel) == 2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot write " + path);
  const int maxval = sizeof(Pixel) == 1 ? 255 : 65535;
  out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  if constexpr (sizeof(Pixel) == 1) {
    out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  } else {
    std::vector<unsigned char> buf(img.data.size() * 2);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      buf[2 * i] = static_cast<unsigned char>(img.data[i] >> 8);
      buf[2 * i + 1] = static_cast<unsigned char>(img.data[i] & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

// Reads 8- or 16-bit binary PGM into 16-bit storage.
inline Image16 read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot read " + path);
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P5") throw Error("io-error", path + " is not a binary PGM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  Image16 img(w, h);
  if (maxval < 256) {
    std::vector<unsigned char> buf(img.data.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  } else {
    std::vector<unsigned char> buf(img.data.size() * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      img.data[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  }
  if (!in) throw Error("io-error", path + " is truncated");
  return img;
}

// 16-bit export of a cost raster for inspection (values clamped to 0..65535).
inline Image16 raster_to_image16(const CostRaster& raster) {
  Image16 img(raster.width(), raster.height());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<std::uint16_t>(std::clamp(std::lround(raster.values.data[i]), 0L, 65535L));
  }
  return img;
}

}  // namespace tapetrack
