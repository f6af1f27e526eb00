#include "specmask/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "specmask/fsio.hpp"

namespace specmask {

namespace {

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
  io::put_u32be(out, static_cast<uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  io::put_u32be(out, crc);
}

std::string deflate_bytes(const std::string& raw) {
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  // Fixed compression level keeps output bytes deterministic.
  const int rc = ::compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                             reinterpret_cast<const Bytef*>(raw.data()),
                             static_cast<uLong>(raw.size()), 9);
  if (rc != Z_OK) throw std::runtime_error("png: zlib compress failed, rc=" + std::to_string(rc));
  compressed.resize(bound);
  return compressed;
}

void write_png(const std::filesystem::path& path, const std::vector<uint8_t>& pixels, int width,
               int height, int channels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<size_t>(width) * height * channels) {
    throw std::invalid_argument("png: pixel buffer does not match dimensions");
  }
  std::string out("\x89PNG\r\n\x1a\n", 8);

  std::string ihdr;
  io::put_u32be(ihdr, static_cast<uint32_t>(width));
  io::put_u32be(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);                              // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);          // color type: gray or truecolor
  ihdr.push_back(0);                              // compression
  ihdr.push_back(0);                              // filter
  ihdr.push_back(0);                              // interlace
  put_chunk(out, "IHDR", ihdr);

  std::string raw;
  raw.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * channels));
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter type 0
    raw.append(reinterpret_cast<const char*>(pixels.data() +
                                             static_cast<size_t>(y) * width * channels),
               static_cast<size_t>(width) * channels);
  }
  put_chunk(out, "IDAT", deflate_bytes(raw));
  put_chunk(out, "IEND", "");
  io::atomic_write(path, out);
}

struct Rgb {
  uint8_t r, g, b;
};

/// Blue-white-red diverging map over t in [-1, 1]; t = 0 is white.
Rgb diverging_color(double t) {
  t = std::clamp(t, -1.0, 1.0);
  if (t < 0.0) {
    const double f = 1.0 + t;  // 0 at -1, 1 at 0
    return {static_cast<uint8_t>(std::lround(255.0 * f)),
            static_cast<uint8_t>(std::lround(255.0 * f)), 255};
  }
  const double f = 1.0 - t;
  return {255, static_cast<uint8_t>(std::lround(255.0 * f)),
          static_cast<uint8_t>(std::lround(255.0 * f))};
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const std::vector<uint8_t>& pixels,
                    int width, int height) {
  write_png(path, pixels, width, height, 1);
}

void write_png_rgb(const std::filesystem::path& path, const std::vector<uint8_t>& rgb, int width,
                   int height) {
  write_png(path, rgb, width, height, 3);
}

void render_png(const Grid& grid, Colormap cmap, const std::filesystem::path& path,
                std::optional<double> symmetric_max, int scale) {
  for (double v : grid.v) {
    if (!std::isfinite(v)) throw std::invalid_argument("render_png: non-finite grid entry");
  }
  if (scale < 1) throw std::invalid_argument("render_png: scale must be >= 1");
  const int d = grid.d;
  const int side = d * scale;

  if (cmap == Colormap::grayscale) {
    double lo = grid.v[0], hi = grid.v[0];
    for (double v : grid.v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::vector<uint8_t> px(static_cast<size_t>(side) * side);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double v = grid.at(y / scale, x / scale);
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        px[static_cast<size_t>(y) * side + x] = static_cast<uint8_t>(std::lround(255.0 * t));
      }
    }
    write_png_gray(path, px, side, side);
    return;
  }

  double absmax = symmetric_max.value_or(0.0);
  if (!symmetric_max) {
    for (double v : grid.v) absmax = std::max(absmax, std::abs(v));
  }
  std::vector<uint8_t> px(static_cast<size_t>(side) * side * 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double v = grid.at(y / scale, x / scale);
      const Rgb c = diverging_color(absmax > 0.0 ? v / absmax : 0.0);
      const size_t at = (static_cast<size_t>(y) * side + x) * 3;
      px[at] = c.r;
      px[at + 1] = c.g;
      px[at + 2] = c.b;
    }
  }
  write_png_rgb(path, px, side, side);
}

void render_bar_panels(const std::vector<std::vector<double>>& series,
                       const std::filesystem::path& path, int panel_height) {
  if (series.empty()) throw std::invalid_argument("render_bar_panels: no series");
  const int gap = 2;
  int width = 0;
  for (const auto& s : series) {
    if (s.empty()) throw std::invalid_argument("render_bar_panels: empty series");
    width += static_cast<int>(s.size()) + gap;
  }
  width -= gap;
  const int height = panel_height;

  std::vector<uint8_t> px(static_cast<size_t>(width) * height, 255);
  int x0 = 0;
  for (const auto& s : series) {
    double peak = 0.0;
    for (double v : s) peak = std::max(peak, std::abs(v));
    for (size_t i = 0; i < s.size(); ++i) {
      const int h = peak > 0.0
                        ? static_cast<int>(std::lround((height - 1) * std::abs(s[i]) / peak))
                        : 0;
      for (int y = height - 1 - h; y < height; ++y) {
        px[static_cast<size_t>(y) * width + x0 + static_cast<int>(i)] = 40;
      }
    }
    x0 += static_cast<int>(s.size()) + gap;
  }
  write_png_gray(path, px, width, height);
}

}  // namespace specmask
