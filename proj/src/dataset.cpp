#include "specmask/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "specmask/fsio.hpp"
#include "specmask/rng.hpp"

namespace specmask {

namespace {

constexpr double kPi = std::numbers::pi;

std::string hex32(uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

/// Seeded shuffle, 70/30 split, train-only normalization stats.
DatasetSplit finalize_split(std::vector<LabeledImage> images, int num_classes, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xDA7A5E7ull));
  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  DatasetSplit split;
  split.num_classes = num_classes;
  const size_t n_train = images.size() * 7 / 10;
  split.train.reserve(n_train);
  split.val.reserve(images.size() - n_train);
  for (size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? split.train : split.val;
    dst.push_back(std::move(images[order[i]]));
  }

  double s = 0.0, s2 = 0.0;
  size_t n = 0;
  for (const LabeledImage& img : split.train) {
    for (double p : img.pixels.v) {
      s += p;
      s2 += p * p;
      ++n;
    }
  }
  if (n == 0) throw std::runtime_error("dataset: empty training split");
  split.mean = s / double(n);
  const double var = s2 / double(n) - split.mean * split.mean;
  split.stddev = std::sqrt(std::max(var, 0.0));
  if (!(split.stddev > 0.0)) throw std::runtime_error("dataset: degenerate pixel distribution");
  return split;
}

}  // namespace

std::string AugmentPolicy::describe() const {
  std::ostringstream out;
  switch (kind) {
    case AugmentKind::none:
      out << "none";
      break;
    case AugmentKind::adversarial:
      out << "adversarial eps=" << io::format_double(eps) << " alpha=" << io::format_double(alpha)
          << " steps=" << steps;
      break;
    case AugmentKind::translate:
      out << "translate max=" << max_offset;
      break;
    case AugmentKind::rotate:
      out << "rotate max=" << io::format_double(max_angle);
      break;
    case AugmentKind::scale:
      out << "scale min=" << io::format_double(scale_min)
          << " max=" << io::format_double(scale_max);
      break;
  }
  return out.str();
}

AugmentPolicy AugmentPolicy::parse(const std::string& s) {
  std::istringstream in(s);
  std::string kind;
  in >> kind;
  AugmentPolicy p;
  if (kind == "none") p.kind = AugmentKind::none;
  else if (kind == "adversarial") p.kind = AugmentKind::adversarial;
  else if (kind == "translate") p.kind = AugmentKind::translate;
  else if (kind == "rotate") p.kind = AugmentKind::rotate;
  else if (kind == "scale") p.kind = AugmentKind::scale;
  else throw std::invalid_argument("unknown augment kind: " + kind);

  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad augment token: " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "eps") p.eps = io::parse_double(val);
    else if (key == "alpha") p.alpha = io::parse_double(val);
    else if (key == "steps") p.steps = std::stoi(val);
    else if (key == "max" && p.kind == AugmentKind::translate) p.max_offset = std::stoi(val);
    else if (key == "max" && p.kind == AugmentKind::rotate) p.max_angle = io::parse_double(val);
    else if (key == "max" && p.kind == AugmentKind::scale) p.scale_max = io::parse_double(val);
    else if (key == "min") p.scale_min = io::parse_double(val);
    else throw std::invalid_argument("unknown augment key: " + key);
  }
  if (p.kind == AugmentKind::scale && p.scale_min > p.scale_max) {
    throw std::invalid_argument("augment scale: min > max");
  }
  if (p.eps < 0.0) throw std::invalid_argument("augment adversarial: eps must be >= 0");
  return p;
}

DatasetSplit load_idx(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path,
                      const std::vector<int>& class_whitelist, int cap_per_class,
                      uint64_t seed) {
  const std::string ib = io::read_bytes(images_path);
  size_t ipos = 0;
  const uint32_t imagic = io::get_u32be(ib, ipos);
  if (imagic != 0x00000803u) {
    throw std::runtime_error("IDX image file " + images_path.string() +
                             ": bad magic at offset 0: expected 0x00000803, got " + hex32(imagic));
  }
  const uint32_t count = io::get_u32be(ib, ipos);
  const uint32_t rows = io::get_u32be(ib, ipos);
  const uint32_t cols = io::get_u32be(ib, ipos);
  if (rows == 0 || cols == 0 || rows > uint32_t(kImageSide) || cols > uint32_t(kImageSide)) {
    throw std::runtime_error("IDX image file: unsupported image size " + std::to_string(rows) +
                             "x" + std::to_string(cols) + " (limit " + std::to_string(kImageSide) +
                             ")");
  }
  const size_t need = size_t(count) * rows * cols;
  if (ib.size() - ipos < need) {
    throw std::runtime_error("IDX image file truncated at offset " +
                             std::to_string(ib.size()) + ": header promises " +
                             std::to_string(need) + " pixel bytes from offset " +
                             std::to_string(ipos));
  }

  const std::string lb = io::read_bytes(labels_path);
  size_t lpos = 0;
  const uint32_t lmagic = io::get_u32be(lb, lpos);
  if (lmagic != 0x00000801u) {
    throw std::runtime_error("IDX label file " + labels_path.string() +
                             ": bad magic at offset 0: expected 0x00000801, got " + hex32(lmagic));
  }
  const uint32_t lcount = io::get_u32be(lb, lpos);
  if (lcount != count) {
    throw std::runtime_error("IDX label count mismatch: " + std::to_string(count) +
                             " images vs " + std::to_string(lcount) + " labels");
  }
  if (lb.size() - lpos < lcount) {
    throw std::runtime_error("IDX label file truncated at offset " + std::to_string(lb.size()) +
                             ": header promises " + std::to_string(lcount) + " label bytes");
  }

  // Class remapping: whitelist order, or sorted distinct labels when empty.
  std::vector<int> classes = class_whitelist;
  if (classes.empty()) {
    std::vector<bool> seen(256, false);
    for (uint32_t i = 0; i < count; ++i) seen[static_cast<uint8_t>(lb[lpos + i])] = true;
    for (int c = 0; c < 256; ++c) {
      if (seen[c]) classes.push_back(c);
    }
  }
  std::vector<int> remap(256, -1);
  for (size_t k = 0; k < classes.size(); ++k) remap[static_cast<size_t>(classes[k])] = int(k);

  const int pad_top = (kImageSide - int(rows)) / 2;
  const int pad_left = (kImageSide - int(cols)) / 2;
  std::vector<int> taken(classes.size(), 0);
  std::vector<LabeledImage> images;
  for (uint32_t i = 0; i < count; ++i) {
    const int raw_label = static_cast<uint8_t>(lb[lpos + i]);
    const int label = remap[static_cast<size_t>(raw_label)];
    if (label < 0) continue;
    if (cap_per_class > 0 && taken[static_cast<size_t>(label)] >= cap_per_class) continue;
    taken[static_cast<size_t>(label)]++;
    LabeledImage img;
    img.label = label;
    img.id = int(i);
    img.pixels = Grid(kImageSide);
    const size_t base = ipos + size_t(i) * rows * cols;
    for (uint32_t r = 0; r < rows; ++r) {
      for (uint32_t c = 0; c < cols; ++c) {
        img.pixels.at(pad_top + int(r), pad_left + int(c)) =
            static_cast<uint8_t>(ib[base + size_t(r) * cols + c]) / 255.0;
      }
    }
    images.push_back(std::move(img));
  }
  if (images.empty()) throw std::runtime_error("IDX load produced no images after filtering");
  return finalize_split(std::move(images), int(classes.size()), seed);
}

DatasetSplit generate_synthetic(int num_classes, int n_per_class, uint64_t seed) {
  if (num_classes < 2 || num_classes > 8) {
    throw std::invalid_argument("generate_synthetic: classes must be in [2,8], got " +
                                std::to_string(num_classes));
  }
  const int d = kImageSide;
  std::vector<LabeledImage> images;
  images.reserve(size_t(num_classes) * n_per_class);
  for (int c = 0; c < num_classes; ++c) {
    const double theta = double(c) * kPi / num_classes;
    const double beta = 2.0 * kPi * c / num_classes;
    const double blob_cy = d / 2.0 + 8.0 * std::sin(beta);
    const double blob_cx = d / 2.0 + 8.0 * std::cos(beta);
    for (int i = 0; i < n_per_class; ++i) {
      Rng rng(derive_seed(seed, uint64_t(c), uint64_t(i)));
      const int freq = rng.uniform_int(5, 9);
      const double phase = rng.uniform(-kPi / 4.0, kPi / 4.0);
      const double amp = rng.uniform(0.22, 0.28);
      LabeledImage img;
      img.label = c;
      img.id = c * n_per_class + i;
      img.pixels = Grid(d);
      const double kx = std::cos(theta) * freq;
      const double ky = std::sin(theta) * freq;
      for (int y = 0; y < d; ++y) {
        for (int x = 0; x < d; ++x) {
          const double grating =
              amp * std::sin(2.0 * kPi * (kx * x + ky * y) / d + phase);
          const double dy = y - blob_cy, dx = x - blob_cx;
          const double blob = 0.2 * std::exp(-(dy * dy + dx * dx) / (2.0 * 4.0 * 4.0));
          const double noise = rng.uniform(-0.02, 0.02);
          img.pixels.at(y, x) = std::clamp(0.5 + grating + blob + noise, 0.0, 1.0);
        }
      }
      images.push_back(std::move(img));
    }
  }
  return finalize_split(std::move(images), num_classes, seed);
}

Grid translate(const Grid& img, int dx, int dy) {
  const int d = img.d;
  Grid out(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const int si = i + dy, sj = j + dx;
      if (si >= 0 && si < d && sj >= 0 && sj < d) out.at(i, j) = img.at(si, sj);
    }
  }
  return out;
}

namespace {

double bilinear(const Grid& img, double y, double x) {
  const int d = img.d;
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int i, int j) {
    return (i >= 0 && i < d && j >= 0 && j < d) ? img.at(i, j) : 0.0;
  };
  return px(y0, x0) * (1 - fy) * (1 - fx) + px(y0, x0 + 1) * (1 - fy) * fx +
         px(y0 + 1, x0) * fy * (1 - fx) + px(y0 + 1, x0 + 1) * fy * fx;
}

}  // namespace

Grid rotate(const Grid& img, double theta_deg) {
  const int d = img.d;
  const double th = theta_deg * kPi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double c = (d - 1) / 2.0;
  Grid out(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double sx = ct * (j - c) + st * (i - c) + c;
      const double sy = -st * (j - c) + ct * (i - c) + c;
      out.at(i, j) = bilinear(img, sy, sx);
    }
  }
  return out;
}

Grid rescale(const Grid& img, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("rescale: factor must be positive");
  const int d = img.d;
  const double c = (d - 1) / 2.0;
  Grid out(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      out.at(i, j) = bilinear(img, (i - c) / s + c, (j - c) / s + c);
    }
  }
  return out;
}

void save_idx_double(const std::filesystem::path& path, const std::vector<Grid>& images) {
  if (images.empty()) throw std::invalid_argument("save_idx_double: no images");
  const int d = images[0].d;
  std::string out;
  io::put_u32be(out, 0x00000E03u);
  io::put_u32be(out, static_cast<uint32_t>(images.size()));
  io::put_u32be(out, static_cast<uint32_t>(d));
  io::put_u32be(out, static_cast<uint32_t>(d));
  for (const Grid& g : images) {
    if (g.d != d) throw std::invalid_argument("save_idx_double: mixed image sides");
    // IDX is big-endian; store the raw IEEE-754 bits byte-reversed.
    for (double v : g.v) {
      std::string le;
      io::put_f64le(le, v);
      for (int b = 7; b >= 0; --b) out.push_back(le[static_cast<size_t>(b)]);
    }
  }
  io::atomic_write(path, out);
}

std::vector<Grid> load_idx_double(const std::filesystem::path& path) {
  const std::string bytes = io::read_bytes(path);
  size_t pos = 0;
  const uint32_t magic = io::get_u32be(bytes, pos);
  if (magic != 0x00000E03u) {
    throw std::runtime_error("IDX double file " + path.string() +
                             ": bad magic at offset 0: expected 0x00000e03, got " + hex32(magic));
  }
  const uint32_t count = io::get_u32be(bytes, pos);
  const uint32_t rows = io::get_u32be(bytes, pos);
  const uint32_t cols = io::get_u32be(bytes, pos);
  if (rows != cols) throw std::runtime_error("IDX double file: expected square images");
  const size_t need = size_t(count) * rows * cols * 8;
  if (bytes.size() - pos < need) {
    throw std::runtime_error("IDX double file truncated at offset " + std::to_string(bytes.size()));
  }
  std::vector<Grid> images(count, Grid(static_cast<int>(rows)));
  for (uint32_t i = 0; i < count; ++i) {
    for (size_t k = 0; k < size_t(rows) * cols; ++k) {
      std::string le(8, '\0');
      for (int b = 0; b < 8; ++b) le[static_cast<size_t>(7 - b)] = bytes[pos++];
      size_t lp = 0;
      images[i].v[k] = io::get_f64le(le, lp);
    }
  }
  return images;
}

void save_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::string out;
  io::put_u32be(out, 0x00000801u);
  io::put_u32be(out, static_cast<uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw std::invalid_argument("save_idx_labels: label out of byte range");
    out.push_back(static_cast<char>(l));
  }
  io::atomic_write(path, out);
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const std::string bytes = io::read_bytes(path);
  size_t pos = 0;
  const uint32_t magic = io::get_u32be(bytes, pos);
  if (magic != 0x00000801u) {
    throw std::runtime_error("IDX label file " + path.string() +
                             ": bad magic at offset 0: expected 0x00000801, got " + hex32(magic));
  }
  const uint32_t count = io::get_u32be(bytes, pos);
  if (bytes.size() - pos < count) {
    throw std::runtime_error("IDX label file truncated at offset " + std::to_string(bytes.size()));
  }
  std::vector<int> labels(count);
  for (uint32_t i = 0; i < count; ++i) labels[i] = static_cast<uint8_t>(bytes[pos + i]);
  return labels;
}

Grid augment_sample(const Grid& img, const AugmentPolicy& policy, uint64_t seed, int epoch,
                    int index) {
  switch (policy.kind) {
    case AugmentKind::none:
    case AugmentKind::adversarial:
      return img;
    case AugmentKind::translate: {
      Rng rng(derive_seed(seed, uint64_t(epoch) + 1, uint64_t(index)));
      const int dx = rng.uniform_int(-policy.max_offset, policy.max_offset);
      const int dy = rng.uniform_int(-policy.max_offset, policy.max_offset);
      return translate(img, dx, dy);
    }
    case AugmentKind::rotate: {
      Rng rng(derive_seed(seed, uint64_t(epoch) + 1, uint64_t(index)));
      return rotate(img, rng.uniform(-policy.max_angle, policy.max_angle));
    }
    case AugmentKind::scale: {
      Rng rng(derive_seed(seed, uint64_t(epoch) + 1, uint64_t(index)));
      return rescale(img, rng.uniform(policy.scale_min, policy.scale_max));
    }
  }
  return img;
}

}  // namespace specmask
