#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "specmask/dataset.hpp"
#include "specmask/fsio.hpp"
#include "specmask/rng.hpp"
#include "specmask/spectral.hpp"

using namespace specmask;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("specmask_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Writes a small IDX ubyte pair: `count` 28x28 images whose pixel (r,c)
/// equals (i + r + c) % 256, labels cycling over `classes`.
void write_idx_pair(const fs::path& images, const fs::path& labels, int count, int classes) {
  std::string ib;
  io::put_u32be(ib, 0x00000803u);
  io::put_u32be(ib, static_cast<uint32_t>(count));
  io::put_u32be(ib, 28);
  io::put_u32be(ib, 28);
  for (int i = 0; i < count; ++i) {
    for (int r = 0; r < 28; ++r) {
      for (int c = 0; c < 28; ++c) ib.push_back(static_cast<char>((i + r + c) % 256));
    }
  }
  io::atomic_write(images, ib);

  std::string lb;
  io::put_u32be(lb, 0x00000801u);
  io::put_u32be(lb, static_cast<uint32_t>(count));
  for (int i = 0; i < count; ++i) lb.push_back(static_cast<char>(i % classes));
  io::atomic_write(labels, lb);
}

}  // namespace

TEST_CASE("load_idx accepts the IDX magics and pads 28x28 to 32x32") {
  const fs::path dir = test_dir("idx_ok");
  write_idx_pair(dir / "img.idx", dir / "lbl.idx", 20, 4);
  const DatasetSplit split = load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 1);
  CHECK(split.num_classes == 4);
  CHECK(split.train.size() + split.val.size() == 20);
  CHECK(split.train.size() == 14);  // 70/30
  for (const LabeledImage& img : split.train) {
    CHECK(img.pixels.d == 32);
    // zero padding: 2-pixel border
    for (int j = 0; j < 32; ++j) {
      CHECK(img.pixels.at(0, j) == 0.0);
      CHECK(img.pixels.at(1, j) == 0.0);
      CHECK(img.pixels.at(30, j) == 0.0);
    }
  }
}

TEST_CASE("load_idx rejects a wrong image magic, naming the offset") {
  const fs::path dir = test_dir("idx_magic");
  std::string ib;
  io::put_u32be(ib, 0x00000802u);  // wrong
  io::put_u32be(ib, 1);
  io::put_u32be(ib, 28);
  io::put_u32be(ib, 28);
  ib.append(28 * 28, '\0');
  io::atomic_write(dir / "img.idx", ib);
  std::string lb;
  io::put_u32be(lb, 0x00000801u);
  io::put_u32be(lb, 1);
  lb.push_back('\0');
  io::atomic_write(dir / "lbl.idx", lb);
  CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 1),
                       doctest::Contains("bad magic at offset 0"), std::runtime_error);
}

TEST_CASE("load_idx reports truncation with a byte offset") {
  const fs::path dir = test_dir("idx_trunc");
  std::string ib;
  io::put_u32be(ib, 0x00000803u);
  io::put_u32be(ib, 5);
  io::put_u32be(ib, 28);
  io::put_u32be(ib, 28);
  ib.append(28 * 28 * 2, '\x10');  // promises 5 images, holds 2
  io::atomic_write(dir / "img.idx", ib);
  std::string lb;
  io::put_u32be(lb, 0x00000801u);
  io::put_u32be(lb, 5);
  lb.append(5, '\0');
  io::atomic_write(dir / "lbl.idx", lb);
  CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 1),
                       doctest::Contains("truncated at offset"), std::runtime_error);
}

TEST_CASE("load_idx rejects image/label count mismatch") {
  const fs::path dir = test_dir("idx_mismatch");
  write_idx_pair(dir / "img.idx", dir / "lbl.idx", 10, 2);
  std::string lb;
  io::put_u32be(lb, 0x00000801u);
  io::put_u32be(lb, 8);
  lb.append(8, '\0');
  io::atomic_write(dir / "lbl.idx", lb);
  CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 1),
                       doctest::Contains("count mismatch"), std::runtime_error);
}

TEST_CASE("load_idx whitelist remaps labels in whitelist order and caps per class") {
  const fs::path dir = test_dir("idx_whitelist");
  write_idx_pair(dir / "img.idx", dir / "lbl.idx", 40, 4);  // 10 per raw class
  const DatasetSplit split = load_idx(dir / "img.idx", dir / "lbl.idx", {3, 1}, 4, 9);
  CHECK(split.num_classes == 2);
  CHECK(split.train.size() + split.val.size() == 8);  // 2 classes x cap 4
  for (const LabeledImage& img : split.train) CHECK(img.label < 2);
}

TEST_CASE("load_idx splits deterministically for a fixed seed") {
  const fs::path dir = test_dir("idx_det");
  write_idx_pair(dir / "img.idx", dir / "lbl.idx", 30, 3);
  const DatasetSplit a = load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 42);
  const DatasetSplit b = load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 42);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);
  const DatasetSplit c = load_idx(dir / "img.idx", dir / "lbl.idx", {}, 0, 43);
  bool same = a.train.size() == c.train.size();
  if (same) {
    same = true;
    for (size_t i = 0; i < a.train.size(); ++i) {
      if (a.train[i].id != c.train[i].id) same = false;
    }
  }
  CHECK_FALSE(same);
}

TEST_CASE("normalization stats come from the training split only") {
  const DatasetSplit split = generate_synthetic(4, 30, 5);
  double s = 0.0, s2 = 0.0;
  size_t n = 0;
  for (const LabeledImage& img : split.train) {
    for (double p : img.pixels.v) {
      s += p;
      s2 += p * p;
      ++n;
    }
  }
  const double mean = s / double(n);
  const double var = s2 / double(n) - mean * mean;
  CHECK(split.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(split.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(split.stddev > 0.0);
}

TEST_CASE("synthetic generation is deterministic and balanced") {
  const DatasetSplit a = generate_synthetic(5, 20, 11);
  const DatasetSplit b = generate_synthetic(5, 20, 11);
  CHECK(a.train.size() + a.val.size() == 100);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].pixels.v == b.train[i].pixels.v);
  }
  std::vector<int> counts(5, 0);
  for (const auto& img : a.train) counts[size_t(img.label)]++;
  for (const auto& img : a.val) counts[size_t(img.label)]++;
  for (int c : counts) CHECK(c == 20);
  for (const auto& img : a.val) {
    for (double p : img.pixels.v) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("class mean images put their dominant angular energy in the grating wedge") {
  // Oracle: the grating angle of class c is c*pi/C exactly; with DC removed,
  // the mean image's strongest angular band must contain that angle.
  const int C = 5, K = 8;
  const DatasetSplit split = generate_synthetic(C, 40, 3);
  const auto bands = spectral::BandSpec::angular(32, K);
  for (int c = 0; c < C; ++c) {
    Grid mean(32);
    int count = 0;
    auto add = [&](const std::vector<LabeledImage>& set) {
      for (const LabeledImage& img : set) {
        if (img.label != c) continue;
        for (size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += img.pixels.v[i];
        ++count;
      }
    };
    add(split.train);
    add(split.val);
    REQUIRE(count > 0);
    for (double& v : mean.v) v /= double(count);
    Grid mag = spectral::magnitude(spectral::fft2(mean));
    mag.at(0, 0) = 0.0;  // orientation-free DC carries most raw energy
    const std::vector<double> energy = spectral::band_energy(mag, bands);
    const int argmax =
        static_cast<int>(std::max_element(energy.begin(), energy.end()) - energy.begin());
    const double theta = double(c) * std::numbers::pi / C;
    const int expected = std::min(K - 1, static_cast<int>(std::floor(theta * K / std::numbers::pi)));
    CHECK(argmax == expected);
  }
}

TEST_CASE("translate: identity, full shift out, and the 3-then-minus-3 interior identity") {
  Rng rng(21);
  Grid img(32);
  for (double& v : img.v) v = rng.uniform();

  CHECK(translate(img, 0, 0).v == img.v);

  const Grid gone = translate(img, 32, 0);
  for (double v : gone.v) CHECK(v == 0.0);

  const Grid back = translate(translate(img, 3, 0), -3, 0);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      if (j >= 3) {
        CHECK(back.at(i, j) == img.at(i, j));
      } else {
        CHECK(back.at(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("rotate: identity at 0 and 360 degrees (interior)") {
  Rng rng(22);
  Grid img(32);
  for (double& v : img.v) v = rng.uniform();
  const Grid r0 = rotate(img, 0.0);
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(r0.v[i] - img.v[i]) < 1e-12);
  const Grid r360 = rotate(img, 360.0);
  for (int i = 1; i < 31; ++i) {
    for (int j = 1; j < 31; ++j) CHECK(std::abs(r360.at(i, j) - img.at(i, j)) < 1e-6);
  }
}

TEST_CASE("rotate by 90 degrees equals the exact index permutation") {
  // Asymmetric L-shaped pattern so orientation errors cannot cancel.
  Grid img(16);
  for (int i = 2; i < 12; ++i) img.at(i, 3) = 1.0;
  for (int j = 3; j < 10; ++j) img.at(11, j) = 0.7;
  const Grid rot = rotate(img, 90.0);
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      // Index-permutation oracle for this rotation convention.
      CHECK(std::abs(rot.at(i, j) - img.at(15 - j, i)) < 1e-6);
    }
  }
}

TEST_CASE("rescale: identity at s=1, error at s<=0") {
  Rng rng(23);
  Grid img(32);
  for (double& v : img.v) v = rng.uniform();
  const Grid s1 = rescale(img, 1.0);
  for (size_t i = 0; i < img.v.size(); ++i) CHECK(std::abs(s1.v[i] - img.v[i]) < 1e-12);
  CHECK_THROWS_AS(rescale(img, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rescale(img, -0.5), std::invalid_argument);
}

TEST_CASE("augmentation sampling is a pure function of (seed, epoch, index)") {
  Rng rng(24);
  Grid img(32);
  for (double& v : img.v) v = rng.uniform();
  AugmentPolicy policy;
  policy.kind = AugmentKind::rotate;
  policy.max_angle = 30.0;
  const Grid a = augment_sample(img, policy, 9, 3, 17);
  const Grid b = augment_sample(img, policy, 9, 3, 17);
  CHECK(a.v == b.v);
  const Grid c = augment_sample(img, policy, 9, 3, 18);
  CHECK(a.v != c.v);
  const Grid d = augment_sample(img, policy, 9, 4, 17);
  CHECK(a.v != d.v);
}

TEST_CASE("augment policy descriptions round-trip") {
  for (const std::string desc :
       {"none", "adversarial eps=0.1 alpha=0.02 steps=10", "translate max=4", "rotate max=30",
        "scale min=0.8 max=1.2"}) {
    CHECK(AugmentPolicy::parse(desc).describe() == desc);
  }
  CHECK_THROWS_AS(AugmentPolicy::parse("warp max=2"), std::invalid_argument);
}

TEST_CASE("IDX double container round-trips attacked image sets") {
  const fs::path dir = test_dir("idx_double");
  Rng rng(25);
  std::vector<Grid> imgs(3, Grid(32));
  for (Grid& g : imgs) {
    for (double& v : g.v) v = rng.uniform();
  }
  save_idx_double(dir / "x.idx", imgs);
  const std::vector<Grid> back = load_idx_double(dir / "x.idx");
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(back[i].v == imgs[i].v);

  save_idx_labels(dir / "y.idx", {0, 4, 2});
  CHECK(load_idx_labels(dir / "y.idx") == std::vector<int>{0, 4, 2});
}
