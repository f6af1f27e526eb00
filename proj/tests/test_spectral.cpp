#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "specmask/rng.hpp"
#include "specmask/spectral.hpp"

using namespace specmask;
using spectral::cplx;

namespace {

constexpr double kPi = std::numbers::pi;

Grid random_grid(int d, Rng& rng) {
  Grid g(d);
  for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
  return g;
}

// Independent O(d^4) reference DFT. Kept deliberately naive: this is the
// oracle the fast transform is checked against.
spectral::Spectrum naive_dft2(const Grid& x) {
  const int d = x.d;
  spectral::Spectrum s(d);
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      cplx acc(0.0, 0.0);
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          const double ang = -2.0 * kPi * (double(u) * i + double(v) * j) / d;
          acc += x.at(i, j) * std::polar(1.0, ang);
        }
      }
      s.at(u, v) = acc;
    }
  }
  return s;
}

// Direct 2-D circular convolution, O(d^4).
Grid circular_conv(const Grid& a, const Grid& b) {
  const int d = a.d;
  Grid out(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int p = 0; p < d; ++p) {
        for (int q = 0; q < d; ++q) {
          acc += a.at(p, q) * b.at((i - p + d) % d, (j - q + d) % d);
        }
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

double max_abs_diff(const spectral::Spectrum& a, const spectral::Spectrum& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
  return worst;
}

}  // namespace

TEST_CASE("fft2 of an impulse at (0,0) is flat") {
  Grid g(8);
  g.at(0, 0) = 1.0;
  auto s = spectral::fft2(g);
  for (const cplx& v : s.v) {
    CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(v.imag()) < 1e-12);
  }
}

TEST_CASE("fft2 of a constant is a DC spike") {
  const double c = 0.37;
  Grid g(8, c);
  auto s = spectral::fft2(g);
  CHECK(s.at(0, 0).real() == doctest::Approx(64.0 * c).epsilon(1e-12));
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      if (u == 0 && v == 0) continue;
      CHECK(std::abs(s.at(u, v)) < 1e-10);
    }
  }
}

TEST_CASE("fft2 matches the naive DFT oracle") {
  Rng rng(11);
  Grid g = random_grid(16, rng);
  auto fast = spectral::fft2(g);
  auto slow = naive_dft2(g);
  CHECK(max_abs_diff(fast, slow) < 1e-9);
}

TEST_CASE("fft2 rejects non-power-of-two sides") {
  Grid g(12);
  CHECK_THROWS_WITH_AS(spectral::fft2(g), doctest::Contains("power of two"),
                       std::invalid_argument);
}

TEST_CASE("ifft2 round trip and DC reconstruction") {
  Rng rng(12);
  Grid g = random_grid(32, rng);
  auto back = spectral::ifft2(spectral::fft2(g));
  double worst = 0.0;
  for (size_t i = 0; i < g.v.size(); ++i) worst = std::max(worst, std::abs(back.real.v[i] - g.v[i]));
  CHECK(worst < 1e-12);
  CHECK(back.max_imag_residue < 1e-10);

  // DC-only spectrum of value d^2 inverts to the constant-1 image.
  spectral::Spectrum s(8);
  s.at(0, 0) = cplx(64.0, 0.0);
  auto img = spectral::ifft2(s);
  for (double v : img.real.v) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spectra of real images are Hermitian-symmetric") {
  Rng rng(13);
  Grid g = random_grid(16, rng);
  auto s = spectral::fft2(g);
  CHECK(spectral::hermitian_asymmetry(s) < 1e-10);
}

TEST_CASE("Parseval with the unnormalized-forward convention") {
  Rng rng(14);
  for (int rep = 0; rep < 20; ++rep) {
    Grid g = random_grid(16, rng);
    auto s = spectral::fft2(g);
    double lhs = 0.0, rhs = 0.0;
    for (const cplx& v : s.v) lhs += std::norm(v);
    for (double v : g.v) rhs += v * v;
    rhs *= 16.0 * 16.0;
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(rhs));
  }
}

TEST_CASE("fft2 is linear") {
  Rng rng(15);
  Grid x = random_grid(16, rng);
  Grid y = random_grid(16, rng);
  const double a = 1.7, b = -0.4;
  Grid combo(16);
  for (size_t i = 0; i < combo.v.size(); ++i) combo.v[i] = a * x.v[i] + b * y.v[i];
  auto sc = spectral::fft2(combo);
  auto sx = spectral::fft2(x);
  auto sy = spectral::fft2(y);
  double worst = 0.0;
  for (size_t i = 0; i < sc.v.size(); ++i) {
    worst = std::max(worst, std::abs(sc.v[i] - (a * sx.v[i] + b * sy.v[i])));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("convolution theorem") {
  Rng rng(16);
  Grid x = random_grid(16, rng);
  Grid y = random_grid(16, rng);
  auto conv_spec = spectral::fft2(circular_conv(x, y));
  auto sx = spectral::fft2(x);
  auto sy = spectral::fft2(y);
  double worst = 0.0;
  for (size_t i = 0; i < conv_spec.v.size(); ++i) {
    worst = std::max(worst, std::abs(conv_spec.v[i] - sx.v[i] * sy.v[i]));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("fftshift moves the origin to the center and is an involution") {
  Grid g(4);
  g.at(0, 0) = 5.0;
  auto shifted = spectral::fftshift(g);
  CHECK(shifted.at(2, 2) == 5.0);
  CHECK(shifted.at(0, 0) == 0.0);

  Rng rng(17);
  Grid r = random_grid(8, rng);
  auto twice = spectral::fftshift(spectral::fftshift(r));
  CHECK(twice.v == r.v);
}

TEST_CASE("radial bands partition the plane") {
  for (int K : {4, 8}) {
    auto bands = spectral::BandSpec::radial(32, K);
    auto counts = bands.band_counts();
    int total = 0;
    for (int c : counts) {
      CHECK(c > 0);
      total += c;
    }
    CHECK(total == 32 * 32);
  }
}

TEST_CASE("angular bands partition the plane and pair conjugates") {
  auto bands = spectral::BandSpec::angular(32, 8);
  auto counts = bands.band_counts();
  int total = 0;
  for (int c : counts) total += c;
  CHECK(total == 32 * 32);
  for (int u = 0; u < 32; ++u) {
    for (int v = 0; v < 32; ++v) {
      CHECK(bands.band_of(u, v) == bands.band_of((32 - u) % 32, (32 - v) % 32));
    }
  }
}

TEST_CASE("band energies of an all-ones grid are sqrt of the pixel counts") {
  auto bands = spectral::BandSpec::radial(32, 8);
  Grid ones(32, 1.0);
  auto energy = spectral::band_energy(ones, bands);
  auto counts = bands.band_counts();
  int total = 0;
  for (int k = 0; k < 8; ++k) {
    CHECK(energy[k] == doctest::Approx(std::sqrt(double(counts[k]))).epsilon(1e-12));
    total += counts[k];
  }
  CHECK(total == 1024);
}

TEST_CASE("a single pixel at the centered origin lands in radial band 0") {
  auto bands = spectral::BandSpec::radial(32, 8);
  Grid g(32);
  g.at(0, 0) = 3.0;  // unshifted DC = centered origin
  auto energy = spectral::band_energy(g, bands);
  CHECK(energy[0] == doctest::Approx(3.0));
  for (int k = 1; k < 8; ++k) CHECK(energy[k] == 0.0);
}

TEST_CASE("energy on a single wedge stays in that angular band") {
  const int d = 32, K = 8;
  auto bands = spectral::BandSpec::angular(d, K);
  // Paint every index belonging to band 3, then confirm the energy vector.
  Grid g(d);
  int painted = 0;
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      if (bands.band_of(u, v) == 3) {
        g.at(u, v) = 2.0;
        ++painted;
      }
    }
  }
  REQUIRE(painted > 0);
  auto energy = spectral::band_energy(g, bands);
  for (int k = 0; k < K; ++k) {
    if (k == 3) {
      CHECK(energy[k] == doctest::Approx(2.0 * std::sqrt(double(painted))).epsilon(1e-12));
    } else {
      CHECK(energy[k] == 0.0);
    }
  }
}

TEST_CASE("conj_flip composes with itself to the identity") {
  Rng rng(20);
  Grid g = random_grid(8, rng);
  auto back = spectral::conj_flip(spectral::conj_flip(g));
  CHECK(back.v == g.v);
}
