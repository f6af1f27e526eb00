#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "specmask/demos.hpp"
#include "specmask/rng.hpp"

using namespace specmask;
using namespace specmask::demos;

namespace {

constexpr double kPi = std::numbers::pi;

Signal1D random_signal(int n, uint64_t seed) {
  Signal1D s;
  s.n = n;
  s.samples.resize(size_t(n));
  Rng rng(seed);
  for (double& v : s.samples) v = rng.uniform(-1.0, 1.0);
  return s;
}

}  // namespace

TEST_CASE("identity nonlinearity keeps a single spectral peak") {
  const auto mags = nonlinearity_spectrum(8, Nonlinearity::identity, 256);
  REQUIRE(mags.size() == 129);
  const double fundamental = mags[8];
  CHECK(fundamental == doctest::Approx(128.0).epsilon(1e-9));  // n/2 for amplitude 1
  for (size_t k = 0; k < mags.size(); ++k) {
    if (k != 8) CHECK(mags[k] < 1e-9 * fundamental);
  }
}

TEST_CASE("ReLU generates DC and a second harmonic per the half-wave Fourier series") {
  // Half-wave rectified sine: DC a0 = 1/pi, fundamental 1/2, second
  // harmonic 2/(3 pi); under the unnormalized DFT a cosine amplitude a shows
  // up as n*a/2, DC as n*a0. Sampling folds the 1/k^2 harmonic tail back
  // onto the comb, so the sampled bins sit within ~2% of the series values.
  const int n = 256, f = 8;
  const auto mags = nonlinearity_spectrum(f, Nonlinearity::relu, n);
  const double dc = mags[0];
  const double fund = mags[size_t(f)];
  const double second = mags[size_t(2 * f)];
  CHECK(dc == doctest::Approx(n / kPi).epsilon(0.02));
  CHECK(fund == doctest::Approx(n / 4.0).epsilon(0.02));
  CHECK(second == doctest::Approx(n / (3.0 * kPi)).epsilon(0.02));
  CHECK(dc > 0.01 * fund);
  CHECK(second > 0.01 * fund);
}

TEST_CASE("tanh (odd) kills even harmonics and produces odd ones") {
  const int n = 256, f = 8;
  const auto mags = nonlinearity_spectrum(f, Nonlinearity::tanh, n);
  const double fund = mags[size_t(f)];
  CHECK(mags[16] < 1e-9 * fund);  // 2f
  CHECK(mags[32] < 1e-9 * fund);  // 4f
  CHECK(mags[24] > 1e-6 * fund);  // 3f
  CHECK(mags[40] > 1e-9 * fund);  // 5f
}

TEST_CASE("every nonlinear activation spreads energy beyond the fundamental") {
  for (Nonlinearity nl :
       {Nonlinearity::softplus, Nonlinearity::tanh, Nonlinearity::relu, Nonlinearity::hardtanh}) {
    const auto mags = nonlinearity_spectrum(8, nl, 256);
    double off = 0.0;
    for (size_t k = 0; k < mags.size(); ++k) {
      if (k != 8) off = std::max(off, mags[k]);
    }
    CHECK(off > 0.0);
  }
}

TEST_CASE("nonlinearity_spectrum validates its inputs") {
  CHECK_THROWS_AS(nonlinearity_spectrum(8, Nonlinearity::relu, 100), std::invalid_argument);
  CHECK_THROWS_AS(nonlinearity_spectrum(0, Nonlinearity::relu, 256), std::invalid_argument);
  CHECK_THROWS_AS(nonlinearity_spectrum(128, Nonlinearity::relu, 256), std::invalid_argument);
  CHECK_THROWS_AS(parse_nonlinearity("swish"), std::invalid_argument);
}

TEST_CASE("intermodulation: derived magnitudes at (0, 2w1, 2w2, w1+w2, |w1-w2|)") {
  const IntermodReport rep = intermodulation_check(5, 3, 256);
  CHECK(rep.support_bins == std::vector<int>{0, 10, 6, 8, 2});
  const std::vector<double> expected = {256.0, 64.0, 64.0, 128.0, 128.0};
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(rep.magnitudes[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(rep.expected[i] == expected[i]);
  }
  CHECK(rep.max_off_support < 1e-9);
}

TEST_CASE("intermodulation is symmetric in (w1, w2) and rejects bad inputs") {
  const IntermodReport a = intermodulation_check(5, 3, 256);
  const IntermodReport b = intermodulation_check(3, 5, 256);
  // Same support set (order differs with the roles of w1/w2).
  CHECK(a.magnitudes[0] == b.magnitudes[0]);
  CHECK(a.magnitudes[3] == b.magnitudes[3]);
  CHECK(a.magnitudes[4] == b.magnitudes[4]);
  CHECK(a.magnitudes[1] == b.magnitudes[2]);
  CHECK(a.magnitudes[2] == b.magnitudes[1]);

  CHECK_THROWS_AS(intermodulation_check(5, 5, 256), std::invalid_argument);
  CHECK_THROWS_WITH_AS(intermodulation_check(100, 30, 256), doctest::Contains("aliasing"),
                       std::invalid_argument);
}

TEST_CASE("self-convolution identity holds for random signals and the delta") {
  for (int n : {32, 64}) {
    const Signal1D x = random_signal(n, uint64_t(n));
    CHECK(self_convolution_check(x, 2) < 1e-9);
    CHECK(self_convolution_check(x, 3) < 1e-8);
  }
  Signal1D delta;
  delta.n = 64;
  delta.samples.assign(64, 0.0);
  delta.samples[0] = 1.0;
  CHECK(self_convolution_check(delta, 2) < 1e-12);
  CHECK(self_convolution_check(delta, 3) < 1e-12);
  Signal1D bad = delta;
  CHECK_THROWS_AS(self_convolution_check(bad, 4), std::invalid_argument);
}

TEST_CASE("sinc damping factor: value at 0, first zero, quadrature agreement") {
  const double a = 1.0;
  CHECK(sinc_damping_factor(0.0, a) == 2.0 * a);
  CHECK(std::abs(sinc_damping_factor(1.0 / (2.0 * a), a)) < 1e-15);
  for (double gamma : {0.0, 0.1, 0.7, 1.3, 2.0}) {
    CHECK(std::abs(sinc_damping_factor(gamma, a) - sinc_damping_quadrature(gamma, a)) < 1e-8);
  }
  // |factor| peaks at gamma = 0: the low-frequency bias as a property of the
  // multiplier.
  const double peak = std::abs(sinc_damping_factor(0.0, a));
  for (double gamma = 0.05; gamma < 3.0; gamma += 0.05) {
    CHECK(std::abs(sinc_damping_factor(gamma, a)) < peak);
  }
}

TEST_CASE("translation_damping scales bins by the sinc factor at signed frequencies") {
  std::vector<double> q(8, 1.0);
  const double a = 0.25;
  const auto damped = translation_damping(q, a);
  CHECK(damped[0] == 2.0 * a);
  CHECK(damped[1] == doctest::Approx(sinc_damping_factor(1.0, a)));
  CHECK(damped[7] == doctest::Approx(sinc_damping_factor(-1.0, a)));  // bin 7 = freq -1
  CHECK(damped[1] == doctest::Approx(damped[7]));                     // sinc is even
}
