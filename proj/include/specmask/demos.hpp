#pragma once

#include <string>
#include <vector>

namespace specmask::demos {

/// 1-D signal of power-of-two length; sample i sits at t = i/n, so integer
/// frequencies complete whole periods and their DFT bins are exact.
struct Signal1D {
  int n = 0;
  std::vector<double> samples;
};

enum class Nonlinearity { identity, softplus, tanh, relu, hardtanh };

Nonlinearity parse_nonlinearity(const std::string& name);
std::string nonlinearity_name(Nonlinearity nl);

/// One-sided magnitude spectrum |FFT(sigma(sin(2*pi*freq*t)))| over bins
/// 0..n/2. Demonstrates harmonic distortion: nonlinear sigma spreads a pure
/// tone into DC and harmonics.
std::vector<double> nonlinearity_spectrum(int freq, Nonlinearity nl, int n);

struct IntermodReport {
  int n = 0;
  std::vector<int> support_bins;        // 0, 2*w1, 2*w2, w1+w2, |w1-w2|
  std::vector<double> magnitudes;       // one-sided magnitudes at those bins
  std::vector<double> expected;         // analytic values under the
                                        // unnormalized-DFT convention
  double max_off_support = 0.0;
};

/// Squares the two-tone signal cos(w1 t) + cos(w2 t) and checks that its
/// spectrum is supported exactly on the intermodulation/harmonic bins with
/// amplitude ratios 1 : 1/2 : 1/2 : 1 : 1 relative to DC. Integer
/// frequencies keep the support assertion exact. Throws on w1 == w2 or
/// aliasing (w1 + w2 >= n/2).
IntermodReport intermodulation_check(int w1, int w2, int n);

/// Max |FFT(x^k) - (1/n^(k-1)) * (x_hat * ... * x_hat)| with circular
/// convolution of spectra, k in {2,3}. The 1/n^(k-1) factor is forced by the
/// unnormalized-forward convention.
double self_convolution_check(const Signal1D& x, int order);

/// 2a * sinc(2*pi*gamma*a), sinc(z) = sin(z)/z with sinc(0) = 1: the damping
/// factor that averaging translations over [-a, a] applies at frequency
/// gamma.
double sinc_damping_factor(double gamma, double a);

/// Simpson quadrature of the defining integral \int_{-a}^{a} e^{-2 pi i
/// gamma t} dt (real part; the imaginary part vanishes by symmetry).
double sinc_damping_quadrature(double gamma, double a, int intervals = 10000);

/// Damps bin k of a spectrum by the sinc factor at its signed integer
/// frequency.
std::vector<double> translation_damping(const std::vector<double>& q_spectrum, double a);

}  // namespace specmask::demos
