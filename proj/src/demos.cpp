#include "specmask/demos.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "specmask/spectral.hpp"

namespace specmask::demos {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<spectral::cplx> to_complex(const std::vector<double>& xs) {
  std::vector<spectral::cplx> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out[i] = spectral::cplx(xs[i], 0.0);
  return out;
}

std::vector<double> one_sided_magnitudes(const std::vector<spectral::cplx>& spec) {
  const size_t n = spec.size();
  std::vector<double> mags(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) mags[k] = std::abs(spec[k]);
  return mags;
}

double apply_nl(Nonlinearity nl, double x) {
  switch (nl) {
    case Nonlinearity::identity: return x;
    case Nonlinearity::softplus: return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
    case Nonlinearity::tanh: return std::tanh(x);
    case Nonlinearity::relu: return x > 0.0 ? x : 0.0;
    case Nonlinearity::hardtanh: return std::clamp(x, -1.0, 1.0);
  }
  return x;
}

}  // namespace

Nonlinearity parse_nonlinearity(const std::string& name) {
  if (name == "identity") return Nonlinearity::identity;
  if (name == "softplus") return Nonlinearity::softplus;
  if (name == "tanh") return Nonlinearity::tanh;
  if (name == "relu") return Nonlinearity::relu;
  if (name == "hardtanh") return Nonlinearity::hardtanh;
  throw std::invalid_argument("unknown nonlinearity: " + name);
}

std::string nonlinearity_name(Nonlinearity nl) {
  switch (nl) {
    case Nonlinearity::identity: return "identity";
    case Nonlinearity::softplus: return "softplus";
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::hardtanh: return "hardtanh";
  }
  return "identity";
}

std::vector<double> nonlinearity_spectrum(int freq, Nonlinearity nl, int n) {
  if (!spectral::is_pow2(static_cast<size_t>(n))) {
    throw std::invalid_argument("nonlinearity_spectrum: n must be a power of two");
  }
  if (freq <= 0 || freq >= n / 2) {
    throw std::invalid_argument("nonlinearity_spectrum: freq must lie in (0, n/2)");
  }
  std::vector<double> samples(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / n;
    samples[static_cast<size_t>(i)] = apply_nl(nl, std::sin(2.0 * kPi * freq * t));
  }
  std::vector<spectral::cplx> spec = to_complex(samples);
  spectral::fft(spec, /*inverse=*/false);
  return one_sided_magnitudes(spec);
}

IntermodReport intermodulation_check(int w1, int w2, int n) {
  if (!spectral::is_pow2(static_cast<size_t>(n))) {
    throw std::invalid_argument("intermodulation_check: n must be a power of two");
  }
  if (w1 == w2) throw std::invalid_argument("intermodulation_check: w1 and w2 must differ");
  if (w1 <= 0 || w2 <= 0) throw std::invalid_argument("intermodulation_check: frequencies must be positive");
  if (w1 + w2 >= n / 2) {
    throw std::invalid_argument("intermodulation_check: aliasing, w1+w2 must stay below n/2");
  }

  std::vector<double> f(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * kPi * static_cast<double>(i) / n;
    const double v = std::cos(w1 * t) + std::cos(w2 * t);
    f[static_cast<size_t>(i)] = v * v;  // sigma(t) = t^2
  }
  std::vector<spectral::cplx> spec = to_complex(f);
  spectral::fft(spec, /*inverse=*/false);
  const std::vector<double> mags = one_sided_magnitudes(spec);

  IntermodReport report;
  report.n = n;
  report.support_bins = {0, 2 * w1, 2 * w2, w1 + w2, std::abs(w1 - w2)};
  // f^2 = 1 + cos(2 w1 t)/2 + cos(2 w2 t)/2 + cos((w1+w2) t) + cos((w1-w2) t):
  // a DC amplitude a contributes n*a, a cosine amplitude a contributes n*a/2.
  report.expected = {static_cast<double>(n), n / 4.0, n / 4.0, n / 2.0, n / 2.0};
  report.magnitudes.reserve(report.support_bins.size());
  for (int bin : report.support_bins) {
    report.magnitudes.push_back(mags[static_cast<size_t>(bin)]);
  }
  for (size_t k = 0; k < mags.size(); ++k) {
    bool on_support = false;
    for (int bin : report.support_bins) {
      if (static_cast<size_t>(bin) == k) on_support = true;
    }
    if (!on_support) report.max_off_support = std::max(report.max_off_support, mags[k]);
  }
  return report;
}

double self_convolution_check(const Signal1D& x, int order) {
  if (order != 2 && order != 3) {
    throw std::invalid_argument("self_convolution_check: order must be 2 or 3");
  }
  if (!spectral::is_pow2(static_cast<size_t>(x.n)) ||
      x.samples.size() != static_cast<size_t>(x.n)) {
    throw std::invalid_argument("self_convolution_check: bad signal length");
  }
  const int n = x.n;

  // LHS: spectrum of the pointwise power.
  std::vector<double> powed(x.samples);
  for (double& v : powed) v = order == 2 ? v * v : v * v * v;
  std::vector<spectral::cplx> lhs = to_complex(powed);
  spectral::fft(lhs, /*inverse=*/false);

  // RHS: repeated circular self-convolution of the spectrum, scaled by
  // 1/n^(order-1). The convolution is evaluated directly (O(n^2) per pass)
  // so the check does not lean on the transform it is validating.
  std::vector<spectral::cplx> xhat = to_complex(x.samples);
  spectral::fft(xhat, /*inverse=*/false);
  std::vector<spectral::cplx> rhs = xhat;
  for (int pass = 1; pass < order; ++pass) {
    std::vector<spectral::cplx> next(static_cast<size_t>(n));
    for (int m = 0; m < n; ++m) {
      spectral::cplx acc(0.0, 0.0);
      for (int j = 0; j < n; ++j) {
        acc += rhs[static_cast<size_t>(j)] * xhat[static_cast<size_t>((m - j + n) % n)];
      }
      next[static_cast<size_t>(m)] = acc;
    }
    rhs = std::move(next);
  }
  const double scale = std::pow(static_cast<double>(n), static_cast<double>(order - 1));
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    worst = std::max(worst,
                     std::abs(lhs[static_cast<size_t>(k)] - rhs[static_cast<size_t>(k)] / scale));
  }
  return worst;
}

double sinc_damping_factor(double gamma, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("sinc_damping_factor: a must be positive");
  const double z = 2.0 * kPi * gamma * a;
  if (z == 0.0) return 2.0 * a;
  return 2.0 * a * std::sin(z) / z;
}

double sinc_damping_quadrature(double gamma, double a, int intervals) {
  if (!(a > 0.0)) throw std::invalid_argument("sinc_damping_quadrature: a must be positive");
  if (intervals < 2) throw std::invalid_argument("sinc_damping_quadrature: need >= 2 intervals");
  if (intervals % 2 != 0) ++intervals;  // Simpson needs an even count
  const double h = 2.0 * a / intervals;
  auto integrand = [&](double t) { return std::cos(2.0 * kPi * gamma * t); };
  double acc = integrand(-a) + integrand(a);
  for (int i = 1; i < intervals; ++i) {
    acc += integrand(-a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

std::vector<double> translation_damping(const std::vector<double>& q_spectrum, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("translation_damping: a must be positive");
  const int n = static_cast<int>(q_spectrum.size());
  std::vector<double> out(q_spectrum.size());
  for (int k = 0; k < n; ++k) {
    const int gamma = k <= n / 2 ? k : k - n;  // signed integer frequency
    out[static_cast<size_t>(k)] = q_spectrum[static_cast<size_t>(k)] *
                                  sinc_damping_factor(static_cast<double>(gamma), a);
  }
  return out;
}

}  // namespace specmask::demos
