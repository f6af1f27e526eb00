#include "specmask/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace specmask::spectral {

namespace {

constexpr double kPi = std::numbers::pi;

/// Twiddle table for size n: e^{-2*pi*i*k/n} for k in [0, n/2). Tables are
/// cached per size; map nodes are address-stable so returned references stay
/// valid under concurrent lookups.
const std::vector<cplx>& twiddles(size_t n) {
  static std::map<size_t, std::vector<cplx>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<cplx> t(n / 2);
    for (size_t k = 0; k < n / 2; ++k) {
      t[k] = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n));
    }
    it = cache.emplace(n, std::move(t)).first;
  }
  return it->second;
}

}  // namespace

bool is_pow2(size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  if (!is_pow2(n)) {
    throw std::invalid_argument("fft: length must be a power of two, got " + std::to_string(n));
  }
  if (n == 1) return;

  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j |= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const std::vector<cplx>& tw = twiddles(n);
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t stride = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t k = 0; k < len / 2; ++k) {
        cplx w = tw[k * stride];
        if (inverse) w = std::conj(w);
        const cplx u = a[i + k];
        const cplx t = a[i + k + len / 2] * w;
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (cplx& x : a) x *= inv_n;
  }
}

namespace {

void fft2_axes(std::vector<cplx>& v, int d, bool inverse) {
  std::vector<cplx> line(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) line[j] = v[static_cast<size_t>(i) * d + j];
    fft(line, inverse);
    for (int j = 0; j < d; ++j) v[static_cast<size_t>(i) * d + j] = line[j];
  }
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) line[i] = v[static_cast<size_t>(i) * d + j];
    fft(line, inverse);
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i) * d + j] = line[i];
  }
}

}  // namespace

Spectrum fft2(const Grid& x) {
  if (!is_pow2(static_cast<size_t>(x.d))) {
    throw std::invalid_argument("fft2: grid side must be a power of two, got " +
                                std::to_string(x.d));
  }
  Spectrum s(x.d);
  for (size_t i = 0; i < x.v.size(); ++i) s.v[i] = cplx(x.v[i], 0.0);
  fft2_axes(s.v, x.d, /*inverse=*/false);
  return s;
}

InverseImage ifft2(const Spectrum& s) {
  std::vector<cplx> v = s.v;
  fft2_axes(v, s.d, /*inverse=*/true);
  InverseImage out;
  out.real = Grid(s.d);
  for (size_t i = 0; i < v.size(); ++i) {
    out.real.v[i] = v[i].real();
    out.max_imag_residue = std::max(out.max_imag_residue, std::abs(v[i].imag()));
  }
  return out;
}

Grid fftshift(const Grid& g) {
  if (g.d % 2 != 0) {
    throw std::invalid_argument("fftshift: side must be even, got " + std::to_string(g.d));
  }
  const int d = g.d, h = g.d / 2;
  Grid out(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      out.at(i, j) = g.at((i + h) % d, (j + h) % d);
    }
  }
  return out;
}

Grid magnitude(const Spectrum& s) {
  Grid out(s.d);
  for (size_t i = 0; i < s.v.size(); ++i) out.v[i] = std::abs(s.v[i]);
  return out;
}

double hermitian_asymmetry(const Spectrum& s) {
  const int d = s.d;
  double worst = 0.0;
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      const cplx a = s.at(u, v);
      const cplx b = std::conj(s.at((d - u) % d, (d - v) % d));
      worst = std::max(worst, std::abs(a - b));
    }
  }
  return worst;
}

Grid conj_flip(const Grid& g) {
  const int d = g.d;
  Grid out(d);
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      out.at(u, v) = g.at((d - u) % d, (d - v) % d);
    }
  }
  return out;
}

namespace {

// Signed frequency of an unshifted index: the centered coordinate the index
// lands on after fftshift, in [-d/2, d/2).
int signed_freq(int u, int d) { return (u + d / 2) % d - d / 2; }

BandSpec make_bands(BandKind kind, int d, int K) {
  if (K <= 0) throw std::invalid_argument("BandSpec: K must be positive");
  if (d <= 0 || d % 2 != 0) {
    throw std::invalid_argument("BandSpec: side must be positive and even, got " +
                                std::to_string(d));
  }
  BandSpec b;
  b.kind = kind;
  b.K = K;
  b.d = d;
  b.membership.resize(static_cast<size_t>(d) * d);
  const double r_nyq = d / 2.0;
  // Bands are computed on the lexicographically smaller member of each
  // conjugate pair and assigned to both. This pins down the angle of the
  // Nyquist row/column, whose signed frequency is ambiguous (+d/2 == -d/2),
  // so that conjugate pairs always share a band.
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      const int pu = (d - u) % d, pv = (d - v) % d;
      if (std::pair(pu, pv) < std::pair(u, v)) {
        b.membership[static_cast<size_t>(u) * d + v] =
            b.membership[static_cast<size_t>(pu) * d + pv];
        continue;
      }
      const double fu = signed_freq(u, d);
      const double fv = signed_freq(v, d);
      int k;
      if (kind == BandKind::radial) {
        const double r = std::hypot(fu, fv);
        k = std::min(K - 1, static_cast<int>(std::floor(r * K / r_nyq)));
      } else {
        // fu is the vertical (row) frequency, fv the horizontal one; the
        // angle is taken mod pi so conjugate pairs coincide.
        double ang = (fu == 0.0 && fv == 0.0) ? 0.0 : std::atan2(fu, fv);
        if (ang < 0.0) ang += kPi;
        if (ang >= kPi) ang -= kPi;
        k = std::min(K - 1, static_cast<int>(std::floor(ang * K / kPi)));
      }
      b.membership[static_cast<size_t>(u) * d + v] = k;
    }
  }
  return b;
}

}  // namespace

BandSpec BandSpec::radial(int d, int K) { return make_bands(BandKind::radial, d, K); }

BandSpec BandSpec::angular(int d, int K) { return make_bands(BandKind::angular, d, K); }

std::pair<double, double> BandSpec::band_range(int k) const {
  if (kind == BandKind::radial) {
    const double step = (d / 2.0) / K;
    return {k * step, (k + 1) * step};
  }
  const double step = kPi / K;
  return {k * step, (k + 1) * step};
}

std::vector<int> BandSpec::band_counts() const {
  std::vector<int> counts(static_cast<size_t>(K), 0);
  for (int m : membership) counts[static_cast<size_t>(m)]++;
  return counts;
}

std::vector<double> band_energy(const Grid& values, const BandSpec& bands) {
  if (values.d != bands.d) {
    throw std::invalid_argument("band_energy: grid side " + std::to_string(values.d) +
                                " != band side " + std::to_string(bands.d));
  }
  std::vector<double> acc(static_cast<size_t>(bands.K), 0.0);
  for (size_t i = 0; i < values.v.size(); ++i) {
    acc[static_cast<size_t>(bands.membership[i])] += values.v[i] * values.v[i];
  }
  for (double& e : acc) e = std::sqrt(e);
  return acc;
}

}  // namespace specmask::spectral
