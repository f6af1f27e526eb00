#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "specmask/grid.hpp"

namespace specmask::spectral {

using cplx = std::complex<double>;

bool is_pow2(size_t n);

/// Complex d x d spectrum, row-major, unshifted frequency indices
/// (u,v) in [0,d)^2. Spectra of real images are Hermitian-symmetric:
/// S(u,v) = conj(S((-u) mod d, (-v) mod d)).
struct Spectrum {
  int d = 0;
  std::vector<cplx> v;

  Spectrum() = default;
  explicit Spectrum(int side) : d(side), v(static_cast<size_t>(side) * side) {}

  cplx& at(int u, int w) { return v[static_cast<size_t>(u) * d + w]; }
  cplx at(int u, int w) const { return v[static_cast<size_t>(u) * d + w]; }
};

/// In-place radix-2 Cooley-Tukey transform. Forward is unnormalized; the
/// inverse divides by n, so fft(fft(x, fwd), inv) == x. Throws
/// std::invalid_argument when the length is not a power of two.
void fft(std::vector<cplx>& xs, bool inverse);

/// Unnormalized forward 2-D DFT of a real grid (rows then columns). With this
/// convention Parseval reads sum |X|^2 = d^2 * sum |x|^2.
Spectrum fft2(const Grid& x);

struct InverseImage {
  Grid real;
  double max_imag_residue = 0.0;
};

/// Inverse 2-D DFT with 1/d^2 normalization. Returns the real part and the
/// largest |imaginary| component discarded (near zero for Hermitian input).
InverseImage ifft2(const Spectrum& s);

/// Quadrant swap moving index (0,0) to (d/2, d/2); self-inverse for even d.
Grid fftshift(const Grid& g);

Grid magnitude(const Spectrum& s);

/// Max |S(u,v) - conj(S(-u,-v))| over the grid; ~0 for spectra of real images.
double hermitian_asymmetry(const Spectrum& s);

/// Grid flipped through the frequency origin: out(u,v) = in((-u) mod d, (-v) mod d).
Grid conj_flip(const Grid& g);

enum class BandKind { radial, angular };

/// Partition of the d x d frequency plane into K radial annuli or angular
/// wedges. Membership is indexed by unshifted (u,v); radius and angle are
/// measured from the centered origin (fftshift coordinates). Radial band k
/// covers radii [k*r_nyq/K, (k+1)*r_nyq/K) with r_nyq = d/2; indices at or
/// beyond the last edge (grid corners) fall into band K-1. Angular band k
/// covers angles [k*pi/K, (k+1)*pi/K) with the angle taken mod pi, so
/// conjugate pairs share a band.
struct BandSpec {
  BandKind kind = BandKind::radial;
  int K = 0;
  int d = 0;
  std::vector<int> membership;  // (u,v) -> band index

  static BandSpec radial(int d, int K);
  static BandSpec angular(int d, int K);

  int band_of(int u, int v) const { return membership[static_cast<size_t>(u) * d + v]; }
  /// Nominal [lo, hi) radius or angle range of band k.
  std::pair<double, double> band_range(int k) const;
  std::vector<int> band_counts() const;
};

/// Per-band l2 norms of the grid entries (mask values or spectrum magnitudes).
std::vector<double> band_energy(const Grid& values, const BandSpec& bands);

}  // namespace specmask::spectral
