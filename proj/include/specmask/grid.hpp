#pragma once

#include <cstddef>
#include <vector>

namespace specmask {

/// Square d x d grid of doubles, row-major. Carries images, masks and
/// magnitude spectra throughout the library. Index order is (row, col).
struct Grid {
  int d = 0;
  std::vector<double> v;

  Grid() = default;
  explicit Grid(int side, double fill = 0.0)
      : d(side), v(static_cast<size_t>(side) * side, fill) {}

  double& at(int i, int j) { return v[static_cast<size_t>(i) * d + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * d + j]; }
  size_t size() const { return v.size(); }
};

}  // namespace specmask
