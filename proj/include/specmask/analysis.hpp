#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specmask/grid.hpp"
#include "specmask/mask.hpp"
#include "specmask/spectral.hpp"

namespace specmask {

struct MaskSetEntry {
  Mask mask;
  std::string image_id;  // decimal id or "global"
  int label = -1;
  std::string tag;  // N, A, S, T or R
};

using MaskSet = std::vector<MaskSetEntry>;

/// fftshift(a - b): the centered difference grid used for the side-by-side
/// mask comparisons.
Grid mask_diff_centered(const Mask& a, const Mask& b);

/// Per-band l2 energy of m_i minus that of m_n.
std::vector<double> energy_difference(const Mask& m_i, const Mask& m_n,
                                      const spectral::BandSpec& bands);

/// Pairs the two sets by image id and reports, per band, the fraction of
/// pairs whose band energy in set_a strictly exceeds that in set_b (ties do
/// not count). Throws, listing the ids, when the sets do not pair up.
std::vector<double> exceed_fraction(const MaskSet& set_a, const MaskSet& set_b,
                                    const spectral::BandSpec& bands);

struct ProbeResult {
  double accuracy = 0.0;               // held-out 20% split
  double train_accuracy = 0.0;
  std::vector<double> per_class;       // held-out accuracy per class
  int iterations = 0;
};

/// Multinomial logistic regression on flattened masks: seeded 80/20 split,
/// full-batch gradient descent to convergence, l2 weight 1e-4. With
/// shuffle_labels the labels are permuted by the seed before splitting.
ProbeResult linear_probe(const MaskSet& masks, bool shuffle_labels, uint64_t seed);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int label = -1;
};

/// Top-2 principal components (power iteration on the covariance, seeded
/// start vectors) of the probe's class-score vectors, one point per mask.
std::vector<ScatterPoint> pca_scatter(const MaskSet& masks, uint64_t seed);

}  // namespace specmask
