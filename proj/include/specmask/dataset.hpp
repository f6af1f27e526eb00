#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "specmask/grid.hpp"

namespace specmask {

constexpr int kImageSide = 32;

/// 32x32 grayscale image with pixels in [0,1] (raw, pre-normalization).
struct LabeledImage {
  Grid pixels;
  int label = 0;
  /// Stable identifier for pairing masks across runs: index into the loaded
  /// source, fixed before the train/val shuffle.
  int id = 0;
};

struct DatasetSplit {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> val;
  int num_classes = 0;
  // Normalization statistics, computed on the training split only.
  double mean = 0.0;
  double stddev = 1.0;
};

enum class AugmentKind { none, adversarial, translate, rotate, scale };

struct AugmentPolicy {
  AugmentKind kind = AugmentKind::none;
  // translate
  int max_offset = 4;
  // rotate (degrees)
  double max_angle = 30.0;
  // scale
  double scale_min = 0.8;
  double scale_max = 1.2;
  // adversarial
  double eps = 0.1;
  double alpha = 0.02;
  int steps = 10;

  /// Canonical one-line form, e.g. "adversarial eps=0.1 alpha=0.02 steps=10";
  /// round-trips through parse().
  std::string describe() const;
  static AugmentPolicy parse(const std::string& s);
};

/// Loads IDX ubyte image/label files (magic 0x00000803 / 0x00000801,
/// big-endian dims). Images smaller than 32x32 are zero-padded symmetrically;
/// pixels are scaled to [0,1]. Labels are filtered to `class_whitelist` (all
/// classes when empty) and remapped to 0..C-1 in whitelist order, keeping at
/// most `cap_per_class` per class (0 = unlimited). The 70/30 train/val split
/// is a seeded shuffle; normalization stats come from the train split only.
DatasetSplit load_idx(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path,
                      const std::vector<int>& class_whitelist, int cap_per_class,
                      uint64_t seed);

/// Synthetic C-class set (C <= 8): class c is an oriented grating at angle
/// c*pi/C with jittered integer frequency and phase, plus a class-specific
/// Gaussian blob, clipped to [0,1]. Split and stats as in load_idx.
DatasetSplit generate_synthetic(int num_classes, int n_per_class, uint64_t seed);

/// Integer-pixel shift; vacated pixels are zero.
Grid translate(const Grid& img, int dx, int dy);

/// Bilinear rotation by theta degrees about the image center; out-of-bounds
/// samples are zero.
Grid rotate(const Grid& img, double theta_deg);

/// Bilinear rescale about the center by factor s (>0), then center-crop/pad
/// back to the original side.
Grid rescale(const Grid& img, double s);

/// Applies the policy's random geometric transform for a given
/// (seed, epoch, index); a pure function of those identifiers. Adversarial
/// and none policies return the input unchanged (adversarial batches are
/// built inside the training loop).
Grid augment_sample(const Grid& img, const AugmentPolicy& policy, uint64_t seed, int epoch,
                    int index);

/// IDX containers with element type double (magic 0x00000E03) and the
/// standard ubyte label type (0x00000801). Used to persist attacked image
/// sets without quantization.
void save_idx_double(const std::filesystem::path& path, const std::vector<Grid>& images);
std::vector<Grid> load_idx_double(const std::filesystem::path& path);
void save_idx_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

}  // namespace specmask
