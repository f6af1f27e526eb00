#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "specmask/dataset.hpp"
#include "specmask/model.hpp"

namespace specmask {

/// Frozen classifier: architecture, trained weights and the metadata needed
/// to reproduce and reuse the run (augment policy, seed, best epoch/loss and
/// the normalization stats of its training split).
struct Checkpoint {
  Architecture arch;
  std::vector<Tensor> weights;
  AugmentPolicy augment;
  uint64_t seed = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double mean = 0.0;
  double stddev = 1.0;

  /// SMCK container: magic "SMCK", version byte, length-prefixed architecture
  /// descriptor, little-endian float64 weights in parameter order, trailing
  /// key=value metadata block. save/load/save is byte-identical.
  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace specmask
