#pragma once

#include <cstdint>
#include <vector>

#include "specmask/checkpoint.hpp"
#include "specmask/dataset.hpp"

namespace specmask {

struct TrainConfig {
  int epochs = 50;
  double max_lr = 1e-3;
  double peak_fraction = 0.3;
  int batch_size = 32;
  uint64_t seed = 0;
  AugmentPolicy augment;
};

/// One-cycle schedule over step indices [0, total): linear warmup from
/// max_lr/25 to max_lr at the peak step, then cosine annealing to exactly 0
/// at the final step. A pure function of (step, total, cfg).
double one_cycle_lr(int step, int total_steps, const TrainConfig& cfg);

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochStat> epochs;
};

/// Trains the small CNN under cfg.augment, evaluating the validation loss
/// after every epoch and returning the weights of the minimum-val-loss epoch.
/// Deterministic given cfg.seed. Throws on divergence (non-finite loss),
/// naming the epoch.
Checkpoint train(const DatasetSplit& split, const TrainConfig& cfg, TrainLog* log = nullptr);

/// train() with cfg.augment.kind == adversarial: every minibatch is replaced
/// by its PGD perturbation against the current weights before the step.
Checkpoint adversarial_train(const DatasetSplit& split, const TrainConfig& cfg,
                             TrainLog* log = nullptr);

}  // namespace specmask
