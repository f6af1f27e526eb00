#pragma once

#include <vector>

#include "specmask/checkpoint.hpp"

namespace specmask {

struct PgdParams {
  double eps = 0.1;
  double alpha = 0.02;
  int steps = 10;
};

/// Stacks raw [0,1] images into a [N,1,d,d] batch tensor.
Tensor make_batch(const std::vector<const Grid*>& images);

/// (x - mean) / std as a taped op.
Tensor normalize_batch(Tape& tape, const Tensor& batch, double mean, double stddev);

/// Projected gradient descent in raw pixel space: repeated
/// x <- clip_[0,1]( proj_{|x - x0|_inf <= eps}( x + alpha * sign(grad) ) ).
/// Normalization is applied inside the forward pass only, so eps stays
/// interpretable in [0,1] units. eps = 0 returns the inputs bit-exactly.
std::vector<Grid> pgd_attack_batch(const Architecture& arch, const std::vector<Tensor>& weights,
                                   double mean, double stddev, const std::vector<Grid>& xs,
                                   const std::vector<int>& ys, const PgdParams& params);

std::vector<Grid> pgd_attack(const Checkpoint& ck, const std::vector<Grid>& xs,
                             const std::vector<int>& ys, const PgdParams& params);

/// Argmax predictions on raw [0,1] images (normalized internally); ties take
/// the lowest class index.
std::vector<int> predict(const Checkpoint& ck, const std::vector<Grid>& xs);

double accuracy(const Checkpoint& ck, const std::vector<Grid>& xs, const std::vector<int>& ys);

/// Per-sample cross-entropy losses of the frozen model on raw inputs.
std::vector<double> per_sample_losses(const Checkpoint& ck, const std::vector<Grid>& xs,
                                      const std::vector<int>& ys);

}  // namespace specmask
