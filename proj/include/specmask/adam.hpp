#pragma once

#include <cstdint>
#include <vector>

#include "specmask/autodiff.hpp"

namespace specmask {

/// Bias-corrected Adam over a fixed list of parameter tensors. Moment buffers
/// are laid out per parameter and must match its shape for the lifetime of
/// the state.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState make(const std::vector<Tensor>& params, double lr);
};

/// One update from params[i].grad(); parameters without a populated grad are
/// treated as zero-gradient. Increments state.t.
void adam_step(std::vector<Tensor>& params, AdamState& state);

/// Per-coordinate effective step sizes lr / (sqrt(v_hat) + denom_floor)
/// after the most recent adam_step; used by the proximal handling of the
/// mask penalty. The floor caps the step where gradients have been silent
/// (v_hat ~ 0), where Adam's own eps would blow it up by orders of
/// magnitude.
std::vector<double> adam_effective_steps(const AdamState& state, size_t param_index,
                                         double denom_floor);

}  // namespace specmask
