#pragma once

#include <string>
#include <vector>

#include "specmask/autodiff.hpp"
#include "specmask/rng.hpp"

namespace specmask {

/// Layer descriptor for the small frozen classifiers. The descriptor string
/// round-trips exactly through parse()/descriptor().
struct LayerSpec {
  enum class Kind { conv, relu, maxpool2, flatten, linear };
  Kind kind = Kind::relu;
  // conv
  int in_ch = 0, out_ch = 0, ksize = 0, pad = 0;
  // linear
  int in_features = 0, out_features = 0;
};

struct Architecture {
  std::vector<LayerSpec> layers;

  /// conv(1,8,3,1) relu maxpool2 conv(8,16,3,1) relu maxpool2 flatten
  /// linear(16*(side/4)^2, classes)
  static Architecture small_cnn(int num_classes, int side = 32);
  /// Reduced stack for gradient-oracle tests on tiny inputs:
  /// conv(1,4,3,1) relu maxpool2 flatten linear(4*(side/2)^2, classes).
  static Architecture tiny_cnn(int num_classes, int side);

  std::string descriptor() const;
  static Architecture parse(const std::string& descriptor);

  /// Parameter tensor shapes in forward order (conv: kernel then bias;
  /// linear: weight then bias).
  std::vector<std::vector<int>> param_shapes() const;
  int64_t param_count() const;
  int num_classes() const;

  /// He-normal weights, zero biases; draw order is fixed by the descriptor.
  std::vector<Tensor> init_params(Rng& rng) const;

  /// Forward pass over a [N,1,H,W] batch; params must match param_shapes().
  Tensor forward(Tape& tape, const Tensor& images, const std::vector<Tensor>& params) const;
};

}  // namespace specmask
