#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace specmask {

/// Dense n-dimensional tensor of 64-bit reals, row-major. Copies share the
/// underlying node, so a Tensor is a cheap handle; leaves keep their grad
/// buffer across tape rebuilds until zero_grad().
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until populated by backward()
    bool requires_grad = false;
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<double> data, std::vector<int> shape);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Value of a one-element tensor; throws otherwise.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode tape: one backward closure per primitive, recorded in
/// execution order (which is a topological order of the graph) and replayed
/// in reverse. A tape is rebuilt per forward pass and never shared between
/// workers.
class Tape {
 public:
  /// Seeds d(loss)/d(loss) = 1 and populates grads of every requires_grad
  /// tensor the loss depends on. Throws if loss is not a single element.
  void backward(const Tensor& loss);

  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }
  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  std::vector<std::function<void()>> records_;
};

// ---- primitives ----------------------------------------------------------
// Each returns a fresh tensor; a backward closure is recorded iff some input
// requires grad (directly or transitively).

Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(Tape& t, const Tensor& a, double s);
Tensor affine(Tape& t, const Tensor& a, double s, double shift);  // a*s + shift
Tensor sum(Tape& t, const Tensor& a);                             // -> shape {1}
Tensor square(Tape& t, const Tensor& a);
Tensor abs(Tape& t, const Tensor& a);   // subgradient 0 at 0
Tensor sqrt(Tape& t, const Tensor& a);  // subgradient 0 at 0
/// exp(min(x, max_exponent)); increments *clamp_events per clamped entry.
Tensor exp_clamped(Tape& t, const Tensor& a, double max_exponent, int* clamp_events = nullptr);
Tensor relu(Tape& t, const Tensor& a);

/// x[N,F] * w[O,F]^T + b[O] -> [N,O]
Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation, stride 1, zero padding: x[N,C,H,W], k[K,C,kh,kw],
/// b[K] -> [N,K,H+2p-kh+1,W+2p-kw+1].
Tensor conv2d(Tape& t, const Tensor& x, const Tensor& k, const Tensor& b, int padding);

/// 2x2 max pooling, stride 2; H and W must be even. Ties take the first
/// maximum in row-major window order.
Tensor maxpool2(Tape& t, const Tensor& x);

/// [N, ...] -> [N, product(rest)]
Tensor flatten(Tape& t, const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label], max-subtraction
/// stabilized. labels[i] must lie in [0, C).
Tensor cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& labels);

/// Per-sample variant: returns shape {N}.
Tensor cross_entropy_per_sample(Tape& t, const Tensor& logits, const std::vector<int>& labels);

/// out[i] = src[index[i]] reshaped to out_shape; backward scatter-adds.
/// Used to expand conjugate-tied mask parameters onto the frequency grid.
Tensor gather(Tape& t, const Tensor& src, const std::vector<int>& index,
              std::vector<int> out_shape);

/// Spectral modulation layer: per sample, out = Re(ifft2(grid ⊙ fft2(x))).
/// grid is [d,d]; images are [N,1,d,d]. Linear in both arguments; backward
/// uses the adjoint transforms.
Tensor spectral_modulate(Tape& t, const Tensor& grid, const Tensor& images);

}  // namespace specmask
