#include "specmask/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "specmask/spectral.hpp"

namespace specmask {

namespace {

using NodePtr = std::shared_ptr<Tensor::Node>;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

NodePtr make_node(std::vector<int> shape, std::vector<double> data) {
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  return n;
}

/// Gradient buffer of a node, zero-initialized on first touch.
std::vector<double>& grad_buf(const NodePtr& n) {
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
  const int64_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0)));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  const int64_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), value)));
}

Tensor Tensor::from(std::vector<double> data, std::vector<int> shape) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor::from: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return from({v}, {1}); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw std::runtime_error("Tensor::grad: no gradient populated");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(numel()) +
                                " elements, expected 1");
  }
  return node_->data[0];
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  grad_buf(loss.node())[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// ---- elementwise ----------------------------------------------------------

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad() || b.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), yn = y.node();
    t.record([an, bn, yn] {
      const auto& gy = grad_buf(yn);
      if (an->requires_grad) {
        auto& ga = grad_buf(an);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_buf(bn);
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad() || b.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), yn = y.node();
    t.record([an, bn, yn] {
      const auto& gy = grad_buf(yn);
      if (an->requires_grad) {
        auto& ga = grad_buf(an);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_buf(bn);
        for (size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad() || b.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), yn = y.node();
    t.record([an, bn, yn] {
      const auto& gy = grad_buf(yn);
      if (an->requires_grad) {
        auto& ga = grad_buf(an);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& gb = grad_buf(bn);
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * an->data[i];
      }
    });
  }
  return y;
}

Tensor scale(Tape& t, const Tensor& a, double s) { return affine(t, a, s, 0.0); }

Tensor affine(Tape& t, const Tensor& a, double s, double shift) {
  std::vector<double> out(a.data());
  for (double& x : out) x = x * s + shift;
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn, s] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * s;
    });
  }
  return y;
}

Tensor sum(Tape& t, const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  Tensor y = Tensor::scalar(acc);
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn] {
      const double g = grad_buf(yn)[0];
      auto& ga = grad_buf(an);
      for (double& x : ga) x += g;
    });
  }
  return y;
}

Tensor square(Tape& t, const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& x : out) x *= x;
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * 2.0 * an->data[i];
    });
  }
  return y;
}

Tensor abs(Tape& t, const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& x : out) x = std::abs(x);
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) {
        const double x = an->data[i];
        ga[i] += gy[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
      }
    });
  }
  return y;
}

Tensor sqrt(Tape& t, const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& x : out) x = std::sqrt(x);
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) {
        const double r = yn->data[i];
        if (r > 0.0) ga[i] += gy[i] * 0.5 / r;
      }
    });
  }
  return y;
}

Tensor exp_clamped(Tape& t, const Tensor& a, double max_exponent, int* clamp_events) {
  std::vector<double> out(a.data());
  std::vector<char> clamped(out.size(), 0);
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] > max_exponent) {
      out[i] = max_exponent;
      clamped[i] = 1;
      if (clamp_events) ++*clamp_events;
    }
    out[i] = std::exp(out[i]);
  }
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn, clamped = std::move(clamped)] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) {
        if (!clamped[i]) ga[i] += gy[i] * yn->data[i];
      }
    });
  }
  return y;
}

Tensor relu(Tape& t, const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& x : out) x = x > 0.0 ? x : 0.0;
  Tensor y(make_node(a.shape(), std::move(out)));
  if (a.requires_grad()) {
    y.set_requires_grad(true);
    auto an = a.node(), yn = y.node();
    t.record([an, yn] {
      const auto& gy = grad_buf(yn);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < gy.size(); ++i) {
        if (an->data[i] > 0.0) ga[i] += gy[i];
      }
    });
  }
  return y;
}

// ---- linear ---------------------------------------------------------------

Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1) {
    throw std::invalid_argument("linear: expected x[N,F], w[O,F], b[O]");
  }
  const int N = x.shape()[0], F = x.shape()[1];
  const int O = w.shape()[0];
  if (w.shape()[1] != F || b.shape()[0] != O) {
    throw std::invalid_argument("linear: shape mismatch x" + shape_str(x.shape()) + " w" +
                                shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(N) * O);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = b.data().data();
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      double acc = bd[o];
      const double* xr = xd + static_cast<size_t>(n) * F;
      const double* wr = wd + static_cast<size_t>(o) * F;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      out[static_cast<size_t>(n) * O + o] = acc;
    }
  }
  Tensor y(make_node({N, O}, std::move(out)));
  if (x.requires_grad() || w.requires_grad() || b.requires_grad()) {
    y.set_requires_grad(true);
    auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
    t.record([xn, wn, bn, yn, N, F, O] {
      const auto& gy = grad_buf(yn);
      if (xn->requires_grad) {
        auto& gx = grad_buf(xn);
        for (int n = 0; n < N; ++n) {
          for (int o = 0; o < O; ++o) {
            const double g = gy[static_cast<size_t>(n) * O + o];
            const double* wr = wn->data.data() + static_cast<size_t>(o) * F;
            double* gxr = gx.data() + static_cast<size_t>(n) * F;
            for (int f = 0; f < F; ++f) gxr[f] += g * wr[f];
          }
        }
      }
      if (wn->requires_grad) {
        auto& gw = grad_buf(wn);
        for (int n = 0; n < N; ++n) {
          for (int o = 0; o < O; ++o) {
            const double g = gy[static_cast<size_t>(n) * O + o];
            const double* xr = xn->data.data() + static_cast<size_t>(n) * F;
            double* gwr = gw.data() + static_cast<size_t>(o) * F;
            for (int f = 0; f < F; ++f) gwr[f] += g * xr[f];
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = grad_buf(bn);
        for (int n = 0; n < N; ++n) {
          for (int o = 0; o < O; ++o) gb[o] += gy[static_cast<size_t>(n) * O + o];
        }
      }
    });
  }
  return y;
}

// ---- conv2d ----------------------------------------------------------------

Tensor conv2d(Tape& t, const Tensor& x, const Tensor& k, const Tensor& b, int padding) {
  if (x.shape().size() != 4 || k.shape().size() != 4 || b.shape().size() != 1) {
    throw std::invalid_argument("conv2d: expected x[N,C,H,W], k[K,C,kh,kw], b[K]");
  }
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int K = k.shape()[0], KC = k.shape()[1], KH = k.shape()[2], KW = k.shape()[3];
  if (KC != C) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(C) +
                                " do not match kernel channels " + std::to_string(KC));
  }
  if (b.shape()[0] != K) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(b.shape()[0]) +
                                " does not match kernel count " + std::to_string(K));
  }
  if (KH > H + 2 * padding || KW > W + 2 * padding) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(KH) + "x" +
                                std::to_string(KW) + " exceeds padded input " +
                                std::to_string(H + 2 * padding) + "x" +
                                std::to_string(W + 2 * padding));
  }
  const int Ho = H + 2 * padding - KH + 1;
  const int Wo = W + 2 * padding - KW + 1;

  std::vector<double> out(static_cast<size_t>(N) * K * Ho * Wo);
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  const double* bd = b.data().data();
  for (int n = 0; n < N; ++n) {
    for (int kk = 0; kk < K; ++kk) {
      double* yplane = out.data() + (static_cast<size_t>(n) * K + kk) * Ho * Wo;
      for (int i = 0; i < Ho * Wo; ++i) yplane[i] = bd[kk];
      for (int c = 0; c < C; ++c) {
        const double* xplane = xd + (static_cast<size_t>(n) * C + c) * H * W;
        for (int r = 0; r < KH; ++r) {
          for (int s = 0; s < KW; ++s) {
            const double wv = kd[((static_cast<size_t>(kk) * C + c) * KH + r) * KW + s];
            if (wv == 0.0) continue;
            const int oh0 = std::max(0, padding - r);
            const int oh1 = std::min(Ho, H + padding - r);
            const int ow0 = std::max(0, padding - s);
            const int ow1 = std::min(Wo, W + padding - s);
            for (int oh = oh0; oh < oh1; ++oh) {
              const double* xrow = xplane + static_cast<size_t>(oh + r - padding) * W;
              double* yrow = yplane + static_cast<size_t>(oh) * Wo;
              for (int ow = ow0; ow < ow1; ++ow) yrow[ow] += wv * xrow[ow + s - padding];
            }
          }
        }
      }
    }
  }
  Tensor y(make_node({N, K, Ho, Wo}, std::move(out)));
  if (x.requires_grad() || k.requires_grad() || b.requires_grad()) {
    y.set_requires_grad(true);
    auto xn = x.node(), kn = k.node(), bn = b.node(), yn = y.node();
    t.record([xn, kn, bn, yn, N, C, H, W, K, KH, KW, Ho, Wo, padding] {
      const auto& gy = grad_buf(yn);
      if (bn->requires_grad) {
        auto& gb = grad_buf(bn);
        for (int n = 0; n < N; ++n) {
          for (int kk = 0; kk < K; ++kk) {
            const double* gplane = gy.data() + (static_cast<size_t>(n) * K + kk) * Ho * Wo;
            double acc = 0.0;
            for (int i = 0; i < Ho * Wo; ++i) acc += gplane[i];
            gb[kk] += acc;
          }
        }
      }
      if (kn->requires_grad) {
        auto& gk = grad_buf(kn);
        for (int n = 0; n < N; ++n) {
          for (int kk = 0; kk < K; ++kk) {
            const double* gplane = gy.data() + (static_cast<size_t>(n) * K + kk) * Ho * Wo;
            for (int c = 0; c < C; ++c) {
              const double* xplane = xn->data.data() + (static_cast<size_t>(n) * C + c) * H * W;
              for (int r = 0; r < KH; ++r) {
                for (int s = 0; s < KW; ++s) {
                  const int oh0 = std::max(0, padding - r);
                  const int oh1 = std::min(Ho, H + padding - r);
                  const int ow0 = std::max(0, padding - s);
                  const int ow1 = std::min(Wo, W + padding - s);
                  double acc = 0.0;
                  for (int oh = oh0; oh < oh1; ++oh) {
                    const double* xrow = xplane + static_cast<size_t>(oh + r - padding) * W;
                    const double* grow = gplane + static_cast<size_t>(oh) * Wo;
                    for (int ow = ow0; ow < ow1; ++ow) acc += grow[ow] * xrow[ow + s - padding];
                  }
                  gk[((static_cast<size_t>(kk) * C + c) * KH + r) * KW + s] += acc;
                }
              }
            }
          }
        }
      }
      if (xn->requires_grad) {
        auto& gx = grad_buf(xn);
        for (int n = 0; n < N; ++n) {
          for (int kk = 0; kk < K; ++kk) {
            const double* gplane = gy.data() + (static_cast<size_t>(n) * K + kk) * Ho * Wo;
            for (int c = 0; c < C; ++c) {
              double* gxplane = gx.data() + (static_cast<size_t>(n) * C + c) * H * W;
              for (int r = 0; r < KH; ++r) {
                for (int s = 0; s < KW; ++s) {
                  const double wv =
                      kn->data[((static_cast<size_t>(kk) * C + c) * KH + r) * KW + s];
                  if (wv == 0.0) continue;
                  const int oh0 = std::max(0, padding - r);
                  const int oh1 = std::min(Ho, H + padding - r);
                  const int ow0 = std::max(0, padding - s);
                  const int ow1 = std::min(Wo, W + padding - s);
                  for (int oh = oh0; oh < oh1; ++oh) {
                    double* gxrow = gxplane + static_cast<size_t>(oh + r - padding) * W;
                    const double* grow = gplane + static_cast<size_t>(oh) * Wo;
                    for (int ow = ow0; ow < ow1; ++ow) gxrow[ow + s - padding] += wv * grow[ow];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---- pooling / reshape ------------------------------------------------------

Tensor maxpool2(Tape& t, const Tensor& x) {
  if (x.shape().size() != 4) throw std::invalid_argument("maxpool2: expected x[N,C,H,W]");
  const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 != 0 || W % 2 != 0) {
    throw std::invalid_argument("maxpool2: H and W must be even, got " + std::to_string(H) +
                                "x" + std::to_string(W));
  }
  const int Ho = H / 2, Wo = W / 2;
  std::vector<double> out(static_cast<size_t>(N) * C * Ho * Wo);
  std::vector<int32_t> argmax(out.size());
  const double* xd = x.data().data();
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* xplane = xd + (static_cast<size_t>(n) * C + c) * H * W;
      double* yplane = out.data() + (static_cast<size_t>(n) * C + c) * Ho * Wo;
      int32_t* aplane = argmax.data() + (static_cast<size_t>(n) * C + c) * Ho * Wo;
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          int best = (2 * oh) * W + 2 * ow;
          double bv = xplane[best];
          const int cand[3] = {(2 * oh) * W + 2 * ow + 1, (2 * oh + 1) * W + 2 * ow,
                               (2 * oh + 1) * W + 2 * ow + 1};
          for (int idx : cand) {
            if (xplane[idx] > bv) {
              bv = xplane[idx];
              best = idx;
            }
          }
          yplane[static_cast<size_t>(oh) * Wo + ow] = bv;
          aplane[static_cast<size_t>(oh) * Wo + ow] = best;
        }
      }
    }
  }
  Tensor y(make_node({N, C, Ho, Wo}, std::move(out)));
  if (x.requires_grad()) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    t.record([xn, yn, N, C, H, W, Ho, Wo, argmax = std::move(argmax)] {
      const auto& gy = grad_buf(yn);
      auto& gx = grad_buf(xn);
      for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
          const size_t ybase = (static_cast<size_t>(n) * C + c) * Ho * Wo;
          const size_t xbase = (static_cast<size_t>(n) * C + c) * H * W;
          for (int i = 0; i < Ho * Wo; ++i) {
            gx[xbase + static_cast<size_t>(argmax[ybase + i])] += gy[ybase + i];
          }
        }
      }
    });
  }
  return y;
}

Tensor flatten(Tape& t, const Tensor& x) {
  if (x.shape().empty()) throw std::invalid_argument("flatten: expected a batched tensor");
  const int N = x.shape()[0];
  const int rest = static_cast<int>(x.numel() / N);
  Tensor y(make_node({N, rest}, x.data()));
  if (x.requires_grad()) {
    y.set_requires_grad(true);
    auto xn = x.node(), yn = y.node();
    t.record([xn, yn] {
      const auto& gy = grad_buf(yn);
      auto& gx = grad_buf(xn);
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

// ---- losses -----------------------------------------------------------------

namespace {

/// Shared softmax cross-entropy forward; fills probs (N*C) and losses (N).
void softmax_ce(const Tensor& logits, const std::vector<int>& labels,
                std::vector<double>& probs, std::vector<double>& losses) {
  if (logits.shape().size() != 2) throw std::invalid_argument("cross_entropy: logits must be [N,C]");
  const int N = logits.shape()[0], C = logits.shape()[1];
  if (static_cast<int>(labels.size()) != N) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(N));
  }
  probs.resize(static_cast<size_t>(N) * C);
  losses.resize(static_cast<size_t>(N));
  const double* z = logits.data().data();
  for (int n = 0; n < N; ++n) {
    if (labels[n] < 0 || labels[n] >= C) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[n]) +
                                  " out of range [0," + std::to_string(C) + ")");
    }
    const double* zr = z + static_cast<size_t>(n) * C;
    double m = zr[0];
    for (int c = 1; c < C; ++c) m = std::max(m, zr[c]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(zr[c] - m);
    const double log_denom = std::log(denom);
    for (int c = 0; c < C; ++c) {
      probs[static_cast<size_t>(n) * C + c] = std::exp(zr[c] - m) / denom;
    }
    losses[static_cast<size_t>(n)] = log_denom - (zr[labels[n]] - m);
  }
}

}  // namespace

Tensor cross_entropy_per_sample(Tape& t, const Tensor& logits, const std::vector<int>& labels) {
  std::vector<double> probs, losses;
  softmax_ce(logits, labels, probs, losses);
  const int N = logits.shape()[0], C = logits.shape()[1];
  Tensor y(make_node({N}, std::move(losses)));
  if (logits.requires_grad()) {
    y.set_requires_grad(true);
    auto zn = logits.node(), yn = y.node();
    t.record([zn, yn, labels, probs = std::move(probs), N, C] {
      const auto& gy = grad_buf(yn);
      auto& gz = grad_buf(zn);
      for (int n = 0; n < N; ++n) {
        const double g = gy[static_cast<size_t>(n)];
        for (int c = 0; c < C; ++c) {
          const double p = probs[static_cast<size_t>(n) * C + c];
          gz[static_cast<size_t>(n) * C + c] += g * (p - (c == labels[n] ? 1.0 : 0.0));
        }
      }
    });
  }
  return y;
}

Tensor cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& labels) {
  Tensor per = cross_entropy_per_sample(t, logits, labels);
  return scale(t, sum(t, per), 1.0 / static_cast<double>(logits.shape()[0]));
}

// ---- gather / spectral modulation --------------------------------------------

Tensor gather(Tape& t, const Tensor& src, const std::vector<int>& index,
              std::vector<int> out_shape) {
  const int64_t n_out = [&] {
    int64_t n = 1;
    for (int e : out_shape) n *= e;
    return n;
  }();
  if (n_out != static_cast<int64_t>(index.size())) {
    throw std::invalid_argument("gather: index length does not match output shape");
  }
  std::vector<double> out(index.size());
  for (size_t i = 0; i < index.size(); ++i) out[i] = src.data()[static_cast<size_t>(index[i])];
  Tensor y(make_node(std::move(out_shape), std::move(out)));
  if (src.requires_grad()) {
    y.set_requires_grad(true);
    auto sn = src.node(), yn = y.node();
    t.record([sn, yn, index] {
      const auto& gy = grad_buf(yn);
      auto& gs = grad_buf(sn);
      for (size_t i = 0; i < index.size(); ++i) gs[static_cast<size_t>(index[i])] += gy[i];
    });
  }
  return y;
}

Tensor spectral_modulate(Tape& t, const Tensor& grid, const Tensor& images) {
  if (grid.shape().size() != 2 || grid.shape()[0] != grid.shape()[1]) {
    throw std::invalid_argument("spectral_modulate: grid must be square [d,d]");
  }
  const int d = grid.shape()[0];
  if (images.shape().size() != 4 || images.shape()[1] != 1 || images.shape()[2] != d ||
      images.shape()[3] != d) {
    throw std::invalid_argument("spectral_modulate: images must be [N,1," + std::to_string(d) +
                                "," + std::to_string(d) + "], got " + shape_str(images.shape()));
  }
  const int N = images.shape()[0];
  const size_t plane = static_cast<size_t>(d) * d;

  // Cache the input spectra: the backward pass w.r.t. the grid needs them.
  auto spectra = std::make_shared<std::vector<spectral::Spectrum>>();
  spectra->reserve(static_cast<size_t>(N));
  std::vector<double> out(static_cast<size_t>(N) * plane);
  for (int n = 0; n < N; ++n) {
    Grid x(d);
    std::copy_n(images.data().begin() + static_cast<size_t>(n) * plane, plane, x.v.begin());
    spectral::Spectrum X = spectral::fft2(x);
    spectral::Spectrum S(d);
    for (size_t i = 0; i < plane; ++i) S.v[i] = X.v[i] * grid.data()[i];
    const Grid xb = spectral::ifft2(S).real;
    std::copy_n(xb.v.begin(), plane, out.begin() + static_cast<size_t>(n) * plane);
    spectra->push_back(std::move(X));
  }
  Tensor y(make_node({N, 1, d, d}, std::move(out)));
  if (grid.requires_grad() || images.requires_grad()) {
    y.set_requires_grad(true);
    auto gn = grid.node(), in = images.node(), yn = y.node();
    t.record([gn, in, yn, spectra, N, d, plane] {
      const auto& gy = grad_buf(yn);
      const double inv_d2 = 1.0 / static_cast<double>(plane);
      for (int n = 0; n < N; ++n) {
        Grid g(d);
        std::copy_n(gy.begin() + static_cast<size_t>(n) * plane, plane, g.v.begin());
        const spectral::Spectrum Gh = spectral::fft2(g);
        if (gn->requires_grad) {
          // d out / d grid(u,v) via the adjoint: (1/d^2) Re(X(u,v) conj(Gh(u,v))).
          auto& gg = grad_buf(gn);
          const spectral::Spectrum& X = (*spectra)[static_cast<size_t>(n)];
          for (size_t i = 0; i < plane; ++i) {
            gg[i] += inv_d2 * (X.v[i] * std::conj(Gh.v[i])).real();
          }
        }
        if (in->requires_grad) {
          // Adjoint of the modulation w.r.t. the image flips the grid
          // through the origin: gx = Re(ifft2(flip(grid) ⊙ fft2(g))).
          spectral::Spectrum S(d);
          for (int u = 0; u < d; ++u) {
            for (int v = 0; v < d; ++v) {
              const double m = gn->data[static_cast<size_t>((d - u) % d) * d + (d - v) % d];
              S.at(u, v) = Gh.at(u, v) * m;
            }
          }
          const Grid gx = spectral::ifft2(S).real;
          auto& gi = grad_buf(in);
          for (size_t i = 0; i < plane; ++i) gi[static_cast<size_t>(n) * plane + i] += gx.v[i];
        }
      }
    });
  }
  return y;
}

}  // namespace specmask
