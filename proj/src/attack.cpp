#include "specmask/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace specmask {

Tensor make_batch(const std::vector<const Grid*>& images) {
  if (images.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int d = images[0]->d;
  const size_t plane = static_cast<size_t>(d) * d;
  std::vector<double> data;
  data.reserve(images.size() * plane);
  for (const Grid* g : images) {
    if (g->d != d) throw std::invalid_argument("make_batch: mixed image sides");
    data.insert(data.end(), g->v.begin(), g->v.end());
  }
  return Tensor::from(std::move(data), {static_cast<int>(images.size()), 1, d, d});
}

Tensor normalize_batch(Tape& tape, const Tensor& batch, double mean, double stddev) {
  return affine(tape, batch, 1.0 / stddev, -mean / stddev);
}

std::vector<Grid> pgd_attack_batch(const Architecture& arch, const std::vector<Tensor>& weights,
                                   double mean, double stddev, const std::vector<Grid>& xs,
                                   const std::vector<int>& ys, const PgdParams& params) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("pgd_attack: " + std::to_string(xs.size()) + " images vs " +
                                std::to_string(ys.size()) + " labels");
  }
  if (params.eps < 0.0 || params.alpha < 0.0) {
    throw std::invalid_argument("pgd_attack: eps and alpha must be >= 0");
  }
  std::vector<Grid> adv = xs;
  if (xs.empty() || params.steps <= 0) return adv;

  // The attack differentiates w.r.t. the input only; keep frozen weights from
  // accumulating gradients while we iterate. Handles share the node, so the
  // flag can be toggled through copies and restored on scope exit.
  struct FreezeGuard {
    std::vector<Tensor> handles;
    std::vector<bool> flags;
    explicit FreezeGuard(const std::vector<Tensor>& ws) {
      for (const Tensor& w : ws) {
        handles.push_back(w);
        flags.push_back(w.requires_grad());
        handles.back().set_requires_grad(false);
      }
    }
    ~FreezeGuard() {
      for (size_t i = 0; i < handles.size(); ++i) handles[i].set_requires_grad(flags[i]);
    }
  } guard(weights);

  const int d = xs[0].d;
  const size_t plane = static_cast<size_t>(d) * d;
  for (int step = 0; step < params.steps; ++step) {
    std::vector<const Grid*> ptrs;
    ptrs.reserve(adv.size());
    for (const Grid& g : adv) ptrs.push_back(&g);
    Tensor batch = make_batch(ptrs);
    batch.set_requires_grad(true);
    Tape tape;
    Tensor logits = arch.forward(tape, normalize_batch(tape, batch, mean, stddev), weights);
    Tensor loss = cross_entropy(tape, logits, ys);
    tape.backward(loss);
    const std::vector<double>& g = batch.grad();
    for (size_t n = 0; n < adv.size(); ++n) {
      for (size_t i = 0; i < plane; ++i) {
        const double gi = g[n * plane + i];
        const double sgn = gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0);
        const double x0 = xs[n].v[i];
        double x = adv[n].v[i] + params.alpha * sgn;
        x = std::clamp(x, x0 - params.eps, x0 + params.eps);
        adv[n].v[i] = std::clamp(x, 0.0, 1.0);
      }
    }
  }
  return adv;
}

std::vector<Grid> pgd_attack(const Checkpoint& ck, const std::vector<Grid>& xs,
                             const std::vector<int>& ys, const PgdParams& params) {
  return pgd_attack_batch(ck.arch, ck.weights, ck.mean, ck.stddev, xs, ys, params);
}

namespace {

constexpr size_t kEvalBatch = 64;

}  // namespace

std::vector<int> predict(const Checkpoint& ck, const std::vector<Grid>& xs) {
  std::vector<int> preds;
  preds.reserve(xs.size());
  const int C = ck.arch.num_classes();
  for (size_t start = 0; start < xs.size(); start += kEvalBatch) {
    const size_t end = std::min(xs.size(), start + kEvalBatch);
    std::vector<const Grid*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&xs[i]);
    Tape tape;
    Tensor logits =
        ck.arch.forward(tape, normalize_batch(tape, make_batch(ptrs), ck.mean, ck.stddev),
                        ck.weights);
    for (size_t n = 0; n < ptrs.size(); ++n) {
      int best = 0;
      for (int c = 1; c < C; ++c) {
        if (logits.data()[n * C + c] > logits.data()[n * C + best]) best = c;
      }
      preds.push_back(best);
    }
  }
  return preds;
}

double accuracy(const Checkpoint& ck, const std::vector<Grid>& xs, const std::vector<int>& ys) {
  if (xs.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
  const std::vector<int> preds = predict(ck, xs);
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == ys[i]) ++hits;
  }
  return double(hits) / double(preds.size());
}

std::vector<double> per_sample_losses(const Checkpoint& ck, const std::vector<Grid>& xs,
                                      const std::vector<int>& ys) {
  std::vector<double> losses;
  losses.reserve(xs.size());
  for (size_t start = 0; start < xs.size(); start += kEvalBatch) {
    const size_t end = std::min(xs.size(), start + kEvalBatch);
    std::vector<const Grid*> ptrs;
    std::vector<int> labels;
    for (size_t i = start; i < end; ++i) {
      ptrs.push_back(&xs[i]);
      labels.push_back(ys[i]);
    }
    Tape tape;
    Tensor logits =
        ck.arch.forward(tape, normalize_batch(tape, make_batch(ptrs), ck.mean, ck.stddev),
                        ck.weights);
    Tensor per = cross_entropy_per_sample(tape, logits, labels);
    losses.insert(losses.end(), per.data().begin(), per.data().end());
  }
  return losses;
}

}  // namespace specmask
