#include "specmask/train.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "specmask/adam.hpp"
#include "specmask/attack.hpp"

namespace specmask {

double one_cycle_lr(int step, int total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0 || step < 0 || step >= total_steps) {
    throw std::invalid_argument("one_cycle_lr: step " + std::to_string(step) +
                                " outside [0," + std::to_string(total_steps) + ")");
  }
  const int peak = std::max(1, static_cast<int>(std::floor(cfg.peak_fraction * (total_steps - 1))));
  const double lr0 = cfg.max_lr / 25.0;
  if (step <= peak) {
    return lr0 + (cfg.max_lr - lr0) * (static_cast<double>(step) / peak);
  }
  const int tail = total_steps - 1 - peak;
  if (tail <= 0) return 0.0;
  const double t = static_cast<double>(step - peak) / tail;
  return cfg.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

std::vector<Tensor> clone_weights(const std::vector<Tensor>& ws) {
  std::vector<Tensor> out;
  out.reserve(ws.size());
  for (const Tensor& w : ws) out.push_back(Tensor::from(w.data(), w.shape()));
  return out;
}

struct ValScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

ValScore eval_val(const Architecture& arch, const std::vector<Tensor>& params, double mean,
                  double stddev, const std::vector<LabeledImage>& val) {
  Checkpoint view;
  view.arch = arch;
  view.weights = params;
  view.mean = mean;
  view.stddev = stddev;
  std::vector<Grid> xs;
  std::vector<int> ys;
  xs.reserve(val.size());
  for (const LabeledImage& img : val) {
    xs.push_back(img.pixels);
    ys.push_back(img.label);
  }
  const std::vector<double> losses = per_sample_losses(view, xs, ys);
  ValScore score;
  for (double l : losses) score.loss += l;
  score.loss /= static_cast<double>(losses.size());
  score.accuracy = accuracy(view, xs, ys);
  return score;
}

}  // namespace

Checkpoint train(const DatasetSplit& split, const TrainConfig& cfg, TrainLog* log) {
  if (split.train.empty() || split.val.empty()) {
    throw std::invalid_argument("train: dataset split must have train and val samples");
  }
  const Architecture arch = Architecture::small_cnn(split.num_classes, kImageSide);
  Rng init_rng(derive_seed(cfg.seed, 0x1217ull));
  std::vector<Tensor> params = arch.init_params(init_rng);
  for (Tensor& p : params) p.set_requires_grad(true);
  AdamState adam = AdamState::make(params, cfg.max_lr);

  const int n_train = static_cast<int>(split.train.size());
  const int batches_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = cfg.epochs * batches_per_epoch;

  std::vector<Tensor> best_weights = clone_weights(params);
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(n_train));
    for (int i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
    Rng epoch_rng(derive_seed(cfg.seed, 0xE60Cull, static_cast<uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n_train, lo + cfg.batch_size);
      std::vector<Grid> batch;
      std::vector<int> labels;
      batch.reserve(static_cast<size_t>(hi - lo));
      for (int i = lo; i < hi; ++i) {
        const LabeledImage& img = split.train[static_cast<size_t>(order[static_cast<size_t>(i)])];
        batch.push_back(augment_sample(img.pixels, cfg.augment, cfg.seed, epoch,
                                       order[static_cast<size_t>(i)]));
        labels.push_back(img.label);
      }
      if (cfg.augment.kind == AugmentKind::adversarial) {
        PgdParams pgd{cfg.augment.eps, cfg.augment.alpha, cfg.augment.steps};
        batch = pgd_attack_batch(arch, params, split.mean, split.stddev, batch, labels, pgd);
      }

      std::vector<const Grid*> ptrs;
      ptrs.reserve(batch.size());
      for (const Grid& g : batch) ptrs.push_back(&g);
      for (Tensor& p : params) p.zero_grad();
      Tape tape;
      Tensor logits = arch.forward(
          tape, normalize_batch(tape, make_batch(ptrs), split.mean, split.stddev), params);
      Tensor loss = cross_entropy(tape, logits, labels);
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      }
      tape.backward(loss);
      adam.lr = one_cycle_lr(step, total_steps, cfg);
      adam_step(params, adam);
      epoch_loss += loss.item() * static_cast<double>(hi - lo);
      ++step;
    }
    epoch_loss /= static_cast<double>(n_train);

    const ValScore score = eval_val(arch, params, split.mean, split.stddev, split.val);
    if (!std::isfinite(score.loss)) {
      throw std::runtime_error("train: validation loss diverged at epoch " +
                               std::to_string(epoch));
    }
    if (score.loss < best_val_loss) {
      best_val_loss = score.loss;
      best_weights = clone_weights(params);
      best_epoch = epoch;
    }
    if (log) log->epochs.push_back({epoch, epoch_loss, score.loss, score.accuracy});
  }

  Checkpoint ck;
  ck.arch = arch;
  ck.weights = std::move(best_weights);
  ck.augment = cfg.augment;
  ck.seed = cfg.seed;
  ck.best_epoch = best_epoch;
  ck.best_val_loss = best_val_loss;
  ck.mean = split.mean;
  ck.stddev = split.stddev;
  return ck;
}

Checkpoint adversarial_train(const DatasetSplit& split, const TrainConfig& cfg, TrainLog* log) {
  if (cfg.augment.kind != AugmentKind::adversarial) {
    throw std::invalid_argument("adversarial_train: cfg.augment.kind must be adversarial");
  }
  return train(split, cfg, log);
}

}  // namespace specmask
