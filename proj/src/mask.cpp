#include "specmask/mask.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "specmask/adam.hpp"
#include "specmask/fsio.hpp"
#include "specmask/rng.hpp"
#include "specmask/spectral.hpp"

namespace specmask {

bool Mask::is_conjugate_tied() const {
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      if (at(u, v) != at((d - u) % d, (d - v) % d)) return false;
    }
  }
  return true;
}

double Mask::norm_l1() const {
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s;
}

double Mask::norm_l2() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

ConjugateTying ConjugateTying::make(int d) {
  ConjugateTying t;
  t.d = d;
  t.cell_to_param.assign(static_cast<size_t>(d) * d, -1);
  for (int u = 0; u < d; ++u) {
    for (int v = 0; v < d; ++v) {
      const int idx = u * d + v;
      if (t.cell_to_param[static_cast<size_t>(idx)] >= 0) continue;
      const int pidx = ((d - u) % d) * d + (d - v) % d;
      const int p = t.param_count++;
      t.cell_to_param[static_cast<size_t>(idx)] = p;
      t.param_to_cell.push_back(idx);
      if (pidx == idx) {
        t.param_multiplicity.push_back(1);
      } else {
        t.cell_to_param[static_cast<size_t>(pidx)] = p;
        t.param_multiplicity.push_back(2);
      }
    }
  }
  return t;
}

std::vector<double> ConjugateTying::collapse(const Mask& m) const {
  std::vector<double> params(static_cast<size_t>(param_count));
  for (int p = 0; p < param_count; ++p) {
    params[static_cast<size_t>(p)] = m.values[static_cast<size_t>(param_to_cell[p])];
  }
  return params;
}

Mask ConjugateTying::expand(const std::vector<double>& params) const {
  Mask m(d);
  for (size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = params[static_cast<size_t>(cell_to_param[i])];
  }
  return m;
}

Grid mask_apply(const Grid& x, const Mask& m) {
  if (x.d != m.d) {
    throw std::invalid_argument("mask_apply: image side " + std::to_string(x.d) +
                                " != mask side " + std::to_string(m.d));
  }
  spectral::Spectrum s = spectral::fft2(x);
  for (size_t i = 0; i < s.v.size(); ++i) s.v[i] *= m.values[i];
  return spectral::ifft2(s).real;
}

Mask complementary_mask(const Mask& m) {
  Mask out(m.d);
  for (size_t i = 0; i < m.values.size(); ++i) {
    out.values[i] = m.values[i] < 1e-8 ? 1.0 : 0.0;
  }
  return out;
}

// ---- internal evaluation helpers --------------------------------------------

namespace {

constexpr size_t kEvalBatch = 64;

Grid normalize_grid(const Grid& x, double mean, double stddev) {
  Grid out(x.d);
  for (size_t i = 0; i < x.v.size(); ++i) out.v[i] = (x.v[i] - mean) / stddev;
  return out;
}

/// Forward pass on images that are already normalized (and possibly
/// mask-filtered); returns logits data for the batch.
Tensor forward_prenormalized(const Checkpoint& ck, const std::vector<const Grid*>& imgs) {
  Tape tape;
  return ck.arch.forward(tape, make_batch(imgs), ck.weights);
}

std::vector<double> prenorm_per_sample_losses(const Checkpoint& ck, const std::vector<Grid>& xs,
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
    Tensor logits = ck.arch.forward(tape, make_batch(ptrs), ck.weights);
    Tensor per = cross_entropy_per_sample(tape, logits, labels);
    losses.insert(losses.end(), per.data().begin(), per.data().end());
  }
  return losses;
}

double mask_norm(const Mask& m, int p) {
  return p == 1 ? m.norm_l1() : m.norm_l2();
}

/// Full objective on prenormalized inputs with precomputed baselines.
MaskObjectiveBreakdown objective_eval_prenorm(const Checkpoint& ck, const Mask& m,
                                              const std::vector<Grid>& xs_norm,
                                              const std::vector<int>& ys,
                                              const std::vector<double>& baseline,
                                              const MaskLearnConfig& cfg) {
  MaskObjectiveBreakdown out;
  for (size_t start = 0; start < xs_norm.size(); start += kEvalBatch) {
    const size_t end = std::min(xs_norm.size(), start + kEvalBatch);
    std::vector<Grid> filtered;
    std::vector<const Grid*> ptrs;
    std::vector<int> labels;
    filtered.reserve(end - start);
    for (size_t i = start; i < end; ++i) {
      filtered.push_back(mask_apply(xs_norm[i], m));
      labels.push_back(ys[i]);
    }
    for (const Grid& g : filtered) ptrs.push_back(&g);
    Tape tape;
    Tensor logits = ck.arch.forward(tape, make_batch(ptrs), ck.weights);
    Tensor per = cross_entropy_per_sample(tape, logits, labels);
    for (size_t i = start; i < end; ++i) {
      const double diff = per.data()[i - start] - baseline[i];
      double e = diff * diff;
      if (e > cfg.exp_clamp) {
        e = cfg.exp_clamp;
        ++out.clamp_events;
      }
      out.invariance += std::exp(e);
    }
  }
  out.penalty = cfg.lambda * mask_norm(m, cfg.p);
  out.total = out.invariance + out.penalty;
  return out;
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

MaskObjectiveBreakdown mask_objective(const Checkpoint& ck, const Mask& m,
                                      const std::vector<Grid>& xs_raw,
                                      const std::vector<int>& ys, const MaskLearnConfig& cfg) {
  if (xs_raw.empty()) throw std::invalid_argument("mask_objective: empty batch");
  std::vector<Grid> xs_norm;
  xs_norm.reserve(xs_raw.size());
  for (const Grid& x : xs_raw) xs_norm.push_back(normalize_grid(x, ck.mean, ck.stddev));
  const std::vector<double> baseline = prenorm_per_sample_losses(ck, xs_norm, ys);
  return objective_eval_prenorm(ck, m, xs_norm, ys, baseline, cfg);
}

double mask_objective_theta(const Checkpoint& ck, const ConjugateTying& tying,
                            const std::vector<double>& theta, const std::vector<Grid>& xs_raw,
                            const std::vector<int>& ys, const MaskLearnConfig& cfg,
                            std::vector<double>* grad_out) {
  const int d = tying.d;
  std::vector<Grid> xs_norm;
  xs_norm.reserve(xs_raw.size());
  for (const Grid& x : xs_raw) xs_norm.push_back(normalize_grid(x, ck.mean, ck.stddev));
  const std::vector<double> baseline = prenorm_per_sample_losses(ck, xs_norm, ys);

  Tensor th = Tensor::from(theta, {tying.param_count});
  th.set_requires_grad(grad_out != nullptr);
  std::vector<const Grid*> ptrs;
  for (const Grid& g : xs_norm) ptrs.push_back(&g);
  Tape tape;
  Tensor grid = gather(tape, th, tying.cell_to_param, {d, d});
  Tensor xbar = spectral_modulate(tape, grid, make_batch(ptrs));
  Tensor logits = ck.arch.forward(tape, xbar, ck.weights);
  Tensor per = cross_entropy_per_sample(tape, logits, ys);
  Tensor diff = sub(tape, per, Tensor::from(baseline, {static_cast<int>(baseline.size())}));
  Tensor inv = sum(tape, exp_clamped(tape, square(tape, diff), cfg.exp_clamp));
  Tensor penalty = cfg.p == 1 ? scale(tape, sum(tape, abs(tape, grid)), cfg.lambda)
                              : scale(tape, sqrt(tape, sum(tape, square(tape, grid))), cfg.lambda);
  Tensor total = add(tape, inv, penalty);
  if (grad_out) {
    tape.backward(total);
    *grad_out = th.grad();
  }
  return total.item();
}

namespace {

MaskLearnResult learn_mask_core(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                                const std::vector<int>& ys, const MaskLearnConfig& cfg) {
  if (xs_raw.empty()) throw std::invalid_argument("learn_mask: empty sample set");
  if (cfg.p != 1 && cfg.p != 2) throw std::invalid_argument("learn_mask: p must be 1 or 2");
  if (cfg.lambda < 0.0) throw std::invalid_argument("learn_mask: lambda must be >= 0");
  const int d = xs_raw[0].d;
  const ConjugateTying tying = ConjugateTying::make(d);

  std::vector<Grid> xs_norm;
  xs_norm.reserve(xs_raw.size());
  for (const Grid& x : xs_raw) xs_norm.push_back(normalize_grid(x, ck.mean, ck.stddev));
  const std::vector<double> baseline = prenorm_per_sample_losses(ck, xs_norm, ys);

  Tensor theta = Tensor::full({tying.param_count}, 1.0);
  theta.set_requires_grad(true);
  std::vector<Tensor> params{theta};
  AdamState adam = AdamState::make(params, cfg.lr);

  const int n = static_cast<int>(xs_norm.size());
  const int batch_size = std::min(cfg.batch_size, n);
  // When every iteration already sees the whole set, evaluate every step.
  const int eval_every = n <= cfg.batch_size ? 1 : std::max(1, cfg.eval_every);

  MaskLearnResult res;
  auto evaluate = [&](const std::vector<double>& th) {
    MaskObjectiveBreakdown br =
        objective_eval_prenorm(ck, tying.expand(th), xs_norm, ys, baseline, cfg);
    res.clamp_events += br.clamp_events;
    return br;
  };

  const MaskObjectiveBreakdown init = evaluate(theta.data());
  res.trace.push_back({0, init.total, init.invariance, init.penalty});
  double best_obj = init.total;
  std::vector<double> best_theta = theta.data();
  int last_improve_iter = 0;

  Rng batch_rng(derive_seed(cfg.seed, 0xBA7C4ull));
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  int cursor = n;  // forces a shuffle before the first batch

  int iter = 0;
  while (iter < cfg.max_iters) {
    ++iter;
    if (cursor >= n) {
      if (n > 1) batch_rng.shuffle(order);
      cursor = 0;
    }
    const int lo = cursor;
    const int hi = std::min(n, lo + batch_size);
    cursor = hi;

    std::vector<const Grid*> ptrs;
    std::vector<int> labels;
    std::vector<double> base;
    for (int i = lo; i < hi; ++i) {
      const int idx = order[static_cast<size_t>(i)];
      ptrs.push_back(&xs_norm[static_cast<size_t>(idx)]);
      labels.push_back(ys[static_cast<size_t>(idx)]);
      base.push_back(baseline[static_cast<size_t>(idx)]);
    }

    theta.zero_grad();
    Tape tape;
    Tensor grid = gather(tape, theta, tying.cell_to_param, {d, d});
    Tensor xbar = spectral_modulate(tape, grid, make_batch(ptrs));
    Tensor logits = ck.arch.forward(tape, xbar, ck.weights);
    Tensor per = cross_entropy_per_sample(tape, logits, labels);
    Tensor diff = sub(tape, per, Tensor::from(base, {static_cast<int>(base.size())}));
    Tensor inv =
        sum(tape, exp_clamped(tape, square(tape, diff), cfg.exp_clamp, &res.clamp_events));
    // The l1 penalty is handled proximally after the Adam step; the l2 norm
    // is smooth enough to differentiate directly.
    Tensor objective = inv;
    if (cfg.p == 2 && cfg.lambda > 0.0) {
      objective =
          add(tape, inv, scale(tape, sqrt(tape, sum(tape, square(tape, grid))), cfg.lambda));
    }
    tape.backward(objective);
    adam_step(params, adam);
    if (cfg.p == 1 && cfg.lambda > 0.0) {
      const std::vector<double> steps = adam_effective_steps(adam, 0, cfg.prox_floor);
      auto& th = theta.mutable_data();
      for (size_t i = 0; i < th.size(); ++i) {
        th[i] = soft_threshold(
            th[i], steps[i] * cfg.lambda * tying.param_multiplicity[i]);
      }
    }
    for (double v : theta.data()) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("learn_mask: non-finite mask parameters at iteration " +
                                 std::to_string(iter));
      }
    }

    if (iter % eval_every == 0 || iter == cfg.max_iters) {
      const MaskObjectiveBreakdown br = evaluate(theta.data());
      if (!std::isfinite(br.total)) {
        throw std::runtime_error("learn_mask: non-finite objective at iteration " +
                                 std::to_string(iter));
      }
      res.trace.push_back({iter, br.total, br.invariance, br.penalty});
      if (br.total < best_obj - cfg.tol) last_improve_iter = iter;
      if (br.total < best_obj) {
        best_obj = br.total;
        best_theta = theta.data();
      }
      if (iter - last_improve_iter >= cfg.patience) {
        res.converged = true;
        break;
      }
    }
  }

  res.iterations = iter;
  res.best_objective = best_obj;
  res.mask = tying.expand(best_theta);
  if (!res.mask.is_conjugate_tied()) {
    throw std::logic_error("learn_mask: conjugate tying violated");
  }
  return res;
}

}  // namespace

MaskLearnResult learn_mask_global(const Checkpoint& ck, const std::vector<LabeledImage>& val,
                                  const MaskLearnConfig& cfg) {
  std::vector<Grid> xs;
  std::vector<int> ys;
  xs.reserve(val.size());
  for (const LabeledImage& img : val) {
    xs.push_back(img.pixels);
    ys.push_back(img.label);
  }
  return learn_mask_core(ck, xs, ys, cfg);
}

std::optional<MaskLearnResult> learn_mask_single(const Checkpoint& ck, const Grid& x_raw, int y,
                                                 const MaskLearnConfig& cfg) {
  const std::vector<int> pred = predict(ck, {x_raw});
  if (pred[0] != y) return std::nullopt;  // only correctly classified inputs
  return learn_mask_core(ck, {x_raw}, {y}, cfg);
}

std::vector<SingleMaskJob> learn_masks_for_images(const Checkpoint& ck,
                                                  const std::vector<LabeledImage>& images,
                                                  const MaskLearnConfig& cfg, int workers) {
  std::vector<SingleMaskJob> jobs(images.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= images.size()) return;
      const LabeledImage& img = images[i];
      MaskLearnConfig job_cfg = cfg;
      job_cfg.seed = derive_seed(cfg.seed, static_cast<uint64_t>(img.id));
      SingleMaskJob& job = jobs[i];
      job.image_id = img.id;
      job.label = img.label;
      std::optional<MaskLearnResult> r = learn_mask_single(ck, img.pixels, img.label, job_cfg);
      if (r) {
        job.result = std::move(*r);
      } else {
        job.skipped = true;
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(images.size())));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
  }
  return jobs;
}

std::vector<int> predict_masked(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                                const Mask& m) {
  std::vector<int> preds;
  preds.reserve(xs_raw.size());
  const int C = ck.arch.num_classes();
  for (size_t start = 0; start < xs_raw.size(); start += kEvalBatch) {
    const size_t end = std::min(xs_raw.size(), start + kEvalBatch);
    std::vector<Grid> filtered;
    std::vector<const Grid*> ptrs;
    for (size_t i = start; i < end; ++i) {
      filtered.push_back(mask_apply(normalize_grid(xs_raw[i], ck.mean, ck.stddev), m));
    }
    for (const Grid& g : filtered) ptrs.push_back(&g);
    Tensor logits = forward_prenormalized(ck, ptrs);
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

double masked_accuracy(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                       const std::vector<int>& ys, const Mask& m) {
  if (xs_raw.empty() || xs_raw.size() != ys.size()) {
    throw std::invalid_argument("masked_accuracy: image/label count mismatch");
  }
  const std::vector<int> preds = predict_masked(ck, xs_raw, m);
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == ys[i]) ++hits;
  }
  return double(hits) / double(preds.size());
}

double masked_accuracy_per_image(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                                 const std::vector<int>& ys, const std::vector<Mask>& masks) {
  if (xs_raw.size() != masks.size()) {
    throw std::invalid_argument("masked_accuracy_per_image: image/mask count mismatch");
  }
  size_t hits = 0;
  for (size_t i = 0; i < xs_raw.size(); ++i) {
    const std::vector<int> p = predict_masked(ck, {xs_raw[i]}, masks[i]);
    if (p[0] == ys[i]) ++hits;
  }
  return xs_raw.empty() ? 0.0 : double(hits) / double(xs_raw.size());
}

// ---- SMSK -------------------------------------------------------------------

namespace {

constexpr char kMaskMagic[4] = {'S', 'M', 'S', 'K'};
constexpr uint8_t kMaskVersion = 1;

}  // namespace

std::string serialize_mask(const Mask& m, const MaskFileMeta& meta) {
  std::string out;
  out.append(kMaskMagic, 4);
  io::put_u8(out, kMaskVersion);
  io::put_u32le(out, static_cast<uint32_t>(m.d));
  for (double v : m.values) io::put_f64le(out, v);
  std::ostringstream text;
  text << "image_id=" << meta.image_id << "\n";
  text << "label=" << meta.label << "\n";
  text << "lambda=" << io::format_double(meta.lambda) << "\n";
  text << "p=" << meta.p << "\n";
  text << "seed=" << meta.seed << "\n";
  text << "source_checkpoint=" << meta.source_checkpoint << "\n";
  text << "tag=" << meta.tag << "\n";
  out += text.str();
  return out;
}

std::pair<Mask, MaskFileMeta> deserialize_mask(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMaskMagic, 4) != 0) {
    throw std::runtime_error("mask file: bad magic (expected SMSK)");
  }
  size_t pos = 4;
  const uint8_t version = io::get_u8(bytes, pos);
  if (version != kMaskVersion) {
    throw std::runtime_error("mask file: unsupported version " + std::to_string(version));
  }
  const uint32_t d = io::get_u32le(bytes, pos);
  if (d == 0 || d > 4096) throw std::runtime_error("mask file: implausible side " + std::to_string(d));
  Mask m(static_cast<int>(d));
  for (double& v : m.values) v = io::get_f64le(bytes, pos);
  MaskFileMeta meta;
  std::istringstream text(bytes.substr(pos));
  std::string line;
  while (std::getline(text, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("mask file: malformed metadata: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "image_id") meta.image_id = val;
    else if (key == "label") meta.label = std::stoi(val);
    else if (key == "lambda") meta.lambda = io::parse_double(val);
    else if (key == "p") meta.p = std::stoi(val);
    else if (key == "seed") meta.seed = std::stoull(val);
    else if (key == "source_checkpoint") meta.source_checkpoint = val;
    else if (key == "tag") meta.tag = val;
    else throw std::runtime_error("mask file: unknown metadata key: " + key);
  }
  return {std::move(m), std::move(meta)};
}

void save_mask(const std::filesystem::path& path, const Mask& m, const MaskFileMeta& meta) {
  io::atomic_write(path, serialize_mask(m, meta));
}

std::pair<Mask, MaskFileMeta> load_mask(const std::filesystem::path& path) {
  return deserialize_mask(io::read_bytes(path));
}

std::string mask_to_csv(const Mask& m) {
  std::string out = "u,v,value\n";
  for (int u = 0; u < m.d; ++u) {
    for (int v = 0; v < m.d; ++v) {
      out += std::to_string(u) + "," + std::to_string(v) + "," + io::format_double(m.at(u, v)) +
             "\n";
    }
  }
  return out;
}

std::string model_tag(const AugmentPolicy& policy) {
  switch (policy.kind) {
    case AugmentKind::none: return "N";
    case AugmentKind::adversarial: return "A";
    case AugmentKind::scale: return "S";
    case AugmentKind::translate: return "T";
    case AugmentKind::rotate: return "R";
  }
  return "N";
}

}  // namespace specmask
