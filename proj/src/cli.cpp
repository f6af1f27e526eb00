#include "specmask/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "specmask/analysis.hpp"
#include "specmask/attack.hpp"
#include "specmask/csv.hpp"
#include "specmask/demos.hpp"
#include "specmask/fsio.hpp"
#include "specmask/mask.hpp"
#include "specmask/png.hpp"
#include "specmask/report.hpp"
#include "specmask/train.hpp"

namespace specmask {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) { return io::format_double(v); }

/// --out is resolved against $SPECMASK_OUT when relative.
fs::path resolve_out_dir(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("SPECMASK_OUT")) return fs::path(root) / p;
  return p;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

// ---- shared dataset flags ----------------------------------------------------

struct DataFlags {
  bool synthetic = false;
  int classes = 5;
  int n_per_class = 200;
  std::string idx_images;
  std::string idx_labels;
  std::string whitelist;
  int cap_per_class = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_flag("--synthetic", f.synthetic, "use the built-in synthetic grating dataset");
  cmd->add_option("--classes", f.classes, "synthetic class count (2-8)");
  cmd->add_option("--n-per-class", f.n_per_class, "synthetic images per class");
  cmd->add_option("--idx-images", f.idx_images, "IDX ubyte image file");
  cmd->add_option("--idx-labels", f.idx_labels, "IDX ubyte label file");
  cmd->add_option("--class-whitelist", f.whitelist, "comma-separated raw labels to keep");
  cmd->add_option("--cap-per-class", f.cap_per_class, "max images per class (0 = all)");
}

DatasetSplit load_data(const DataFlags& f, uint64_t seed) {
  if (f.synthetic) return generate_synthetic(f.classes, f.n_per_class, seed);
  if (f.idx_images.empty() || f.idx_labels.empty()) {
    throw CLI::ValidationError("dataset", "pass --synthetic or both --idx-images/--idx-labels");
  }
  return load_idx(f.idx_images, f.idx_labels, parse_int_list(f.whitelist), f.cap_per_class, seed);
}

void snapshot_data_flags(std::map<std::string, std::string>& kv, const DataFlags& f) {
  kv["synthetic"] = f.synthetic ? "true" : "false";
  kv["classes"] = std::to_string(f.classes);
  kv["n_per_class"] = std::to_string(f.n_per_class);
  kv["idx_images"] = f.idx_images;
  kv["idx_labels"] = f.idx_labels;
  kv["class_whitelist"] = f.whitelist;
  kv["cap_per_class"] = std::to_string(f.cap_per_class);
}

// ---- augment flags ------------------------------------------------------------

struct AugmentFlags {
  std::string kind = "none";
  double eps = 0.1;
  double alpha = 0.02;
  int steps = 10;
  int translate_max = 4;
  double rotate_max = 30.0;
  double scale_min = 0.8;
  double scale_max = 1.2;

  AugmentPolicy policy() const {
    AugmentPolicy p;
    if (kind == "none") p.kind = AugmentKind::none;
    else if (kind == "adversarial") p.kind = AugmentKind::adversarial;
    else if (kind == "translate") p.kind = AugmentKind::translate;
    else if (kind == "rotate") p.kind = AugmentKind::rotate;
    else if (kind == "scale") p.kind = AugmentKind::scale;
    else throw CLI::ValidationError("--augment", "unknown policy '" + kind + "'");
    p.eps = eps;
    p.alpha = alpha;
    p.steps = steps;
    p.max_offset = translate_max;
    p.max_angle = rotate_max;
    p.scale_min = scale_min;
    p.scale_max = scale_max;
    return p;
  }
};

void add_augment_flags(CLI::App* cmd, AugmentFlags& f) {
  cmd->add_option("--augment", f.kind, "none|adversarial|translate|rotate|scale");
  cmd->add_option("--eps", f.eps, "adversarial training PGD epsilon");
  cmd->add_option("--alpha", f.alpha, "adversarial training PGD step size");
  cmd->add_option("--steps", f.steps, "adversarial training PGD steps");
  cmd->add_option("--translate-max", f.translate_max, "max |offset| in pixels");
  cmd->add_option("--rotate-max", f.rotate_max, "max |angle| in degrees");
  cmd->add_option("--scale-min", f.scale_min, "min scale factor");
  cmd->add_option("--scale-max", f.scale_max, "max scale factor");
}

// ---- mask set IO ---------------------------------------------------------------

MaskSet load_mask_set(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".smsk") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  if (files.empty()) throw std::runtime_error("no .smsk files under " + path.string());
  MaskSet set;
  for (const fs::path& f : files) {
    auto [mask, meta] = load_mask(f);
    MaskSetEntry e;
    e.mask = std::move(mask);
    e.image_id = meta.image_id;
    e.label = meta.label;
    e.tag = meta.tag;
    set.push_back(std::move(e));
  }
  return set;
}

std::string mask_filename(int image_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask_%05d.smsk", image_id);
  return buf;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  DataFlags data;
  AugmentFlags augment;
  uint64_t seed = 0;
  int epochs = 20;
  int batch = 32;
  double max_lr = 1e-3;
  std::string out = "out/train";
  std::string name = "model";
};

int run_train(const TrainArgs& a) {
  Report report(resolve_out_dir(a.out), "train", a.seed);
  std::map<std::string, std::string> kv;
  snapshot_data_flags(kv, a.data);
  kv["augment"] = a.augment.policy().describe();
  kv["seed"] = std::to_string(a.seed);
  kv["epochs"] = std::to_string(a.epochs);
  kv["batch"] = std::to_string(a.batch);
  kv["max_lr"] = fmt(a.max_lr);
  kv["out"] = a.out;
  kv["name"] = a.name;
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const DatasetSplit split = load_data(a.data, a.seed);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.max_lr = a.max_lr;
  cfg.seed = a.seed;
  cfg.augment = a.augment.policy();

  TrainLog log;
  const Checkpoint ck = train(split, cfg, &log);
  const fs::path ck_path = report.dir() / (a.name + ".smck");
  ck.save(ck_path);
  report.note_output(ck_path);

  io::CsvWriter csv;
  csv.row({"epoch", "train_loss", "val_loss", "val_accuracy"});
  for (const EpochStat& e : log.epochs) {
    csv.row({std::to_string(e.epoch), fmt(e.train_loss), fmt(e.val_loss), fmt(e.val_accuracy)});
  }
  report.write_output("training_log.csv", csv.bytes());

  report.summary_set("checkpoint", a.name + ".smck");
  report.summary_set("checkpoint_hash", io::hash_hex(io::fnv1a(ck.serialize())));
  report.summary_set("augment", ck.augment.describe());
  report.summary_set("best_epoch", int64_t(ck.best_epoch));
  report.summary_set("best_val_loss", ck.best_val_loss);
  report.summary_set("final_val_accuracy", log.epochs.empty() ? 0.0 : log.epochs.back().val_accuracy);
  report.finalize();
  std::cout << "train: best epoch " << ck.best_epoch << ", best val loss "
            << fmt(ck.best_val_loss) << "\n";
  return 0;
}

// ---- attack --------------------------------------------------------------------

struct AttackArgs {
  DataFlags data;
  std::string checkpoint;
  uint64_t seed = 0;
  double eps = 0.1;
  double alpha = 0.02;
  int steps = 10;
  int limit = 0;  // 0 = whole validation split
  std::string out = "out/attack";
};

int run_attack(const AttackArgs& a) {
  Report report(resolve_out_dir(a.out), "attack", a.seed);
  std::map<std::string, std::string> kv;
  snapshot_data_flags(kv, a.data);
  kv["checkpoint"] = a.checkpoint;
  kv["seed"] = std::to_string(a.seed);
  kv["eps"] = fmt(a.eps);
  kv["alpha"] = fmt(a.alpha);
  kv["steps"] = std::to_string(a.steps);
  kv["limit"] = std::to_string(a.limit);
  kv["out"] = a.out;
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const Checkpoint ck = Checkpoint::load(a.checkpoint);
  report.add_input(a.checkpoint);
  const DatasetSplit split = load_data(a.data, a.seed);

  std::vector<Grid> xs;
  std::vector<int> ys, ids;
  const size_t n = a.limit > 0 ? std::min<size_t>(split.val.size(), size_t(a.limit))
                               : split.val.size();
  for (size_t i = 0; i < n; ++i) {
    xs.push_back(split.val[i].pixels);
    ys.push_back(split.val[i].label);
    ids.push_back(split.val[i].id);
  }

  const double clean_acc = accuracy(ck, xs, ys);
  const std::vector<Grid> adv = pgd_attack(ck, xs, ys, {a.eps, a.alpha, a.steps});
  const double adv_acc = accuracy(ck, adv, ys);

  const fs::path img_path = report.dir() / "adversarial_images.idx";
  save_idx_double(img_path, adv);
  report.note_output(img_path);
  const fs::path lbl_path = report.dir() / "adversarial_labels.idx";
  save_idx_labels(lbl_path, ys);
  report.note_output(lbl_path);
  io::CsvWriter idcsv;
  idcsv.row({"image_id"});
  for (int id : ids) idcsv.row({std::to_string(id)});
  report.write_output("ids.csv", idcsv.bytes());

  io::CsvWriter metrics;
  metrics.row({"metric", "value"});
  metrics.row({"clean_accuracy", fmt(clean_acc)});
  metrics.row({"attacked_accuracy", fmt(adv_acc)});
  report.write_output("metrics.csv", metrics.bytes());

  report.summary_set("clean_accuracy", clean_acc);
  report.summary_set("attacked_accuracy", adv_acc);
  report.summary_set("eps", a.eps);
  report.summary_set("images", int64_t(n));
  report.finalize();
  std::cout << "attack: clean accuracy " << fmt(clean_acc) << ", attacked accuracy "
            << fmt(adv_acc) << "\n";
  return 0;
}

// ---- learn-mask -----------------------------------------------------------------

struct LearnMaskArgs {
  DataFlags data;
  std::string checkpoint;
  std::string scope = "global";
  double lambda = 1e-3;
  int p = 1;
  double lr = 1e-3;
  int max_iters = 2000;
  int batch = 32;
  uint64_t seed = 0;
  int limit = 0;
  int workers = 1;
  std::string images;  // optional IDX-double set (e.g. attacked images)
  std::string labels;
  std::string ids;
  std::string out = "out/masks";
};

int run_learn_mask(const LearnMaskArgs& a) {
  Report report(resolve_out_dir(a.out), "learn-mask", a.seed);
  std::map<std::string, std::string> kv;
  snapshot_data_flags(kv, a.data);
  kv["checkpoint"] = a.checkpoint;
  kv["scope"] = a.scope;
  kv["lambda"] = fmt(a.lambda);
  kv["p"] = std::to_string(a.p);
  kv["lr"] = fmt(a.lr);
  kv["max_iters"] = std::to_string(a.max_iters);
  kv["batch"] = std::to_string(a.batch);
  kv["seed"] = std::to_string(a.seed);
  kv["limit"] = std::to_string(a.limit);
  kv["workers"] = std::to_string(a.workers);
  kv["images"] = a.images;
  kv["labels"] = a.labels;
  kv["ids"] = a.ids;
  kv["out"] = a.out;
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const Checkpoint ck = Checkpoint::load(a.checkpoint);
  report.add_input(a.checkpoint);
  const std::string ck_hash = io::hash_hex(io::fnv1a(ck.serialize()));

  MaskLearnConfig cfg;
  cfg.lambda = a.lambda;
  cfg.p = a.p;
  cfg.lr = a.lr;
  cfg.max_iters = a.max_iters;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;

  // Sample source: an explicit image set, or the validation split.
  std::vector<LabeledImage> samples;
  if (!a.images.empty()) {
    const std::vector<Grid> imgs = load_idx_double(a.images);
    const std::vector<int> lbls = load_idx_labels(a.labels);
    if (imgs.size() != lbls.size()) {
      throw std::runtime_error("learn-mask: image/label count mismatch");
    }
    std::vector<int> idlist;
    if (!a.ids.empty()) {
      std::ifstream f(a.ids);
      if (!f) throw std::runtime_error("learn-mask: cannot open ids file " + a.ids);
      std::string line;
      std::getline(f, line);  // header
      while (std::getline(f, line)) {
        if (!line.empty()) idlist.push_back(std::stoi(line));
      }
      if (idlist.size() != imgs.size()) {
        throw std::runtime_error("learn-mask: ids file row count mismatch");
      }
    }
    report.add_input(a.images);
    report.add_input(a.labels);
    if (!a.ids.empty()) report.add_input(a.ids);
    for (size_t i = 0; i < imgs.size(); ++i) {
      LabeledImage img;
      img.pixels = imgs[i];
      img.label = lbls[i];
      img.id = idlist.empty() ? int(i) : idlist[i];
      samples.push_back(std::move(img));
    }
  } else {
    const DatasetSplit split = load_data(a.data, a.seed);
    samples = split.val;
  }
  if (a.limit > 0 && samples.size() > size_t(a.limit)) samples.resize(size_t(a.limit));

  const std::string tag = model_tag(ck.augment);
  MaskFileMeta meta;
  meta.lambda = cfg.lambda;
  meta.p = cfg.p;
  meta.seed = cfg.seed;
  meta.source_checkpoint = ck_hash;
  meta.tag = tag;

  if (a.scope == "global") {
    const MaskLearnResult res = learn_mask_global(ck, samples, cfg);
    meta.image_id = "global";
    meta.label = -1;
    const fs::path mask_path = report.dir() / "mask_global.smsk";
    save_mask(mask_path, res.mask, meta);
    report.note_output(mask_path);
    report.write_output("mask_global.csv", mask_to_csv(res.mask));

    io::CsvWriter trace;
    trace.row({"iteration", "objective", "invariance", "penalty"});
    for (const ObjectiveTraceRow& r : res.trace) {
      trace.row({std::to_string(r.iteration), fmt(r.total), fmt(r.invariance), fmt(r.penalty)});
    }
    report.write_output("objective_trace.csv", trace.bytes());

    report.summary_set("scope", std::string("global"));
    report.summary_set("best_objective", res.best_objective);
    report.summary_set("iterations", int64_t(res.iterations));
    report.summary_set("converged", res.converged ? std::string("true") : std::string("false"),
                       true);
    report.summary_set("mask_l1", res.mask.norm_l1());
    report.summary_set("clamp_events", int64_t(res.clamp_events));
    report.finalize();
    std::cout << "learn-mask: global mask, objective " << fmt(res.best_objective) << ", |M|_1 "
              << fmt(res.mask.norm_l1()) << "\n";
    return 0;
  }
  if (a.scope != "per-image") {
    throw CLI::ValidationError("--scope", "must be global or per-image");
  }

  const std::vector<SingleMaskJob> jobs = learn_masks_for_images(ck, samples, cfg, a.workers);
  fs::create_directories(report.dir() / "masks");
  io::CsvWriter skiplog;
  skiplog.row({"image_id", "label"});
  io::CsvWriter per_mask;
  per_mask.row({"image_id", "label", "iterations", "best_objective", "l1", "zero_fraction"});
  int written = 0, skipped = 0;
  for (const SingleMaskJob& job : jobs) {
    if (job.skipped) {
      ++skipped;
      skiplog.row({std::to_string(job.image_id), std::to_string(job.label)});
      continue;
    }
    ++written;
    meta.image_id = std::to_string(job.image_id);
    meta.label = job.label;
    meta.seed = derive_seed(cfg.seed, uint64_t(job.image_id));
    const fs::path mask_path = report.dir() / "masks" / mask_filename(job.image_id);
    save_mask(mask_path, job.result.mask, meta);
    report.note_output(mask_path);
    size_t zeros = 0;
    for (double v : job.result.mask.values) {
      if (std::abs(v) < 1e-8) ++zeros;
    }
    per_mask.row({std::to_string(job.image_id), std::to_string(job.label),
                  std::to_string(job.result.iterations), fmt(job.result.best_objective),
                  fmt(job.result.mask.norm_l1()),
                  fmt(double(zeros) / double(job.result.mask.values.size()))});
  }
  report.write_output("skips.csv", skiplog.bytes());
  report.write_output("per_mask.csv", per_mask.bytes());
  report.summary_set("scope", std::string("per-image"));
  report.summary_set("masks_written", int64_t(written));
  report.summary_set("skipped", int64_t(skipped));
  report.finalize();
  std::cout << "learn-mask: " << written << " masks written, " << skipped
            << " misclassified inputs skipped\n";
  return 0;
}

// ---- analyze --------------------------------------------------------------------

struct AnalyzeArgs {
  std::string set_a;
  std::string set_b;
  std::string bands = "radial";
  int K = 8;
  uint64_t seed = 0;
  bool probe = false;
  int heatmap_cap = 8;
  std::string out = "out/analysis";
};

int run_analyze(const AnalyzeArgs& a) {
  Report report(resolve_out_dir(a.out), "analyze", a.seed);
  std::map<std::string, std::string> kv;
  kv["set_a"] = a.set_a;
  kv["set_b"] = a.set_b;
  kv["bands"] = a.bands;
  kv["K"] = std::to_string(a.K);
  kv["seed"] = std::to_string(a.seed);
  kv["probe"] = a.probe ? "true" : "false";
  kv["heatmap_cap"] = std::to_string(a.heatmap_cap);
  kv["out"] = a.out;
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const MaskSet set_a = load_mask_set(a.set_a);
  MaskSet set_b;
  if (!a.set_b.empty()) set_b = load_mask_set(a.set_b);

  const int d = set_a[0].mask.d;
  for (const auto& e : set_a) {
    if (e.mask.d != d) throw std::runtime_error("analyze: mixed mask sides in set A");
  }
  for (const auto& e : set_b) {
    if (e.mask.d != d) throw std::runtime_error("analyze: mixed mask sides in set B");
  }
  const spectral::BandSpec bands = a.bands == "angular" ? spectral::BandSpec::angular(d, a.K)
                                                        : spectral::BandSpec::radial(d, a.K);

  // Per-band energies for every mask in both sets.
  io::CsvWriter energy;
  energy.row({"set", "image_id", "tag", "band", "range_lo", "range_hi", "energy"});
  auto emit_energies = [&](const char* set_name, const MaskSet& set) {
    for (const MaskSetEntry& e : set) {
      Grid g(e.mask.d);
      g.v = e.mask.values;
      const std::vector<double> en = spectral::band_energy(g, bands);
      for (int k = 0; k < bands.K; ++k) {
        const auto [lo, hi] = bands.band_range(k);
        energy.row({set_name, e.image_id, e.tag, std::to_string(k), fmt(lo), fmt(hi),
                    fmt(en[size_t(k)])});
      }
    }
  };
  emit_energies("a", set_a);
  if (!set_b.empty()) emit_energies("b", set_b);
  report.write_output("energy.csv", energy.bytes());

  // Shared colormap scale across every mask rendered by this invocation.
  double mask_absmax = 0.0;
  for (const auto& e : set_a) {
    for (double v : e.mask.values) mask_absmax = std::max(mask_absmax, std::abs(v));
  }
  for (const auto& e : set_b) {
    for (double v : e.mask.values) mask_absmax = std::max(mask_absmax, std::abs(v));
  }
  int rendered = 0;
  auto render_masks = [&](const char* prefix, const MaskSet& set) {
    for (const MaskSetEntry& e : set) {
      if (rendered >= a.heatmap_cap) return;
      Grid g(e.mask.d);
      g.v = e.mask.values;
      const fs::path p =
          report.dir() / (std::string(prefix) + "_mask_" + e.image_id + ".png");
      render_png(spectral::fftshift(g), Colormap::diverging, p, mask_absmax, 8);
      report.note_output(p);
      ++rendered;
    }
  };
  render_masks("a", set_a);
  rendered = 0;
  render_masks("b", set_b);

  if (!set_b.empty()) {
    // Pair by image id for differences and the exceed statistic.
    std::map<std::string, const MaskSetEntry*> by_id;
    for (const MaskSetEntry& e : set_b) by_id[e.image_id] = &e;
    std::vector<std::pair<const MaskSetEntry*, const MaskSetEntry*>> pairs;
    for (const MaskSetEntry& e : set_a) {
      auto it = by_id.find(e.image_id);
      if (it != by_id.end()) pairs.emplace_back(&e, it->second);
    }
    if (pairs.empty()) throw std::runtime_error("analyze: sets share no image ids");

    io::CsvWriter diffcsv;
    diffcsv.row({"image_id", "band", "range_lo", "range_hi", "energy_diff"});
    std::vector<Grid> diffs;
    double diff_absmax = 0.0;
    for (const auto& [ea, eb] : pairs) {
      const std::vector<double> de = energy_difference(ea->mask, eb->mask, bands);
      for (int k = 0; k < bands.K; ++k) {
        const auto [lo, hi] = bands.band_range(k);
        diffcsv.row({ea->image_id, std::to_string(k), fmt(lo), fmt(hi), fmt(de[size_t(k)])});
      }
      if (int(diffs.size()) < a.heatmap_cap) {
        diffs.push_back(mask_diff_centered(ea->mask, eb->mask));
        for (double v : diffs.back().v) diff_absmax = std::max(diff_absmax, std::abs(v));
      }
    }
    report.write_output("energy_diff.csv", diffcsv.bytes());
    for (size_t i = 0; i < diffs.size(); ++i) {
      const fs::path p = report.dir() / ("diff_" + pairs[i].first->image_id + ".png");
      render_png(diffs[i], Colormap::diverging, p, diff_absmax, 8);
      report.note_output(p);
    }

    if (pairs.size() >= 2) {
      MaskSet paired_a, paired_b;
      for (const auto& [ea, eb] : pairs) {
        paired_a.push_back(*ea);
        paired_b.push_back(*eb);
      }
      const std::vector<double> exceed = exceed_fraction(paired_a, paired_b, bands);
      io::CsvWriter excsv;
      excsv.row({"band", "range_lo", "range_hi", "fraction_a_exceeds_b"});
      for (int k = 0; k < bands.K; ++k) {
        const auto [lo, hi] = bands.band_range(k);
        excsv.row({std::to_string(k), fmt(lo), fmt(hi), fmt(exceed[size_t(k)])});
      }
      report.write_output("exceed_fraction.csv", excsv.bytes());
      const fs::path p = report.dir() / "exceed_fraction.png";
      render_bar_panels({exceed}, p);
      report.note_output(p);
      report.summary_set("exceed_fraction_low_band", exceed.front());
      report.summary_set("exceed_fraction_high_band", exceed.back());
      report.summary_set("paired_masks", int64_t(pairs.size()));
    }
  }

  if (a.probe) {
    const ProbeResult truth = linear_probe(set_a, false, a.seed);
    const ProbeResult shuffled = linear_probe(set_a, true, a.seed);
    io::CsvWriter probecsv;
    probecsv.row({"labels", "accuracy", "train_accuracy", "iterations"});
    probecsv.row({"true", fmt(truth.accuracy), fmt(truth.train_accuracy),
                  std::to_string(truth.iterations)});
    probecsv.row({"shuffled", fmt(shuffled.accuracy), fmt(shuffled.train_accuracy),
                  std::to_string(shuffled.iterations)});
    report.write_output("probe.csv", probecsv.bytes());

    const std::vector<ScatterPoint> scatter = pca_scatter(set_a, a.seed);
    io::CsvWriter sccsv;
    sccsv.row({"x", "y", "label"});
    for (const ScatterPoint& pt : scatter) {
      sccsv.row({fmt(pt.x), fmt(pt.y), std::to_string(pt.label)});
    }
    report.write_output("scatter.csv", sccsv.bytes());
    report.summary_set("probe_accuracy", truth.accuracy);
    report.summary_set("probe_accuracy_shuffled", shuffled.accuracy);
  }

  report.summary_set("set_a_masks", int64_t(set_a.size()));
  report.summary_set("set_b_masks", int64_t(set_b.size()));
  report.summary_set("bands", a.bands);
  report.summary_set("K", int64_t(a.K));
  report.finalize();
  std::cout << "analyze: " << set_a.size() << " masks in set A, " << set_b.size()
            << " in set B\n";
  return 0;
}

// ---- probe ----------------------------------------------------------------------

struct ProbeArgs {
  std::string masks;
  uint64_t seed = 0;
  std::string out = "out/probe";
};

int run_probe(const ProbeArgs& a) {
  Report report(resolve_out_dir(a.out), "probe", a.seed);
  std::map<std::string, std::string> kv;
  kv["masks"] = a.masks;
  kv["seed"] = std::to_string(a.seed);
  kv["out"] = a.out;
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const MaskSet set = load_mask_set(a.masks);
  const ProbeResult truth = linear_probe(set, false, a.seed);
  const ProbeResult shuffled = linear_probe(set, true, a.seed);

  io::CsvWriter csv;
  csv.row({"labels", "accuracy", "train_accuracy", "iterations"});
  csv.row({"true", fmt(truth.accuracy), fmt(truth.train_accuracy),
           std::to_string(truth.iterations)});
  csv.row({"shuffled", fmt(shuffled.accuracy), fmt(shuffled.train_accuracy),
           std::to_string(shuffled.iterations)});
  report.write_output("probe.csv", csv.bytes());

  io::CsvWriter perclass;
  perclass.row({"class", "accuracy"});
  for (size_t c = 0; c < truth.per_class.size(); ++c) {
    perclass.row({std::to_string(c), fmt(truth.per_class[c])});
  }
  report.write_output("per_class.csv", perclass.bytes());

  const std::vector<ScatterPoint> scatter = pca_scatter(set, a.seed);
  io::CsvWriter sccsv;
  sccsv.row({"x", "y", "label"});
  for (const ScatterPoint& pt : scatter) {
    sccsv.row({fmt(pt.x), fmt(pt.y), std::to_string(pt.label)});
  }
  report.write_output("scatter.csv", sccsv.bytes());

  report.summary_set("masks", int64_t(set.size()));
  report.summary_set("probe_accuracy", truth.accuracy);
  report.summary_set("probe_accuracy_shuffled", shuffled.accuracy);
  report.finalize();
  std::cout << "probe: accuracy " << fmt(truth.accuracy) << " (shuffled "
            << fmt(shuffled.accuracy) << ")\n";
  return 0;
}

// ---- demo -----------------------------------------------------------------------

struct DemoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void demo_check(bool ok, const std::string& what) {
  if (!ok) throw DemoFailure("demo assertion failed: " + what);
}

struct DemoArgs {
  std::string nl = "relu";
  int freq = 8;
  int n = 256;
  int w1 = 5;
  int w2 = 3;
  double a = 1.0;
  uint64_t seed = 0;
  std::string out = "out/demo";
};

int run_demo_blue_shift(const DemoArgs& a) {
  Report report(resolve_out_dir(a.out), "demo-blue-shift", a.seed);
  std::map<std::string, std::string> kv{{"nl", a.nl}, {"freq", std::to_string(a.freq)},
                                        {"n", std::to_string(a.n)}, {"out", a.out}};
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  using demos::Nonlinearity;
  const std::vector<Nonlinearity> panel = {Nonlinearity::identity, Nonlinearity::softplus,
                                           Nonlinearity::tanh, Nonlinearity::relu,
                                           Nonlinearity::hardtanh};
  io::CsvWriter csv;
  csv.row({"nonlinearity", "bin", "magnitude"});
  std::vector<std::vector<double>> series;
  for (Nonlinearity nl : panel) {
    const std::vector<double> mags = demos::nonlinearity_spectrum(a.freq, nl, a.n);
    for (size_t k = 0; k < mags.size(); ++k) {
      csv.row({demos::nonlinearity_name(nl), std::to_string(k), fmt(mags[k])});
    }
    series.push_back(mags);

    double off = 0.0;
    for (size_t k = 0; k < mags.size(); ++k) {
      if (k != size_t(a.freq)) off = std::max(off, mags[k]);
    }
    const double fundamental = mags[size_t(a.freq)];
    if (nl == Nonlinearity::identity) {
      demo_check(off < 1e-9 * fundamental, "identity keeps a single peak at the input frequency");
    } else {
      demo_check(off > 0.0, demos::nonlinearity_name(nl) +
                                " spreads energy outside the fundamental (blue shift)");
    }
  }
  report.write_output("blue_shift.csv", csv.bytes());
  const fs::path png = report.dir() / "blue_shift.png";
  render_bar_panels(series, png);
  report.note_output(png);
  report.summary_set("panels", int64_t(series.size()));
  report.finalize();
  std::cout << "demo blue-shift: ok (" << series.size() << " panels)\n";
  return 0;
}

int run_demo_intermodulation(const DemoArgs& a) {
  Report report(resolve_out_dir(a.out), "demo-intermodulation", a.seed);
  std::map<std::string, std::string> kv{{"w1", std::to_string(a.w1)},
                                        {"w2", std::to_string(a.w2)},
                                        {"n", std::to_string(a.n)}, {"out", a.out}};
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const demos::IntermodReport rep = demos::intermodulation_check(a.w1, a.w2, a.n);
  io::CsvWriter csv;
  csv.row({"bin", "magnitude", "expected"});
  for (size_t i = 0; i < rep.support_bins.size(); ++i) {
    csv.row({std::to_string(rep.support_bins[i]), fmt(rep.magnitudes[i]), fmt(rep.expected[i])});
    demo_check(std::abs(rep.magnitudes[i] - rep.expected[i]) < 1e-9 * a.n,
               "peak magnitude at bin " + std::to_string(rep.support_bins[i]));
  }
  demo_check(rep.max_off_support < 1e-9, "spectrum vanishes off the intermodulation support");
  report.write_output("peaks.csv", csv.bytes());
  report.summary_set("max_off_support", rep.max_off_support);
  report.finalize();
  std::cout << "demo intermodulation: ok, off-support max " << fmt(rep.max_off_support) << "\n";
  return 0;
}

int run_demo_sinc(const DemoArgs& a) {
  Report report(resolve_out_dir(a.out), "demo-sinc", a.seed);
  std::map<std::string, std::string> kv{{"a", fmt(a.a)}, {"out", a.out}};
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  const std::vector<double> gammas = {0.0, 0.1, 0.7, 1.3, 1.0 / (2.0 * a.a)};
  io::CsvWriter csv;
  csv.row({"gamma", "analytic", "quadrature", "abs_err"});
  double worst = 0.0;
  for (double g : gammas) {
    const double analytic = demos::sinc_damping_factor(g, a.a);
    const double quad = demos::sinc_damping_quadrature(g, a.a);
    const double err = std::abs(analytic - quad);
    worst = std::max(worst, err);
    csv.row({fmt(g), fmt(analytic), fmt(quad), fmt(err)});
  }
  demo_check(worst < 1e-8, "Simpson quadrature matches the analytic sinc factor");
  demo_check(demos::sinc_damping_factor(0.0, a.a) == 2.0 * a.a, "factor at gamma=0 is exactly 2a");
  report.write_output("sinc.csv", csv.bytes());
  report.summary_set("max_abs_err", worst);
  report.finalize();
  std::cout << "demo sinc: ok, max |analytic - quadrature| " << fmt(worst) << "\n";
  return 0;
}

int run_demo_selfconv(const DemoArgs& a) {
  Report report(resolve_out_dir(a.out), "demo-selfconv", a.seed);
  std::map<std::string, std::string> kv{{"seed", std::to_string(a.seed)}, {"out", a.out}};
  report.write_output("config_resolved.txt", render_config_snapshot(kv));

  io::CsvWriter csv;
  csv.row({"n", "order", "max_error"});
  for (int n : {32, 64}) {
    Rng rng(derive_seed(a.seed, uint64_t(n)));
    demos::Signal1D sig;
    sig.n = n;
    sig.samples.resize(size_t(n));
    for (double& v : sig.samples) v = rng.uniform(-1.0, 1.0);
    for (int order : {2, 3}) {
      const double err = demos::self_convolution_check(sig, order);
      csv.row({std::to_string(n), std::to_string(order), fmt(err)});
      demo_check(err < 1e-8, "self-convolution identity at n=" + std::to_string(n) +
                                 ", order " + std::to_string(order));
    }
  }
  report.write_output("selfconv.csv", csv.bytes());
  report.finalize();
  std::cout << "demo selfconv: ok\n";
  return 0;
}

// ---- config file expansion ------------------------------------------------------

/// Replaces "--config FILE" in the arg list with the file's key=value pairs
/// expanded as --key=value flags (inserted in place, so explicit flags given
/// later still win).
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> out;
  for (size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw std::runtime_error("--config requires a file path");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      out.push_back(args[i]);
      continue;
    }
    for (const auto& [k, v] : parse_config_file(file)) {
      out.push_back("--" + k + "=" + v);
    }
  }
  return out;
}

}  // namespace

int cli_run(std::vector<std::string> args) {
  CLI::App app{"Fourier-domain modulatory mask learning and frequency-bias analysis"};
  app.require_subcommand(1);
  // Later occurrences win, so explicit flags override config-file values.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::function<int()> action;

  // train
  auto targs = std::make_shared<TrainArgs>();
  CLI::App* tr = app.add_subcommand("train", "train the small CNN under an augmentation policy");
  add_data_flags(tr, targs->data);
  add_augment_flags(tr, targs->augment);
  tr->add_option("--seed", targs->seed, "global seed");
  tr->add_option("--epochs", targs->epochs, "training epochs");
  tr->add_option("--batch", targs->batch, "minibatch size");
  tr->add_option("--max-lr", targs->max_lr, "one-cycle peak learning rate");
  tr->add_option("--out", targs->out, "output directory");
  tr->add_option("--name", targs->name, "checkpoint base name");
  tr->callback([&action, targs] { action = [targs] { return run_train(*targs); }; });

  // attack
  auto aargs = std::make_shared<AttackArgs>();
  CLI::App* at = app.add_subcommand("attack", "PGD-attack a checkpoint's validation split");
  add_data_flags(at, aargs->data);
  at->add_option("--checkpoint", aargs->checkpoint, "SMCK checkpoint")->required();
  at->add_option("--seed", aargs->seed, "global seed (must match the training run)");
  at->add_option("--eps", aargs->eps, "l-inf radius");
  at->add_option("--alpha", aargs->alpha, "step size");
  at->add_option("--steps", aargs->steps, "PGD iterations");
  at->add_option("--limit", aargs->limit, "attack only the first N val images (0 = all)");
  at->add_option("--out", aargs->out, "output directory");
  at->callback([&action, aargs] { action = [aargs] { return run_attack(*aargs); }; });

  // learn-mask
  auto margs = std::make_shared<LearnMaskArgs>();
  CLI::App* lm = app.add_subcommand("learn-mask", "learn global or per-image Fourier masks");
  add_data_flags(lm, margs->data);
  lm->add_option("--checkpoint", margs->checkpoint, "SMCK checkpoint")->required();
  lm->add_option("--scope", margs->scope, "global|per-image");
  lm->add_option("--lambda", margs->lambda, "sparsity weight");
  lm->add_option("--p", margs->p, "norm order (1 or 2)");
  lm->add_option("--lr", margs->lr, "mask optimizer learning rate");
  lm->add_option("--max-iters", margs->max_iters, "max optimizer iterations");
  lm->add_option("--batch", margs->batch, "mask optimizer minibatch size");
  lm->add_option("--seed", margs->seed, "global seed");
  lm->add_option("--limit", margs->limit, "use only the first N samples (0 = all)");
  lm->add_option("--workers", margs->workers, "parallel per-image jobs");
  lm->add_option("--images", margs->images, "IDX-double image file (e.g. attacked set)");
  lm->add_option("--labels", margs->labels, "IDX label file for --images");
  lm->add_option("--ids", margs->ids, "ids.csv for --images");
  lm->add_option("--out", margs->out, "output directory");
  lm->callback([&action, margs] { action = [margs] { return run_learn_mask(*margs); }; });

  // analyze
  auto anargs = std::make_shared<AnalyzeArgs>();
  CLI::App* an = app.add_subcommand("analyze", "band energies, differences and exceed fractions");
  an->add_option("--set-a", anargs->set_a, "mask file or directory")->required();
  an->add_option("--set-b", anargs->set_b, "second mask file or directory");
  an->add_option("--bands", anargs->bands, "radial|angular");
  an->add_option("--K", anargs->K, "number of bands");
  an->add_option("--seed", anargs->seed, "probe/scatter seed");
  an->add_flag("--probe", anargs->probe, "also run the linear probe and PCA scatter on set A");
  an->add_option("--heatmap-cap", anargs->heatmap_cap, "max heatmap PNGs per figure set");
  an->add_option("--out", anargs->out, "output directory");
  an->callback([&action, anargs] { action = [anargs] { return run_analyze(*anargs); }; });

  // probe
  auto pargs = std::make_shared<ProbeArgs>();
  CLI::App* pr = app.add_subcommand("probe", "linear separability of single-image masks");
  pr->add_option("--masks", pargs->masks, "mask directory")->required();
  pr->add_option("--seed", pargs->seed, "split/shuffle seed");
  pr->add_option("--out", pargs->out, "output directory");
  pr->callback([&action, pargs] { action = [pargs] { return run_probe(*pargs); }; });

  // demo
  auto dargs = std::make_shared<DemoArgs>();
  CLI::App* de = app.add_subcommand("demo", "analytic spectra demos with built-in assertions");
  de->require_subcommand(1);
  CLI::App* bs = de->add_subcommand("blue-shift", "nonlinear distortion of a pure tone");
  bs->add_option("--nl", dargs->nl, "softplus|tanh|relu|hardtanh (panel always includes all)");
  bs->add_option("--freq", dargs->freq, "input tone frequency (bins)");
  bs->add_option("--n", dargs->n, "signal length (power of two)");
  bs->add_option("--out", dargs->out, "output directory");
  bs->callback([&action, dargs] { action = [dargs] { return run_demo_blue_shift(*dargs); }; });
  CLI::App* im = de->add_subcommand("intermodulation", "squared two-tone spectrum support");
  im->add_option("--w1", dargs->w1, "first tone (integer frequency)");
  im->add_option("--w2", dargs->w2, "second tone (integer frequency)");
  im->add_option("--n", dargs->n, "signal length (power of two)");
  im->add_option("--out", dargs->out, "output directory");
  im->callback([&action, dargs] {
    action = [dargs] { return run_demo_intermodulation(*dargs); };
  });
  CLI::App* sc = de->add_subcommand("sinc", "translation-averaging damping profile");
  sc->add_option("--a", dargs->a, "translation half-range");
  sc->add_option("--out", dargs->out, "output directory");
  sc->callback([&action, dargs] { action = [dargs] { return run_demo_sinc(*dargs); }; });
  CLI::App* sv = de->add_subcommand("selfconv", "pointwise powers vs spectral self-convolution");
  sv->add_option("--seed", dargs->seed, "signal seed");
  sv->add_option("--out", dargs->out, "output directory");
  sv->callback([&action, dargs] { action = [dargs] { return run_demo_selfconv(*dargs); }; });

  try {
    std::vector<std::string> expanded = expand_config(std::move(args));
    std::reverse(expanded.begin(), expanded.end());  // CLI11 wants reversed args
    app.parse(expanded);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const DemoFailure& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace specmask
