#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "specmask/fsio.hpp"
#include "specmask/mask.hpp"
#include "specmask/rng.hpp"
#include "specmask/train.hpp"

using namespace specmask;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("specmask_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Grid random_image(int d, Rng& rng) {
  Grid g(d);
  for (double& v : g.v) v = rng.uniform();
  return g;
}

/// Untrained toy checkpoint on side-8 inputs for gradient oracles.
Checkpoint toy_checkpoint(int side, int classes, uint64_t seed) {
  Checkpoint ck;
  ck.arch = Architecture::tiny_cnn(classes, side);
  Rng rng(seed);
  ck.weights = ck.arch.init_params(rng);
  ck.mean = 0.5;
  ck.stddev = 0.25;
  return ck;
}

}  // namespace

TEST_CASE("conjugate tying covers the grid with the right multiplicities") {
  for (int d : {8, 32}) {
    const ConjugateTying t = ConjugateTying::make(d);
    CHECK(t.param_count == d * d / 2 + 2);
    int ones = 0, twos = 0;
    for (int m : t.param_multiplicity) {
      if (m == 1) ++ones;
      else if (m == 2) ++twos;
      else FAIL("unexpected multiplicity");
    }
    CHECK(ones == 4);  // (0,0), (0,d/2), (d/2,0), (d/2,d/2)
    CHECK(ones + 2 * twos == d * d);

    // expand/collapse round trip, and expansion is exactly tied.
    Rng rng(static_cast<uint64_t>(d));
    std::vector<double> params(size_t(t.param_count));
    for (double& v : params) v = rng.uniform(-1.0, 1.0);
    const Mask m = t.expand(params);
    CHECK(m.is_conjugate_tied());
    CHECK(t.collapse(m) == params);
  }
}

TEST_CASE("mask_apply: identity, zero, and DC-projection masks") {
  Rng rng(1);
  const Grid x = random_image(32, rng);

  const Grid same = mask_apply(x, Mask::ones(32));
  for (size_t i = 0; i < x.v.size(); ++i) CHECK(std::abs(same.v[i] - x.v[i]) < 1e-10);

  const Grid zero = mask_apply(x, Mask(32, 0.0));
  for (double v : zero.v) CHECK(std::abs(v) < 1e-12);

  Mask dc(32, 0.0);
  dc.at(0, 0) = 1.0;
  const Grid flat = mask_apply(x, dc);
  double mean = 0.0;
  for (double v : x.v) mean += v;
  mean /= double(x.v.size());
  for (double v : flat.v) CHECK(v == doctest::Approx(mean).epsilon(1e-12));

  Grid small(16);
  CHECK_THROWS_AS(mask_apply(small, Mask::ones(32)), std::invalid_argument);
}

TEST_CASE("mask_apply is linear in the mask") {
  Rng rng(2);
  const Grid x = random_image(32, rng);
  const ConjugateTying tying = ConjugateTying::make(32);
  std::vector<double> p1(size_t(tying.param_count)), p2 = p1;
  for (double& v : p1) v = rng.uniform(-1.0, 1.0);
  for (double& v : p2) v = rng.uniform(-1.0, 1.0);
  const Mask m1 = tying.expand(p1), m2 = tying.expand(p2);
  const double a = 0.7, b = -1.3;
  std::vector<double> pc(p1.size());
  for (size_t i = 0; i < pc.size(); ++i) pc[i] = a * p1[i] + b * p2[i];
  const Mask mc = tying.expand(pc);

  const Grid ya = mask_apply(x, m1), yb = mask_apply(x, m2), yc = mask_apply(x, mc);
  for (size_t i = 0; i < yc.v.size(); ++i) {
    CHECK(std::abs(yc.v[i] - (a * ya.v[i] + b * yb.v[i])) < 1e-10);
  }
}

TEST_CASE("complementary mask follows the 1e-8 threshold definition") {
  Mask m(4, 0.0);
  m.at(0, 0) = 0.5;
  m.at(1, 1) = 1e-9;
  m.at(2, 2) = 0.0;
  const Mask comp = complementary_mask(m);
  CHECK(comp.at(0, 0) == 0.0);
  CHECK(comp.at(1, 1) == 1.0);
  CHECK(comp.at(2, 2) == 1.0);

  const Mask all = complementary_mask(Mask::ones(4));
  for (double v : all.values) CHECK(v == 0.0);

  // Disjoint supports: comp ⊙ m stays below threshold-scale for a
  // nonnegative mask.
  double worst = 0.0, peak = 0.0;
  for (size_t i = 0; i < m.values.size(); ++i) {
    worst = std::max(worst, std::abs(comp.values[i] * m.values[i]));
    peak = std::max(peak, m.values[i]);
  }
  CHECK(worst < 1e-8 * peak);
}

TEST_CASE("mask objective: exact value at the all-ones mask") {
  Checkpoint ck;
  ck.arch = Architecture::small_cnn(5, 32);
  Rng rng(3);
  ck.weights = ck.arch.init_params(rng);
  ck.mean = 0.5;
  ck.stddev = 0.25;

  const Grid x = random_image(32, rng);
  MaskLearnConfig cfg;
  cfg.lambda = 1e-3;
  cfg.p = 1;
  const MaskObjectiveBreakdown one =
      mask_objective(ck, Mask::ones(32), {x}, {2}, cfg);
  // invariance term e^0 = 1 exactly; penalty 1e-3 * 1024.
  CHECK(one.total == doctest::Approx(1.0 + 1e-3 * 1024.0).epsilon(1e-12));
  CHECK(one.invariance == doctest::Approx(1.0).epsilon(1e-12));

  MaskLearnConfig zero = cfg;
  zero.lambda = 0.0;
  std::vector<Grid> batch;
  std::vector<int> ys;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(random_image(32, rng));
    ys.push_back(i % 5);
  }
  const MaskObjectiveBreakdown b = mask_objective(ck, Mask::ones(32), batch, ys, zero);
  CHECK(b.total == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("mask objective gradient matches central finite differences (8x8 toy net)") {
  const Checkpoint ck = toy_checkpoint(8, 3, 77);
  Rng rng(4);
  std::vector<Grid> xs = {random_image(8, rng), random_image(8, rng)};
  std::vector<int> ys = {0, 2};
  const ConjugateTying tying = ConjugateTying::make(8);

  std::vector<double> theta(size_t(tying.param_count));
  for (double& v : theta) v = rng.uniform(0.4, 1.4);  // keep |.| off the l1 kink

  MaskLearnConfig cfg;
  cfg.lambda = 1e-3;
  cfg.p = 1;
  std::vector<double> grad;
  mask_objective_theta(ck, tying, theta, xs, ys, cfg, &grad);
  REQUIRE(grad.size() == theta.size());

  Rng pick(5);
  const double h = 1e-5;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const size_t i = size_t(pick.below(theta.size()));
    std::vector<double> tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fp = mask_objective_theta(ck, tying, tp, xs, ys, cfg, nullptr);
    const double fm = mask_objective_theta(ck, tying, tm, xs, ys, cfg, nullptr);
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-6});
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-4);

  // p=2 penalty path.
  MaskLearnConfig cfg2 = cfg;
  cfg2.p = 2;
  std::vector<double> grad2;
  mask_objective_theta(ck, tying, theta, xs, ys, cfg2, &grad2);
  double worst2 = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const size_t i = size_t(pick.below(theta.size()));
    std::vector<double> tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (mask_objective_theta(ck, tying, tp, xs, ys, cfg2, nullptr) -
                       mask_objective_theta(ck, tying, tm, xs, ys, cfg2, nullptr)) /
                      (2.0 * h);
    const double rel =
        std::abs(grad2[i] - fd) / std::max({std::abs(grad2[i]), std::abs(fd), 1e-6});
    worst2 = std::max(worst2, rel);
  }
  CHECK(worst2 < 1e-4);
}

TEST_CASE("lambda=0 leaves the global mask at all-ones") {
  const Checkpoint ck = toy_checkpoint(32, 3, 13);
  Rng rng(6);
  std::vector<LabeledImage> val;
  for (int i = 0; i < 4; ++i) {
    LabeledImage img;
    img.pixels = random_image(32, rng);
    img.label = i % 3;
    img.id = i;
    val.push_back(img);
  }
  MaskLearnConfig cfg;
  cfg.lambda = 0.0;
  cfg.max_iters = 120;
  cfg.seed = 3;
  const MaskLearnResult res = learn_mask_global(ck, val, cfg);
  CHECK(res.converged);
  for (double v : res.mask.values) CHECK(v == 1.0);
  // Objective equals the sample count exactly at the all-ones mask.
  CHECK(res.best_objective == doctest::Approx(4.0).epsilon(1e-12));
  // Best-so-far sequence never increases.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : res.trace) {
    best = std::min(best, row.total);
    CHECK(row.total >= best);
  }
}

TEST_CASE("single-image masks: skip on misclassification, sparsity and determinism on a trained net") {
  const DatasetSplit split = generate_synthetic(3, 40, 15);
  TrainConfig tcfg;
  tcfg.epochs = 6;
  tcfg.batch_size = 32;
  tcfg.seed = 15;
  const Checkpoint ck = train(split, tcfg, nullptr);

  // A correctly classified validation image.
  int idx = -1;
  for (size_t i = 0; i < split.val.size(); ++i) {
    if (predict(ck, {split.val[i].pixels})[0] == split.val[i].label) {
      idx = int(i);
      break;
    }
  }
  REQUIRE(idx >= 0);
  const Grid& x = split.val[size_t(idx)].pixels;
  const int y = split.val[size_t(idx)].label;

  MaskLearnConfig cfg;
  cfg.seed = 21;
  cfg.max_iters = 1500;
  const auto res = learn_mask_single(ck, x, y, cfg);
  REQUIRE(res.has_value());

  // Prediction through the learned mask is preserved.
  CHECK(predict_masked(ck, {x}, res->mask)[0] == y);

  // Sparse: more than half of the entries at exact-zero scale.
  size_t zeros = 0;
  for (double v : res->mask.values) {
    if (std::abs(v) < 1e-8) ++zeros;
  }
  CHECK(double(zeros) / double(res->mask.values.size()) > 0.5);
  CHECK(res->mask.is_conjugate_tied());

  // Deterministic for a fixed (x, seed).
  const auto res2 = learn_mask_single(ck, x, y, cfg);
  REQUIRE(res2.has_value());
  CHECK(res2->mask.values == res->mask.values);

  // Misclassified input -> skip signal, not an error.
  const int wrong = (y + 1) % 3;
  CHECK_FALSE(learn_mask_single(ck, x, wrong, cfg).has_value());
}

TEST_CASE("SMSK files round-trip masks and metadata") {
  const fs::path dir = test_dir("smsk");
  Rng rng(7);
  const ConjugateTying tying = ConjugateTying::make(32);
  std::vector<double> params(size_t(tying.param_count));
  for (double& v : params) v = rng.uniform(-1.0, 1.0);
  const Mask m = tying.expand(params);

  MaskFileMeta meta;
  meta.lambda = 1e-3;
  meta.p = 1;
  meta.seed = 99;
  meta.source_checkpoint = "00ff00ff00ff00ff";
  meta.image_id = "42";
  meta.label = 3;
  meta.tag = "A";
  save_mask(dir / "m.smsk", m, meta);
  const auto [back, meta2] = load_mask(dir / "m.smsk");
  CHECK(back.values == m.values);
  CHECK(meta2.image_id == "42");
  CHECK(meta2.label == 3);
  CHECK(meta2.tag == "A");
  CHECK(meta2.lambda == 1e-3);
  CHECK(meta2.seed == 99);

  // save -> load -> save is byte-identical
  save_mask(dir / "m2.smsk", back, meta2);
  CHECK(io::read_bytes(dir / "m.smsk") == io::read_bytes(dir / "m2.smsk"));

  CHECK_THROWS_WITH_AS(deserialize_mask("XXXX"), doctest::Contains("magic"), std::runtime_error);

  const std::string csv = mask_to_csv(m);
  CHECK(csv.rfind("u,v,value\n", 0) == 0);
}

TEST_CASE("model tags map policies to the N/A/S/T/R vocabulary") {
  CHECK(model_tag(AugmentPolicy::parse("none")) == "N");
  CHECK(model_tag(AugmentPolicy::parse("adversarial eps=0.1 alpha=0.02 steps=10")) == "A");
  CHECK(model_tag(AugmentPolicy::parse("scale min=0.8 max=1.2")) == "S");
  CHECK(model_tag(AugmentPolicy::parse("translate max=4")) == "T");
  CHECK(model_tag(AugmentPolicy::parse("rotate max=30")) == "R");
}
