#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "specmask/checkpoint.hpp"
#include "specmask/cli.hpp"
#include "specmask/fsio.hpp"
#include "specmask/mask.hpp"

using namespace specmask;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("specmask_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli_run({}) == 2);
  CHECK(cli_run({"frobnicate"}) == 2);
  CHECK(cli_run({"train", "--no-such-flag"}) == 2);
  CHECK(cli_run({"train"}) == 2);  // no dataset source
  CHECK(cli_run({"demo"}) == 2);   // demo needs a sub-subcommand
  CHECK(cli_run({"attack", "--checkpoint", "/nonexistent.smck", "--synthetic"}) != 0);
}

TEST_CASE("demo subcommands succeed and are deterministic") {
  const fs::path dir = test_dir("demo");
  const std::string out = (dir / "sinc").string();
  CHECK(cli_run({"demo", "sinc", "--a", "1", "--out", out}) == 0);
  const std::string first = io::read_bytes(dir / "sinc" / "sinc.csv");
  CHECK(cli_run({"demo", "sinc", "--a", "1", "--out", out}) == 0);
  CHECK(io::read_bytes(dir / "sinc" / "sinc.csv") == first);
  CHECK(first.find("gamma") == 0);
}

TEST_CASE("train subcommand writes a checkpoint with policy metadata; reruns are identical") {
  const fs::path dir = test_dir("train");
  const std::vector<std::string> args = {
      "train",        "--synthetic", "--classes", "3",  "--n-per-class", "20",
      "--epochs",     "1",           "--seed",    "7",  "--out",         (dir / "run").string(),
      "--name",       "tiny"};
  REQUIRE(cli_run(args) == 0);
  const fs::path ck_path = dir / "run" / "tiny.smck";
  REQUIRE(fs::exists(ck_path));
  const Checkpoint ck = Checkpoint::load(ck_path);
  CHECK(ck.augment.describe() == "none");
  CHECK(ck.best_epoch == 1);
  CHECK(ck.seed == 7);
  CHECK(fs::exists(dir / "run" / "training_log.csv"));
  CHECK(fs::exists(dir / "run" / "config_resolved.txt"));
  CHECK(fs::exists(dir / "run" / "manifest.json"));

  const std::string bytes = io::read_bytes(ck_path);
  REQUIRE(cli_run(args) == 0);
  CHECK(io::read_bytes(ck_path) == bytes);
}

TEST_CASE("train records the adversarial policy epsilon in metadata") {
  const fs::path dir = test_dir("train_adv");
  REQUIRE(cli_run({"train", "--synthetic", "--classes", "3", "--n-per-class", "10", "--epochs",
                   "1", "--seed", "3", "--augment", "adversarial", "--eps", "0.05", "--steps",
                   "2", "--out", (dir / "run").string()}) == 0);
  const Checkpoint ck = Checkpoint::load(dir / "run" / "model.smck");
  CHECK(ck.augment.kind == AugmentKind::adversarial);
  CHECK(ck.augment.eps == 0.05);
}

TEST_CASE("config files feed flags; unknown keys are rejected") {
  const fs::path dir = test_dir("config");
  io::atomic_write(dir / "good.cfg",
                   "synthetic=true\nclasses=3\nn-per-class=10\nepochs=1\nseed=5\n");
  REQUIRE(cli_run({"train", "--config", (dir / "good.cfg").string(), "--out",
                   (dir / "run").string()}) == 0);
  CHECK(fs::exists(dir / "run" / "model.smck"));
  // Explicit flags override config values.
  REQUIRE(cli_run({"train", "--config", (dir / "good.cfg").string(), "--seed", "9", "--out",
                   (dir / "run2").string()}) == 0);
  CHECK(Checkpoint::load(dir / "run2" / "model.smck").seed == 9);

  io::atomic_write(dir / "bad.cfg", "synthetic=true\nwombats=4\n");
  CHECK(cli_run({"train", "--config", (dir / "bad.cfg").string(), "--out",
                 (dir / "run3").string()}) == 2);
}

TEST_CASE("learn-mask with lambda 0 emits an all-ones global mask") {
  const fs::path dir = test_dir("mask_lambda0");
  REQUIRE(cli_run({"train", "--synthetic", "--classes", "3", "--n-per-class", "10", "--epochs",
                   "1", "--seed", "4", "--out", (dir / "train").string()}) == 0);
  REQUIRE(cli_run({"learn-mask", "--checkpoint", (dir / "train" / "model.smck").string(),
                   "--synthetic", "--classes", "3", "--n-per-class", "10", "--seed", "4",
                   "--scope", "global", "--lambda", "0", "--max-iters", "60", "--out",
                   (dir / "mask").string()}) == 0);
  const auto [mask, meta] = load_mask(dir / "mask" / "mask_global.smsk");
  for (double v : mask.values) CHECK(v == 1.0);
  CHECK(meta.image_id == "global");
  CHECK(meta.tag == "N");
}

TEST_CASE("learn-mask per-image writes one file per correct image and logs skips") {
  const fs::path dir = test_dir("mask_per_image");
  REQUIRE(cli_run({"train", "--synthetic", "--classes", "3", "--n-per-class", "20", "--epochs",
                   "3", "--seed", "6", "--out", (dir / "train").string()}) == 0);
  REQUIRE(cli_run({"learn-mask", "--checkpoint", (dir / "train" / "model.smck").string(),
                   "--synthetic", "--classes", "3", "--n-per-class", "20", "--seed", "6",
                   "--scope", "per-image", "--limit", "6", "--max-iters", "40", "--out",
                   (dir / "mask").string()}) == 0);
  size_t written = 0;
  for (const auto& e : fs::directory_iterator(dir / "mask" / "masks")) {
    if (e.path().extension() == ".smsk") ++written;
  }
  const std::string skips = io::read_bytes(dir / "mask" / "skips.csv");
  const size_t skipped = std::count(skips.begin(), skips.end(), '\n') - 1;  // header
  CHECK(written + skipped == 6);
}
