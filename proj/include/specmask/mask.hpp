#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "specmask/attack.hpp"
#include "specmask/checkpoint.hpp"
#include "specmask/grid.hpp"

namespace specmask {

/// Real d x d matrix of frequency modulation weights, stored in unshifted
/// frequency coordinates. Entries at conjugate-pair indices (u,v) and
/// ((-u) mod d, (-v) mod d) are tied (shared parameters), which keeps
/// filtered images real.
struct Mask {
  int d = 0;
  std::vector<double> values;

  Mask() = default;
  explicit Mask(int side, double fill = 0.0)
      : d(side), values(static_cast<size_t>(side) * side, fill) {}
  static Mask ones(int side) { return Mask(side, 1.0); }

  double& at(int u, int v) { return values[static_cast<size_t>(u) * d + v]; }
  double at(int u, int v) const { return values[static_cast<size_t>(u) * d + v]; }

  /// Exact conjugate-pair symmetry check.
  bool is_conjugate_tied() const;
  double norm_l1() const;
  double norm_l2() const;
};

/// Index map realizing the conjugate-pair parameter sharing: each grid cell
/// points at its canonical parameter; self-paired cells (the four where
/// (u,v) == (-u,-v) mod d) have multiplicity 1, all others 2.
struct ConjugateTying {
  int d = 0;
  int param_count = 0;
  std::vector<int> cell_to_param;      // d*d entries
  std::vector<int> param_multiplicity; // param_count entries
  std::vector<int> param_to_cell;      // canonical cell of each parameter

  static ConjugateTying make(int d);
  std::vector<double> collapse(const Mask& m) const;      // canonical entries
  Mask expand(const std::vector<double>& params) const;   // tied grid
};

/// x_bar = ifft2(M ⊙ fft2(x)). Input is a normalized image; the result is
/// real because of the mask symmetry invariant (the imaginary residue is
/// discarded, and is ~1e-13 for tied masks).
Grid mask_apply(const Grid& x_normalized, const Mask& m);

/// Binary mask selecting the suppressed frequencies: 1 where the entry is
/// below 1e-8, else 0.
Mask complementary_mask(const Mask& m);

struct MaskLearnConfig {
  double lambda = 1e-3;
  int p = 1;  // norm order, 1 or 2
  double lr = 1e-3;
  int max_iters = 2000;
  int batch_size = 32;
  uint64_t seed = 0;
  double tol = 1e-6;      // convergence: objective improvement threshold ...
  int patience = 50;      // ... over this many iterations
  double exp_clamp = 50.0;
  int eval_every = 10;    // full-objective evaluations (global scope)
  // Floor on the denominator of the proximal step (p=1). Caps the shrink
  // applied to coordinates whose invariance gradient has been silent at
  // lr/prox_floor per iteration.
  double prox_floor = 1e-3;
};

struct MaskObjectiveBreakdown {
  double total = 0.0;
  double invariance = 0.0;  // sum over the batch of exp((L(Phi(x_bar),y)-L(Phi(x),y))^2)
  double penalty = 0.0;     // lambda * ||M||_p
  int clamp_events = 0;
};

/// Loss-invariance objective on a batch of raw [0,1] images (normalized
/// internally with the checkpoint's stats). The baseline losses L(Phi(x),y)
/// are computed once and treated as constants.
MaskObjectiveBreakdown mask_objective(const Checkpoint& ck, const Mask& m,
                                      const std::vector<Grid>& xs_raw,
                                      const std::vector<int>& ys, const MaskLearnConfig& cfg);

/// Objective as a function of the tied parameter vector, with an optional
/// analytic gradient (including the penalty term); the surface checked by
/// the finite-difference oracle.
double mask_objective_theta(const Checkpoint& ck, const ConjugateTying& tying,
                            const std::vector<double>& theta, const std::vector<Grid>& xs_raw,
                            const std::vector<int>& ys, const MaskLearnConfig& cfg,
                            std::vector<double>* grad_out);

struct ObjectiveTraceRow {
  int iteration = 0;
  double total = 0.0;
  double invariance = 0.0;
  double penalty = 0.0;
};

struct MaskLearnResult {
  Mask mask;
  double best_objective = 0.0;
  int iterations = 0;
  int clamp_events = 0;
  bool converged = false;
  std::vector<ObjectiveTraceRow> trace;
};

/// Adam minimization of the objective over minibatches of the validation
/// set, starting from M ≡ 1; returns the mask at the minimum objective seen.
/// The l1 penalty is handled proximally (soft-thresholding with the
/// per-coordinate Adam step), which drives suppressed entries to exact zero;
/// p=2 differentiates the norm directly. Deterministic given cfg.seed.
MaskLearnResult learn_mask_global(const Checkpoint& ck, const std::vector<LabeledImage>& val,
                                  const MaskLearnConfig& cfg);

/// Single-image variant: batch = {(x,y)} every iteration. Returns nullopt
/// (skip) when the checkpoint misclassifies x.
std::optional<MaskLearnResult> learn_mask_single(const Checkpoint& ck, const Grid& x_raw, int y,
                                                 const MaskLearnConfig& cfg);

struct SingleMaskJob {
  int image_id = 0;
  int label = 0;
  bool skipped = false;
  MaskLearnResult result;
};

/// Embarrassingly parallel per-image mask learning; per-job seeds are
/// derive_seed(cfg.seed, image id), so results do not depend on the worker
/// count or scheduling.
std::vector<SingleMaskJob> learn_masks_for_images(const Checkpoint& ck,
                                                  const std::vector<LabeledImage>& images,
                                                  const MaskLearnConfig& cfg, int workers);

// ---- evaluation through a mask layer ---------------------------------------

/// Predictions of Phi(mask_apply(normalize(x), M)).
std::vector<int> predict_masked(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                                const Mask& m);
double masked_accuracy(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                       const std::vector<int>& ys, const Mask& m);
/// Per-image masks: masks[i] filters xs_raw[i].
double masked_accuracy_per_image(const Checkpoint& ck, const std::vector<Grid>& xs_raw,
                                 const std::vector<int>& ys, const std::vector<Mask>& masks);

// ---- SMSK file format -------------------------------------------------------

struct MaskFileMeta {
  double lambda = 0.0;
  int p = 1;
  uint64_t seed = 0;
  std::string source_checkpoint;  // content hash of the checkpoint file
  std::string image_id;           // decimal id, or "global"
  int label = -1;                 // -1 for global masks
  std::string tag;                // source model tag: N, A, S, T or R
};

/// SMSK container: magic "SMSK", version byte, d as 32-bit LE integer,
/// float64 LE values row-major (unshifted coordinates), trailing key=value
/// metadata block.
std::string serialize_mask(const Mask& m, const MaskFileMeta& meta);
std::pair<Mask, MaskFileMeta> deserialize_mask(const std::string& bytes);
void save_mask(const std::filesystem::path& path, const Mask& m, const MaskFileMeta& meta);
std::pair<Mask, MaskFileMeta> load_mask(const std::filesystem::path& path);

/// CSV export: header then one row per grid cell (u, v, value).
std::string mask_to_csv(const Mask& m);

/// Model tag letter for an augmentation policy (N/A/S/T/R).
std::string model_tag(const AugmentPolicy& policy);

}  // namespace specmask
