#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "redirtrans/optim.hpp"
#include "redirtrans/redirector.hpp"
#include "redirtrans/trainer.hpp"
#include "redirtrans/world.hpp"

namespace rdt::eval {

// Metric suite scoring a redirector against the world's ground truth with a
// held-out evaluation estimator (one never used during training). All
// functions are pure in their inputs: same checkpoint, testset and seed give
// bit-identical reports, and nothing is mutated.

constexpr double to_degrees(double radians) { return radians * 57.29577951308232; }

struct EvalReport {
    double gaze_redir_err = 0.0;    // radians; degrees via to_degrees
    double head_redir_err = 0.0;
    double gaze_induce_err = 0.0;   // gaze drift under a head-only edit
    double head_induce_err = 0.0;   // head drift under a gaze-only edit
    double perceptual_dist = 0.0;
    int n = 0;                      // per-sample measurements averaged
    uint64_t seed = 0;
};

// Pluggable edit for oracle baselines. Maps a source sample and absolute
// per-attribute targets to an edited latent.
using AbsoluteEdit =
    std::function<Tensor(const world::Sample&, const std::array<geom::Condition, 2>&)>;

// Same but relative: redirect one attribute by a delta, keep the other.
using RelativeEdit = std::function<Tensor(const world::Sample&, int attr, geom::Condition delta)>;

AbsoluteEdit redirector_edit(const ParamStore& params);
RelativeEdit redirector_edit_by(const ParamStore& params);

// Ground-truth edits through the world's injection structure.
AbsoluteEdit oracle_edit(const world::World& w);
RelativeEdit oracle_edit_by(const world::World& w);

// One per-pair audit row of eval_redirection.
struct RedirectionSample {
    int src = 0;
    int tgt = 0;
    double gaze_err = 0.0;
    double head_err = 0.0;
    double perc_dist = 0.0;
};

// Redirection protocol: within each identity group, sample j is redirected
// toward sample j+1 (cyclically), targets taken from the evaluation
// estimator's readings of the target image. The report compares the
// estimator's readings of the edited render against its readings of the
// target image, per attribute, plus the perceptual distance between the two
// images. Groups with a single sample are skipped; throws
// std::invalid_argument if no pair can be formed.
EvalReport eval_redirection(const AbsoluteEdit& edit, const world::World& w,
                            const world::Dataset& testset, const ParamStore& eval_est,
                            std::vector<RedirectionSample>* audit = nullptr);

EvalReport eval_redirection(const ParamStore& params, const world::World& w,
                            const world::Dataset& testset, const ParamStore& eval_est,
                            std::vector<RedirectionSample>* audit = nullptr);

// Disentanglement protocol: each sample is edited twice - gaze redirected by
// a random offset with head kept, and vice versa - with pitch and yaw offsets
// drawn independently from U(-0.1 pi, 0.1 pi). The induce error is the change
// in the evaluation estimator's reading of the untouched attribute between
// the original and edited renders.
EvalReport eval_disentanglement(const RelativeEdit& edit, const world::World& w,
                                const world::Dataset& testset, const ParamStore& eval_est,
                                uint64_t seed);

EvalReport eval_disentanglement(const ParamStore& params, const world::World& w,
                                const world::Dataset& testset, const ParamStore& eval_est,
                                uint64_t seed);

// How much of each attribute's layer-weight mass sits on the layers that
// actually carry that attribute. fraction_i = sum over planted layers of
// |P_i| divided by the total |P_i| mass; profile is |P_i| normalized to sum 1.
// Throws std::invalid_argument for flat-mode parameters.
struct LayerWeightReport {
    std::array<double, 2> planted_fraction = {0.0, 0.0};
    std::array<std::vector<double>, 2> profile;
};

LayerWeightReport eval_layer_weights(const ParamStore& params, const world::WorldSpec& spec);

// Redirect a latent to externally supplied reference conditions (the
// correction use-case: undo attribute drift using trusted labels).
Tensor correct(const ParamStore& params, const Tensor& latent,
               const std::array<geom::Condition, 2>& reference);

// Corruption-and-repair study: draw a fresh identity and conditions, corrupt
// the latent by moving its gaze injection to a random condition at least
// min_gap radians away (on-manifold by construction), then correct back to
// the true conditions. Errors are the evaluation estimator's gaze readings
// against the true gaze condition, before and after correction.
struct CorrectionOutcome {
    int trials = 0;
    int improved = 0;
    double mean_pre = 0.0;
    double mean_post = 0.0;
};

CorrectionOutcome run_correction_experiment(const ParamStore& params, const world::World& w,
                                            const ParamStore& eval_est, int trials, uint64_t seed,
                                            double min_gap = 0.1);

// Label-efficiency study for one labeled fraction q_percent:
//   1. keep the first q% of training identities as the labeled subset,
//   2. retrain the supervision estimator on that subset,
//   3. train a redirector on the subset with those pseudo labels,
//   4. train a downstream condition estimator on the subset alone ("raw")
//      and on the subset plus an equal count of redirected samples labeled
//      with their assigned conditions ("aug", twice the subset size),
//   5. report both downstream gaze errors on a fixed held-out set.
struct AugmentationConfig {
    int train_identities = 400;
    int per_identity = 4;
    int holdout_identities = 100;
    uint64_t seed = 11;
    world::EstimatorTrainConfig supervisor_cfg;  // step 2
    world::EstimatorTrainConfig downstream_cfg;  // step 4
    train::TrainConfig redir_cfg;                // step 3
};

struct AugmentationOutcome {
    int q = 0;
    int subset_size = 0;
    double raw_err = 0.0;
    double aug_err = 0.0;
};

AugmentationOutcome run_augmentation_experiment(const world::World& w, int q_percent,
                                                const AugmentationConfig& cfg);

}  // namespace rdt::eval
