#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "redirtrans/losses.hpp"
#include "redirtrans/optim.hpp"
#include "redirtrans/redirector.hpp"
#include "redirtrans/world.hpp"

namespace rdt::train {

// Redirector training on same-identity (source, target) pairs drawn from a
// frozen world, supervised by a frozen condition estimator. The forward pass
// per pair: project the source latent, normalize by the projector's own
// estimates, redirect to the target conditions, deproject, compose the edited
// latent, render, then apply the loss suite against the target image.
//
// Label sources:
//   kTruth  - target conditions and label references are the dataset's ground
//             truth (mirrors training directly in a known latent space).
//   kPseudo - both come from the frozen estimator's readings of the rendered
//             images, so training never touches ground-truth labels.

struct TrainConfig {
    redir::Mode mode = redir::Mode::kLayerwise;
    enum class Labels { kTruth, kPseudo };
    Labels label_source = Labels::kPseudo;
    int batch_size = 2;  // (source, target) pairs per step; >= 2 for the embedding term
    int epochs = 20;  // layer weights drift at roughly the Adam step size per iteration, so they need the longer run to concentrate
    double lr0 = 1e-4;
    double decay = 0.8;
    int decay_every = 3000;
    double clip_norm = 10.0;
    losses::Weights weights;
    uint64_t seed = 1;
    int eval_every = 2000;  // periodic-eval cadence in iterations; 0 disables

    void validate() const;  // throws std::invalid_argument
};

// lr0 * decay^floor(iteration / decay_every).
double lr_schedule(const TrainConfig& cfg, long iteration);

struct Pair {
    int src = 0;
    int tgt = 0;
};

// One epoch's pair list: every sample appears once as a source, in shuffled
// order, paired with a uniformly drawn other sample of the same identity.
// Both draws derive from (seed, epoch), so the schedule is reproducible.
std::vector<Pair> epoch_pairs(const world::Dataset& ds, uint64_t seed, int epoch);

// Per-sample values that stay fixed all run (frozen networks, frozen data):
// the estimator's 4-vector reading of the rendered image and the identity
// feature. Filled lazily, keyed by sample index.
struct SampleCache {
    std::vector<Tensor> est4;
    std::vector<Tensor> idfeat;
};

struct StepResult {
    losses::Breakdown loss;
    double grad_norm = 0.0;  // pre-clip global norm
};

// One optimization step on a batch of pairs. Mutates params and adam.
// Throws std::invalid_argument on a mixed-identity pair or a batch smaller
// than 2, GraphError if a non-finite value appears.
StepResult train_step(const TrainConfig& cfg, const world::World& w,
                      const ParamStore& estimator, const world::Dataset& ds,
                      const std::vector<Pair>& batch, ParamStore& params, AdamState& adam,
                      double lr, SampleCache& cache);

// Periodic evaluation callback: trained-so-far params -> (gaze, head)
// redirection errors in radians. Wired up by the caller so the trainer does
// not depend on the evaluation suite.
using EvalFn = std::function<std::array<double, 2>(const ParamStore&)>;

struct EvalPoint {
    long iteration = 0;
    double gaze_err = 0.0;
    double head_err = 0.0;
};

struct TrainResult {
    ParamStore params;
    std::vector<losses::Breakdown> log;  // one entry per iteration
    std::vector<EvalPoint> eval_log;
};

// Full run: init, epochs of train_step, CSV logs, final checkpoint.
// If out_dir is non-empty it must exist; the run writes train_log.csv
// (columns iteration,lr,rec,perc,att,id,lab,emb,prob,total - one row per
// iteration), eval_log.csv (iteration,gaze_redir_err,head_redir_err), and
// redirector.rdtc there. eval_fn, when set, runs before the first step, every
// eval_every iterations, and after the last step.
TrainResult train(const TrainConfig& cfg, const world::World& w, const world::Dataset& ds,
                  const ParamStore& estimator, const std::string& out_dir = "",
                  const EvalFn& eval_fn = nullptr);

}  // namespace rdt::train
