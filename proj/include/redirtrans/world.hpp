#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "redirtrans/geometry.hpp"
#include "redirtrans/graph.hpp"
#include "redirtrans/optim.hpp"
#include "redirtrans/rng.hpp"

namespace rdt::world {

// The synthetic world: a latent space with known planted structure and a
// frozen differentiable decoder, so that every evaluation has ground truth.
//
// A latent is a [K, D] matrix of layers. Gaze information lives only in
// gaze_layers, head orientation only in head_layers: layer k of an identity's
// latent is
//
//   f[k] = f_id[k] + sum over planted attributes i with k in layers(i) of
//          inject[i][k] * vec(R(c_i) * Z0_i)
//
// where Z0_i is a fixed canonical [3,16] embedding, R the rotation for that
// attribute's condition, and inject[i][k] a fixed [D,48] mixing matrix.
// The remaining layers carry identity only.
struct WorldSpec {
    int K = 6;
    int D = 64;
    int image_side = 32;
    std::vector<int> gaze_layers = {0, 1};
    std::vector<int> head_layers = {2, 3};
    float cond_range = 0.4f;  // conditions are uniform in [-cond_range, cond_range]
    int id_feature_dim = 32;
    uint64_t master_seed = 1;

    int latent_dim() const { return K * D; }
    int image_dim() const { return image_side * image_side; }
    const std::vector<int>& layers_of(int attr) const {
        return attr == 0 ? gaze_layers : head_layers;
    }
};

// Frozen world weights. Everything derives deterministically from the spec,
// so a World never needs to be serialized: regenerating from the same spec
// gives bit-identical weights.
struct World {
    WorldSpec spec;

    std::array<Tensor, 2> z0;                        // canonical embeddings [3,16]
    std::array<std::map<int, Tensor>, 2> inject;     // per planted layer [D,48]

    Tensor gen_w1, gen_b1, gen_w2, gen_b2;           // decoder latent -> image
    Tensor id_map;                                   // identity feature map
    Tensor perc_w1, perc_b1, perc_w2, perc_b2;       // perceptual conv stack

    static World build(const WorldSpec& spec);
};

struct Sample {
    uint32_t identity = 0;
    geom::Condition gaze, head;
    Tensor latent;  // [K, D]
    Tensor image;   // [image_side^2]
};

struct Dataset {
    std::vector<Sample> samples;
};

// Identity base latent, entries N(0,1). The conditions later planted on top
// of it come from compose_latent.
Tensor sample_identity(const World& w, Rng& rng);

Tensor compose_latent(const World& w, const Tensor& f_id, const geom::Condition& gaze,
                      const geom::Condition& head);

// Exact ground-truth edit: remove the attribute injections at the `from`
// conditions and add them back at `to`. Because injection is additive,
// reinject(compose(f_id, a, b), {a, b}, {c, d}) == compose(f_id, c, d) up to
// float rounding, with no access to f_id needed. Serves as the oracle edit
// for evaluation baselines and as the on-manifold corruption in the
// correction experiment.
Tensor reinject_latent(const World& w, const Tensor& latent,
                       const std::array<geom::Condition, 2>& from,
                       const std::array<geom::Condition, 2>& to);

// n_identities x per_identity samples; conditions uniform per attribute and
// axis. All draws derive from (seed, purpose tag), so the same call is
// reproducible and independent of evaluation order.
Dataset sample_dataset(const World& w, int n_identities, int per_identity, uint64_t seed);

std::map<uint32_t, std::vector<int>> identity_index(const Dataset& ds);

// ---- graph builders ---------------------------------------------------

// Frozen decoder: flattened latent -> leaky-relu hidden (256) -> tanh image.
int render_node(Graph& g, const World& w, int latent_flat);

// Identity feature: fixed random linear map, then L2 normalization.
int identity_feature_node(Graph& g, const World& w, int image);

// Perceptual feature: two frozen 3x3 conv layers (1 -> 8 -> 8 channels),
// leaky-relu after each, flattened.
int perceptual_feature_node(Graph& g, const World& w, int image);

// ---- plain wrappers (forward through a throwaway graph) ---------------

Tensor render(const World& w, const Tensor& latent);
Tensor identity_features(const World& w, const Tensor& image);
Tensor perceptual_features(const World& w, const Tensor& image);
double perceptual_distance(const World& w, const Tensor& a, const Tensor& b);

// ---- condition estimators ----------------------------------------------

enum class EstimatorArch {
    kTrain,  // image -> 128 -> 64 -> 4, leaky-relu hidden, pi/2 * tanh output
    kEval,   // image -> 4 linear, pi/2 * tanh output
};

ParamStore init_estimator(const World& w, EstimatorArch arch, uint64_t seed);
EstimatorArch estimator_arch(const ParamStore& est);

// [4] output node: (gaze pitch, gaze yaw, head pitch, head yaw), each in
// (-pi/2, pi/2). `ids` maps estimator parameter names to graph node ids
// (from ParamStore::attach for training or attach_constants for frozen use).
int estimator_node(Graph& g, const std::map<std::string, int>& ids, int image);

// Plain readings of one image: {gaze, head}.
std::array<geom::Condition, 2> estimate(const ParamStore& est, const Tensor& image);

struct EstimatorTrainConfig {
    int epochs = 16;
    int batch = 32;
    double lr = 1e-3;
    double decay = 0.75;  // per-epoch lr factor; the angular loss keeps
                          // unit-scale gradients near the optimum, so the
                          // final error floor tracks the final lr
    double clip_norm = 10.0;
    uint64_t seed = 7;
};

// Adam on summed angular error of both attributes. Returns the trained
// parameters; use estimator_error for held-out evaluation.
ParamStore pretrain_estimator(const World& w, const Dataset& train, EstimatorArch arch,
                              const EstimatorTrainConfig& cfg);

// Mean over samples and attributes of the angular error of est's readings.
double estimator_error(const ParamStore& est, const Dataset& ds);
// Same, gaze attribute only (used by the augmentation study).
double estimator_gaze_error(const ParamStore& est, const Dataset& ds);

// ---- dataset file format ------------------------------------------------
//
// Binary, little-endian:
//   magic "RDTD", version u32 (1), count u32, then per sample:
//     identity u32,
//     conditions f32 x 4 (gaze pitch, gaze yaw, head pitch, head yaw),
//     latent f32 x K*D (row-major),
//     image f32 x image_side^2.
// Layout depends on the world's K, D and image_side, which the reader takes
// from the WorldSpec.

void write_dataset(const std::string& path, const Dataset& ds, const WorldSpec& spec);
Dataset read_dataset(const std::string& path, const WorldSpec& spec);

}  // namespace rdt::world
