#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "redirtrans/geometry.hpp"
#include "redirtrans/graph.hpp"
#include "redirtrans/optim.hpp"

namespace rdt::redir {

// Latent-to-latent redirector. Each latent layer gets its own projector /
// deprojector pair:
//
//   project:    f_k -> pseudo labels (c1, c2) and embeddings (z1, z2)
//               label branch    D -> h_lab (leaky-relu) -> 4, pi/2 * tanh,
//                               split (gaze pitch, gaze yaw, head pitch, head yaw)
//               embedding branch D -> h_emb (leaky-relu) -> 96 linear,
//                               reshaped row-major into two [3,16] embeddings
//   normalize:  z_n = R(c_hat)^T z      (strips the estimated condition)
//   redirect:   z_t = R(c_target) z_n   (imposes the target condition)
//   deproject:  DP(vec z1 ++ vec z2): 96 -> h_dp (leaky-relu) -> D linear
//
// An edit replaces one attribute's embedding at a time and takes the residual
// against the untouched pair:
//
//   diff_i = DP(pair with only attribute i's embedding redirected) - DP(source pair)
//   f_hat  = f + sum over redirected attributes of diff_i            (flat)
//   f_hat_k = f_k + sum_i P_i[k] * diff_i_k                          (layerwise)
//
// Both attributes share one deprojector per layer, so a kept attribute
// contributes an exactly zero residual and redirecting to the layer's own
// estimated condition reproduces the input latent up to float rounding.
//
// Hidden sizes follow the input width: h_lab = D/2, h_emb = D, h_dp = 2D.
//
// Parameter names:
//   layer{k}/P/lab1_w, lab1_b, lab2_w, lab2_b     label branch
//   layer{k}/P/emb1_w, emb1_b, emb2_w, emb2_b     embedding branch
//   layer{k}/DP/fc1_w, fc1_b, fc2_w, fc2_b        deprojector
//   weights/attr1, weights/attr2                  layer weights (layerwise only)
//
// Flat mode treats the whole flattened latent as a single layer (K = 1,
// D = full latent dimension) and has no layer-weight vectors.

enum class Mode { kFlat, kLayerwise };

struct ModelShape {
    Mode mode = Mode::kLayerwise;
    int K = 6;   // layers seen by the redirector (1 in flat mode)
    int D = 64;  // width of one layer (full latent dim in flat mode)

    int h_lab() const { return D / 2; }
    int h_emb() const { return D; }
    int h_dp() const { return 2 * D; }
};

// Zero-initialized label and deprojector output layers make the initial model
// an exact identity edit (every residual difference cancels). The embedding
// output layer is NOT zeroed: with both the embedding output and the
// deprojector output at zero, every gradient into the editing path is
// identically zero and training can never leave the saddle, so the embedding
// branch starts at a small random scale instead.
ParamStore init_redirector(const ModelShape& shape, uint64_t seed);

// Shape of a parameter set produced by init_redirector (or a checkpoint of
// one). Throws std::invalid_argument on unrecognized layouts.
ModelShape infer_shape(const ParamStore& params);

// ---- per-attribute edit targets -----------------------------------------

// How one attribute is treated during an edit.
struct Target {
    enum Kind {
        kKeep,       // leave the embedding untouched
        kGlobal,     // redirect every layer to one condition node ([2])
        kSelfDelta,  // redirect each layer to its own estimate + delta ([2])
    } kind = kKeep;
    int node = -1;  // condition node for kGlobal, delta node for kSelfDelta

    static Target keep() { return {kKeep, -1}; }
    static Target global(int cond_node) { return {kGlobal, cond_node}; }
    static Target self_delta(int delta_node) { return {kSelfDelta, delta_node}; }
};

// ---- graph builders -------------------------------------------------------

struct ProjectNodes {
    std::array<int, 2> cond;  // [2] each: (pitch, yaw)
    std::array<int, 2> z;     // [3,16] each
};

ProjectNodes project_node(Graph& g, const std::map<std::string, int>& ids, int layer, int f);

int normalize_node(Graph& g, int z, int cond);     // R(cond)^T z
int redirect_node(Graph& g, int z_n, int cond_t);  // R(cond_t) z_n
int deproject_node(Graph& g, const std::map<std::string, int>& ids, int layer, int z1, int z2);

struct LayerForward {
    ProjectNodes proj;
    std::array<int, 2> z_norm;             // normalized embeddings [3,16]
    std::array<std::optional<int>, 2> diff;  // residual difference [D]; empty for kept attrs
    int f_hat;                             // edited layer [D]
};

// One layer's full edit. P scaling is applied by the caller (edit_latent)
// so the same forward serves flat and layerwise composition.
LayerForward edit_layer_node(Graph& g, const std::map<std::string, int>& ids, int layer, int f,
                             const std::array<Target, 2>& targets);

struct EditForward {
    int f_hat;                        // [K,D] layerwise, [D] flat
    std::vector<LayerForward> layers;  // size K
};

// Full edit of a latent node ([K,D] for layerwise, flattened for flat).
// `ids` must contain the redirector parameters (attach or attach_constants).
EditForward edit_latent(Graph& g, const std::map<std::string, int>& ids, const ModelShape& shape,
                        int latent, const std::array<Target, 2>& targets);

// ---- plain wrappers -------------------------------------------------------

// Redirect to absolute conditions. Attributes with std::nullopt are kept.
Tensor edit(const ParamStore& params, const Tensor& latent,
            const std::array<std::optional<geom::Condition>, 2>& targets);

// Redirect each attribute by a per-attribute offset relative to each layer's
// own estimated condition. A zero offset is an exact no-op.
Tensor edit_by(const ParamStore& params, const Tensor& latent,
               const std::array<std::optional<geom::Condition>, 2>& deltas);

// Per-layer pseudo labels, [K][attr].
std::vector<std::array<geom::Condition, 2>> self_estimates(const ParamStore& params,
                                                           const Tensor& latent);

// ---- baseline: global directions with a scale net -------------------------
//
// Four orthonormal directions in the flattened latent space plus a small
// perceptron mapping the 4 label deltas (target - estimate) to 4 scales:
//     f' = f + sum_j scale_j * dir_j
// Parameter names: baseline/dir ([N,4], directions as columns),
// baseline/s{1..4}_{w,b}. The scale net's output layer starts at zero, so the
// initial baseline is an exact identity.

ParamStore init_baseline(int latent_dim, uint64_t seed);
int baseline_edit_node(Graph& g, const std::map<std::string, int>& ids, int f_flat, int delta4);
Tensor baseline_edit(const ParamStore& params, const Tensor& latent_flat,
                     const std::array<geom::Condition, 2>& est,
                     const std::array<geom::Condition, 2>& target);

}  // namespace rdt::redir
