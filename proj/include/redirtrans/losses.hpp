#pragma once

#include <array>
#include <vector>

#include "redirtrans/geometry.hpp"
#include "redirtrans/graph.hpp"

namespace rdt::losses {

// Supervision terms for redirector training, as graph builders over nodes the
// caller has already assembled (rendered images, feature vectors, projector
// outputs). Reference inputs are expected to be constant nodes when they must
// stay gradient-free; the builders do not detach anything themselves.

struct Weights {
    double rec = 8.0;
    double perc = 8.0;
    double id = 5.0;
    double att = 1.0;
    double lab = 5.0;
    double emb = 2.0;
    double prob = 10.0;
};

struct Breakdown {
    double rec = 0.0;
    double perc = 0.0;
    double att = 0.0;
    double id = 0.0;
    double lab = 0.0;
    double emb = 0.0;
    double prob = 0.0;
    double total = 0.0;
};

// Euclidean norm of the elementwise difference. Used for both the pixel
// reconstruction term and the perceptual-feature term.
int rec_node(Graph& g, int a, int b);

// Sum over the two attributes of the angular error between 4-vector condition
// estimates (pitch1, yaw1, pitch2, yaw2).
int att_node(Graph& g, int est_hat, int est_ref);

// 1 - cosine similarity between feature vectors, clamped into [0, 2]. The
// norm product is floored at 1e-8 so zero features give 1 with no gradient
// blow-up.
int id_node(Graph& g, int feat_hat, int feat_ref);

// Sum over the two attributes of the angular error between estimated and
// reference conditions ([2] nodes each).
int label_node(Graph& g, const std::array<int, 2>& cond_hat, const std::array<int, 2>& cond_ref);

// One attribute's embedding-consistency term: mean angular distance between
// the first batch entry's normalized embedding and each later entry's, on
// flattened vectors. Throws GraphError if the batch has fewer than 2 entries.
int embed_node(Graph& g, const std::vector<int>& z_batch);

// 1 / max(e, 1e-3) per entry, as an f32 tensor. The clamp keeps the profile
// finite when a layer predicts its reference condition almost exactly.
Tensor reciprocal_profile(const std::vector<double>& errors);

// Angular distance between a layer-weight vector and a reference profile
// (typically a constant built by reciprocal_profile).
int layerweights_node(Graph& g, int p_vec, int profile);

// Term node ids; -1 marks a term that was not built.
struct Terms {
    int rec = -1;
    int perc = -1;
    int att = -1;
    int id = -1;
    int lab = -1;
    int emb = -1;
    int prob = -1;
};

// Weighted sum of the present terms. With layerwise = false the perc and prob
// contributions are dropped even if their nodes exist (they only supervise
// the multi-layer model). Throws std::invalid_argument on a negative weight.
int total_node(Graph& g, const Terms& t, const Weights& w, bool layerwise);

// Scalar values of the terms for logging; absent terms read as 0.
Breakdown read_terms(const Graph& g, const Terms& t, int total);

}  // namespace rdt::losses
