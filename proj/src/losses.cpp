#include "redirtrans/losses.hpp"

#include <stdexcept>

namespace rdt::losses {

int rec_node(Graph& g, int a, int b) { return g.l2norm(g.sub(a, b)); }

int att_node(Graph& g, int est_hat, int est_ref) {
    int e1 = geom::condition_error_node(g, g.slice(est_hat, 0, 2), g.slice(est_ref, 0, 2));
    int e2 = geom::condition_error_node(g, g.slice(est_hat, 2, 2), g.slice(est_ref, 2, 2));
    return g.add(e1, e2);
}

int id_node(Graph& g, int feat_hat, int feat_ref) {
    int dot = g.sum(g.mul(feat_hat, feat_ref));
    int denom = g.clamp_min(g.mul(g.l2norm(feat_hat), g.l2norm(feat_ref)), 1e-8);
    int cs = g.mul(dot, g.recip(denom));
    return g.clamp_min(g.sub(g.constant(Tensor::scalar(1.0f)), cs), 0.0);
}

int label_node(Graph& g, const std::array<int, 2>& cond_hat, const std::array<int, 2>& cond_ref) {
    return g.add(geom::condition_error_node(g, cond_hat[0], cond_ref[0]),
                 geom::condition_error_node(g, cond_hat[1], cond_ref[1]));
}

int embed_node(Graph& g, const std::vector<int>& z_batch) {
    int b = static_cast<int>(z_batch.size());
    if (b < 2) throw GraphError("embed_node: batch must have at least 2 entries");
    auto flat = [&](int z) { return g.reshape(z, {g.value(z).numel()}); };
    int first = flat(z_batch[0]);
    int acc = -1;
    for (int j = 1; j < b; ++j) {
        int d = geom::angular_distance_node(g, first, flat(z_batch[j]));
        acc = (acc < 0) ? d : g.add(acc, d);
    }
    return g.scale(acc, 1.0 / (b - 1));
}

Tensor reciprocal_profile(const std::vector<double>& errors) {
    Tensor t = Tensor::zeros({static_cast<int>(errors.size())});
    for (size_t i = 0; i < errors.size(); ++i) {
        double e = errors[i] < 1e-3 ? 1e-3 : errors[i];
        t.data[i] = static_cast<float>(1.0 / e);
    }
    return t;
}

int layerweights_node(Graph& g, int p_vec, int profile) {
    return geom::angular_distance_node(g, p_vec, profile);
}

int total_node(Graph& g, const Terms& t, const Weights& w, bool layerwise) {
    const double weights[] = {w.rec, w.perc, w.att, w.id, w.lab, w.emb, w.prob};
    const int nodes[] = {t.rec, t.perc, t.att, t.id, t.lab, t.emb, t.prob};
    const bool active[] = {true, layerwise, true, true, true, true, layerwise};
    for (double lw : weights)
        if (lw < 0.0) throw std::invalid_argument("loss weights must be non-negative");
    int acc = -1;
    for (int i = 0; i < 7; ++i) {
        if (nodes[i] < 0 || !active[i]) continue;
        int term = g.scale(nodes[i], weights[i]);
        acc = (acc < 0) ? term : g.add(acc, term);
    }
    return acc < 0 ? g.constant(Tensor::scalar(0.0f)) : acc;
}

Breakdown read_terms(const Graph& g, const Terms& t, int total) {
    auto val = [&](int n) { return n < 0 ? 0.0 : static_cast<double>(g.value(n).data[0]); };
    Breakdown b;
    b.rec = val(t.rec);
    b.perc = val(t.perc);
    b.att = val(t.att);
    b.id = val(t.id);
    b.lab = val(t.lab);
    b.emb = val(t.emb);
    b.prob = val(t.prob);
    b.total = val(total);
    return b;
}

}  // namespace rdt::losses
