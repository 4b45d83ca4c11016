#include "redirtrans/redirector.hpp"

#include <cmath>
#include <stdexcept>

#include "redirtrans/rng.hpp"

namespace rdt::redir {

namespace {

constexpr double kHalfPi = 1.5707963267948966;

Tensor gaussian(std::vector<int> shape, double stddev, Rng rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, stddev));
    return t;
}

std::string lp(int k) { return "layer" + std::to_string(k) + "/P/"; }
std::string ldp(int k) { return "layer" + std::to_string(k) + "/DP/"; }

int id_of(const std::map<std::string, int>& ids, const std::string& name) {
    auto it = ids.find(name);
    if (it == ids.end()) throw GraphError("redirector: missing parameter '" + name + "'");
    return it->second;
}

}  // namespace

ParamStore init_redirector(const ModelShape& shape, uint64_t seed) {
    if (shape.D < 2 || shape.D % 2 != 0)
        throw std::invalid_argument("init_redirector: layer width must be even and >= 2");
    ParamStore p;
    for (int k = 0; k < shape.K; ++k) {
        auto tag = [&](const char* n) { return "redir/layer" + std::to_string(k) + "/" + n; };
        p.put(lp(k) + "lab1_w", gaussian({shape.h_lab(), shape.D}, std::sqrt(2.0 / shape.D),
                                         Rng::derive(seed, tag("lab1"))));
        p.put(lp(k) + "lab1_b", Tensor::zeros({shape.h_lab()}));
        p.put(lp(k) + "lab2_w", Tensor::zeros({4, shape.h_lab()}));
        p.put(lp(k) + "lab2_b", Tensor::zeros({4}));
        p.put(lp(k) + "emb1_w", gaussian({shape.h_emb(), shape.D}, std::sqrt(2.0 / shape.D),
                                         Rng::derive(seed, tag("emb1"))));
        p.put(lp(k) + "emb1_b", Tensor::zeros({shape.h_emb()}));
        p.put(lp(k) + "emb2_w", gaussian({96, shape.h_emb()}, std::sqrt(1.0 / shape.h_emb()),
                                         Rng::derive(seed, tag("emb2"))));
        p.put(lp(k) + "emb2_b", Tensor::zeros({96}));
        p.put(ldp(k) + "fc1_w", gaussian({shape.h_dp(), 96}, std::sqrt(2.0 / 96.0),
                                         Rng::derive(seed, tag("dp1"))));
        p.put(ldp(k) + "fc1_b", Tensor::zeros({shape.h_dp()}));
        p.put(ldp(k) + "fc2_w", Tensor::zeros({shape.D, shape.h_dp()}));
        p.put(ldp(k) + "fc2_b", Tensor::zeros({shape.D}));
    }
    if (shape.mode == Mode::kLayerwise) {
        p.put("weights/attr1", Tensor::full({shape.K}, 1.0f / static_cast<float>(shape.K)));
        p.put("weights/attr2", Tensor::full({shape.K}, 1.0f / static_cast<float>(shape.K)));
    }
    return p;
}

ModelShape infer_shape(const ParamStore& params) {
    ModelShape s;
    s.mode = params.has("weights/attr1") ? Mode::kLayerwise : Mode::kFlat;
    int k = 0;
    while (params.has(lp(k) + "lab1_w")) ++k;
    if (k == 0) throw std::invalid_argument("redirector: no layer parameters found");
    s.K = k;
    if (s.mode == Mode::kFlat && s.K != 1)
        throw std::invalid_argument("redirector: flat parameters must have exactly one layer");
    if (s.mode == Mode::kLayerwise &&
        (params.at("weights/attr1").numel() != s.K || !params.has("weights/attr2")))
        throw std::invalid_argument("redirector: layer weight vectors do not match layer count");
    s.D = params.at(lp(0) + "lab1_w").shape[1];
    static const char* needed[] = {"lab1_w", "lab1_b", "lab2_w", "lab2_b",
                                   "emb1_w", "emb1_b", "emb2_w", "emb2_b"};
    static const char* needed_dp[] = {"fc1_w", "fc1_b", "fc2_w", "fc2_b"};
    for (int i = 0; i < s.K; ++i) {
        for (const char* n : needed)
            if (!params.has(lp(i) + n))
                throw std::invalid_argument("redirector: missing " + lp(i) + n);
        for (const char* n : needed_dp)
            if (!params.has(ldp(i) + n))
                throw std::invalid_argument("redirector: missing " + ldp(i) + n);
        if (params.at(lp(i) + "lab1_w").shape[1] != s.D)
            throw std::invalid_argument("redirector: inconsistent layer widths");
    }
    return s;
}

ProjectNodes project_node(Graph& g, const std::map<std::string, int>& ids, int layer, int f) {
    std::string p = lp(layer);
    int lh = g.leaky_relu(g.add(g.matmul(id_of(ids, p + "lab1_w"), f), id_of(ids, p + "lab1_b")));
    int lab = g.scale(
        g.tanh_(g.add(g.matmul(id_of(ids, p + "lab2_w"), lh), id_of(ids, p + "lab2_b"))), kHalfPi);
    int eh = g.leaky_relu(g.add(g.matmul(id_of(ids, p + "emb1_w"), f), id_of(ids, p + "emb1_b")));
    int e = g.add(g.matmul(id_of(ids, p + "emb2_w"), eh), id_of(ids, p + "emb2_b"));
    ProjectNodes out;
    out.cond = {g.slice(lab, 0, 2), g.slice(lab, 2, 2)};
    out.z = {g.reshape(g.slice(e, 0, 48), {3, 16}), g.reshape(g.slice(e, 48, 48), {3, 16})};
    return out;
}

int normalize_node(Graph& g, int z, int cond) {
    return g.matmul(geom::rotation_nodes(g, cond).Rt, z);
}

int redirect_node(Graph& g, int z_n, int cond_t) {
    return g.matmul(geom::rotation_nodes(g, cond_t).R, z_n);
}

int deproject_node(Graph& g, const std::map<std::string, int>& ids, int layer, int z1, int z2) {
    std::string p = ldp(layer);
    int x = g.concat({g.reshape(z1, {48}), g.reshape(z2, {48})});
    int h = g.leaky_relu(g.add(g.matmul(id_of(ids, p + "fc1_w"), x), id_of(ids, p + "fc1_b")));
    return g.add(g.matmul(id_of(ids, p + "fc2_w"), h), id_of(ids, p + "fc2_b"));
}

LayerForward edit_layer_node(Graph& g, const std::map<std::string, int>& ids, int layer, int f,
                             const std::array<Target, 2>& targets) {
    LayerForward lf;
    lf.proj = project_node(g, ids, layer, f);
    std::array<int, 2> z_hat = {-1, -1};
    bool any = false;
    for (int i = 0; i < 2; ++i) {
        lf.z_norm[i] = normalize_node(g, lf.proj.z[i], lf.proj.cond[i]);
        if (targets[i].kind == Target::kKeep) continue;
        any = true;
        int cond_t = (targets[i].kind == Target::kGlobal)
                         ? targets[i].node
                         : g.add(lf.proj.cond[i], targets[i].node);
        z_hat[i] = redirect_node(g, lf.z_norm[i], cond_t);
    }
    lf.f_hat = f;
    if (!any) return lf;
    int src = deproject_node(g, ids, layer, lf.proj.z[0], lf.proj.z[1]);
    for (int i = 0; i < 2; ++i) {
        if (z_hat[i] < 0) continue;
        int rep = (i == 0) ? deproject_node(g, ids, layer, z_hat[0], lf.proj.z[1])
                           : deproject_node(g, ids, layer, lf.proj.z[0], z_hat[1]);
        lf.diff[i] = g.sub(rep, src);
        lf.f_hat = g.add(lf.f_hat, *lf.diff[i]);
    }
    return lf;
}

EditForward edit_latent(Graph& g, const std::map<std::string, int>& ids, const ModelShape& shape,
                        int latent, const std::array<Target, 2>& targets) {
    EditForward out;
    int n = g.value(latent).numel();
    if (n != shape.K * shape.D)
        throw GraphError("edit_latent: latent size " + std::to_string(n) + " does not match model");
    if (shape.mode == Mode::kFlat) {
        int f = g.reshape(latent, {shape.D});
        out.layers.push_back(edit_layer_node(g, ids, 0, f, targets));
        out.f_hat = out.layers[0].f_hat;
        return out;
    }
    int flat = g.reshape(latent, {n});
    std::array<int, 2> pw = {id_of(ids, "weights/attr1"), id_of(ids, "weights/attr2")};
    std::vector<int> rows;
    rows.reserve(shape.K);
    for (int k = 0; k < shape.K; ++k) {
        int f = g.slice(flat, k * shape.D, shape.D);
        LayerForward lf = edit_layer_node(g, ids, k, f, targets);
        int fh = f;
        for (int i = 0; i < 2; ++i) {
            if (!lf.diff[i]) continue;
            fh = g.add(fh, g.mul(*lf.diff[i], g.slice(pw[i], k, 1)));
        }
        lf.f_hat = fh;
        rows.push_back(fh);
        out.layers.push_back(lf);
    }
    out.f_hat = g.reshape(g.concat(rows), {shape.K, shape.D});
    return out;
}

namespace {

Tensor edit_impl(const ParamStore& params, const Tensor& latent,
                 const std::array<std::optional<geom::Condition>, 2>& conds, bool relative) {
    ModelShape shape = infer_shape(params);
    Graph g;
    auto ids = attach_constants(g, params);
    int l = g.constant(latent);
    std::array<Target, 2> targets = {Target::keep(), Target::keep()};
    for (int i = 0; i < 2; ++i) {
        if (!conds[i]) continue;
        int c = g.constant(Tensor::row({conds[i]->pitch, conds[i]->yaw}));
        targets[i] = relative ? Target::self_delta(c) : Target::global(c);
    }
    EditForward ef = edit_latent(g, ids, shape, l, targets);
    Tensor out = g.value(ef.f_hat);
    return Tensor(latent.shape, std::move(out.data));
}

}  // namespace

Tensor edit(const ParamStore& params, const Tensor& latent,
            const std::array<std::optional<geom::Condition>, 2>& targets) {
    return edit_impl(params, latent, targets, false);
}

Tensor edit_by(const ParamStore& params, const Tensor& latent,
               const std::array<std::optional<geom::Condition>, 2>& deltas) {
    return edit_impl(params, latent, deltas, true);
}

std::vector<std::array<geom::Condition, 2>> self_estimates(const ParamStore& params,
                                                           const Tensor& latent) {
    ModelShape shape = infer_shape(params);
    if (latent.numel() != shape.K * shape.D)
        throw std::invalid_argument("self_estimates: latent does not match model");
    Graph g;
    auto ids = attach_constants(g, params);
    int flat = g.reshape(g.constant(latent), {latent.numel()});
    std::vector<std::array<geom::Condition, 2>> out;
    out.reserve(shape.K);
    for (int k = 0; k < shape.K; ++k) {
        ProjectNodes pn = project_node(g, ids, k, g.slice(flat, k * shape.D, shape.D));
        std::array<geom::Condition, 2> c;
        for (int i = 0; i < 2; ++i) {
            const Tensor& v = g.value(pn.cond[i]);
            c[i] = {v.data[0], v.data[1]};
        }
        out.push_back(c);
    }
    return out;
}

ParamStore init_baseline(int latent_dim, uint64_t seed) {
    if (latent_dim < 4) throw std::invalid_argument("init_baseline: latent dim too small");
    // Four orthonormal columns via Gram-Schmidt on Gaussian draws.
    Tensor dir = Tensor::zeros({latent_dim, 4});
    Rng rng = Rng::derive(seed, "baseline/dir");
    std::vector<std::vector<double>> cols(4, std::vector<double>(latent_dim));
    for (int j = 0; j < 4; ++j) {
        for (int i = 0; i < latent_dim; ++i) cols[j][i] = rng.normal();
        for (int prev = 0; prev < j; ++prev) {
            double dot = 0.0;
            for (int i = 0; i < latent_dim; ++i) dot += cols[j][i] * cols[prev][i];
            for (int i = 0; i < latent_dim; ++i) cols[j][i] -= dot * cols[prev][i];
        }
        double norm = 0.0;
        for (int i = 0; i < latent_dim; ++i) norm += cols[j][i] * cols[j][i];
        norm = std::sqrt(norm);
        for (int i = 0; i < latent_dim; ++i) cols[j][i] /= norm;
        for (int i = 0; i < latent_dim; ++i) dir.at(i, j) = static_cast<float>(cols[j][i]);
    }
    ParamStore p;
    p.put("baseline/dir", std::move(dir));
    p.put("baseline/s1_w", gaussian({32, 4}, std::sqrt(2.0 / 4.0), Rng::derive(seed, "baseline/s1")));
    p.put("baseline/s1_b", Tensor::zeros({32}));
    p.put("baseline/s2_w", gaussian({64, 32}, std::sqrt(2.0 / 32.0), Rng::derive(seed, "baseline/s2")));
    p.put("baseline/s2_b", Tensor::zeros({64}));
    p.put("baseline/s3_w", gaussian({64, 64}, std::sqrt(2.0 / 64.0), Rng::derive(seed, "baseline/s3")));
    p.put("baseline/s3_b", Tensor::zeros({64}));
    p.put("baseline/s4_w", Tensor::zeros({4, 64}));
    p.put("baseline/s4_b", Tensor::zeros({4}));
    return p;
}

int baseline_edit_node(Graph& g, const std::map<std::string, int>& ids, int f_flat, int delta4) {
    int h1 = g.leaky_relu(
        g.add(g.matmul(id_of(ids, "baseline/s1_w"), delta4), id_of(ids, "baseline/s1_b")));
    int h2 = g.leaky_relu(
        g.add(g.matmul(id_of(ids, "baseline/s2_w"), h1), id_of(ids, "baseline/s2_b")));
    int h3 = g.leaky_relu(
        g.add(g.matmul(id_of(ids, "baseline/s3_w"), h2), id_of(ids, "baseline/s3_b")));
    int s = g.add(g.matmul(id_of(ids, "baseline/s4_w"), h3), id_of(ids, "baseline/s4_b"));
    return g.add(f_flat, g.matmul(id_of(ids, "baseline/dir"), s));
}

Tensor baseline_edit(const ParamStore& params, const Tensor& latent_flat,
                     const std::array<geom::Condition, 2>& est,
                     const std::array<geom::Condition, 2>& target) {
    Graph g;
    auto ids = attach_constants(g, params);
    int f = g.reshape(g.constant(latent_flat), {latent_flat.numel()});
    int d = g.constant(Tensor::row({target[0].pitch - est[0].pitch, target[0].yaw - est[0].yaw,
                                    target[1].pitch - est[1].pitch, target[1].yaw - est[1].yaw}));
    Tensor out = g.value(baseline_edit_node(g, ids, f, d));
    return Tensor(latent_flat.shape, std::move(out.data));
}

}  // namespace rdt::redir
