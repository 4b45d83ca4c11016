#include "redirtrans/world.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rdt::world {

namespace {

constexpr double kHalfPi = 1.5707963267948966;

Tensor gaussian(std::vector<int> shape, double stddev, Rng rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, stddev));
    return t;
}

}  // namespace

World World::build(const WorldSpec& spec) {
    World w;
    w.spec = spec;
    uint64_t ms = spec.master_seed;
    int n = spec.latent_dim();
    int img = spec.image_dim();

    // Injection scale: conditions must dominate identity noise on the planted
    // layers, or no estimator (and in particular not the linear evaluation
    // one) can reach the accuracy the evaluation protocols assume. Entry
    // variance s^2/48 puts the per-coordinate injected signal at roughly s
    // standard deviations of the unit identity noise.
    constexpr double kInjectScale = 8.0;
    for (int i = 0; i < 2; ++i) {
        w.z0[i] = gaussian({3, 16}, 1.0, Rng::derive(ms, "world/embed/attr" + std::to_string(i + 1)));
        for (int k : spec.layers_of(i)) {
            if (k < 0 || k >= spec.K)
                throw std::invalid_argument("world: planted layer out of range");
            w.inject[i][k] = gaussian({spec.D, 48}, kInjectScale / std::sqrt(48.0),
                                      Rng::derive(ms, "world/inject/attr" + std::to_string(i + 1) +
                                                          "/layer" + std::to_string(k)));
        }
    }

    // Decoder scales are chosen for a recoverable map: unit-variance hidden
    // pre-activations, a positive hidden bias so the leaky-relu kink is rare
    // (the map stays smooth almost everywhere), and gentle pre-tanh spread so
    // saturation does not crush condition information. The output bias
    // cancels the bias-propagated mean so pixels stay centered.
    int planted = 0;
    for (int i = 0; i < 2; ++i) planted += static_cast<int>(spec.layers_of(i).size());
    double fvar = n + planted * spec.D * kInjectScale * kInjectScale;
    w.gen_w1 = gaussian({256, n}, 1.0 / std::sqrt(fvar), Rng::derive(ms, "world/gen/W1"));
    w.gen_b1 = gaussian({256}, 0.1, Rng::derive(ms, "world/gen/b1"));
    for (float& v : w.gen_b1.data) v += 3.0f;
    w.gen_w2 = gaussian({img, 256}, std::sqrt(0.5 / 256.0), Rng::derive(ms, "world/gen/W2"));
    w.gen_b2 = gaussian({img}, 0.05, Rng::derive(ms, "world/gen/b2"));
    for (int i = 0; i < img; ++i) {
        float acc = 0.0f;
        for (int j = 0; j < 256; ++j)
            acc += w.gen_w2.data[static_cast<size_t>(i) * 256 + j] * w.gen_b1.data[j];
        w.gen_b2.data[i] -= acc;
    }

    // Identity features mirror a pose-invariant face embedding: random rows
    // projected orthogonal to the decoder's first-order image response to
    // every planted rotation entry, so the feature reads identity rather than
    // conditions and preserving it does not fight redirection.
    w.id_map = gaussian({spec.id_feature_dim, img}, 1.0 / std::sqrt(static_cast<double>(img)),
                        Rng::derive(ms, "world/idmap"));
    {
        std::vector<std::vector<double>> basis;
        for (int i = 0; i < 2; ++i) {
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    // latent direction for rotation entry (r, c) of attribute i
                    std::vector<double> lat(n, 0.0);
                    for (const auto& [layer, m] : w.inject[i]) {
                        for (int d = 0; d < spec.D; ++d) {
                            double acc = 0.0;
                            for (int col = 0; col < 16; ++col)
                                acc += m.data[static_cast<size_t>(d) * 48 + r * 16 + col] *
                                       w.z0[i].at(c, col);
                            lat[static_cast<size_t>(layer) * spec.D + d] += acc;
                        }
                    }
                    std::vector<double> hid(256, 0.0);
                    for (int h = 0; h < 256; ++h) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j)
                            acc += w.gen_w1.data[static_cast<size_t>(h) * n + j] * lat[j];
                        hid[h] = acc;
                    }
                    std::vector<double> u(img, 0.0);
                    for (int p = 0; p < img; ++p) {
                        double acc = 0.0;
                        for (int h = 0; h < 256; ++h)
                            acc += w.gen_w2.data[static_cast<size_t>(p) * 256 + h] * hid[h];
                        u[p] = acc;
                    }
                    for (const auto& b : basis) {
                        double dot = 0.0;
                        for (int p = 0; p < img; ++p) dot += u[p] * b[p];
                        for (int p = 0; p < img; ++p) u[p] -= dot * b[p];
                    }
                    double nn = 0.0;
                    for (double v : u) nn += v * v;
                    if (nn < 1e-12) continue;
                    nn = std::sqrt(nn);
                    for (double& v : u) v /= nn;
                    basis.push_back(std::move(u));
                }
            }
        }
        for (int row = 0; row < spec.id_feature_dim; ++row) {
            float* mr = &w.id_map.data[static_cast<size_t>(row) * img];
            for (const auto& b : basis) {
                double dot = 0.0;
                for (int p = 0; p < img; ++p) dot += mr[p] * b[p];
                for (int p = 0; p < img; ++p) mr[p] = static_cast<float>(mr[p] - dot * b[p]);
            }
        }
    }

    w.perc_w1 = gaussian({8, 1, 3, 3}, 1.0 / 3.0, Rng::derive(ms, "world/perc/W1"));
    w.perc_b1 = Tensor::zeros({8});
    w.perc_w2 = gaussian({8, 8, 3, 3}, 1.0 / std::sqrt(72.0), Rng::derive(ms, "world/perc/W2"));
    w.perc_b2 = Tensor::zeros({8});
    return w;
}

Tensor sample_identity(const World& w, Rng& rng) {
    return gaussian({w.spec.K, w.spec.D}, 1.0, rng.split(0));
}

Tensor compose_latent(const World& w, const Tensor& f_id, const geom::Condition& gaze,
                      const geom::Condition& head) {
    if (f_id.shape != std::vector<int>{w.spec.K, w.spec.D})
        throw std::invalid_argument("compose_latent: identity latent has wrong shape");
    Tensor f = f_id;
    const geom::Condition conds[2] = {gaze, head};
    for (int i = 0; i < 2; ++i) {
        geom::Mat3 r = geom::rotation_from_condition(conds[i]);
        // vec(R * Z0), row-major [48]
        float v[48];
        for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 16; ++col) {
                float acc = 0.0f;
                for (int k = 0; k < 3; ++k) acc += r[row][k] * w.z0[i].at(k, col);
                v[row * 16 + col] = acc;
            }
        for (const auto& [layer, m] : w.inject[i]) {
            for (int d = 0; d < w.spec.D; ++d) {
                float acc = 0.0f;
                const float* mrow = &m.data[static_cast<size_t>(d) * 48];
                for (int j = 0; j < 48; ++j) acc += mrow[j] * v[j];
                f.at(layer, d) += acc;
            }
        }
    }
    return f;
}

Tensor reinject_latent(const World& w, const Tensor& latent,
                       const std::array<geom::Condition, 2>& from,
                       const std::array<geom::Condition, 2>& to) {
    if (latent.shape != std::vector<int>{w.spec.K, w.spec.D})
        throw std::invalid_argument("reinject_latent: latent has wrong shape");
    Tensor f = latent;
    for (int i = 0; i < 2; ++i) {
        const geom::Condition conds[2] = {from[i], to[i]};
        const float signs[2] = {-1.0f, 1.0f};
        for (int which = 0; which < 2; ++which) {
            geom::Mat3 r = geom::rotation_from_condition(conds[which]);
            float v[48];
            for (int row = 0; row < 3; ++row)
                for (int col = 0; col < 16; ++col) {
                    float acc = 0.0f;
                    for (int k = 0; k < 3; ++k) acc += r[row][k] * w.z0[i].at(k, col);
                    v[row * 16 + col] = acc;
                }
            for (const auto& [layer, m] : w.inject[i]) {
                for (int d = 0; d < w.spec.D; ++d) {
                    float acc = 0.0f;
                    const float* mrow = &m.data[static_cast<size_t>(d) * 48];
                    for (int j = 0; j < 48; ++j) acc += mrow[j] * v[j];
                    f.at(layer, d) += signs[which] * acc;
                }
            }
        }
    }
    return f;
}

Dataset sample_dataset(const World& w, int n_identities, int per_identity, uint64_t seed) {
    Dataset ds;
    ds.samples.reserve(static_cast<size_t>(n_identities) * per_identity);
    double r = w.spec.cond_range;
    for (int id = 0; id < n_identities; ++id) {
        Rng id_rng = Rng::derive(seed, "data/identity/" + std::to_string(id));
        Tensor f_id = sample_identity(w, id_rng);
        for (int s = 0; s < per_identity; ++s) {
            Rng c = Rng::derive(seed, "data/cond/" + std::to_string(id) + "/" + std::to_string(s));
            Sample smp;
            smp.identity = static_cast<uint32_t>(id);
            smp.gaze.pitch = static_cast<float>(c.uniform(-r, r));
            smp.gaze.yaw = static_cast<float>(c.uniform(-r, r));
            smp.head.pitch = static_cast<float>(c.uniform(-r, r));
            smp.head.yaw = static_cast<float>(c.uniform(-r, r));
            smp.latent = compose_latent(w, f_id, smp.gaze, smp.head);
            smp.image = render(w, smp.latent);
            ds.samples.push_back(std::move(smp));
        }
    }
    return ds;
}

std::map<uint32_t, std::vector<int>> identity_index(const Dataset& ds) {
    std::map<uint32_t, std::vector<int>> idx;
    for (size_t i = 0; i < ds.samples.size(); ++i)
        idx[ds.samples[i].identity].push_back(static_cast<int>(i));
    return idx;
}

int render_node(Graph& g, const World& w, int latent_flat) {
    int w1 = g.constant(w.gen_w1), b1 = g.constant(w.gen_b1);
    int w2 = g.constant(w.gen_w2), b2 = g.constant(w.gen_b2);
    int h = g.leaky_relu(g.add(g.matmul(w1, latent_flat), b1));
    return g.tanh_(g.add(g.matmul(w2, h), b2));
}

int identity_feature_node(Graph& g, const World& w, int image) {
    int m = g.matmul(g.constant(w.id_map), image);
    int inv = g.recip(g.clamp_min(g.l2norm(m), 1e-8));
    return g.mul(m, inv);
}

int perceptual_feature_node(Graph& g, const World& w, int image) {
    int side = w.spec.image_side;
    int x = g.reshape(image, {1, side, side});
    int c1 = g.leaky_relu(g.conv3x3(x, g.constant(w.perc_w1), g.constant(w.perc_b1)));
    int c2 = g.leaky_relu(g.conv3x3(c1, g.constant(w.perc_w2), g.constant(w.perc_b2)));
    return g.reshape(c2, {8 * side * side});
}

Tensor render(const World& w, const Tensor& latent) {
    Graph g;
    int l = g.constant(latent);
    return g.value(render_node(g, w, g.reshape(l, {latent.numel()})));
}

Tensor identity_features(const World& w, const Tensor& image) {
    Graph g;
    return g.value(identity_feature_node(g, w, g.constant(image)));
}

Tensor perceptual_features(const World& w, const Tensor& image) {
    Graph g;
    return g.value(perceptual_feature_node(g, w, g.constant(image)));
}

double perceptual_distance(const World& w, const Tensor& a, const Tensor& b) {
    Graph g;
    int fa = perceptual_feature_node(g, w, g.constant(a));
    int fb = perceptual_feature_node(g, w, g.constant(b));
    return g.value(g.l2norm(g.sub(fa, fb))).data[0];
}

ParamStore init_estimator(const World& w, EstimatorArch arch, uint64_t seed) {
    ParamStore p;
    int in = w.spec.image_dim();
    if (arch == EstimatorArch::kTrain) {
        p.put("est/w1", gaussian({128, in}, std::sqrt(2.0 / in), Rng::derive(seed, "est/w1")));
        p.put("est/b1", Tensor::zeros({128}));
        p.put("est/w2", gaussian({64, 128}, std::sqrt(2.0 / 128.0), Rng::derive(seed, "est/w2")));
        p.put("est/b2", Tensor::zeros({64}));
        p.put("est/w3", gaussian({4, 64}, std::sqrt(1.0 / 64.0), Rng::derive(seed, "est/w3")));
        p.put("est/b3", Tensor::zeros({4}));
    } else {
        p.put("est/w1", gaussian({4, in}, std::sqrt(1.0 / in), Rng::derive(seed, "est/w1")));
        p.put("est/b1", Tensor::zeros({4}));
    }
    return p;
}

EstimatorArch estimator_arch(const ParamStore& est) {
    if (est.has("est/w3")) return EstimatorArch::kTrain;
    if (est.has("est/w1") && est.at("est/w1").shape[0] == 4) return EstimatorArch::kEval;
    throw std::invalid_argument("estimator checkpoint has unrecognized layout");
}

int estimator_node(Graph& g, const std::map<std::string, int>& ids, int image) {
    auto id_of = [&](const char* n) {
        auto it = ids.find(n);
        if (it == ids.end()) throw GraphError(std::string("estimator: missing parameter ") + n);
        return it->second;
    };
    int pre;
    if (ids.count("est/w3")) {
        int h1 = g.leaky_relu(g.add(g.matmul(id_of("est/w1"), image), id_of("est/b1")));
        int h2 = g.leaky_relu(g.add(g.matmul(id_of("est/w2"), h1), id_of("est/b2")));
        pre = g.add(g.matmul(id_of("est/w3"), h2), id_of("est/b3"));
    } else {
        pre = g.add(g.matmul(id_of("est/w1"), image), id_of("est/b1"));
    }
    return g.scale(g.tanh_(pre), kHalfPi);
}

std::array<geom::Condition, 2> estimate(const ParamStore& est, const Tensor& image) {
    Graph g;
    auto ids = attach_constants(g, est);
    const Tensor& out = g.value(estimator_node(g, ids, g.constant(image)));
    return {geom::Condition{out.data[0], out.data[1]}, geom::Condition{out.data[2], out.data[3]}};
}

ParamStore pretrain_estimator(const World& w, const Dataset& train, EstimatorArch arch,
                              const EstimatorTrainConfig& cfg) {
    if (train.samples.empty())
        throw std::invalid_argument("pretrain_estimator: empty training set");
    ParamStore est = init_estimator(w, arch, cfg.seed);
    AdamState adam;
    int n = static_cast<int>(train.samples.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr * std::pow(cfg.decay, epoch);
        Rng shuf = Rng::derive(cfg.seed, "est/shuffle/epoch" + std::to_string(epoch));
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(shuf.below(static_cast<uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < n; start += cfg.batch) {
            int bs = std::min(cfg.batch, n - start);
            Graph g;
            auto ids = est.attach(g);
            std::vector<int> errs;
            errs.reserve(bs);
            for (int b = 0; b < bs; ++b) {
                const Sample& s = train.samples[order[start + b]];
                int out = estimator_node(g, ids, g.constant(s.image));
                int truth = g.constant(
                    Tensor::row({s.gaze.pitch, s.gaze.yaw, s.head.pitch, s.head.yaw}));
                int e = g.add(geom::condition_error_node(g, g.slice(out, 0, 2), g.slice(truth, 0, 2)),
                              geom::condition_error_node(g, g.slice(out, 2, 2), g.slice(truth, 2, 2)));
                errs.push_back(e);
            }
            int loss = g.mean(g.concat(errs));
            GradMap grads = g.forward_backward(loss);
            clip_grad_norm(grads, cfg.clip_norm);
            adam_step(est, grads, adam, lr);
        }
    }
    return est;
}

double estimator_error(const ParamStore& est, const Dataset& ds) {
    double acc = 0.0;
    for (const Sample& s : ds.samples) {
        auto e = estimate(est, s.image);
        acc += 0.5 * (geom::condition_angular_error(e[0], s.gaze) +
                      geom::condition_angular_error(e[1], s.head));
    }
    return acc / static_cast<double>(ds.samples.size());
}

double estimator_gaze_error(const ParamStore& est, const Dataset& ds) {
    double acc = 0.0;
    for (const Sample& s : ds.samples)
        acc += geom::condition_angular_error(estimate(est, s.image)[0], s.gaze);
    return acc / static_cast<double>(ds.samples.size());
}

// ---- dataset i/o --------------------------------------------------------

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error(std::string("dataset: truncated reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is, const char* what) {
    uint32_t v = get_u32(is, what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds, const WorldSpec& spec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");
    os.write("RDTD", 4);
    put_u32(os, 1);
    put_u32(os, static_cast<uint32_t>(ds.samples.size()));
    for (const Sample& s : ds.samples) {
        if (s.latent.numel() != spec.latent_dim() || s.image.numel() != spec.image_dim())
            throw std::runtime_error("dataset: sample does not match world dimensions");
        put_u32(os, s.identity);
        put_f32(os, s.gaze.pitch);
        put_f32(os, s.gaze.yaw);
        put_f32(os, s.head.pitch);
        put_f32(os, s.head.yaw);
        for (float v : s.latent.data) put_f32(os, v);
        for (float v : s.image.data) put_f32(os, v);
    }
    if (!os) throw std::runtime_error("dataset: write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path, const WorldSpec& spec) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RDTD", 4) != 0)
        throw std::runtime_error("dataset: bad magic in '" + path + "'");
    uint32_t version = get_u32(is, "version");
    if (version != 1)
        throw std::runtime_error("dataset: unsupported version " + std::to_string(version));
    uint32_t count = get_u32(is, "count");
    Dataset ds;
    ds.samples.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Sample s;
        s.identity = get_u32(is, "identity");
        s.gaze.pitch = get_f32(is, "gaze pitch");
        s.gaze.yaw = get_f32(is, "gaze yaw");
        s.head.pitch = get_f32(is, "head pitch");
        s.head.yaw = get_f32(is, "head yaw");
        s.latent = Tensor::zeros({spec.K, spec.D});
        for (float& v : s.latent.data) v = get_f32(is, "latent");
        s.image = Tensor::zeros({spec.image_dim()});
        for (float& v : s.image.data) v = get_f32(is, "image");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace rdt::world
