#include "redirtrans/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "redirtrans/checkpoint.hpp"
#include "redirtrans/rng.hpp"

namespace rdt::train {

void TrainConfig::validate() const {
    if (batch_size < 2)
        throw std::invalid_argument("train: batch_size must be >= 2 (embedding term needs a batch)");
    if (decay <= 0.0 || decay > 1.0) throw std::invalid_argument("train: decay must be in (0,1]");
    if (decay_every <= 0) throw std::invalid_argument("train: decay_every must be positive");
    if (lr0 <= 0.0) throw std::invalid_argument("train: lr0 must be positive");
    if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
    if (clip_norm <= 0.0) throw std::invalid_argument("train: clip_norm must be positive");
    if (eval_every < 0) throw std::invalid_argument("train: eval_every must be non-negative");
}

double lr_schedule(const TrainConfig& cfg, long iteration) {
    if (iteration < 0) throw std::invalid_argument("lr_schedule: negative iteration");
    return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(iteration / cfg.decay_every));
}

std::vector<Pair> epoch_pairs(const world::Dataset& ds, uint64_t seed, int epoch) {
    int n = static_cast<int>(ds.samples.size());
    auto index = world::identity_index(ds);
    std::string e = std::to_string(epoch);
    Rng shuffle_rng = Rng::derive(seed, "train/shuffle/epoch" + e);
    Rng pair_rng = Rng::derive(seed, "train/pair/epoch" + e);

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    std::vector<Pair> pairs;
    pairs.reserve(n);
    for (int src : order) {
        const auto& group = index.at(ds.samples[src].identity);
        if (group.size() < 2)
            throw std::invalid_argument("epoch_pairs: identity " +
                                        std::to_string(ds.samples[src].identity) +
                                        " has a single sample, cannot form a pair");
        int pick = static_cast<int>(pair_rng.below(group.size() - 1));
        int tgt = group[pick];
        if (tgt == src) tgt = group[group.size() - 1];
        pairs.push_back({src, tgt});
    }
    return pairs;
}

namespace {

void ensure_cached(SampleCache& cache, const world::World& w, const ParamStore& estimator,
                   const world::Dataset& ds, int idx) {
    size_t n = ds.samples.size();
    if (cache.est4.size() != n) {
        cache.est4.assign(n, Tensor());
        cache.idfeat.assign(n, Tensor());
    }
    if (cache.est4[idx].numel() != 0) return;
    const world::Sample& s = ds.samples[idx];
    auto est = world::estimate(estimator, s.image);
    cache.est4[idx] =
        Tensor::row({est[0].pitch, est[0].yaw, est[1].pitch, est[1].yaw});
    cache.idfeat[idx] = world::identity_features(w, s.image);
}

int batch_mean(Graph& g, const std::vector<int>& scalars) {
    return scalars.size() == 1 ? scalars[0] : g.mean(g.concat(scalars));
}

geom::Condition cond_from4(const Tensor& t, int attr) {
    return {t.data[attr * 2], t.data[attr * 2 + 1]};
}

}  // namespace

StepResult train_step(const TrainConfig& cfg, const world::World& w, const ParamStore& estimator,
                      const world::Dataset& ds, const std::vector<Pair>& batch, ParamStore& params,
                      AdamState& adam, double lr, SampleCache& cache) {
    int b = static_cast<int>(batch.size());
    if (b < 2) throw std::invalid_argument("train_step: batch must contain at least 2 pairs");
    redir::ModelShape shape = redir::infer_shape(params);
    if (shape.mode != cfg.mode)
        throw std::invalid_argument("train_step: config mode does not match parameter layout");
    bool layerwise = cfg.mode == redir::Mode::kLayerwise;
    bool pseudo = cfg.label_source == TrainConfig::Labels::kPseudo;

    for (const Pair& p : batch) {
        if (ds.samples[p.src].identity != ds.samples[p.tgt].identity)
            throw std::invalid_argument("train_step: pair mixes identities");
        ensure_cached(cache, w, estimator, ds, p.src);
        ensure_cached(cache, w, estimator, ds, p.tgt);
    }

    Graph g;
    auto ids = params.attach(g);
    auto eids = attach_constants(g, estimator);

    std::vector<int> recs, percs, atts, idss, labs;
    // z_norm node per (attribute, layer, batch entry), for the consistency term
    std::vector<std::array<std::vector<int>, 2>> znorm(shape.K);
    // per (attribute, layer) sums of source label errors, for the weight term
    std::vector<std::array<double, 2>> label_err(shape.K, {0.0, 0.0});

    for (const Pair& p : batch) {
        const world::Sample& src = ds.samples[p.src];
        const world::Sample& tgt = ds.samples[p.tgt];

        geom::Condition ct_gaze = pseudo ? cond_from4(cache.est4[p.tgt], 0) : tgt.gaze;
        geom::Condition ct_head = pseudo ? cond_from4(cache.est4[p.tgt], 1) : tgt.head;
        int ct_gaze_n = g.constant(Tensor::row({ct_gaze.pitch, ct_gaze.yaw}));
        int ct_head_n = g.constant(Tensor::row({ct_head.pitch, ct_head.yaw}));

        int latent = g.constant(src.latent);
        redir::EditForward ef = redir::edit_latent(
            g, ids, shape, latent,
            {redir::Target::global(ct_gaze_n), redir::Target::global(ct_head_n)});

        int img_hat = world::render_node(g, w, g.reshape(ef.f_hat, {w.spec.latent_dim()}));
        recs.push_back(losses::rec_node(g, img_hat, g.constant(tgt.image)));
        if (layerwise) {
            int feat_hat = world::perceptual_feature_node(g, w, img_hat);
            int feat_ref = g.constant(world::perceptual_features(w, tgt.image));
            percs.push_back(losses::rec_node(g, feat_hat, feat_ref));
        }
        atts.push_back(losses::att_node(g, world::estimator_node(g, eids, img_hat),
                                        g.constant(cache.est4[p.tgt])));
        idss.push_back(losses::id_node(g, world::identity_feature_node(g, w, img_hat),
                                       g.constant(cache.idfeat[p.src])));

        geom::Condition ref_gaze = pseudo ? cond_from4(cache.est4[p.src], 0) : src.gaze;
        geom::Condition ref_head = pseudo ? cond_from4(cache.est4[p.src], 1) : src.head;
        int ref_gaze_n = g.constant(Tensor::row({ref_gaze.pitch, ref_gaze.yaw}));
        int ref_head_n = g.constant(Tensor::row({ref_head.pitch, ref_head.yaw}));
        std::vector<int> per_layer_lab;
        per_layer_lab.reserve(shape.K);
        for (int k = 0; k < shape.K; ++k) {
            const redir::LayerForward& lf = ef.layers[k];
            per_layer_lab.push_back(
                losses::label_node(g, lf.proj.cond, {ref_gaze_n, ref_head_n}));
            for (int i = 0; i < 2; ++i) {
                znorm[k][i].push_back(lf.z_norm[i]);
                const Tensor& chat = g.value(lf.proj.cond[i]);
                label_err[k][i] += geom::condition_angular_error(
                    {chat.data[0], chat.data[1]}, i == 0 ? ref_gaze : ref_head);
            }
        }
        labs.push_back(batch_mean(g, per_layer_lab));
    }

    losses::Terms terms;
    terms.rec = batch_mean(g, recs);
    if (layerwise) terms.perc = batch_mean(g, percs);
    terms.att = batch_mean(g, atts);
    terms.id = batch_mean(g, idss);
    terms.lab = batch_mean(g, labs);

    for (int i = 0; i < 2; ++i) {
        std::vector<int> per_layer;
        per_layer.reserve(shape.K);
        for (int k = 0; k < shape.K; ++k) per_layer.push_back(losses::embed_node(g, znorm[k][i]));
        int e = batch_mean(g, per_layer);
        terms.emb = terms.emb < 0 ? e : g.add(terms.emb, e);
    }

    if (layerwise) {
        for (int i = 0; i < 2; ++i) {
            std::vector<double> errs(shape.K);
            for (int k = 0; k < shape.K; ++k) errs[k] = label_err[k][i] / b;
            int profile = g.constant(losses::reciprocal_profile(errs));
            int p_vec = ids.at(i == 0 ? "weights/attr1" : "weights/attr2");
            int term = losses::layerweights_node(g, p_vec, profile);
            terms.prob = terms.prob < 0 ? term : g.add(terms.prob, term);
        }
    }

    int total = losses::total_node(g, terms, cfg.weights, layerwise);
    GradMap grads = g.forward_backward(total);
    StepResult out;
    out.grad_norm = clip_grad_norm(grads, cfg.clip_norm);
    adam_step(params, grads, adam, lr);
    out.loss = losses::read_terms(g, terms, total);
    return out;
}

namespace {

void write_train_row(std::ofstream& f, long it, double lr, const losses::Breakdown& b) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", it, lr,
                  b.rec, b.perc, b.att, b.id, b.lab, b.emb, b.prob, b.total);
    f << buf;
}

void write_eval_row(std::ofstream& f, const EvalPoint& p) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g\n", p.iteration, p.gaze_err, p.head_err);
    f << buf;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const world::World& w, const world::Dataset& ds,
                  const ParamStore& estimator, const std::string& out_dir, const EvalFn& eval_fn) {
    cfg.validate();
    if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");

    redir::ModelShape shape;
    shape.mode = cfg.mode;
    if (cfg.mode == redir::Mode::kLayerwise) {
        shape.K = w.spec.K;
        shape.D = w.spec.D;
    } else {
        shape.K = 1;
        shape.D = w.spec.latent_dim();
    }

    TrainResult res;
    res.params = redir::init_redirector(shape, cfg.seed);
    AdamState adam;
    SampleCache cache;

    std::ofstream train_csv, eval_csv;
    if (!out_dir.empty()) {
        train_csv.open(out_dir + "/train_log.csv", std::ios::trunc);
        eval_csv.open(out_dir + "/eval_log.csv", std::ios::trunc);
        if (!train_csv || !eval_csv)
            throw std::runtime_error("train: cannot write logs under " + out_dir);
        train_csv << "iteration,lr,rec,perc,att,id,lab,emb,prob,total\n";
        eval_csv << "iteration,gaze_redir_err,head_redir_err\n";
    }

    auto run_eval = [&](long it) {
        if (!eval_fn) return;
        auto e = eval_fn(res.params);
        EvalPoint p{it, e[0], e[1]};
        res.eval_log.push_back(p);
        if (eval_csv.is_open()) write_eval_row(eval_csv, p);
    };

    run_eval(0);
    long it = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<Pair> pairs = epoch_pairs(ds, cfg.seed, epoch);
        for (size_t off = 0; off + 2 <= pairs.size(); off += cfg.batch_size) {
            size_t end = std::min(off + cfg.batch_size, pairs.size());
            if (end - off < 2) break;
            std::vector<Pair> batch(pairs.begin() + off, pairs.begin() + end);
            double lr = lr_schedule(cfg, it);
            StepResult step;
            try {
                step = train_step(cfg, w, estimator, ds, batch, res.params, adam, lr, cache);
            } catch (const GraphError& e) {
                throw GraphError("iteration " + std::to_string(it) + ": " + e.what());
            }
            res.log.push_back(step.loss);
            if (train_csv.is_open()) write_train_row(train_csv, it, lr, step.loss);
            ++it;
            if (cfg.eval_every > 0 && it % cfg.eval_every == 0) run_eval(it);
        }
    }
    if (res.eval_log.empty() || res.eval_log.back().iteration != it) run_eval(it);

    if (!out_dir.empty()) save_checkpoint(out_dir + "/redirector.rdtc", res.params);
    return res;
}

}  // namespace rdt::train
