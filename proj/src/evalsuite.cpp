#include "redirtrans/evalsuite.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "redirtrans/rng.hpp"

namespace rdt::eval {

namespace {

constexpr double kDisentRange = 0.1 * 3.141592653589793;

double attr_error(const std::array<geom::Condition, 2>& a, const std::array<geom::Condition, 2>& b,
                  int attr) {
    return geom::condition_angular_error(a[attr], b[attr]);
}

}  // namespace

AbsoluteEdit redirector_edit(const ParamStore& params) {
    return [&params](const world::Sample& s, const std::array<geom::Condition, 2>& t) {
        return redir::edit(params, s.latent, {t[0], t[1]});
    };
}

RelativeEdit redirector_edit_by(const ParamStore& params) {
    return [&params](const world::Sample& s, int attr, geom::Condition delta) {
        std::array<std::optional<geom::Condition>, 2> deltas;
        deltas[attr] = delta;
        return redir::edit_by(params, s.latent, deltas);
    };
}

AbsoluteEdit oracle_edit(const world::World& w) {
    return [&w](const world::Sample& s, const std::array<geom::Condition, 2>& t) {
        return world::reinject_latent(w, s.latent, {s.gaze, s.head}, t);
    };
}

RelativeEdit oracle_edit_by(const world::World& w) {
    return [&w](const world::Sample& s, int attr, geom::Condition delta) {
        std::array<geom::Condition, 2> to = {s.gaze, s.head};
        to[attr].pitch += delta.pitch;
        to[attr].yaw += delta.yaw;
        return world::reinject_latent(w, s.latent, {s.gaze, s.head}, to);
    };
}

EvalReport eval_redirection(const AbsoluteEdit& edit, const world::World& w,
                            const world::Dataset& testset, const ParamStore& eval_est,
                            std::vector<RedirectionSample>* audit) {
    auto index = world::identity_index(testset);
    EvalReport rep;
    double gaze = 0.0, head = 0.0, perc = 0.0;
    for (const auto& [identity, group] : index) {
        if (group.size() < 2) continue;
        for (size_t j = 0; j < group.size(); ++j) {
            const world::Sample& src = testset.samples[group[j]];
            const world::Sample& tgt = testset.samples[group[(j + 1) % group.size()]];
            auto target_read = world::estimate(eval_est, tgt.image);
            Tensor latent_hat = edit(src, target_read);
            Tensor img_hat = world::render(w, latent_hat);
            auto hat_read = world::estimate(eval_est, img_hat);
            RedirectionSample row;
            row.src = group[j];
            row.tgt = group[(j + 1) % group.size()];
            row.gaze_err = attr_error(hat_read, target_read, 0);
            row.head_err = attr_error(hat_read, target_read, 1);
            row.perc_dist = world::perceptual_distance(w, img_hat, tgt.image);
            gaze += row.gaze_err;
            head += row.head_err;
            perc += row.perc_dist;
            ++rep.n;
            if (audit) audit->push_back(row);
        }
    }
    if (rep.n == 0) throw std::invalid_argument("eval_redirection: no same-identity pair in testset");
    rep.gaze_redir_err = gaze / rep.n;
    rep.head_redir_err = head / rep.n;
    rep.perceptual_dist = perc / rep.n;
    return rep;
}

EvalReport eval_redirection(const ParamStore& params, const world::World& w,
                            const world::Dataset& testset, const ParamStore& eval_est,
                            std::vector<RedirectionSample>* audit) {
    return eval_redirection(redirector_edit(params), w, testset, eval_est, audit);
}

EvalReport eval_disentanglement(const RelativeEdit& edit, const world::World& w,
                                const world::Dataset& testset, const ParamStore& eval_est,
                                uint64_t seed) {
    if (testset.samples.empty())
        throw std::invalid_argument("eval_disentanglement: empty testset");
    EvalReport rep;
    rep.seed = seed;
    double induced[2] = {0.0, 0.0};  // indexed by the attribute being measured
    for (size_t s = 0; s < testset.samples.size(); ++s) {
        const world::Sample& smp = testset.samples[s];
        auto base_read = world::estimate(eval_est, smp.image);
        for (int edited = 0; edited < 2; ++edited) {
            Rng rng = Rng::derive(seed, "eval/disent/s" + std::to_string(s) + "/a" +
                                            std::to_string(edited));
            geom::Condition delta;
            delta.pitch = static_cast<float>(rng.uniform(-kDisentRange, kDisentRange));
            delta.yaw = static_cast<float>(rng.uniform(-kDisentRange, kDisentRange));
            Tensor img_hat = world::render(w, edit(smp, edited, delta));
            auto hat_read = world::estimate(eval_est, img_hat);
            int measured = 1 - edited;
            induced[measured] += attr_error(hat_read, base_read, measured);
        }
        ++rep.n;
    }
    rep.gaze_induce_err = induced[0] / rep.n;
    rep.head_induce_err = induced[1] / rep.n;
    return rep;
}

EvalReport eval_disentanglement(const ParamStore& params, const world::World& w,
                                const world::Dataset& testset, const ParamStore& eval_est,
                                uint64_t seed) {
    return eval_disentanglement(redirector_edit_by(params), w, testset, eval_est, seed);
}

LayerWeightReport eval_layer_weights(const ParamStore& params, const world::WorldSpec& spec) {
    redir::ModelShape shape = redir::infer_shape(params);
    if (shape.mode != redir::Mode::kLayerwise)
        throw std::invalid_argument("eval_layer_weights: flat parameters have no layer weights");
    if (shape.K != spec.K)
        throw std::invalid_argument("eval_layer_weights: layer count does not match world");
    LayerWeightReport rep;
    for (int i = 0; i < 2; ++i) {
        const Tensor& p = params.at(i == 0 ? "weights/attr1" : "weights/attr2");
        double total = 0.0;
        for (float v : p.data) total += std::fabs(v);
        if (total == 0.0)
            throw std::invalid_argument("eval_layer_weights: all-zero weight vector");
        double planted = 0.0;
        for (int k : spec.layers_of(i)) planted += std::fabs(p.data[k]);
        rep.planted_fraction[i] = planted / total;
        rep.profile[i].resize(spec.K);
        for (int k = 0; k < spec.K; ++k) rep.profile[i][k] = std::fabs(p.data[k]) / total;
    }
    return rep;
}

Tensor correct(const ParamStore& params, const Tensor& latent,
               const std::array<geom::Condition, 2>& reference) {
    return redir::edit(params, latent, {reference[0], reference[1]});
}

CorrectionOutcome run_correction_experiment(const ParamStore& params, const world::World& w,
                                            const ParamStore& eval_est, int trials, uint64_t seed,
                                            double min_gap) {
    if (trials <= 0) throw std::invalid_argument("correction experiment: trials must be positive");
    CorrectionOutcome out;
    out.trials = trials;
    double r = w.spec.cond_range;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::derive(seed, "correct/trial" + std::to_string(t));
        Tensor f_id = world::sample_identity(w, rng);
        geom::Condition gaze{static_cast<float>(rng.uniform(-r, r)),
                             static_cast<float>(rng.uniform(-r, r))};
        geom::Condition head{static_cast<float>(rng.uniform(-r, r)),
                             static_cast<float>(rng.uniform(-r, r))};
        geom::Condition bad = gaze;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            bad.pitch = static_cast<float>(rng.uniform(-r, r));
            bad.yaw = static_cast<float>(rng.uniform(-r, r));
            if (geom::condition_angular_error(bad, gaze) >= min_gap) break;
        }
        Tensor corrupted = world::compose_latent(w, f_id, bad, head);
        auto pre_read = world::estimate(eval_est, world::render(w, corrupted));
        double pre = geom::condition_angular_error(pre_read[0], gaze);
        Tensor fixed = correct(params, corrupted, {gaze, head});
        auto post_read = world::estimate(eval_est, world::render(w, fixed));
        double post = geom::condition_angular_error(post_read[0], gaze);
        out.mean_pre += pre;
        out.mean_post += post;
        if (post < pre) ++out.improved;
    }
    out.mean_pre /= trials;
    out.mean_post /= trials;
    return out;
}

AugmentationOutcome run_augmentation_experiment(const world::World& w, int q_percent,
                                                const AugmentationConfig& cfg) {
    if (q_percent <= 0 || q_percent > 100)
        throw std::invalid_argument("augmentation: q_percent must be in (0, 100]");
    world::Dataset base =
        world::sample_dataset(w, cfg.train_identities, cfg.per_identity, cfg.seed);
    world::Dataset holdout =
        world::sample_dataset(w, cfg.holdout_identities, cfg.per_identity, cfg.seed + 1);

    int keep_identities = cfg.train_identities * q_percent / 100;
    if (keep_identities < 2) keep_identities = 2;
    world::Dataset subset;
    for (const world::Sample& s : base.samples)
        if (s.identity < static_cast<uint32_t>(keep_identities)) subset.samples.push_back(s);

    ParamStore supervisor =
        world::pretrain_estimator(w, subset, world::EstimatorArch::kTrain, cfg.supervisor_cfg);
    train::TrainResult redir_run = train::train(cfg.redir_cfg, w, subset, supervisor);

    ParamStore raw_est =
        world::pretrain_estimator(w, subset, world::EstimatorArch::kTrain, cfg.downstream_cfg);

    world::Dataset aug = subset;
    double r = w.spec.cond_range;
    for (size_t i = 0; i < subset.samples.size(); ++i) {
        Rng rng = Rng::derive(cfg.seed, "aug/assign/q" + std::to_string(q_percent) + "/" +
                                            std::to_string(i));
        const world::Sample& src = subset.samples[i];
        world::Sample gen;
        gen.identity = src.identity;
        gen.gaze = {static_cast<float>(rng.uniform(-r, r)), static_cast<float>(rng.uniform(-r, r))};
        gen.head = {static_cast<float>(rng.uniform(-r, r)), static_cast<float>(rng.uniform(-r, r))};
        gen.latent = redir::edit(redir_run.params, src.latent, {gen.gaze, gen.head});
        gen.image = world::render(w, gen.latent);
        aug.samples.push_back(std::move(gen));
    }
    ParamStore aug_est =
        world::pretrain_estimator(w, aug, world::EstimatorArch::kTrain, cfg.downstream_cfg);

    AugmentationOutcome out;
    out.q = q_percent;
    out.subset_size = static_cast<int>(subset.samples.size());
    out.raw_err = world::estimator_gaze_error(raw_est, holdout);
    out.aug_err = world::estimator_gaze_error(aug_est, holdout);
    return out;
}

}  // namespace rdt::eval
