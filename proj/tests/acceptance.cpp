// Acceptance gate: ten end-to-end checks against the shipped configuration,
// one [PASS]/[FAIL] line each, nonzero exit if any fail. Artifacts land in
// ./acceptance_run. Checks 4-9 chain: the supervision estimator trained in
// check 4 supervises the training run of check 5, whose parameters feed the
// disentanglement, layer-weight and correction checks.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "redirtrans/checkpoint.hpp"
#include "redirtrans/checks.hpp"
#include "redirtrans/evalsuite.hpp"
#include "redirtrans/latent_io.hpp"
#include "redirtrans/runcfg.hpp"

using namespace rdt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string strf(const char* fmt, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    return std::string(buf);
}

struct Gate {
    int passed = 0;
    int failed = 0;
    void line(int id, const char* label, bool ok, const std::string& detail) {
        std::printf("[%s] %2d %-24s %s\n", ok ? "PASS" : "FAIL", id, label, detail.c_str());
        std::fflush(stdout);
        (ok ? passed : failed) += 1;
    }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
    return m;
}

void perturb(ParamStore& params, uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : params.items)
        for (float& v : t.data) v += 0.05f * float(rng.normal());
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return "<unreadable:" + path + ">";
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

int main() {
    Gate gate;
    fs::create_directories("acceptance_run");

    // Shared state chained between checks.
    cfg::Config desk = cfg::Config::parse_file(REPO_DIR "/configs/desk.cfg");
    world::WorldSpec spec = cfg::world_spec(desk);
    cfg::DatasetKeys train_keys = cfg::dataset_keys(desk, "data", 200, 4, 200);
    train::TrainConfig tcfg = cfg::train_config(desk);
    desk.get_str("train.estimator", "");  // consumed; this run trains its own
    desk.reject_unknown();
    world::World w = world::World::build(spec);

    std::optional<ParamStore> supervisor;  // from check 4
    std::optional<ParamStore> eval_est;    // held-out-architecture estimator
    std::optional<ParamStore> trained;     // from check 5
    world::Dataset eval_ds = world::sample_dataset(w, 100, 4, 201);

    // 1. Redirecting every layer to its own estimated conditions returns the
    //    input latent.
    try {
        auto t0 = Clock::now();
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            redir::ModelShape shape;
            shape.K = spec.K;
            shape.D = spec.D;
            ParamStore params = redir::init_redirector(shape, 1000 + uint64_t(i));
            perturb(params, 2000 + uint64_t(i));
            Rng rng(3000 + uint64_t(i));
            Tensor latent = Tensor::zeros({spec.K, spec.D});
            for (float& v : latent.data) v = float(rng.normal());
            Tensor out = redir::edit_by(params, latent,
                                        {geom::Condition{0, 0}, geom::Condition{0, 0}});
            worst = std::max(worst, max_abs_diff(out, latent));
        }
        double el = secs_since(t0);
        gate.line(1, "self-redirection no-op", worst < 1e-5 && el < 5.0,
                  strf("max deviation %.2e (limit 1e-05) over 100 models, %.1fs (limit 5s)",
                       worst, el));
    } catch (const std::exception& e) {
        gate.line(1, "self-redirection no-op", false, e.what());
    }

    // 2. Rotation algebra: orthonormality, determinant, exact identity at
    //    zero, and re-redirection consistency on embeddings.
    try {
        auto t0 = Clock::now();
        Rng rng(7);
        double worst_orth = 0.0, worst_det = 0.0;
        for (int i = 0; i < 1000; ++i) {
            geom::Condition c{float((rng.uniform01() - 0.5) * kPi * 0.98),
                              float((rng.uniform01() - 0.5) * kPi * 0.98)};
            geom::Mat3 R = geom::rotation_from_condition(c);
            geom::Mat3 G = geom::matmul(geom::transpose(R), R);
            for (int r = 0; r < 3; ++r)
                for (int cc = 0; cc < 3; ++cc)
                    worst_orth = std::max(
                        worst_orth, std::abs(double(G[r][cc]) - (r == cc ? 1.0 : 0.0)));
            double det = double(R[0][0]) * (double(R[1][1]) * R[2][2] - double(R[1][2]) * R[2][1]) -
                         double(R[0][1]) * (double(R[1][0]) * R[2][2] - double(R[1][2]) * R[2][0]) +
                         double(R[0][2]) * (double(R[1][0]) * R[2][1] - double(R[1][1]) * R[2][0]);
            worst_det = std::max(worst_det, std::abs(det - 1.0));
        }
        geom::Mat3 I0 = geom::rotation_from_condition({0.0f, 0.0f});
        bool exact_id = true;
        for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc)
                exact_id = exact_id && I0[r][cc] == (r == cc ? 1.0f : 0.0f);
        double worst_trip = 0.0;
        for (int i = 0; i < 200; ++i) {
            Graph g;
            Tensor z = Tensor::zeros({3, 16});
            for (float& v : z.data) v = float(rng.normal());
            int c1 = g.constant(Tensor::row({float((rng.uniform01() - 0.5) * 0.8),
                                             float((rng.uniform01() - 0.5) * 0.8)}));
            int c2 = g.constant(Tensor::row({float((rng.uniform01() - 0.5) * 0.8),
                                             float((rng.uniform01() - 0.5) * 0.8)}));
            int at_c1 = redir::redirect_node(g, g.constant(z), c1);
            int round = redir::redirect_node(g, redir::normalize_node(g, at_c1, c2), c2);
            worst_trip = std::max(worst_trip, max_abs_diff(g.value(round), g.value(at_c1)));
        }
        double el = secs_since(t0);
        bool ok = worst_orth < 1e-6 && worst_det < 1e-6 && exact_id &&
                  worst_trip < 1e-5 && el < 5.0;
        gate.line(2, "rotation algebra", ok,
                  strf("orthonormality %.2e, det %.2e (limits 1e-06), zero-angle %s, "
                       "re-redirection %.2e (limit 1e-05), %.1fs (limit 5s)",
                       worst_orth, worst_det, exact_id ? "exact" : "INEXACT", worst_trip, el));
    } catch (const std::exception& e) {
        gate.line(2, "rotation algebra", false, e.what());
    }

    // 3. Finite-difference gradient verification of every op and loss term.
    try {
        auto t0 = Clock::now();
        std::vector<checks::CheckResult> results = checks::gradcheck_battery(7, 100);
        double worst = checks::worst_rel_err(results);
        std::string worst_name = "none";
        for (const checks::CheckResult& r : results)
            if (r.max_rel_err == worst) worst_name = r.name;
        double el = secs_since(t0);
        gate.line(3, "gradient correctness", worst < 1e-4 && el < 60.0,
                  strf("%zu entries, worst %.2e at %s (limit 1e-04), %.1fs (limit 60s)",
                       results.size(), worst, worst_name.c_str(), el));
    } catch (const std::exception& e) {
        gate.line(3, "gradient correctness", false, e.what());
    }

    // 4. Supervision estimator pretraining per the shipped config.
    try {
        auto t0 = Clock::now();
        cfg::Config ec = cfg::Config::parse_file(REPO_DIR "/configs/estimator.cfg");
        world::WorldSpec espec = cfg::world_spec(ec);
        cfg::DatasetKeys dk = cfg::dataset_keys(ec, "data", 2000, 4, 100);
        cfg::DatasetKeys hk = cfg::dataset_keys(ec, "holdout", 500, 4, 101);
        std::string arch = ec.get_str("estimator.arch", "train");
        world::EstimatorTrainConfig ecfg = cfg::estimator_config(ec, "estimator");
        ec.reject_unknown();
        world::World ew = world::World::build(espec);
        world::Dataset etrain = cfg::materialize_dataset(dk, ew);
        world::Dataset ehold = cfg::materialize_dataset(hk, ew);
        ParamStore est = world::pretrain_estimator(
            ew, etrain,
            arch == "eval" ? world::EstimatorArch::kEval : world::EstimatorArch::kTrain, ecfg);
        double err = world::estimator_error(est, ehold);
        save_checkpoint("acceptance_run/supervisor.rdtc", est);
        supervisor = std::move(est);
        double el = secs_since(t0);
        gate.line(4, "estimator pretraining", err < 0.05 && el < 300.0,
                  strf("%zu train / %zu holdout samples, holdout error %.4f rad "
                       "(limit 0.05), %.0fs (limit 300s)",
                       etrain.samples.size(), ehold.samples.size(), err, el));
    } catch (const std::exception& e) {
        gate.line(4, "estimator pretraining", false, e.what());
    }

    // 5. End-to-end redirection after the shipped training run, scored by an
    //    estimator of a different architecture and seed, never used above.
    try {
        auto t0 = Clock::now();
        if (!supervisor) throw std::runtime_error("no supervision estimator (check 4 failed)");
        cfg::Config vc = cfg::Config::parse_file(REPO_DIR "/configs/eval-estimator.cfg");
        world::WorldSpec vspec = cfg::world_spec(vc);
        cfg::DatasetKeys vdk = cfg::dataset_keys(vc, "data", 2000, 4, 100);
        cfg::DatasetKeys vhk = cfg::dataset_keys(vc, "holdout", 500, 4, 101);
        std::string varch = vc.get_str("estimator.arch", "eval");
        world::EstimatorTrainConfig vcfg = cfg::estimator_config(vc, "estimator");
        vc.reject_unknown();
        world::World vw = world::World::build(vspec);
        ParamStore ve = world::pretrain_estimator(
            vw, cfg::materialize_dataset(vdk, vw),
            varch == "eval" ? world::EstimatorArch::kEval : world::EstimatorArch::kTrain, vcfg);
        double ve_err = world::estimator_error(ve, cfg::materialize_dataset(vhk, vw));
        save_checkpoint("acceptance_run/eval_estimator.rdtc", ve);
        eval_est = std::move(ve);

        redir::ModelShape shape;
        shape.mode = tcfg.mode;
        if (tcfg.mode == redir::Mode::kLayerwise) {
            shape.K = spec.K;
            shape.D = spec.D;
        } else {
            shape.K = 1;
            shape.D = spec.latent_dim();
        }
        ParamStore untrained = redir::init_redirector(shape, tcfg.seed);
        eval::EvalReport before = eval::eval_redirection(untrained, w, eval_ds, *eval_est);

        world::Dataset train_ds = cfg::materialize_dataset(train_keys, w);
        fs::create_directories("acceptance_run/train");
        train::TrainResult res =
            train::train(tcfg, w, train_ds, *supervisor, "acceptance_run/train");
        eval::EvalReport after = eval::eval_redirection(res.params, w, eval_ds, *eval_est);
        trained = std::move(res.params);

        double el = secs_since(t0);
        bool ok = after.gaze_redir_err < 0.15 && after.head_redir_err < 0.15 &&
                  after.gaze_redir_err < before.gaze_redir_err / 3.0 && el < 600.0;
        gate.line(5, "end-to-end redirection", ok,
                  strf("gaze %.4f, head %.4f rad (limits 0.15), untrained gaze %.4f "
                       "(need < 1/3), scorer holdout %.4f, %.0fs (limit 600s)",
                       after.gaze_redir_err, after.head_redir_err, before.gaze_redir_err,
                       ve_err, el));
    } catch (const std::exception& e) {
        gate.line(5, "end-to-end redirection", false, e.what());
    }

    // 6. Editing one attribute leaves the other attribute's reading in place.
    try {
        if (!trained || !eval_est) throw std::runtime_error("no trained model (check 5 failed)");
        eval::EvalReport r = eval::eval_disentanglement(*trained, w, eval_ds, *eval_est, 5);
        bool ok = r.gaze_induce_err < 0.08 && r.head_induce_err < 0.08;
        gate.line(6, "disentanglement", ok,
                  strf("induced gaze %.4f, head %.4f rad over %d samples (limits 0.08)",
                       r.gaze_induce_err, r.head_induce_err, r.n));
    } catch (const std::exception& e) {
        gate.line(6, "disentanglement", false, e.what());
    }

    // 7. Layer weights concentrate on the layers that carry each attribute.
    try {
        if (!trained) throw std::runtime_error("no trained model (check 5 failed)");
        eval::LayerWeightReport r = eval::eval_layer_weights(*trained, w.spec);
        bool ok = r.planted_fraction[0] >= 0.70 && r.planted_fraction[1] >= 0.70;
        gate.line(7, "layer-weight recovery", ok,
                  strf("planted mass gaze %.3f, head %.3f (floor 0.70, uniform start 0.333)",
                       r.planted_fraction[0], r.planted_fraction[1]));
    } catch (const std::exception& e) {
        gate.line(7, "layer-weight recovery", false, e.what());
    }

    // 8. Redirected samples used as extra labeled data help a downstream
    //    estimator at every labeled fraction, and more labels help the raw
    //    baseline monotonically.
    try {
        auto t0 = Clock::now();
        eval::AugmentationConfig acfg;
        acfg.redir_cfg.epochs = 6;
        acfg.redir_cfg.eval_every = 0;
        std::string rows;
        bool aug_ok = true, mono_ok = true;
        double prev_raw = 1e9;
        std::ofstream csv("acceptance_run/augment.csv", std::ios::trunc);
        csv << "q,subset_size,raw_err,aug_err\n";
        for (int q : {25, 50, 75}) {
            eval::AugmentationOutcome r = eval::run_augmentation_experiment(w, q, acfg);
            aug_ok = aug_ok && r.aug_err <= r.raw_err;
            mono_ok = mono_ok && r.raw_err < prev_raw;
            prev_raw = r.raw_err;
            rows += strf(" q=%d raw %.4f aug %.4f;", q, r.raw_err, r.aug_err);
            csv << r.q << "," << r.subset_size << "," << r.raw_err << "," << r.aug_err
                << "\n";
        }
        double el = secs_since(t0);
        bool ok = aug_ok && mono_ok && el < 900.0;
        gate.line(8, "augmentation direction", ok,
                  strf("%s aug<=raw %s, raw monotone %s, %.0fs (limit 900s)", rows.c_str(),
                       aug_ok ? "yes" : "NO", mono_ok ? "yes" : "NO", el));
    } catch (const std::exception& e) {
        gate.line(8, "augmentation direction", false, e.what());
    }

    // 9. Correcting a corrupted latent back to trusted conditions reduces the
    //    measured gaze error in at least 90% of trials.
    try {
        auto t0 = Clock::now();
        if (!trained || !eval_est) throw std::runtime_error("no trained model (check 5 failed)");
        eval::CorrectionOutcome r =
            eval::run_correction_experiment(*trained, w, *eval_est, 200, 21);
        double el = secs_since(t0);
        bool ok = r.improved >= 180 && el < 60.0;
        gate.line(9, "correction", ok,
                  strf("improved %d/%d (floor 180), mean error %.4f -> %.4f rad, "
                       "%.1fs (limit 60s)",
                       r.improved, r.trials, r.mean_pre, r.mean_post, el));
    } catch (const std::exception& e) {
        gate.line(9, "correction", false, e.what());
    }

    // 10. Same-seed runs are bit-identical and every file format round-trips.
    try {
        train::TrainConfig mini = tcfg;
        mini.epochs = 1;
        mini.eval_every = 0;
        world::Dataset ds = world::sample_dataset(w, 6, 2, 44);
        ParamStore sup = supervisor ? *supervisor
                                    : world::init_estimator(w, world::EstimatorArch::kTrain, 7);
        fs::create_directories("acceptance_run/det_a");
        fs::create_directories("acceptance_run/det_b");
        train::train(mini, w, ds, sup, "acceptance_run/det_a");
        train::train(mini, w, ds, sup, "acceptance_run/det_b");
        bool ckpt_same = slurp("acceptance_run/det_a/redirector.rdtc") ==
                         slurp("acceptance_run/det_b/redirector.rdtc");
        bool log_same = slurp("acceptance_run/det_a/train_log.csv") ==
                        slurp("acceptance_run/det_b/train_log.csv");

        Rng rng(17);
        Tensor latent = Tensor::zeros({spec.K, spec.D});
        for (float& v : latent.data) v = float(rng.normal());
        write_latent("acceptance_run/rt.rdtl", latent);
        bool latent_rt = read_latent("acceptance_run/rt.rdtl").data == latent.data;

        ParamStore params = redir::init_redirector(redir::ModelShape{}, 23);
        perturb(params, 29);
        save_checkpoint("acceptance_run/rt.rdtc", params);
        ParamStore pback = load_checkpoint("acceptance_run/rt.rdtc");
        bool ckpt_rt = pback.items.size() == params.items.size();
        for (const auto& [name, t] : params.items)
            ckpt_rt = ckpt_rt && pback.has(name) && pback.at(name).data == t.data;

        world::write_dataset("acceptance_run/rt.rdtd", ds, w.spec);
        world::Dataset dback = world::read_dataset("acceptance_run/rt.rdtd", w.spec);
        bool ds_rt = dback.samples.size() == ds.samples.size();
        for (size_t i = 0; ds_rt && i < ds.samples.size(); ++i)
            ds_rt = dback.samples[i].latent.data == ds.samples[i].latent.data &&
                    dback.samples[i].image.data == ds.samples[i].image.data &&
                    dback.samples[i].identity == ds.samples[i].identity;

        bool ok = ckpt_same && log_same && latent_rt && ckpt_rt && ds_rt;
        gate.line(10, "determinism and formats", ok,
                  strf("same-seed checkpoint %s, log %s; round-trips latent %s, "
                       "checkpoint %s, dataset %s",
                       ckpt_same ? "identical" : "DIFFERS", log_same ? "identical" : "DIFFERS",
                       latent_rt ? "ok" : "BAD", ckpt_rt ? "ok" : "BAD",
                       ds_rt ? "ok" : "BAD"));
    } catch (const std::exception& e) {
        gate.line(10, "determinism and formats", false, e.what());
    }

    std::printf("acceptance: %d/10 passed\n", gate.passed);
    return gate.failed == 0 ? 0 : 1;
}
