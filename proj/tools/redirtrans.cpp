// redirtrans: operator surface for the latent-redirection artifact.
//
// Subcommands cover the full pipeline: world/dataset generation, estimator
// pretraining, redirector training, evaluation protocols, the correction and
// augmentation experiments, the gradient-check battery, and one-off latent
// edits. Every run directory is stamped with the resolved config, the primary
// seed, and the version string, so any run can be reproduced from its
// artifacts alone.
//
// Exit codes: 0 success, 1 usage error (unknown flag/subcommand, bad
// combination), 2 runtime error (missing file, failed check, invalid data).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "redirtrans/checkpoint.hpp"
#include "redirtrans/checks.hpp"
#include "redirtrans/config.hpp"
#include "redirtrans/evalsuite.hpp"
#include "redirtrans/latent_io.hpp"
#include "redirtrans/losses.hpp"
#include "redirtrans/redirector.hpp"
#include "redirtrans/runcfg.hpp"
#include "redirtrans/trainer.hpp"
#include "redirtrans/world.hpp"

namespace {

using nlohmann::json;
using namespace rdt;

constexpr const char* kVersion = "redirtrans 1.0.0";
constexpr double kPi = 3.14159265358979323846;

// Options shared by every subcommand.
struct Common {
    std::string config_path;
    std::string out_dir;
    bool json_out = false;
    bool degrees = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key = value config file");
    sub->add_option("--out", c.out_dir, "run directory for artifacts");
    sub->add_flag("--json", c.json_out, "print the report as JSON");
    sub->add_flag("--degrees", c.degrees, "angles in degrees on input and output");
}

cfg::Config load_cfg(const Common& c) {
    if (c.config_path.empty()) return {};
    return cfg::Config::parse_file(c.config_path);
}

// REDIRTRANS_SEED fills the subcommand's primary seed key when neither the
// config file nor a flag set it (lowest precedence).
void apply_env_seed(cfg::Config& cfg, const std::string& key) {
    const char* env = std::getenv("REDIRTRANS_SEED");
    if (env && *env) cfg.set_default(key, env);
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path))
        throw std::runtime_error(std::string(what) + " not found: " + path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << text;
    if (!out) throw std::runtime_error(path + ": write failed");
}

// Echo the fully-resolved config plus seed and version into the run
// directory, before the long-running work starts.
void stamp_run_dir(const std::string& out, const cfg::Config& cfg, uint64_t seed) {
    if (out.empty()) return;
    std::filesystem::create_directories(out);
    write_text(out + "/run.cfg", cfg.resolved());
    write_text(out + "/seed.txt", std::to_string(seed) + "\n");
    write_text(out + "/version.txt", std::string(kVersion) + "\n");
}

void maybe_write_report(const Common& c, const json& rep) {
    if (!c.out_dir.empty()) write_text(c.out_dir + "/report.json", rep.dump(2) + "\n");
    if (c.json_out) std::cout << rep.dump(2) << "\n";
}

std::string fmt_num(double v) { return cfg::format_value(v); }

using cfg::DatasetKeys;

world::Dataset materialize(const DatasetKeys& k, const world::World& w) {
    if (!k.path.empty()) require_file(k.path, "dataset");
    return cfg::materialize_dataset(k, w);
}

double shown(double rad, const Common& c) { return c.degrees ? eval::to_degrees(rad) : rad; }
const char* unit(const Common& c) { return c.degrees ? "deg" : "rad"; }

// ---- gen-world -----------------------------------------------------------

struct GenWorldOpts {
    Common c;
};

void run_gen_world(GenWorldOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    apply_env_seed(cfg, "data.seed");
    world::WorldSpec spec = cfg::world_spec(cfg);
    DatasetKeys train = cfg::dataset_keys(cfg, "data", 2000, 4, 100);
    DatasetKeys hold = cfg::dataset_keys(cfg, "holdout", 500, 4, 101);
    if (!train.path.empty() || !hold.path.empty())
        throw std::runtime_error("gen-world generates datasets; *.path keys are not accepted");
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    cfg::record_dataset_keys(cfg, "data", train);
    cfg::record_dataset_keys(cfg, "holdout", hold);
    if (o.c.out_dir.empty()) throw std::runtime_error("gen-world requires --out");
    stamp_run_dir(o.c.out_dir, cfg, train.seed);

    world::World w = world::World::build(spec);
    world::Dataset tr = world::sample_dataset(w, train.identities, train.per_identity, train.seed);
    world::write_dataset(o.c.out_dir + "/train.rdtd", tr, spec);
    if (!tr.samples.empty()) {
        write_latent(o.c.out_dir + "/sample0.rdtl", tr.samples[0].latent);
        write_pgm(o.c.out_dir + "/sample0.pgm", tr.samples[0].image, spec.image_side);
    }
    size_t hn = 0;
    if (hold.identities > 0) {
        world::Dataset ho =
            world::sample_dataset(w, hold.identities, hold.per_identity, hold.seed);
        world::write_dataset(o.c.out_dir + "/holdout.rdtd", ho, spec);
        hn = ho.samples.size();
    }
    json rep{{"train_samples", tr.samples.size()},
             {"holdout_samples", hn},
             {"train_path", o.c.out_dir + "/train.rdtd"}};
    if (!o.c.json_out)
        std::printf("wrote %zu train / %zu holdout samples to %s\n", tr.samples.size(), hn,
                    o.c.out_dir.c_str());
    maybe_write_report(o.c, rep);
}

// ---- pretrain-estimator ----------------------------------------------------

struct PretrainOpts {
    Common c;
    std::string arch;
    std::string data_path;
    long epochs = -1;
    long seed = -1;
};

void run_pretrain(PretrainOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    if (!o.data_path.empty()) cfg.set("data.path", o.data_path);
    if (o.epochs >= 0) cfg.set("estimator.epochs", std::to_string(o.epochs));
    if (o.seed >= 0) cfg.set("estimator.seed", std::to_string(o.seed));
    if (!o.arch.empty()) cfg.set("estimator.arch", o.arch);
    apply_env_seed(cfg, "estimator.seed");

    world::WorldSpec spec = cfg::world_spec(cfg);
    DatasetKeys train = cfg::dataset_keys(cfg, "data", 2000, 4, 100);
    DatasetKeys hold = cfg::dataset_keys(cfg, "holdout", 500, 4, 101);
    world::EstimatorTrainConfig ecfg = cfg::estimator_config(cfg, "estimator");
    std::string arch_name = cfg.get_str("estimator.arch", "train");
    world::EstimatorArch arch;
    if (arch_name == "train") arch = world::EstimatorArch::kTrain;
    else if (arch_name == "eval") arch = world::EstimatorArch::kEval;
    else throw std::runtime_error("estimator.arch must be 'train' or 'eval', got '" + arch_name + "'");
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    cfg::record_dataset_keys(cfg, "data", train);
    cfg::record_dataset_keys(cfg, "holdout", hold);
    cfg::record_estimator_config(cfg, "estimator", ecfg);
    cfg.set("estimator.arch", arch_name);
    stamp_run_dir(o.c.out_dir, cfg, ecfg.seed);

    world::World w = world::World::build(spec);
    world::Dataset tr = materialize(train, w);
    ParamStore est = world::pretrain_estimator(w, tr, arch, ecfg);
    double train_err = world::estimator_error(est, tr);
    double hold_err = -1.0;
    if (hold.identities > 0 || !hold.path.empty()) {
        world::Dataset ho = materialize(hold, w);
        hold_err = world::estimator_error(est, ho);
    }
    std::string ckpt;
    if (!o.c.out_dir.empty()) {
        ckpt = o.c.out_dir + "/estimator.rdtc";
        save_checkpoint(ckpt, est);
    }
    json rep{{"arch", arch_name},
             {"train_err", train_err},
             {"holdout_err", hold_err},
             {"checkpoint", ckpt}};
    if (!o.c.json_out)
        std::printf("%s estimator: train err %.4f %s, holdout err %.4f %s%s%s\n",
                    arch_name.c_str(), shown(train_err, o.c), unit(o.c), shown(hold_err, o.c),
                    unit(o.c), ckpt.empty() ? "" : ", saved ", ckpt.c_str());
    maybe_write_report(o.c, rep);
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
    Common c;
    std::string estimator_path;
    std::string eval_estimator_path;
    long epochs = -1;
};

void run_train(TrainOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    if (!o.estimator_path.empty()) cfg.set("train.estimator", o.estimator_path);
    if (!o.eval_estimator_path.empty()) cfg.set("train.eval_estimator", o.eval_estimator_path);
    if (o.epochs >= 0) cfg.set("train.epochs", std::to_string(o.epochs));
    apply_env_seed(cfg, "train.seed");

    world::WorldSpec spec = cfg::world_spec(cfg);
    DatasetKeys data = cfg::dataset_keys(cfg, "data", 200, 4, 200);
    train::TrainConfig tcfg = cfg::train_config(cfg);
    tcfg.validate();
    std::string est_path = cfg.get_str("train.estimator", "runs/estimator/estimator.rdtc");
    std::string eval_est_path = cfg.get_str("train.eval_estimator", "");
    DatasetKeys eval_data = cfg::dataset_keys(cfg, "eval_data", 100, 4, 201);
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    cfg::record_dataset_keys(cfg, "data", data);
    cfg::record_train_config(cfg, tcfg);
    cfg.set("train.estimator", est_path);
    if (!eval_est_path.empty()) {
        cfg.set("train.eval_estimator", eval_est_path);
        cfg::record_dataset_keys(cfg, "eval_data", eval_data);
    }
    require_file(est_path, "estimator checkpoint");
    if (!eval_est_path.empty()) require_file(eval_est_path, "evaluation estimator checkpoint");
    stamp_run_dir(o.c.out_dir, cfg, tcfg.seed);

    world::World w = world::World::build(spec);
    world::Dataset ds = materialize(data, w);
    ParamStore est = load_checkpoint(est_path);

    train::EvalFn eval_fn;
    world::Dataset eval_ds;
    ParamStore eval_est;
    if (!eval_est_path.empty()) {
        eval_est = load_checkpoint(eval_est_path);
        eval_ds = materialize(eval_data, w);
        eval_fn = [&](const ParamStore& p) -> std::array<double, 2> {
            eval::EvalReport r = eval::eval_redirection(p, w, eval_ds, eval_est);
            return {r.gaze_redir_err, r.head_redir_err};
        };
    }

    train::TrainResult res = train::train(tcfg, w, ds, est, o.c.out_dir, eval_fn);
    const losses::Breakdown& last = res.log.back();
    json rep{{"iterations", res.log.size()},
             {"last_total", last.total},
             {"last_rec", last.rec},
             {"last_perc", last.perc},
             {"last_att", last.att},
             {"last_id", last.id},
             {"last_lab", last.lab},
             {"last_emb", last.emb},
             {"last_prob", last.prob}};
    if (!o.c.out_dir.empty()) rep["checkpoint"] = o.c.out_dir + "/redirector.rdtc";
    if (!res.eval_log.empty()) {
        rep["final_gaze_redir_err"] = res.eval_log.back().gaze_err;
        rep["final_head_redir_err"] = res.eval_log.back().head_err;
    }
    if (!o.c.json_out) {
        std::printf("trained %zu iterations, last loss total %.4f\n", res.log.size(), last.total);
        if (!res.eval_log.empty())
            std::printf("final redirection errors: gaze %.4f %s, head %.4f %s\n",
                        shown(res.eval_log.back().gaze_err, o.c), unit(o.c),
                        shown(res.eval_log.back().head_err, o.c), unit(o.c));
        if (!o.c.out_dir.empty())
            std::printf("artifacts in %s\n", o.c.out_dir.c_str());
    }
    maybe_write_report(o.c, rep);
}

// ---- eval / disentangle ----------------------------------------------------

struct EvalOpts {
    Common c;
    std::string ckpt;
    std::string eval_estimator;
    std::string data_path;
};

// Shared head: load checkpoint, eval estimator and test set.
struct EvalInputs {
    world::World w;
    ParamStore params;
    ParamStore eval_est;
    world::Dataset testset;
};

EvalInputs eval_inputs(cfg::Config& cfg, EvalOpts& o) {
    if (!o.data_path.empty()) cfg.set("data.path", o.data_path);
    if (!o.ckpt.empty()) cfg.set("eval.ckpt", o.ckpt);
    if (!o.eval_estimator.empty()) cfg.set("eval.estimator", o.eval_estimator);
    world::WorldSpec spec = cfg::world_spec(cfg);
    DatasetKeys data = cfg::dataset_keys(cfg, "data", 100, 4, 201);
    std::string ckpt = cfg.get_str("eval.ckpt", "");
    std::string est = cfg.get_str("eval.estimator", "");
    if (ckpt.empty()) throw std::runtime_error("no redirector checkpoint given (--ckpt or eval.ckpt)");
    if (est.empty())
        throw std::runtime_error("no evaluation estimator given (--eval-estimator or eval.estimator)");
    require_file(ckpt, "redirector checkpoint");
    require_file(est, "evaluation estimator checkpoint");
    cfg::record_world_spec(cfg, spec);
    cfg::record_dataset_keys(cfg, "data", data);
    cfg.set("eval.ckpt", ckpt);
    cfg.set("eval.estimator", est);

    EvalInputs in{world::World::build(spec), load_checkpoint(ckpt), load_checkpoint(est), {}};
    in.testset = materialize(data, in.w);
    return in;
}

void run_eval(EvalOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    EvalInputs in = eval_inputs(cfg, o);
    cfg.reject_unknown();
    stamp_run_dir(o.c.out_dir, cfg, 0);

    std::vector<eval::RedirectionSample> audit;
    eval::EvalReport r = eval::eval_redirection(in.params, in.w, in.testset, in.eval_est, &audit);
    json rep{{"gaze_redir_err", r.gaze_redir_err},
             {"head_redir_err", r.head_redir_err},
             {"perceptual_dist", r.perceptual_dist},
             {"n", r.n}};
    if (!o.c.json_out) {
        std::printf("redirection over %d pairs:\n", r.n);
        std::printf("  gaze error %.4f %s\n", shown(r.gaze_redir_err, o.c), unit(o.c));
        std::printf("  head error %.4f %s\n", shown(r.head_redir_err, o.c), unit(o.c));
        std::printf("  perceptual distance %.4f\n", r.perceptual_dist);
    }
    if (!o.c.out_dir.empty()) {
        std::string csv = "src,tgt,gaze_err,head_err,perc_dist\n";
        for (const auto& a : audit)
            csv += std::to_string(a.src) + "," + std::to_string(a.tgt) + "," +
                   fmt_num(a.gaze_err) + "," + fmt_num(a.head_err) + "," + fmt_num(a.perc_dist) +
                   "\n";
        write_text(o.c.out_dir + "/eval_pairs.csv", csv);
    }
    maybe_write_report(o.c, rep);
}

struct DisentangleOpts {
    EvalOpts e;
    long seed = -1;
};

void run_disentangle(DisentangleOpts& o) {
    cfg::Config cfg = load_cfg(o.e.c);
    if (o.seed >= 0) cfg.set("eval.seed", std::to_string(o.seed));
    apply_env_seed(cfg, "eval.seed");
    uint64_t seed = cfg.get_u64("eval.seed", 5);
    EvalInputs in = eval_inputs(cfg, o.e);
    cfg.reject_unknown();
    cfg.set("eval.seed", std::to_string(seed));
    stamp_run_dir(o.e.c.out_dir, cfg, seed);

    eval::EvalReport r = eval::eval_disentanglement(in.params, in.w, in.testset, in.eval_est, seed);
    json rep{{"gaze_induce_err", r.gaze_induce_err},
             {"head_induce_err", r.head_induce_err},
             {"n", r.n},
             {"seed", seed}};
    if (!o.e.c.json_out) {
        std::printf("disentanglement over %d samples (seed %llu):\n", r.n,
                    static_cast<unsigned long long>(seed));
        std::printf("  gaze induce error %.4f %s (head-only edits)\n",
                    shown(r.gaze_induce_err, o.e.c), unit(o.e.c));
        std::printf("  head induce error %.4f %s (gaze-only edits)\n",
                    shown(r.head_induce_err, o.e.c), unit(o.e.c));
    }
    if (redir::infer_shape(in.params).mode == redir::Mode::kLayerwise) {
        eval::LayerWeightReport lw = eval::eval_layer_weights(in.params, in.w.spec);
        rep["gaze_planted_mass"] = lw.planted_fraction[0];
        rep["head_planted_mass"] = lw.planted_fraction[1];
        rep["gaze_profile"] = lw.profile[0];
        rep["head_profile"] = lw.profile[1];
        if (!o.e.c.json_out) {
            std::printf("  layer mass on planted layers: gaze %.3f head %.3f\n",
                        lw.planted_fraction[0], lw.planted_fraction[1]);
        }
    }
    maybe_write_report(o.e.c, rep);
}

// ---- correct ---------------------------------------------------------------

struct CorrectOpts {
    Common c;
    std::string ckpt;
    std::string eval_estimator;
    long trials = -1;
    double min_gap = -1.0;
    long seed = -1;
};

void run_correct(CorrectOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    if (!o.ckpt.empty()) cfg.set("eval.ckpt", o.ckpt);
    if (!o.eval_estimator.empty()) cfg.set("eval.estimator", o.eval_estimator);
    if (o.trials >= 0) cfg.set("correct.trials", std::to_string(o.trials));
    if (o.min_gap >= 0) cfg.set("correct.min_gap", fmt_num(o.min_gap));
    if (o.seed >= 0) cfg.set("correct.seed", std::to_string(o.seed));
    apply_env_seed(cfg, "correct.seed");

    world::WorldSpec spec = cfg::world_spec(cfg);
    std::string ckpt = cfg.get_str("eval.ckpt", "");
    std::string est = cfg.get_str("eval.estimator", "");
    int trials = static_cast<int>(cfg.get_i64("correct.trials", 200));
    double min_gap = cfg.get_f64("correct.min_gap", 0.1);
    uint64_t seed = cfg.get_u64("correct.seed", 21);
    if (ckpt.empty()) throw std::runtime_error("no redirector checkpoint given (--ckpt or eval.ckpt)");
    if (est.empty())
        throw std::runtime_error("no evaluation estimator given (--eval-estimator or eval.estimator)");
    require_file(ckpt, "redirector checkpoint");
    require_file(est, "evaluation estimator checkpoint");
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    cfg.set("eval.ckpt", ckpt);
    cfg.set("eval.estimator", est);
    cfg.set("correct.trials", std::to_string(trials));
    cfg.set("correct.min_gap", fmt_num(min_gap));
    cfg.set("correct.seed", std::to_string(seed));
    stamp_run_dir(o.c.out_dir, cfg, seed);

    world::World w = world::World::build(spec);
    eval::CorrectionOutcome co = eval::run_correction_experiment(
        load_checkpoint(ckpt), w, load_checkpoint(est), trials, seed, min_gap);
    json rep{{"trials", co.trials},
             {"improved", co.improved},
             {"improved_fraction", static_cast<double>(co.improved) / co.trials},
             {"mean_pre", co.mean_pre},
             {"mean_post", co.mean_post},
             {"seed", seed}};
    if (!o.c.json_out) {
        std::printf("correction improved gaze error in %d/%d trials (%.1f%%)\n", co.improved,
                    co.trials, 100.0 * co.improved / co.trials);
        std::printf("  mean error before %.4f %s, after %.4f %s\n", shown(co.mean_pre, o.c),
                    unit(o.c), shown(co.mean_post, o.c), unit(o.c));
    }
    maybe_write_report(o.c, rep);
}

// ---- augment ---------------------------------------------------------------

struct AugmentOpts {
    Common c;
    std::string q_list;
    long redir_epochs = -1;
};

void run_augment(AugmentOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    if (!o.q_list.empty()) cfg.set("aug.q", o.q_list);
    if (o.redir_epochs >= 0) cfg.set("aug.redir_epochs", std::to_string(o.redir_epochs));
    apply_env_seed(cfg, "aug.seed");

    world::WorldSpec spec = cfg::world_spec(cfg);
    eval::AugmentationConfig acfg;
    acfg.train_identities = static_cast<int>(cfg.get_i64("aug.identities", acfg.train_identities));
    acfg.per_identity = static_cast<int>(cfg.get_i64("aug.per_identity", acfg.per_identity));
    acfg.holdout_identities =
        static_cast<int>(cfg.get_i64("aug.holdout_identities", acfg.holdout_identities));
    acfg.seed = cfg.get_u64("aug.seed", acfg.seed);
    acfg.redir_cfg.epochs = static_cast<int>(cfg.get_i64("aug.redir_epochs", 6));
    acfg.redir_cfg.eval_every = 0;
    std::vector<int> qs = cfg::parse_int_list(cfg.get_str("aug.q", "25,50,75"), "aug.q");
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    cfg.set("aug.identities", std::to_string(acfg.train_identities));
    cfg.set("aug.per_identity", std::to_string(acfg.per_identity));
    cfg.set("aug.holdout_identities", std::to_string(acfg.holdout_identities));
    cfg.set("aug.seed", std::to_string(acfg.seed));
    cfg.set("aug.redir_epochs", std::to_string(acfg.redir_cfg.epochs));
    cfg.set("aug.q", cfg::join_ints(qs));
    stamp_run_dir(o.c.out_dir, cfg, acfg.seed);

    world::World w = world::World::build(spec);
    json rows = json::array();
    std::string csv = "q,subset_size,raw_err,aug_err\n";
    for (int q : qs) {
        eval::AugmentationOutcome out = eval::run_augmentation_experiment(w, q, acfg);
        rows.push_back({{"q", out.q},
                        {"subset_size", out.subset_size},
                        {"raw_err", out.raw_err},
                        {"aug_err", out.aug_err}});
        csv += std::to_string(out.q) + "," + std::to_string(out.subset_size) + "," +
               fmt_num(out.raw_err) + "," + fmt_num(out.aug_err) + "\n";
        if (!o.c.json_out)
            std::printf("q=%d%% (%d labeled samples): raw %.4f %s, augmented %.4f %s\n", out.q,
                        out.subset_size, shown(out.raw_err, o.c), unit(o.c),
                        shown(out.aug_err, o.c), unit(o.c));
    }
    if (!o.c.out_dir.empty()) write_text(o.c.out_dir + "/augment.csv", csv);
    maybe_write_report(o.c, json{{"rows", rows}, {"seed", acfg.seed}});
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckOpts {
    Common c;
    long seed = -1;
    long points = -1;
};

void run_gradcheck(GradcheckOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    if (o.seed >= 0) cfg.set("gradcheck.seed", std::to_string(o.seed));
    if (o.points >= 0) cfg.set("gradcheck.points", std::to_string(o.points));
    apply_env_seed(cfg, "gradcheck.seed");
    uint64_t seed = cfg.get_u64("gradcheck.seed", 7);
    int points = static_cast<int>(cfg.get_i64("gradcheck.points", 100));
    cfg.reject_unknown();
    cfg.set("gradcheck.seed", std::to_string(seed));
    cfg.set("gradcheck.points", std::to_string(points));
    stamp_run_dir(o.c.out_dir, cfg, seed);

    std::vector<checks::CheckResult> res = checks::gradcheck_battery(seed, points);
    double worst = checks::worst_rel_err(res);
    json entries = json::array();
    for (const auto& r : res) {
        entries.push_back({{"name", r.name}, {"max_rel_err", r.max_rel_err}});
        if (!o.c.json_out) std::printf("%-24s %.3e\n", r.name.c_str(), r.max_rel_err);
    }
    if (!o.c.json_out) std::printf("worst %.3e (threshold 1e-4)\n", worst);
    maybe_write_report(o.c, json{{"entries", entries}, {"worst", worst}, {"seed", seed}});
    if (worst >= 1e-4)
        throw std::runtime_error("gradient check failed: worst relative error " + fmt_num(worst));
}

// ---- redirect --------------------------------------------------------------

struct RedirectOpts {
    Common c;
    std::string ckpt;
    std::string latent_path;
    double gaze_pitch = 0.0, gaze_yaw = 0.0, head_pitch = 0.0, head_yaw = 0.0;
    bool has_gaze = false, has_head = false;
};

void run_redirect(RedirectOpts& o) {
    cfg::Config cfg = load_cfg(o.c);
    world::WorldSpec spec = cfg::world_spec(cfg);
    cfg.reject_unknown();
    cfg::record_world_spec(cfg, spec);
    if (o.ckpt.empty()) throw std::runtime_error("redirect requires --ckpt");
    if (o.latent_path.empty()) throw std::runtime_error("redirect requires --latent");
    if (!o.has_gaze && !o.has_head)
        throw std::runtime_error("redirect requires at least one attribute target "
                                 "(--gaze-pitch/--gaze-yaw or --head-pitch/--head-yaw)");
    require_file(o.ckpt, "redirector checkpoint");
    require_file(o.latent_path, "latent file");
    if (o.c.out_dir.empty()) throw std::runtime_error("redirect requires --out");
    stamp_run_dir(o.c.out_dir, cfg, spec.master_seed);

    double scale = o.c.degrees ? kPi / 180.0 : 1.0;
    std::array<std::optional<geom::Condition>, 2> targets;
    if (o.has_gaze)
        targets[0] = geom::Condition{static_cast<float>(o.gaze_pitch * scale),
                                     static_cast<float>(o.gaze_yaw * scale)};
    if (o.has_head)
        targets[1] = geom::Condition{static_cast<float>(o.head_pitch * scale),
                                     static_cast<float>(o.head_yaw * scale)};

    ParamStore params = load_checkpoint(o.ckpt);
    Tensor latent = read_latent(o.latent_path);
    Tensor edited = redir::edit(params, latent, targets);
    write_latent(o.c.out_dir + "/edited.rdtl", edited);

    world::World w = world::World::build(spec);
    Tensor src_img = world::render(w, latent);
    Tensor out_img = world::render(w, edited);
    write_pgm(o.c.out_dir + "/source.pgm", src_img, spec.image_side);
    write_pgm(o.c.out_dir + "/edited.pgm", out_img, spec.image_side);

    json rep{{"edited_latent", o.c.out_dir + "/edited.rdtl"},
             {"edited_image", o.c.out_dir + "/edited.pgm"}};
    auto put = [&](const char* key, const std::optional<geom::Condition>& t) {
        if (t) rep[key] = {t->pitch, t->yaw};
        else rep[key] = nullptr;
    };
    put("gaze_target", targets[0]);
    put("head_target", targets[1]);
    if (!o.c.json_out) {
        auto show_t = [&](const char* name, const std::optional<geom::Condition>& t) {
            if (t)
                std::printf("  %s -> (%.4f, %.4f) rad\n", name, t->pitch, t->yaw);
            else
                std::printf("  %s kept\n", name);
        };
        std::printf("edited latent written to %s/edited.rdtl\n", o.c.out_dir.c_str());
        show_t("gaze", targets[0]);
        show_t("head", targets[1]);
    }
    maybe_write_report(o.c, rep);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-to-latent gaze and head redirection on a synthetic world"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    GenWorldOpts gw;
    CLI::App* gw_cmd = app.add_subcommand("gen-world", "generate datasets from a seeded world");
    add_common(gw_cmd, gw.c);

    PretrainOpts pe;
    CLI::App* pe_cmd =
        app.add_subcommand("pretrain-estimator", "train a frozen condition estimator");
    add_common(pe_cmd, pe.c);
    pe_cmd->add_option("--arch", pe.arch, "estimator architecture: train | eval");
    pe_cmd->add_option("--data", pe.data_path, "dataset file (.rdtd) instead of generation");
    pe_cmd->add_option("--epochs", pe.epochs, "training epochs");
    pe_cmd->add_option("--seed", pe.seed, "training seed");

    TrainOpts tr;
    CLI::App* tr_cmd = app.add_subcommand("train", "train a redirector");
    add_common(tr_cmd, tr.c);
    tr_cmd->add_option("--estimator", tr.estimator_path, "supervision estimator checkpoint");
    tr_cmd->add_option("--eval-estimator", tr.eval_estimator_path,
                       "held-out estimator for periodic evaluation");
    tr_cmd->add_option("--epochs", tr.epochs, "training epochs");

    EvalOpts ev;
    CLI::App* ev_cmd = app.add_subcommand("eval", "score redirection on a test set");
    add_common(ev_cmd, ev.c);
    ev_cmd->add_option("--ckpt", ev.ckpt, "redirector checkpoint");
    ev_cmd->add_option("--eval-estimator", ev.eval_estimator, "held-out estimator checkpoint");
    ev_cmd->add_option("--data", ev.data_path, "test dataset file (.rdtd)");

    DisentangleOpts di;
    CLI::App* di_cmd =
        app.add_subcommand("disentangle", "score attribute isolation and layer-weight mass");
    add_common(di_cmd, di.e.c);
    di_cmd->add_option("--ckpt", di.e.ckpt, "redirector checkpoint");
    di_cmd->add_option("--eval-estimator", di.e.eval_estimator, "held-out estimator checkpoint");
    di_cmd->add_option("--data", di.e.data_path, "test dataset file (.rdtd)");
    di_cmd->add_option("--seed", di.seed, "offset-draw seed");

    CorrectOpts co;
    CLI::App* co_cmd =
        app.add_subcommand("correct", "perturb-and-correct experiment with trusted labels");
    add_common(co_cmd, co.c);
    co_cmd->add_option("--ckpt", co.ckpt, "redirector checkpoint");
    co_cmd->add_option("--eval-estimator", co.eval_estimator, "held-out estimator checkpoint");
    co_cmd->add_option("--experiment-trials,--trials", co.trials, "number of trials");
    co_cmd->add_option("--min-gap", co.min_gap, "minimum corruption distance in radians");
    co_cmd->add_option("--seed", co.seed, "trial seed");

    AugmentOpts au;
    CLI::App* au_cmd =
        app.add_subcommand("augment", "label-efficiency study with redirected samples");
    add_common(au_cmd, au.c);
    au_cmd->add_option("--q", au.q_list, "comma-separated labeled percentages (default 25,50,75)");
    au_cmd->add_option("--redir-epochs", au.redir_epochs, "redirector epochs inside the study");

    GradcheckOpts gc;
    CLI::App* gc_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of every op and loss");
    add_common(gc_cmd, gc.c);
    gc_cmd->add_option("--seed", gc.seed, "sampling seed");
    gc_cmd->add_option("--points", gc.points, "random points per entry");

    RedirectOpts rd;
    CLI::App* rd_cmd = app.add_subcommand("redirect", "edit one latent file");
    add_common(rd_cmd, rd.c);
    rd_cmd->add_option("--ckpt", rd.ckpt, "redirector checkpoint");
    rd_cmd->add_option("--latent", rd.latent_path, "input latent (.rdtl)");
    CLI::Option* gp = rd_cmd->add_option("--gaze-pitch", rd.gaze_pitch, "target gaze pitch");
    CLI::Option* gy = rd_cmd->add_option("--gaze-yaw", rd.gaze_yaw, "target gaze yaw");
    CLI::Option* hp = rd_cmd->add_option("--head-pitch", rd.head_pitch, "target head pitch");
    CLI::Option* hy = rd_cmd->add_option("--head-yaw", rd.head_yaw, "target head yaw");
    gp->needs(gy);
    gy->needs(gp);
    hp->needs(hy);
    hy->needs(hp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        rd.has_gaze = rd_cmd->count("--gaze-pitch") > 0;
        rd.has_head = rd_cmd->count("--head-pitch") > 0;
        if (gw_cmd->parsed()) run_gen_world(gw);
        else if (pe_cmd->parsed()) run_pretrain(pe);
        else if (tr_cmd->parsed()) run_train(tr);
        else if (ev_cmd->parsed()) run_eval(ev);
        else if (di_cmd->parsed()) run_disentangle(di);
        else if (co_cmd->parsed()) run_correct(co);
        else if (au_cmd->parsed()) run_augment(au);
        else if (gc_cmd->parsed()) run_gradcheck(gc);
        else if (rd_cmd->parsed()) run_redirect(rd);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
