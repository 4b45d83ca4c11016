#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "redirtrans/trainer.hpp"

using namespace rdt;
using train::TrainConfig;

namespace {

const world::World& shared_world() {
    static world::World w = world::World::build(world::WorldSpec{});
    return w;
}

const ParamStore& quick_estimator() {
    static ParamStore est = [] {
        const world::World& w = shared_world();
        world::Dataset ds = world::sample_dataset(w, 150, 4, 100);
        world::EstimatorTrainConfig cfg;
        cfg.epochs = 2;
        return world::pretrain_estimator(w, ds, world::EstimatorArch::kEval, cfg);
    }();
    return est;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("learning rate decays stepwise") {
    TrainConfig cfg;
    cfg.lr0 = 1e-4;
    cfg.decay = 0.8;
    cfg.decay_every = 3000;
    CHECK(train::lr_schedule(cfg, 0) == doctest::Approx(1e-4));
    CHECK(train::lr_schedule(cfg, 2999) == doctest::Approx(1e-4));
    CHECK(train::lr_schedule(cfg, 3000) == doctest::Approx(8e-5));
    CHECK(train::lr_schedule(cfg, 6000) == doctest::Approx(6.4e-5));
}

TEST_CASE("config validation rejects unusable values") {
    TrainConfig cfg;
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.lr0 = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("epoch pairs cover every source once within identity") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 5, 3, 77);
    std::vector<train::Pair> pairs = train::epoch_pairs(ds, 9, 0);
    REQUIRE(pairs.size() == ds.samples.size());
    std::set<int> sources;
    for (const train::Pair& p : pairs) {
        sources.insert(p.src);
        CHECK(ds.samples[size_t(p.src)].identity == ds.samples[size_t(p.tgt)].identity);
    }
    CHECK(sources.size() == ds.samples.size());
    // Same (seed, epoch) reproduces the schedule; another epoch reshuffles.
    std::vector<train::Pair> again = train::epoch_pairs(ds, 9, 0);
    bool same = true;
    for (size_t i = 0; i < pairs.size(); ++i)
        same = same && pairs[i].src == again[i].src && pairs[i].tgt == again[i].tgt;
    CHECK(same);
    std::vector<train::Pair> later = train::epoch_pairs(ds, 9, 1);
    bool all_equal = true;
    for (size_t i = 0; i < pairs.size(); ++i)
        all_equal = all_equal && pairs[i].src == later[i].src && pairs[i].tgt == later[i].tgt;
    CHECK_FALSE(all_equal);
}

TEST_CASE("train_step rejects malformed batches") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 2, 2, 33);
    TrainConfig cfg;
    ParamStore params = redir::init_redirector(redir::ModelShape{}, cfg.seed);
    AdamState adam;
    train::SampleCache cache;
    // Samples 0,1 share an identity; 2,3 share the other.
    std::vector<train::Pair> mixed = {{0, 2}, {1, 3}};
    CHECK_THROWS_AS(train::train_step(cfg, w, quick_estimator(), ds, mixed, params, adam,
                                      1e-4, cache),
                    std::invalid_argument);
    std::vector<train::Pair> tiny = {{0, 1}};
    CHECK_THROWS_AS(train::train_step(cfg, w, quick_estimator(), ds, tiny, params, adam,
                                      1e-4, cache),
                    std::invalid_argument);
}

TEST_CASE("train_step moves parameters and reports finite losses") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 2, 2, 33);
    TrainConfig cfg;
    ParamStore params = redir::init_redirector(redir::ModelShape{}, cfg.seed);
    Tensor before = params.at("layer0/DP/fc2_w");
    AdamState adam;
    train::SampleCache cache;
    std::vector<train::Pair> batch = {{0, 1}, {2, 3}};
    train::StepResult r = train::train_step(cfg, w, quick_estimator(), ds, batch, params,
                                            adam, 1e-4, cache);
    CHECK(r.loss.total > 0.0);
    CHECK(r.grad_norm > 0.0);
    CHECK(std::isfinite(r.loss.rec));
    CHECK(params.at("layer0/DP/fc2_w").data != before.data);
    CHECK(adam.step == 1);
    // The cache now holds the four samples' frozen readings.
    CHECK(cache.est4.size() == ds.samples.size());
}

TEST_CASE("short training runs are bit-reproducible") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 6, 2, 44);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.eval_every = 0;
    namespace fs = std::filesystem;
    fs::create_directories("test_trainer_a");
    fs::create_directories("test_trainer_b");
    train::TrainResult a = train::train(cfg, w, ds, quick_estimator(), "test_trainer_a");
    train::TrainResult b = train::train(cfg, w, ds, quick_estimator(), "test_trainer_b");
    REQUIRE(a.log.size() == b.log.size());
    CHECK(a.log.size() == 6);  // 12 samples / batch 2
    for (const auto& [name, t] : a.params.items)
        CHECK(b.params.at(name).data == t.data);
    CHECK(slurp("test_trainer_a/train_log.csv") == slurp("test_trainer_b/train_log.csv"));
    CHECK(slurp("test_trainer_a/redirector.rdtc") ==
          slurp("test_trainer_b/redirector.rdtc"));
    std::string header = slurp("test_trainer_a/train_log.csv");
    CHECK(header.rfind("iteration,lr,rec,perc,att,id,lab,emb,prob,total", 0) == 0);
    fs::remove_all("test_trainer_a");
    fs::remove_all("test_trainer_b");
}

TEST_CASE("evaluation callback runs at the configured cadence") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 4, 2, 55);
    TrainConfig cfg;
    cfg.epochs = 2;      // 8 iterations total
    cfg.eval_every = 3;  // expect iterations 0, 3, 6, 8
    std::vector<long> seen;
    train::EvalFn probe = [&](const ParamStore&) -> std::array<double, 2> {
        return {0.1, 0.2};
    };
    train::TrainResult r = train::train(cfg, w, ds, quick_estimator(), "", probe);
    for (const train::EvalPoint& p : r.eval_log) seen.push_back(p.iteration);
    CHECK(seen == std::vector<long>{0, 3, 6, 8});
    for (const train::EvalPoint& p : r.eval_log) {
        CHECK(p.gaze_err == doctest::Approx(0.1));
        CHECK(p.head_err == doctest::Approx(0.2));
    }
}

TEST_CASE("flat and truth-label modes train without layerwise terms") {
    const world::World& w = shared_world();
    world::Dataset ds = world::sample_dataset(w, 4, 2, 66);
    TrainConfig cfg;
    cfg.mode = redir::Mode::kFlat;
    cfg.label_source = TrainConfig::Labels::kTruth;
    cfg.epochs = 1;
    cfg.eval_every = 0;
    train::TrainResult r = train::train(cfg, w, ds, quick_estimator());
    REQUIRE(!r.log.empty());
    for (const losses::Breakdown& b : r.log) {
        CHECK(b.perc == 0.0);
        CHECK(b.prob == 0.0);
        CHECK(std::isfinite(b.total));
    }
    CHECK(redir::infer_shape(r.params).mode == redir::Mode::kFlat);
}
