#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "redirtrans/world.hpp"

using namespace rdt;
using world::Dataset;
using world::Sample;
using world::World;
using world::WorldSpec;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (int i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
    return m;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (int i = 0; i < a.numel(); ++i) s += double(a.data[i]) * double(b.data[i]);
    return s;
}

const World& shared_world() {
    static World w = World::build(WorldSpec{});
    return w;
}

}  // namespace

TEST_CASE("world build is bit-deterministic") {
    WorldSpec spec;
    World a = World::build(spec);
    World b = World::build(spec);
    CHECK(a.gen_w1.data == b.gen_w1.data);
    CHECK(a.gen_b2.data == b.gen_b2.data);
    CHECK(a.id_map.data == b.id_map.data);
    CHECK(a.perc_w2.data == b.perc_w2.data);
    for (int attr = 0; attr < 2; ++attr) {
        CHECK(a.z0[attr].data == b.z0[attr].data);
        for (const auto& [k, m] : a.inject[attr])
            CHECK(m.data == b.inject[attr].at(k).data);
    }
    WorldSpec other = spec;
    other.master_seed = 2;
    World c = World::build(other);
    CHECK(c.gen_w1.data != a.gen_w1.data);
}

TEST_CASE("reinjection reproduces a fresh composition") {
    const World& w = shared_world();
    Rng rng(5);
    Tensor f_id = world::sample_identity(w, rng);
    geom::Condition ga{0.1f, -0.2f}, ha{0.3f, 0.05f};
    geom::Condition gb{-0.25f, 0.15f}, hb{0.0f, -0.3f};
    Tensor at_ab = world::compose_latent(w, f_id, ga, ha);
    Tensor moved = world::reinject_latent(w, at_ab, {ga, ha}, {gb, hb});
    Tensor at_cd = world::compose_latent(w, f_id, gb, hb);
    CHECK(max_abs_diff(moved, at_cd) < 1e-5);
    // Round trip back to the original conditions.
    Tensor back = world::reinject_latent(w, moved, {gb, hb}, {ga, ha});
    CHECK(max_abs_diff(back, at_ab) < 1e-5);
}

TEST_CASE("dataset sampling is seed-deterministic") {
    const World& w = shared_world();
    Dataset a = world::sample_dataset(w, 4, 3, 9);
    Dataset b = world::sample_dataset(w, 4, 3, 9);
    Dataset c = world::sample_dataset(w, 4, 3, 10);
    REQUIRE(a.samples.size() == 12);
    REQUIRE(b.samples.size() == 12);
    for (size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].latent.data == b.samples[i].latent.data);
        CHECK(a.samples[i].image.data == b.samples[i].image.data);
        CHECK(a.samples[i].identity == b.samples[i].identity);
    }
    CHECK(a.samples[0].latent.data != c.samples[0].latent.data);
}

TEST_CASE("dataset samples respect the spec dimensions and ranges") {
    const World& w = shared_world();
    Dataset ds = world::sample_dataset(w, 3, 2, 17);
    for (const Sample& s : ds.samples) {
        CHECK(s.latent.shape == std::vector<int>{w.spec.K, w.spec.D});
        CHECK(s.image.numel() == w.spec.image_dim());
        for (float px : s.image.data) {
            CHECK(px >= -1.0f);
            CHECK(px <= 1.0f);
        }
        for (float c : {s.gaze.pitch, s.gaze.yaw, s.head.pitch, s.head.yaw}) {
            CHECK(c >= -w.spec.cond_range);
            CHECK(c <= w.spec.cond_range);
        }
    }
    auto index = world::identity_index(ds);
    CHECK(index.size() == 3);
    for (const auto& [id, rows] : index) {
        CHECK(rows.size() == 2);
        for (int r : rows) CHECK(ds.samples[size_t(r)].identity == id);
    }
}

TEST_CASE("plain render matches the graph render") {
    const World& w = shared_world();
    Dataset ds = world::sample_dataset(w, 1, 1, 3);
    const Sample& s = ds.samples[0];
    Tensor img = world::render(w, s.latent);
    CHECK(img.data == s.image.data);
    Graph g;
    Tensor flat = s.latent;
    flat.shape = {s.latent.numel()};
    int node = world::render_node(g, w, g.constant(flat));
    CHECK(g.value(node).data == img.data);
}

TEST_CASE("identity features are unit length and identity-clustered") {
    const World& w = shared_world();
    Dataset ds = world::sample_dataset(w, 6, 2, 23);
    std::vector<Tensor> feats;
    for (const Sample& s : ds.samples) {
        Tensor f = world::identity_features(w, s.image);
        CHECK(std::abs(dot(f, f) - 1.0) < 1e-4);
        feats.push_back(f);
    }
    // Pairs of the same identity differ only in pose; they must look more
    // alike than pairs of different identities.
    double same = 0.0;
    int n_same = 0;
    double cross = 0.0;
    int n_cross = 0;
    for (size_t i = 0; i < feats.size(); ++i)
        for (size_t j = i + 1; j < feats.size(); ++j) {
            if (ds.samples[i].identity == ds.samples[j].identity) {
                same += dot(feats[i], feats[j]);
                ++n_same;
            } else {
                cross += dot(feats[i], feats[j]);
                ++n_cross;
            }
        }
    CHECK(same / n_same > cross / n_cross + 0.05);
}

TEST_CASE("perceptual distance separates images") {
    const World& w = shared_world();
    Dataset ds = world::sample_dataset(w, 2, 1, 31);
    CHECK(world::perceptual_distance(w, ds.samples[0].image, ds.samples[0].image) ==
          doctest::Approx(0.0));
    CHECK(world::perceptual_distance(w, ds.samples[0].image, ds.samples[1].image) > 0.0);
}

TEST_CASE("estimator readings stay in the open angle range") {
    const World& w = shared_world();
    ParamStore est = world::init_estimator(w, world::EstimatorArch::kTrain, 7);
    CHECK(world::estimator_arch(est) == world::EstimatorArch::kTrain);
    ParamStore lin = world::init_estimator(w, world::EstimatorArch::kEval, 7);
    CHECK(world::estimator_arch(lin) == world::EstimatorArch::kEval);
    Dataset ds = world::sample_dataset(w, 2, 2, 41);
    for (const Sample& s : ds.samples) {
        auto readings = world::estimate(est, s.image);
        for (float v : {readings[0].pitch, readings[0].yaw, readings[1].pitch,
                        readings[1].yaw}) {
            CHECK(v > -1.5708f);
            CHECK(v < 1.5708f);
        }
    }
    CHECK(world::estimator_error(est, ds) > 0.0);
    CHECK(world::estimator_gaze_error(est, ds) > 0.0);
}

TEST_CASE("short estimator pretraining reduces holdout error") {
    const World& w = shared_world();
    Dataset train = world::sample_dataset(w, 150, 4, 100);
    Dataset holdout = world::sample_dataset(w, 40, 4, 101);
    world::EstimatorTrainConfig cfg;
    cfg.epochs = 2;
    ParamStore init = world::init_estimator(w, world::EstimatorArch::kEval, cfg.seed);
    double before = world::estimator_error(init, holdout);
    ParamStore est = world::pretrain_estimator(w, train, world::EstimatorArch::kEval, cfg);
    double after = world::estimator_error(est, holdout);
    CHECK(after < before * 0.5);
}

TEST_CASE("dataset files round-trip bit-exactly") {
    const World& w = shared_world();
    Dataset ds = world::sample_dataset(w, 3, 2, 55);
    std::string path = "test_world_ds.rdtd";
    world::write_dataset(path, ds, w.spec);
    Dataset rt = world::read_dataset(path, w.spec);
    REQUIRE(rt.samples.size() == ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(rt.samples[i].identity == ds.samples[i].identity);
        CHECK(rt.samples[i].latent.data == ds.samples[i].latent.data);
        CHECK(rt.samples[i].image.data == ds.samples[i].image.data);
        CHECK(rt.samples[i].gaze.pitch == ds.samples[i].gaze.pitch);
        CHECK(rt.samples[i].head.yaw == ds.samples[i].head.yaw);
    }
    std::remove(path.c_str());
}

TEST_CASE("dataset reader rejects damaged files") {
    const World& w = shared_world();
    CHECK_THROWS_AS(world::read_dataset("test_world_missing.rdtd", w.spec),
                    std::runtime_error);
    std::string bad = "test_world_bad.rdtd";
    {
        std::ofstream os(bad, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS(world::read_dataset(bad, w.spec), std::runtime_error);
    Dataset ds = world::sample_dataset(w, 1, 1, 3);
    std::string trunc = "test_world_trunc.rdtd";
    world::write_dataset(trunc, ds, w.spec);
    {
        std::ifstream is(trunc, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() / 2);
        std::ofstream os(trunc, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), std::streamsize(bytes.size()));
    }
    CHECK_THROWS_AS(world::read_dataset(trunc, w.spec), std::runtime_error);
    std::remove(bad.c_str());
    std::remove(trunc.c_str());
}
