#include <cmath>

#include "doctest.h"
#include "redirtrans/losses.hpp"

using namespace rdt;
using losses::Terms;
using losses::Weights;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("reconstruction term is the Euclidean gap") {
    Graph g;
    int a = g.constant(Tensor::row({1, 2, 2}));
    int b = g.constant(Tensor::row({1, 0, 0}));
    CHECK(g.value(losses::rec_node(g, a, b)).at(0) ==
          doctest::Approx(std::sqrt(8.0)));
    CHECK(g.value(losses::rec_node(g, a, a)).at(0) == doctest::Approx(0.0));
}

TEST_CASE("attribute term sums both angular errors") {
    Graph g;
    int ref = g.constant(Tensor::row({0.1f, 0.2f, -0.1f, 0.3f}));
    CHECK(g.value(losses::att_node(g, ref, ref)).at(0) == doctest::Approx(0.0));
    int hat = g.constant(Tensor::row({0.1f, 0.2f, -0.1f, 0.0f}));
    double head_only = geom::condition_angular_error({-0.1f, 0.0f}, {-0.1f, 0.3f});
    CHECK(g.value(losses::att_node(g, hat, ref)).at(0) ==
          doctest::Approx(head_only).epsilon(1e-4));
}

TEST_CASE("identity term spans aligned to opposed features") {
    Graph g;
    int x = g.constant(Tensor::row({1, 0, 0}));
    int same = g.constant(Tensor::row({2, 0, 0}));
    int orth = g.constant(Tensor::row({0, 3, 0}));
    int opp = g.constant(Tensor::row({-1, 0, 0}));
    CHECK(g.value(losses::id_node(g, x, same)).at(0) == doctest::Approx(0.0));
    CHECK(g.value(losses::id_node(g, x, orth)).at(0) == doctest::Approx(1.0));
    CHECK(g.value(losses::id_node(g, x, opp)).at(0) == doctest::Approx(2.0));
}

TEST_CASE("label term sums per-attribute condition errors") {
    Graph g;
    std::array<int, 2> hat = {g.constant(Tensor::row({0.1f, 0.2f})),
                              g.constant(Tensor::row({0.0f, -0.3f}))};
    std::array<int, 2> ref = {g.constant(Tensor::row({0.15f, 0.1f})),
                              g.constant(Tensor::row({0.0f, -0.3f}))};
    double expect = geom::condition_angular_error({0.1f, 0.2f}, {0.15f, 0.1f});
    CHECK(g.value(losses::label_node(g, hat, ref)).at(0) ==
          doctest::Approx(expect).epsilon(1e-4));
    CHECK(g.value(losses::label_node(g, ref, ref)).at(0) == doctest::Approx(0.0));
}

TEST_CASE("embedding term averages first-vs-later angles") {
    Graph g;
    int z0 = g.constant(Tensor({3, 1}, {1, 0, 0}));
    int z1 = g.constant(Tensor({3, 1}, {0, 1, 0}));
    int z2 = g.constant(Tensor({3, 1}, {1, 0, 0}));
    CHECK(g.value(losses::embed_node(g, {z0, z1})).at(0) ==
          doctest::Approx(kPi / 2));
    // (pi/2 + 0) / 2 over the two later entries.
    CHECK(g.value(losses::embed_node(g, {z0, z1, z2})).at(0) ==
          doctest::Approx(kPi / 4));
    CHECK_THROWS_AS(losses::embed_node(g, {z0}), GraphError);
}

TEST_CASE("reciprocal profile clamps tiny errors") {
    Tensor p = losses::reciprocal_profile({1.0, 0.5, 1e-9, 2.0});
    CHECK(p.at(0) == doctest::Approx(1.0));
    CHECK(p.at(1) == doctest::Approx(2.0));
    CHECK(p.at(2) == doctest::Approx(1000.0));
    CHECK(p.at(3) == doctest::Approx(0.5));
}

TEST_CASE("layer-weight term is small only when aligned") {
    Graph g;
    int p = g.constant(Tensor::row({2, 1, 1, 0}));
    int aligned = g.constant(Tensor::row({4, 2, 2, 0}));
    int other = g.constant(Tensor::row({0, 0, 1, 1}));
    // Parallel vectors land on the f32 arccos noise floor near cosine 1,
    // a few 1e-4, not exactly zero.
    CHECK(g.value(losses::layerweights_node(g, p, aligned)).at(0) < 2e-3);
    CHECK(g.value(losses::layerweights_node(g, p, other)).at(0) > 0.5);
}

TEST_CASE("total combines present terms with their weights") {
    Graph g;
    Terms t;
    t.rec = g.constant(Tensor::scalar(0.5f));
    t.att = g.constant(Tensor::scalar(0.25f));
    Weights w;
    w.rec = 2.0;
    w.att = 4.0;
    float total = g.value(losses::total_node(g, t, w, true)).at(0);
    CHECK(total == doctest::Approx(2.0 * 0.5 + 4.0 * 0.25));
    losses::Breakdown b = losses::read_terms(g, t, losses::total_node(g, t, w, true));
    CHECK(b.rec == doctest::Approx(0.5));
    CHECK(b.att == doctest::Approx(0.25));
    CHECK(b.perc == 0.0);
    CHECK(b.total == doctest::Approx(2.0));
}

TEST_CASE("flat totals ignore the layerwise-only terms") {
    Graph g;
    Terms t;
    t.rec = g.constant(Tensor::scalar(1.0f));
    t.perc = g.constant(Tensor::scalar(100.0f));
    t.prob = g.constant(Tensor::scalar(100.0f));
    Weights w;
    w.rec = 1.0;
    w.perc = 1.0;
    w.prob = 1.0;
    CHECK(g.value(losses::total_node(g, t, w, false)).at(0) == doctest::Approx(1.0));
    CHECK(g.value(losses::total_node(g, t, w, true)).at(0) == doctest::Approx(201.0));
}

TEST_CASE("negative weights are rejected") {
    Graph g;
    Terms t;
    t.rec = g.constant(Tensor::scalar(1.0f));
    Weights w;
    w.emb = -0.5;
    CHECK_THROWS_AS(losses::total_node(g, t, w, true), std::invalid_argument);
}
