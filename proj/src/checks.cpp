#include "redirtrans/checks.hpp"

#include <cmath>
#include <functional>

#include "redirtrans/geometry.hpp"
#include "redirtrans/graph.hpp"
#include "redirtrans/losses.hpp"
#include "redirtrans/rng.hpp"

namespace rdt::checks {

namespace {

constexpr double kEps = 1e-3;

Tensor draw(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    t.requires_grad = true;
    return t;
}

// Normal draw pushed away from zero, for ops with a kink or pole there.
Tensor draw_off_zero(std::vector<int> shape, Rng& rng, double margin = 0.2) {
    Tensor t = draw(std::move(shape), rng);
    for (float& v : t.data) {
        double sign = v < 0.0 ? -1.0 : 1.0;
        v = static_cast<float>(sign * (margin + std::fabs(v)));
    }
    return t;
}

Tensor draw_uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    t.requires_grad = true;
    return t;
}

// Displace every angle of a pitch/yaw tensor by 0.15..0.5 rad with random
// sign. Angular distance between two directions is at least their pitch
// difference, so pairs built this way stay clear of the arccos endpoint
// where the adjoint and the central difference both lose accuracy.
Tensor cond_apart(const Tensor& base, Rng& rng) {
    Tensor t = base;
    for (float& v : t.data) {
        double off = rng.uniform(0.15, 0.5);
        if (rng.uniform(0.0, 1.0) < 0.5) off = -off;
        v = static_cast<float>(v + off);
    }
    return t;
}

// Add an exact linear term in `leaf` to a scenario loss. Its gradient is a
// constant, handled without noise by both the adjoint and the replay, so it
// cannot hide an adjoint bug in the nonlinear part; its job is to keep every
// coordinate of the combined gradient away from zero, where the relative
// comparison would amplify rounding noise from stored forward values into
// spurious failures. `lo` must exceed the per-coordinate gradient scale of
// the nonlinear part.
int plus_linear(Graph& g, int loss, int leaf, Rng& rng, double lo, double hi) {
    Tensor c = Tensor::zeros(g.value(leaf).shape);
    for (float& v : c.data) {
        double m = rng.uniform(lo, hi);
        v = static_cast<float>(rng.uniform(0.0, 1.0) < 0.5 ? -m : m);
    }
    return g.add(loss, g.sum(g.mul(leaf, g.constant(std::move(c)))));
}

// Alternating large and small slots; the direction stays well away from any
// near-uniform positive vector, keeping the angular distance between the two
// off the arccos endpoint.
Tensor alternating_profile(int n, Rng& rng) {
    Tensor t = Tensor::zeros({n});
    for (int i = 0; i < n; ++i)
        t.data[i] = static_cast<float>((i % 2 == 0) ? rng.uniform(10.0, 20.0)
                                                    : rng.uniform(0.5, 1.5));
    return t;
}

// One battery entry: rebuild the scenario per point, gradcheck every listed
// leaf, keep the worst error.
struct Scenario {
    std::string name;
    // returns (loss node, leaves to check)
    std::function<std::pair<int, std::vector<int>>(Graph&, Rng&)> build;
};

std::vector<Scenario> scenarios() {
    std::vector<Scenario> s;
    auto add = [&](std::string name, auto fn) { s.push_back({std::move(name), fn}); };

    add("matmul_mat_mat", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({3, 4}, r)), b = g.leaf(draw({4, 2}, r));
        return std::pair{g.sum(g.matmul(a, b)), std::vector<int>{a, b}};
    });
    add("matmul_mat_vec", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({3, 4}, r)), b = g.leaf(draw({4}, r));
        return std::pair{g.sum(g.matmul(a, b)), std::vector<int>{a, b}};
    });
    add("add", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r)), b = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.add(a, b)), std::vector<int>{a, b}};
    });
    add("add_scalar_broadcast", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r)), b = g.leaf(draw({1}, r));
        return std::pair{g.sum(g.add(a, b)), std::vector<int>{a, b}};
    });
    add("sub", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r)), b = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.sub(a, b)), std::vector<int>{a, b}};
    });
    add("mul", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r)), b = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.mul(a, b)), std::vector<int>{a, b}};
    });
    add("mul_scalar_broadcast", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({1}, r)), b = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.mul(a, b)), std::vector<int>{a, b}};
    });
    add("scale", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.scale(a, -1.7)), std::vector<int>{a}};
    });
    add("recip", [](Graph& g, Rng& r) {
        int a = g.leaf(draw_off_zero({5}, r, 0.3));
        return std::pair{g.sum(g.recip(a)), std::vector<int>{a}};
    });
    add("clamp_min", [](Graph& g, Rng& r) {
        int a = g.leaf(draw_off_zero({5}, r, 0.3));
        return std::pair{g.sum(g.clamp_min(a, 0.0)), std::vector<int>{a}};
    });
    add("leaky_relu", [](Graph& g, Rng& r) {
        int a = g.leaf(draw_off_zero({6}, r));
        return std::pair{g.sum(g.leaky_relu(a)), std::vector<int>{a}};
    });
    add("tanh", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.tanh_(a)), std::vector<int>{a}};
    });
    add("sin", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.sin_(a)), std::vector<int>{a}};
    });
    add("cos", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({5}, r));
        return std::pair{g.sum(g.cos_(a)), std::vector<int>{a}};
    });
    add("arccos", [](Graph& g, Rng& r) {
        int a = g.leaf(draw_uniform({5}, r, -0.9, 0.9));
        return std::pair{g.sum(g.arccos(a)), std::vector<int>{a}};
    });
    add("l2norm", [](Graph& g, Rng& r) {
        int a = g.leaf(draw_off_zero({5}, r));
        return std::pair{g.l2norm(a), std::vector<int>{a}};
    });
    add("mean", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({7}, r));
        return std::pair{g.mean(a), std::vector<int>{a}};
    });
    add("sum", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({7}, r));
        return std::pair{g.sum(a), std::vector<int>{a}};
    });
    add("concat", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({3}, r)), b = g.leaf(draw({2, 2}, r)), c = g.leaf(draw({2}, r));
        // weight the pieces so each input's adjoint is distinct
        int cat = g.concat({a, b, c});
        int w = g.constant(draw_uniform({9}, r, 0.5, 1.5));
        return std::pair{g.sum(g.mul(cat, w)), std::vector<int>{a, b, c}};
    });
    add("slice", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({8}, r));
        return std::pair{g.sum(g.slice(a, 2, 3)), std::vector<int>{a}};
    });
    add("reshape", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({2, 6}, r));
        int w = g.constant(draw_uniform({3, 4}, r, 0.5, 1.5));
        return std::pair{g.sum(g.mul(g.reshape(a, {3, 4}), w)), std::vector<int>{a}};
    });
    add("conv3x3", [](Graph& g, Rng& r) {
        int x = g.leaf(draw({1, 5, 5}, r));
        int w = g.leaf(draw({2, 1, 3, 3}, r));
        int b = g.leaf(draw({2}, r));
        int m = g.constant(draw_uniform({2 * 5 * 5}, r, 0.5, 1.5));
        return std::pair{g.sum(g.mul(g.reshape(g.conv3x3(x, w, b), {2 * 5 * 5}), m)),
                         std::vector<int>{x, w, b}};
    });

    add("loss_rec", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({16}, r)), b = g.leaf(draw({16}, r));
        return std::pair{losses::rec_node(g, a, b), std::vector<int>{a, b}};
    });
    add("loss_att", [](Graph& g, Rng& r) {
        Tensor est = draw_uniform({4}, r, -0.6, 0.6);
        int a = g.leaf(est);
        int b = g.constant(cond_apart(est, r));
        int loss = plus_linear(g, losses::att_node(g, a, b), a, r, 2.0, 3.0);
        return std::pair{loss, std::vector<int>{a}};
    });
    add("loss_id", [](Graph& g, Rng& r) {
        int a = g.leaf(draw({16}, r)), b = g.leaf(draw({16}, r));
        int loss = losses::id_node(g, a, b);
        loss = plus_linear(g, loss, a, r, 1.0, 1.5);
        loss = plus_linear(g, loss, b, r, 1.0, 1.5);
        return std::pair{loss, std::vector<int>{a, b}};
    });
    add("loss_label", [](Graph& g, Rng& r) {
        Tensor e1 = draw_uniform({2}, r, -0.6, 0.6);
        Tensor e2 = draw_uniform({2}, r, -0.6, 0.6);
        int c1 = g.leaf(e1);
        int c2 = g.leaf(e2);
        int r1 = g.constant(cond_apart(e1, r));
        int r2 = g.constant(cond_apart(e2, r));
        int loss = losses::label_node(g, {c1, c2}, {r1, r2});
        loss = plus_linear(g, loss, c1, r, 2.0, 3.0);
        loss = plus_linear(g, loss, c2, r, 2.0, 3.0);
        return std::pair{loss, std::vector<int>{c1, c2}};
    });
    add("loss_embed", [](Graph& g, Rng& r) {
        int z1 = g.leaf(draw({3, 16}, r));
        int z2 = g.leaf(draw({3, 16}, r));
        int z3 = g.leaf(draw({3, 16}, r));
        int loss = losses::embed_node(g, {z1, z2, z3});
        loss = plus_linear(g, loss, z1, r, 0.6, 0.9);
        loss = plus_linear(g, loss, z2, r, 0.6, 0.9);
        loss = plus_linear(g, loss, z3, r, 0.6, 0.9);
        return std::pair{loss, std::vector<int>{z1, z2, z3}};
    });
    add("loss_layerweights", [](Graph& g, Rng& r) {
        int p = g.leaf(draw_uniform({6}, r, 0.3, 1.0));
        int prof = g.constant(alternating_profile(6, r));
        int loss = plus_linear(g, losses::layerweights_node(g, p, prof), p, r, 5.0, 6.0);
        return std::pair{loss, std::vector<int>{p}};
    });
    add("loss_total", [](Graph& g, Rng& r) {
        losses::Terms t;
        int a = g.leaf(draw({8}, r)), b = g.constant(draw({8}, r));
        t.rec = losses::rec_node(g, a, b);
        int fa = g.leaf(draw({8}, r)), fb = g.constant(draw({8}, r));
        t.perc = losses::rec_node(g, fa, fb);
        Tensor est = draw_uniform({4}, r, -0.6, 0.6);
        int e = g.leaf(est);
        t.att = losses::att_node(g, e, g.constant(cond_apart(est, r)));
        int u = g.leaf(draw({8}, r)), v = g.constant(draw({8}, r));
        t.id = losses::id_node(g, u, v);
        Tensor cd = draw_uniform({2}, r, -0.6, 0.6);
        Tensor cd2 = draw_uniform({2}, r, -0.6, 0.6);
        int c = g.leaf(cd);
        t.lab = losses::label_node(g, {c, g.constant(cd2)},
                                   {g.constant(cond_apart(cd, r)),
                                    g.constant(cond_apart(cd2, r))});
        int z1 = g.leaf(draw({3, 16}, r)), z2 = g.constant(draw({3, 16}, r));
        t.emb = losses::embed_node(g, {z1, z2});
        int p = g.leaf(draw_uniform({6}, r, 0.3, 1.0));
        t.prob = losses::layerweights_node(g, p, g.constant(alternating_profile(6, r)));
        losses::Weights w;
        int loss = losses::total_node(g, t, w, true);
        // rec and perc gradients scale with the checked coordinate itself, so
        // those two leaves need no linear term; the rest get terms sized past
        // their weighted per-coordinate gradient bounds
        loss = plus_linear(g, loss, e, r, 7.0, 9.0);
        loss = plus_linear(g, loss, u, r, 3.0, 4.0);
        loss = plus_linear(g, loss, c, r, 7.0, 9.0);
        loss = plus_linear(g, loss, z1, r, 1.2, 1.6);
        loss = plus_linear(g, loss, p, r, 40.0, 50.0);
        return std::pair{loss, std::vector<int>{a, fa, e, u, c, z1, p}};
    });

    add("rotation_chain", [](Graph& g, Rng& r) {
        // normalize by one condition, re-rotate to a different one; with a
        // shared condition the chain collapses to the identity and the
        // output would not depend on it at all
        int c1 = g.leaf(draw_uniform({2}, r, -0.6, 0.6));
        int c2 = g.leaf(draw_uniform({2}, r, -0.6, 0.6));
        int z = g.leaf(draw({3, 16}, r));
        auto rot1 = geom::rotation_nodes(g, c1);
        auto rot2 = geom::rotation_nodes(g, c2);
        int w = g.constant(draw_uniform({3 * 16}, r, 0.5, 1.5));
        int y = g.sum(g.mul(g.reshape(g.matmul(rot2.R, g.matmul(rot1.Rt, z)), {3 * 16}), w));
        y = plus_linear(g, y, c1, r, 30.0, 40.0);
        y = plus_linear(g, y, c2, r, 30.0, 40.0);
        y = plus_linear(g, y, z, r, 3.0, 4.0);
        return std::pair{y, std::vector<int>{c1, c2, z}};
    });

    return s;
}

}  // namespace

std::vector<CheckResult> gradcheck_battery(uint64_t seed, int points) {
    std::vector<CheckResult> out;
    for (const Scenario& sc : scenarios()) {
        CheckResult res;
        res.name = sc.name;
        for (int p = 0; p < points; ++p) {
            Rng rng = Rng::derive(seed, "check/" + sc.name + "/" + std::to_string(p));
            Graph g;
            auto [loss, leaves] = sc.build(g, rng);
            for (int leaf : leaves) {
                double err = g.gradcheck(loss, leaf, kEps);
                if (err > res.max_rel_err) res.max_rel_err = err;
            }
        }
        out.push_back(std::move(res));
    }
    return out;
}

double worst_rel_err(const std::vector<CheckResult>& results) {
    double worst = 0.0;
    for (const CheckResult& r : results)
        if (r.max_rel_err > worst) worst = r.max_rel_err;
    return worst;
}

}  // namespace rdt::checks
