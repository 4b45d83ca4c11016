#include "redirtrans/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace rdt::geom {

Mat3 rotation_from_condition(const Condition& c) {
    float st = std::sin(c.pitch), ct = std::cos(c.pitch);
    float sp = std::sin(c.yaw), cp = std::cos(c.yaw);
    Mat3 yaw = {{{cp, 0.0f, sp}, {0.0f, 1.0f, 0.0f}, {-sp, 0.0f, cp}}};
    Mat3 pitch = {{{1.0f, 0.0f, 0.0f}, {0.0f, ct, -st}, {0.0f, st, ct}}};
    return matmul(yaw, pitch);
}

Mat3 transpose(const Mat3& m) {
    Mat3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
    return t;
}

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j) r[i][j] += a[i][k] * b[k][j];
    return r;
}

Vec3 condition_to_vector(const Condition& c) {
    float st = std::sin(c.pitch), ct = std::cos(c.pitch);
    float sp = std::sin(c.yaw), cp = std::cos(c.yaw);
    return {ct * sp, st, ct * cp};
}

double angular_distance(const Vec3& u, const Vec3& v) {
    double nu = 0.0, nv = 0.0, dot = 0.0;
    for (int i = 0; i < 3; ++i) {
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
        dot += static_cast<double>(u[i]) * v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu <= 1e-8 || nv <= 1e-8)
        throw std::invalid_argument("angular_distance: zero-norm input");
    double cs = dot / (nu * nv);
    if (cs > 1.0) cs = 1.0;
    if (cs < -1.0) cs = -1.0;
    return std::acos(cs);
}

double condition_angular_error(const Condition& a, const Condition& b) {
    return angular_distance(condition_to_vector(a), condition_to_vector(b));
}

RotationNodes rotation_nodes(Graph& g, int cond) {
    int p = g.slice(cond, 0, 1);
    int y = g.slice(cond, 1, 1);
    int st = g.sin_(p), ct = g.cos_(p);
    int sp = g.sin_(y), cp = g.cos_(y);
    int zero = g.constant(Tensor::scalar(0.0f));
    int one = g.constant(Tensor::scalar(1.0f));
    int nst = g.scale(st, -1.0);
    int nsp = g.scale(sp, -1.0);

    int yaw = g.reshape(g.concat({cp, zero, sp, zero, one, zero, nsp, zero, cp}), {3, 3});
    int pit = g.reshape(g.concat({one, zero, zero, zero, ct, nst, zero, st, ct}), {3, 3});
    int yaw_t = g.reshape(g.concat({cp, zero, nsp, zero, one, zero, sp, zero, cp}), {3, 3});
    int pit_t = g.reshape(g.concat({one, zero, zero, zero, ct, st, zero, nst, ct}), {3, 3});

    RotationNodes out;
    out.R = g.matmul(yaw, pit);
    out.Rt = g.matmul(pit_t, yaw_t);
    return out;
}

int condition_vector_node(Graph& g, int cond) {
    int p = g.slice(cond, 0, 1);
    int y = g.slice(cond, 1, 1);
    int st = g.sin_(p), ct = g.cos_(p);
    int sp = g.sin_(y), cp = g.cos_(y);
    return g.concat({g.mul(ct, sp), st, g.mul(ct, cp)});
}

int angular_distance_node(Graph& g, int u, int v) {
    int dot = g.sum(g.mul(u, v));
    int denom = g.mul(g.l2norm(u), g.l2norm(v));
    int cs = g.mul(dot, g.recip(g.clamp_min(denom, 1e-8)));
    return g.arccos(cs);
}

int condition_error_node(Graph& g, int cond_a, int cond_b) {
    return angular_distance_node(g, condition_vector_node(g, cond_a),
                                 condition_vector_node(g, cond_b));
}

}  // namespace rdt::geom
