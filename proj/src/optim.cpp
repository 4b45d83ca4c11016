#include "redirtrans/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rdt {

Tensor& ParamStore::at(const std::string& name) {
    auto it = items.find(name);
    if (it == items.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = items.find(name);
    if (it == items.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
}

void ParamStore::put(const std::string& name, Tensor t) {
    t.requires_grad = true;
    items[name] = std::move(t);
}

std::map<std::string, int> ParamStore::attach(Graph& g) const {
    std::map<std::string, int> ids;
    for (const auto& [name, t] : items) ids[name] = g.param(name, t);
    return ids;
}

std::map<std::string, int> attach_constants(Graph& g, const ParamStore& p) {
    std::map<std::string, int> ids;
    for (const auto& [name, t] : p.items) {
        Tensor c = t;
        c.requires_grad = false;
        ids[name] = g.leaf(std::move(c));
    }
    return ids;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr) {
    state.step += 1;
    double b1 = state.beta1, b2 = state.beta2;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        if (g.numel() != p.numel())
            throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
        auto& [m, v] = state.moments[name];
        if (m.empty()) {
            m.assign(p.numel(), 0.0f);
            v.assign(p.numel(), 0.0f);
        }
        for (int i = 0; i < p.numel(); ++i) {
            double gi = g.data[i];
            double mi = b1 * m[i] + (1.0 - b1) * gi;
            double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            p.data[i] = static_cast<float>(p.data[i] - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

double clip_grad_norm(GradMap& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (float v : g.data) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        float s = static_cast<float>(max_norm / norm);
        for (auto& [name, g] : grads)
            for (float& v : g.data) v *= s;
    }
    return norm;
}

}  // namespace rdt
