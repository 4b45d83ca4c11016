#pragma once

#include <map>
#include <string>

#include "redirtrans/graph.hpp"
#include "redirtrans/tensor.hpp"

namespace rdt {

// Named parameter set. std::map keeps iteration order stable, which makes
// checkpoint bytes and optimizer update order deterministic.
struct ParamStore {
    std::map<std::string, Tensor> items;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return items.count(name) != 0; }
    void put(const std::string& name, Tensor t);

    // Register every tensor on a graph as a named trainable leaf and return
    // the name -> node id mapping.
    std::map<std::string, int> attach(Graph& g) const;
};

// Same mapping but as frozen leaves: values participate in the forward pass,
// gradients do not flow into them.
std::map<std::string, int> attach_constants(Graph& g, const ParamStore& p);

// Adam with bias correction. Moment buffers are allocated lazily per
// parameter on first update; `step` counts calls to adam_step.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments;
};

// One update over every gradient entry present in grads. Parameters without
// a gradient entry are left untouched.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr);

// Global-norm gradient clipping: if the norm over all entries exceeds
// max_norm, every gradient is scaled by max_norm / norm. Returns the
// pre-clip norm.
double clip_grad_norm(GradMap& grads, double max_norm);

}  // namespace rdt
