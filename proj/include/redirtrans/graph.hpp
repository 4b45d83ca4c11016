#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "redirtrans/tensor.hpp"

namespace rdt {

// Reverse-mode autodiff tape.
//
// A Graph is an ordered list of op records. Building an op computes its
// forward value immediately (in f32) and appends a node; backward() walks the
// records in reverse and accumulates adjoints. Nodes are addressed by integer
// ids, so model code passes ints around rather than tensor objects.
//
// Vectors are rank-1 tensors. matmul accepts [m,k]x[k,n] -> [m,n] and the
// matrix-vector case [m,k]x[k] -> [m]. concat and slice operate on the
// flattened row-major data of their inputs, which together with reshape is
// enough to assemble small matrices (e.g. rotations) from scalar nodes.
//
// Numerical edge handling, fixed here once so every caller gets the same
// behaviour:
//   * arccos clamps its input to [-1, 1] in the forward pass (so aligned
//     unit vectors give exactly 0) and to [-1+1e-7, 1-1e-7] in the adjoint
//     (so the derivative stays finite at the ends);
//   * l2norm uses the zero subgradient at the origin;
//   * every forward result is checked for NaN/Inf and a violation throws
//     GraphError naming the op and node id.

enum class Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,      // by a compile-time constant factor (aux)
    Recip,
    ClampMin,   // max(x, aux)
    LeakyRelu,  // negative slope 0.01
    Tanh,
    Sin,
    Cos,
    Arccos,
    L2Norm,
    Mean,
    Sum,
    Concat,
    Slice,      // flat [aux_i0, aux_i0 + aux_i1)
    Reshape,
    Conv3x3,    // stride 1, zero padding 1; inputs: x [C,H,W], w [O,C,3,3], b [O]
};

const char* op_name(Op op);

struct GraphError : std::runtime_error {
    explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

struct Node {
    Op op = Op::Leaf;
    std::vector<int> inputs;
    Tensor value;
    double aux = 0.0;
    int aux_i0 = 0;
    int aux_i1 = 0;
    std::string name;  // parameter name for named leaves, empty otherwise
};

using GradMap = std::map<std::string, Tensor>;

class Graph {
  public:
    // --- leaves ---------------------------------------------------------
    int leaf(Tensor t);                                  // keeps t.requires_grad
    int constant(Tensor t);                              // requires_grad = false
    int param(const std::string& name, const Tensor& t); // requires_grad = true, registered

    // --- ops ------------------------------------------------------------
    int matmul(int a, int b);
    int add(int a, int b);   // same shape, or either side scalar (numel 1)
    int sub(int a, int b);
    int mul(int a, int b);   // elementwise; scalar side broadcasts
    int scale(int a, double c);
    int recip(int a);
    int clamp_min(int a, double m);
    int leaky_relu(int a);
    int tanh_(int a);
    int sin_(int a);
    int cos_(int a);
    int arccos(int a);
    int l2norm(int a);
    int mean(int a);
    int sum(int a);
    int concat(const std::vector<int>& parts);
    int slice(int a, int start, int len);
    int reshape(int a, std::vector<int> new_shape);
    int conv3x3(int x, int w, int b);

    // --- inspection -----------------------------------------------------
    const Tensor& value(int id) const { return nodes_[id].value; }
    int size() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int id) const { return nodes_[id]; }

    // --- differentiation --------------------------------------------------
    // Adjoints of a scalar node w.r.t. every requires_grad node. Entries for
    // nodes outside the differentiable subgraph are empty tensors.
    std::vector<Tensor> backward(int loss);

    // Gradients for registered parameters only, keyed by name. Named leaves
    // that the loss does not depend on map to zero tensors.
    GradMap forward_backward(int loss);

    // Forward re-evaluation of one node in f64, with a single coordinate of a
    // leaf perturbed by delta. Used by the finite-difference oracle: the f64
    // arithmetic removes the cancellation noise an f32 re-evaluation would
    // add to (f(x+h) - f(x-h)) / 2h.
    double replay_f64(int target, int leaf, int coord, double delta) const;

    // Max over coordinates of |g_analytic - g_fd| / max(1e-8, |g_a| + |g_fd|)
    // for d value(loss) / d value(leaf), with central differences at +-eps.
    double gradcheck(int loss, int leaf, double eps);

  private:
    int push(Node n);
    void check_finite(int id) const;
    std::vector<Node> nodes_;
    std::map<std::string, int> params_;
};

}  // namespace rdt
