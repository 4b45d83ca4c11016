#include "redirtrans/graph.hpp"

#include <cmath>
#include <cstdio>

namespace rdt {

namespace {
constexpr float kLeakySlope = 0.01f;
constexpr double kArccosAdjClamp = 1.0 - 1e-7;  // keeps the adjoint finite at +-1
constexpr double kNormFloor = 1e-12;            // zero subgradient for l2norm at 0
}  // namespace

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Recip: return "recip";
        case Op::ClampMin: return "clamp_min";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Tanh: return "tanh";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Arccos: return "arccos";
        case Op::L2Norm: return "l2norm";
        case Op::Mean: return "mean";
        case Op::Sum: return "sum";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Reshape: return "reshape";
        case Op::Conv3x3: return "conv3x3";
    }
    return "?";
}

void Graph::check_finite(int id) const {
    const Node& n = nodes_[id];
    for (float v : n.value.data) {
        if (!std::isfinite(v)) {
            throw GraphError(std::string("non-finite value out of op '") + op_name(n.op) +
                             "' at node " + std::to_string(id) +
                             (n.name.empty() ? "" : " (" + n.name + ")"));
        }
    }
}

int Graph::push(Node n) {
    if (n.op != Op::Leaf) {
        bool rg = false;
        for (int i : n.inputs) rg = rg || nodes_[i].value.requires_grad;
        n.value.requires_grad = rg;
    }
    nodes_.push_back(std::move(n));
    int id = static_cast<int>(nodes_.size()) - 1;
    check_finite(id);
    return id;
}

int Graph::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(t);
    return push(std::move(n));
}

int Graph::constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
}

int Graph::param(const std::string& name, const Tensor& t) {
    if (params_.count(name))
        throw GraphError("duplicate parameter name '" + name + "'");
    Node n;
    n.op = Op::Leaf;
    n.value = t;
    n.value.requires_grad = true;
    n.name = name;
    int id = push(std::move(n));
    params_[name] = id;
    return id;
}

int Graph::matmul(int a, int b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    if (A.rank() != 2) throw GraphError("matmul: lhs must be rank 2, got " + shape_str(A.shape));
    int m = A.shape[0], k = A.shape[1];
    Node n;
    n.op = Op::MatMul;
    n.inputs = {a, b};
    if (B.rank() == 1) {
        if (B.shape[0] != k)
            throw GraphError("matmul: inner dims " + shape_str(A.shape) + " x " + shape_str(B.shape));
        n.value = Tensor::zeros({m});
        for (int i = 0; i < m; ++i) {
            float acc = 0.0f;
            const float* row = &A.data[static_cast<size_t>(i) * k];
            for (int kk = 0; kk < k; ++kk) acc += row[kk] * B.data[kk];
            n.value.data[i] = acc;
        }
    } else if (B.rank() == 2) {
        if (B.shape[0] != k)
            throw GraphError("matmul: inner dims " + shape_str(A.shape) + " x " + shape_str(B.shape));
        int cols = B.shape[1];
        n.value = Tensor::zeros({m, cols});
        for (int i = 0; i < m; ++i) {
            float* out = &n.value.data[static_cast<size_t>(i) * cols];
            for (int kk = 0; kk < k; ++kk) {
                float av = A.data[static_cast<size_t>(i) * k + kk];
                const float* brow = &B.data[static_cast<size_t>(kk) * cols];
                for (int j = 0; j < cols; ++j) out[j] += av * brow[j];
            }
        }
    } else {
        throw GraphError("matmul: rhs must be rank 1 or 2, got " + shape_str(B.shape));
    }
    return push(std::move(n));
}

namespace {
// add/sub/mul allow identical shapes or a scalar (numel 1) on either side.
enum class BcKind { Same, ScalarLeft, ScalarRight };
BcKind bc_kind(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape == b.shape) return BcKind::Same;
    if (a.numel() == 1) return BcKind::ScalarLeft;
    if (b.numel() == 1) return BcKind::ScalarRight;
    throw GraphError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}
}  // namespace

int Graph::add(int a, int b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    BcKind k = bc_kind(A, B, "add");
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    const Tensor& big = (k == BcKind::ScalarLeft) ? B : A;
    n.value = Tensor::zeros(big.shape);
    for (int i = 0; i < big.numel(); ++i) {
        float av = (k == BcKind::ScalarLeft) ? A.data[0] : A.data[i];
        float bv = (k == BcKind::ScalarRight) ? B.data[0] : B.data[i];
        n.value.data[i] = av + bv;
    }
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    BcKind k = bc_kind(A, B, "sub");
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    const Tensor& big = (k == BcKind::ScalarLeft) ? B : A;
    n.value = Tensor::zeros(big.shape);
    for (int i = 0; i < big.numel(); ++i) {
        float av = (k == BcKind::ScalarLeft) ? A.data[0] : A.data[i];
        float bv = (k == BcKind::ScalarRight) ? B.data[0] : B.data[i];
        n.value.data[i] = av - bv;
    }
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    BcKind k = bc_kind(A, B, "mul");
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    const Tensor& big = (k == BcKind::ScalarLeft) ? B : A;
    n.value = Tensor::zeros(big.shape);
    for (int i = 0; i < big.numel(); ++i) {
        float av = (k == BcKind::ScalarLeft) ? A.data[0] : A.data[i];
        float bv = (k == BcKind::ScalarRight) ? B.data[0] : B.data[i];
        n.value.data[i] = av * bv;
    }
    return push(std::move(n));
}

int Graph::scale(int a, double c) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.aux = c;
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = static_cast<float>(c * v);
    return push(std::move(n));
}

int Graph::recip(int a) {
    Node n;
    n.op = Op::Recip;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = 1.0f / v;
    return push(std::move(n));
}

int Graph::clamp_min(int a, double m) {
    Node n;
    n.op = Op::ClampMin;
    n.inputs = {a};
    n.aux = m;
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    float mf = static_cast<float>(m);
    for (float& v : n.value.data) v = (v < mf) ? mf : v;
    return push(std::move(n));
}

int Graph::leaky_relu(int a) {
    Node n;
    n.op = Op::LeakyRelu;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = (v > 0.0f) ? v : kLeakySlope * v;
    return push(std::move(n));
}

int Graph::tanh_(int a) {
    Node n;
    n.op = Op::Tanh;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = std::tanh(v);
    return push(std::move(n));
}

int Graph::sin_(int a) {
    Node n;
    n.op = Op::Sin;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = std::sin(v);
    return push(std::move(n));
}

int Graph::cos_(int a) {
    Node n;
    n.op = Op::Cos;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) v = std::cos(v);
    return push(std::move(n));
}

int Graph::arccos(int a) {
    Node n;
    n.op = Op::Arccos;
    n.inputs = {a};
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    for (float& v : n.value.data) {
        float x = v;
        if (x > 1.0f) x = 1.0f;
        if (x < -1.0f) x = -1.0f;
        v = std::acos(x);
    }
    return push(std::move(n));
}

int Graph::l2norm(int a) {
    Node n;
    n.op = Op::L2Norm;
    n.inputs = {a};
    float acc = 0.0f;
    for (float v : nodes_[a].value.data) acc += v * v;
    n.value = Tensor::scalar(std::sqrt(acc));
    return push(std::move(n));
}

int Graph::mean(int a) {
    Node n;
    n.op = Op::Mean;
    n.inputs = {a};
    const Tensor& A = nodes_[a].value;
    float acc = 0.0f;
    for (float v : A.data) acc += v;
    n.value = Tensor::scalar(acc / static_cast<float>(A.numel()));
    return push(std::move(n));
}

int Graph::sum(int a) {
    Node n;
    n.op = Op::Sum;
    n.inputs = {a};
    float acc = 0.0f;
    for (float v : nodes_[a].value.data) acc += v;
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

int Graph::concat(const std::vector<int>& parts) {
    if (parts.empty()) throw GraphError("concat: no inputs");
    Node n;
    n.op = Op::Concat;
    n.inputs = parts;
    int total = 0;
    for (int p : parts) total += nodes_[p].value.numel();
    n.value = Tensor::zeros({total});
    int off = 0;
    for (int p : parts) {
        const Tensor& t = nodes_[p].value;
        for (int i = 0; i < t.numel(); ++i) n.value.data[off + i] = t.data[i];
        off += t.numel();
    }
    return push(std::move(n));
}

int Graph::slice(int a, int start, int len) {
    const Tensor& A = nodes_[a].value;
    if (start < 0 || len <= 0 || start + len > A.numel())
        throw GraphError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") outside numel " +
                         std::to_string(A.numel()));
    Node n;
    n.op = Op::Slice;
    n.inputs = {a};
    n.aux_i0 = start;
    n.aux_i1 = len;
    n.value = Tensor::zeros({len});
    for (int i = 0; i < len; ++i) n.value.data[i] = A.data[start + i];
    return push(std::move(n));
}

int Graph::reshape(int a, std::vector<int> new_shape) {
    const Tensor& A = nodes_[a].value;
    if (Tensor::numel_of(new_shape) != A.numel())
        throw GraphError("reshape: numel mismatch " + shape_str(A.shape) + " -> " +
                         shape_str(new_shape));
    Node n;
    n.op = Op::Reshape;
    n.inputs = {a};
    n.value = Tensor(std::move(new_shape), A.data);
    return push(std::move(n));
}

int Graph::conv3x3(int x, int w, int b) {
    const Tensor& X = nodes_[x].value;
    const Tensor& W = nodes_[w].value;
    const Tensor& B = nodes_[b].value;
    if (X.rank() != 3) throw GraphError("conv3x3: input must be [C,H,W]");
    int C = X.shape[0], H = X.shape[1], Wd = X.shape[2];
    if (W.rank() != 4 || W.shape[1] != C || W.shape[2] != 3 || W.shape[3] != 3)
        throw GraphError("conv3x3: kernel must be [O," + std::to_string(C) + ",3,3], got " +
                         shape_str(W.shape));
    int O = W.shape[0];
    if (B.numel() != O) throw GraphError("conv3x3: bias size mismatch");
    Node n;
    n.op = Op::Conv3x3;
    n.inputs = {x, w, b};
    n.value = Tensor::zeros({O, H, Wd});
    for (int o = 0; o < O; ++o) {
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < Wd; ++j) {
                float acc = B.data[o];
                for (int c = 0; c < C; ++c) {
                    for (int di = 0; di < 3; ++di) {
                        int ii = i + di - 1;
                        if (ii < 0 || ii >= H) continue;
                        for (int dj = 0; dj < 3; ++dj) {
                            int jj = j + dj - 1;
                            if (jj < 0 || jj >= Wd) continue;
                            acc += X.data[(static_cast<size_t>(c) * H + ii) * Wd + jj] *
                                   W.data[((static_cast<size_t>(o) * C + c) * 3 + di) * 3 + dj];
                        }
                    }
                }
                n.value.data[(static_cast<size_t>(o) * H + i) * Wd + j] = acc;
            }
        }
    }
    return push(std::move(n));
}

std::vector<Tensor> Graph::backward(int loss) {
    if (loss < 0 || loss >= size()) throw GraphError("backward: bad loss node");
    if (nodes_[loss].value.numel() != 1)
        throw GraphError("backward: loss must be scalar, got " +
                         shape_str(nodes_[loss].value.shape));

    // Adjoints accumulate in f64 so repeated += does not build up an absolute
    // f32 rounding floor; products of stored f32 values are exact in f64, and
    // the result is rounded to f32 once when the output tensors are built.
    std::vector<std::vector<double>> g(nodes_.size());
    auto ensure = [&](int id) -> std::vector<double>& {
        if (g[id].empty()) g[id].assign(nodes_[id].value.numel(), 0.0);
        return g[id];
    };
    ensure(loss)[0] = 1.0;

    for (int id = loss; id >= 0; --id) {
        if (g[id].empty()) continue;
        const Node& n = nodes_[id];
        if (n.op == Op::Leaf) continue;
        const std::vector<double>& go = g[id];
        auto wants = [&](int in) { return nodes_[in].value.requires_grad; };

        switch (n.op) {
            case Op::MatMul: {
                int a = n.inputs[0], b = n.inputs[1];
                const Tensor& A = nodes_[a].value;
                const Tensor& B = nodes_[b].value;
                int m = A.shape[0], k = A.shape[1];
                if (B.rank() == 1) {
                    if (wants(a)) {
                        auto& ga = ensure(a);
                        for (int i = 0; i < m; ++i)
                            for (int kk = 0; kk < k; ++kk)
                                ga[static_cast<size_t>(i) * k + kk] += go[i] * B.data[kk];
                    }
                    if (wants(b)) {
                        auto& gb = ensure(b);
                        for (int i = 0; i < m; ++i)
                            for (int kk = 0; kk < k; ++kk)
                                gb[kk] += A.data[static_cast<size_t>(i) * k + kk] * go[i];
                    }
                } else {
                    int cols = B.shape[1];
                    if (wants(a)) {
                        auto& ga = ensure(a);
                        for (int i = 0; i < m; ++i)
                            for (int kk = 0; kk < k; ++kk) {
                                double acc = 0.0;
                                const double* grow = &go[static_cast<size_t>(i) * cols];
                                const float* brow = &B.data[static_cast<size_t>(kk) * cols];
                                for (int j = 0; j < cols; ++j) acc += grow[j] * brow[j];
                                ga[static_cast<size_t>(i) * k + kk] += acc;
                            }
                    }
                    if (wants(b)) {
                        auto& gb = ensure(b);
                        for (int i = 0; i < m; ++i)
                            for (int kk = 0; kk < k; ++kk) {
                                double av = A.data[static_cast<size_t>(i) * k + kk];
                                double* brow = &gb[static_cast<size_t>(kk) * cols];
                                const double* grow = &go[static_cast<size_t>(i) * cols];
                                for (int j = 0; j < cols; ++j) brow[j] += av * grow[j];
                            }
                    }
                }
                break;
            }
            case Op::Add:
            case Op::Sub: {
                int a = n.inputs[0], b = n.inputs[1];
                double sgn = (n.op == Op::Sub) ? -1.0 : 1.0;
                const Tensor& A = nodes_[a].value;
                const Tensor& B = nodes_[b].value;
                int no = static_cast<int>(go.size());
                if (wants(a)) {
                    auto& ga = ensure(a);
                    if (A.numel() == no)
                        for (int i = 0; i < no; ++i) ga[i] += go[i];
                    else
                        for (int i = 0; i < no; ++i) ga[0] += go[i];
                }
                if (wants(b)) {
                    auto& gb = ensure(b);
                    if (B.numel() == no)
                        for (int i = 0; i < no; ++i) gb[i] += sgn * go[i];
                    else
                        for (int i = 0; i < no; ++i) gb[0] += sgn * go[i];
                }
                break;
            }
            case Op::Mul: {
                int a = n.inputs[0], b = n.inputs[1];
                const Tensor& A = nodes_[a].value;
                const Tensor& B = nodes_[b].value;
                int no = static_cast<int>(go.size());
                if (wants(a)) {
                    auto& ga = ensure(a);
                    for (int i = 0; i < no; ++i) {
                        double bv = (B.numel() == no) ? B.data[i] : B.data[0];
                        if (A.numel() == no)
                            ga[i] += go[i] * bv;
                        else
                            ga[0] += go[i] * bv;
                    }
                }
                if (wants(b)) {
                    auto& gb = ensure(b);
                    for (int i = 0; i < no; ++i) {
                        double av = (A.numel() == no) ? A.data[i] : A.data[0];
                        if (B.numel() == no)
                            gb[i] += go[i] * av;
                        else
                            gb[0] += go[i] * av;
                    }
                }
                break;
            }
            case Op::Scale: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    double c = n.aux;
                    for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
                }
                break;
            }
            case Op::Recip: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    for (size_t i = 0; i < go.size(); ++i) {
                        double x = A.data[i];
                        ga[i] += -go[i] / (x * x);
                    }
                }
                break;
            }
            case Op::ClampMin: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    float m = static_cast<float>(n.aux);
                    for (size_t i = 0; i < go.size(); ++i)
                        if (A.data[i] >= m) ga[i] += go[i];
                }
                break;
            }
            case Op::LeakyRelu: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    for (size_t i = 0; i < go.size(); ++i)
                        ga[i] += go[i] * (A.data[i] > 0.0f ? 1.0f : kLeakySlope);
                }
                break;
            }
            case Op::Tanh: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    for (size_t i = 0; i < go.size(); ++i) {
                        double y = n.value.data[i];
                        ga[i] += go[i] * (1.0 - y * y);
                    }
                }
                break;
            }
            case Op::Sin: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    for (size_t i = 0; i < go.size(); ++i)
                        ga[i] += go[i] * std::cos(static_cast<double>(A.data[i]));
                }
                break;
            }
            case Op::Cos: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    for (size_t i = 0; i < go.size(); ++i)
                        ga[i] += -go[i] * std::sin(static_cast<double>(A.data[i]));
                }
                break;
            }
            case Op::Arccos: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    for (size_t i = 0; i < go.size(); ++i) {
                        double x = A.data[i];
                        if (x > kArccosAdjClamp) x = kArccosAdjClamp;
                        if (x < -kArccosAdjClamp) x = -kArccosAdjClamp;
                        ga[i] += -go[i] / std::sqrt(1.0 - x * x);
                    }
                }
                break;
            }
            case Op::L2Norm: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    const Tensor& A = nodes_[a].value;
                    double y = n.value.data[0];
                    double denom = (y > kNormFloor) ? y : kNormFloor;
                    for (int i = 0; i < A.numel(); ++i) ga[i] += go[0] * A.data[i] / denom;
                }
                break;
            }
            case Op::Mean: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    double c = go[0] / static_cast<double>(nodes_[a].value.numel());
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += c;
                }
                break;
            }
            case Op::Sum: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
                }
                break;
            }
            case Op::Concat: {
                int off = 0;
                for (int p : n.inputs) {
                    int len = nodes_[p].value.numel();
                    if (wants(p)) {
                        auto& gp = ensure(p);
                        for (int i = 0; i < len; ++i) gp[i] += go[off + i];
                    }
                    off += len;
                }
                break;
            }
            case Op::Slice: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    for (int i = 0; i < n.aux_i1; ++i) ga[n.aux_i0 + i] += go[i];
                }
                break;
            }
            case Op::Reshape: {
                int a = n.inputs[0];
                if (wants(a)) {
                    auto& ga = ensure(a);
                    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                }
                break;
            }
            case Op::Conv3x3: {
                int x = n.inputs[0], w = n.inputs[1], b = n.inputs[2];
                const Tensor& X = nodes_[x].value;
                const Tensor& W = nodes_[w].value;
                int C = X.shape[0], H = X.shape[1], Wd = X.shape[2];
                int O = W.shape[0];
                bool wx = wants(x), ww = wants(w), wb = wants(b);
                if (!wx && !ww && !wb) break;
                std::vector<double>* gx = wx ? &ensure(x) : nullptr;
                std::vector<double>* gw = ww ? &ensure(w) : nullptr;
                std::vector<double>* gb = wb ? &ensure(b) : nullptr;
                for (int o = 0; o < O; ++o) {
                    for (int i = 0; i < H; ++i) {
                        for (int j = 0; j < Wd; ++j) {
                            double gv = go[(static_cast<size_t>(o) * H + i) * Wd + j];
                            if (gb) (*gb)[o] += gv;
                            if (!gx && !gw) continue;
                            for (int c = 0; c < C; ++c) {
                                for (int di = 0; di < 3; ++di) {
                                    int ii = i + di - 1;
                                    if (ii < 0 || ii >= H) continue;
                                    for (int dj = 0; dj < 3; ++dj) {
                                        int jj = j + dj - 1;
                                        if (jj < 0 || jj >= Wd) continue;
                                        size_t xi = (static_cast<size_t>(c) * H + ii) * Wd + jj;
                                        size_t wi = ((static_cast<size_t>(o) * C + c) * 3 + di) * 3 + dj;
                                        if (gx) (*gx)[xi] += gv * W.data[wi];
                                        if (gw) (*gw)[wi] += gv * X.data[xi];
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }

    std::vector<Tensor> out(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (!g[i].empty() && nodes_[i].value.requires_grad) {
            std::vector<float> buf(g[i].size());
            for (size_t j = 0; j < g[i].size(); ++j) buf[j] = static_cast<float>(g[i][j]);
            out[i] = Tensor(nodes_[i].value.shape, std::move(buf));
        }
    }
    return out;
}

GradMap Graph::forward_backward(int loss) {
    auto node_grads = backward(loss);
    GradMap out;
    for (const auto& [name, id] : params_) {
        if (node_grads[id].numel() > 0)
            out[name] = std::move(node_grads[id]);
        else
            out[name] = Tensor::zeros(nodes_[id].value.shape);
    }
    return out;
}

double Graph::replay_f64(int target, int leaf, int coord, double delta) const {
    std::vector<std::vector<double>> val(target + 1);
    for (int id = 0; id <= target; ++id) {
        const Node& n = nodes_[id];
        auto& out = val[id];
        switch (n.op) {
            case Op::Leaf: {
                out.assign(n.value.data.begin(), n.value.data.end());
                if (id == leaf) out[coord] += delta;
                break;
            }
            case Op::MatMul: {
                const auto& A = val[n.inputs[0]];
                const auto& B = val[n.inputs[1]];
                const Tensor& At = nodes_[n.inputs[0]].value;
                const Tensor& Bt = nodes_[n.inputs[1]].value;
                int m = At.shape[0], k = At.shape[1];
                int cols = (Bt.rank() == 1) ? 1 : Bt.shape[1];
                out.assign(static_cast<size_t>(m) * cols, 0.0);
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double av = A[static_cast<size_t>(i) * k + kk];
                        for (int j = 0; j < cols; ++j)
                            out[static_cast<size_t>(i) * cols + j] +=
                                av * B[static_cast<size_t>(kk) * cols + j];
                    }
                break;
            }
            case Op::Add:
            case Op::Sub:
            case Op::Mul: {
                const auto& A = val[n.inputs[0]];
                const auto& B = val[n.inputs[1]];
                size_t no = n.value.data.size();
                out.resize(no);
                for (size_t i = 0; i < no; ++i) {
                    double av = (A.size() == no) ? A[i] : A[0];
                    double bv = (B.size() == no) ? B[i] : B[0];
                    out[i] = (n.op == Op::Add) ? av + bv : (n.op == Op::Sub) ? av - bv : av * bv;
                }
                break;
            }
            case Op::Scale: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = n.aux * A[i];
                break;
            }
            case Op::Recip: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = 1.0 / A[i];
                break;
            }
            case Op::ClampMin: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = (A[i] < n.aux) ? n.aux : A[i];
                break;
            }
            case Op::LeakyRelu: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i)
                    out[i] = (A[i] > 0.0) ? A[i] : static_cast<double>(kLeakySlope) * A[i];
                break;
            }
            case Op::Tanh: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = std::tanh(A[i]);
                break;
            }
            case Op::Sin: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = std::sin(A[i]);
                break;
            }
            case Op::Cos: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) out[i] = std::cos(A[i]);
                break;
            }
            case Op::Arccos: {
                const auto& A = val[n.inputs[0]];
                out.resize(A.size());
                for (size_t i = 0; i < A.size(); ++i) {
                    double x = A[i];
                    if (x > 1.0) x = 1.0;
                    if (x < -1.0) x = -1.0;
                    out[i] = std::acos(x);
                }
                break;
            }
            case Op::L2Norm: {
                const auto& A = val[n.inputs[0]];
                double acc = 0.0;
                for (double v : A) acc += v * v;
                out = {std::sqrt(acc)};
                break;
            }
            case Op::Mean: {
                const auto& A = val[n.inputs[0]];
                double acc = 0.0;
                for (double v : A) acc += v;
                out = {acc / static_cast<double>(A.size())};
                break;
            }
            case Op::Sum: {
                const auto& A = val[n.inputs[0]];
                double acc = 0.0;
                for (double v : A) acc += v;
                out = {acc};
                break;
            }
            case Op::Concat: {
                out.reserve(n.value.data.size());
                for (int p : n.inputs) out.insert(out.end(), val[p].begin(), val[p].end());
                break;
            }
            case Op::Slice: {
                const auto& A = val[n.inputs[0]];
                out.assign(A.begin() + n.aux_i0, A.begin() + n.aux_i0 + n.aux_i1);
                break;
            }
            case Op::Reshape: {
                out = val[n.inputs[0]];
                break;
            }
            case Op::Conv3x3: {
                const auto& X = val[n.inputs[0]];
                const auto& W = val[n.inputs[1]];
                const auto& B = val[n.inputs[2]];
                const Tensor& Xt = nodes_[n.inputs[0]].value;
                const Tensor& Wt = nodes_[n.inputs[1]].value;
                int C = Xt.shape[0], H = Xt.shape[1], Wd = Xt.shape[2];
                int O = Wt.shape[0];
                out.assign(static_cast<size_t>(O) * H * Wd, 0.0);
                for (int o = 0; o < O; ++o)
                    for (int i = 0; i < H; ++i)
                        for (int j = 0; j < Wd; ++j) {
                            double acc = B[o];
                            for (int c = 0; c < C; ++c)
                                for (int di = 0; di < 3; ++di) {
                                    int ii = i + di - 1;
                                    if (ii < 0 || ii >= H) continue;
                                    for (int dj = 0; dj < 3; ++dj) {
                                        int jj = j + dj - 1;
                                        if (jj < 0 || jj >= Wd) continue;
                                        acc += X[(static_cast<size_t>(c) * H + ii) * Wd + jj] *
                                               W[((static_cast<size_t>(o) * C + c) * 3 + di) * 3 + dj];
                                    }
                                }
                            out[(static_cast<size_t>(o) * H + i) * Wd + j] = acc;
                        }
                break;
            }
        }
    }
    return val[target][0];
}

double Graph::gradcheck(int loss, int leaf, double eps) {
    if (nodes_[loss].value.numel() != 1)
        throw GraphError("gradcheck: loss must be scalar");
    auto grads = backward(loss);
    const Tensor& ga = grads[leaf];
    int n = nodes_[leaf].value.numel();
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        double fp = replay_f64(loss, leaf, i, eps);
        double fm = replay_f64(loss, leaf, i, -eps);
        double gfd = (fp - fm) / (2.0 * eps);
        double g = (ga.numel() > 0) ? static_cast<double>(ga.data[i]) : 0.0;
        double rel = std::fabs(g - gfd) / std::max(1e-8, std::fabs(g) + std::fabs(gfd));
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace rdt
