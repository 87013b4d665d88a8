#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jvlgs/tensor.hpp"

namespace jvlgs::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer() {
        if (grad.size() != value.size()) grad = Tensor(value.shape());
        return grad;
    }
};

/// Handle to a node in a dynamically recorded computation graph. Copies share
/// the node, so parameters held by several modules stay a single leaf.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Gradient accumulated by backward(); zeros when nothing reached this node.
    const Tensor& grad() const { return node_->grad_buffer(); }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.fill(0.0);
    }

    double item() const {
        require(value().size() == 1, ErrorKind::ShapeMismatch, "item() on non-scalar " + shape_str(shape()));
        return value()[0];
    }

    /// Reverse-mode sweep from this (scalar) node.
    void backward() const;

    std::shared_ptr<Node>& node() { return node_; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

inline void Var::backward() const {
    require(value().size() == 1, ErrorKind::ShapeMismatch, "backward() needs a scalar root");
    if (!node_->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node* child = n->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

/// Builds an op result. The backward closure receives the result node and
/// reads its upstream gradient from `grad`.
inline Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    Var out(std::move(value));
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (any) {
        auto& n = *out.node();
        n.requires_grad = true;
        for (auto& v : inputs) n.inputs.push_back(v.node());
        n.backward_fn = std::move(backward);
    }
    return out;
}

inline Tensor& input_grad(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }
inline bool input_needs(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
inline const Tensor& input_value(const Node& n, std::size_t i) { return n.inputs[i]->value; }

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), ErrorKind::ShapeMismatch,
            "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (!input_needs(n, k)) continue;
            auto& g = input_grad(n, k);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), ErrorKind::ShapeMismatch,
            "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const auto& av = input_value(n, 0);
        const auto& bv = input_value(n, 1);
        if (input_needs(n, 0)) {
            auto& g = input_grad(n, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (input_needs(n, 1)) {
            auto& g = input_grad(n, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        auto& g = input_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        const auto& av = input_value(n, 0);
        auto& g = input_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) g[i] += n.grad[i];
    });
}

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = logistic(v);
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& g = input_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

inline Var sum(const Var& a) {
    return make_op(Tensor({1}, a.value().sum()), {a}, [](Node& n) {
        auto& g = input_grad(n, 0);
        for (auto& v : g.values()) v += n.grad[0];
    });
}

/// Sum of `w_i * x_i` over scalar Vars.
inline Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& ws) {
    require(xs.size() == ws.size() && !xs.empty(), ErrorKind::InvalidArgument, "weighted_sum: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) total += ws[i] * xs[i].item();
    return make_op(Tensor({1}, total), xs, [ws](Node& n) {
        for (std::size_t i = 0; i < ws.size(); ++i)
            if (input_needs(n, i)) input_grad(n, i)[0] += ws[i] * n.grad[0];
    });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& a, Shape shape) {
    return make_op(a.value().reshaped(std::move(shape)), {a}, [](Node& n) {
        auto& g = input_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

inline Var transpose(const Var& a) {
    require(a.value().rank() == 2, ErrorKind::ShapeMismatch, "transpose: rank-2 input required");
    const int r = a.value().dim(0), c = a.value().dim(1);
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
    return make_op(std::move(out), {a}, [r, c](Node& n) {
        auto& g = input_grad(n, 0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) g.at(i, j) += n.grad.at(j, i);
    });
}

/// Concatenation along the leading axis (channels for C×H×W, rows for matrices).
inline Var concat(const std::vector<Var>& xs) {
    require(!xs.empty(), ErrorKind::InvalidArgument, "concat: no inputs");
    Shape shape = xs[0].shape();
    int lead = 0;
    for (const auto& x : xs) {
        Shape tail(x.shape().begin() + 1, x.shape().end());
        require(tail == Shape(shape.begin() + 1, shape.end()), ErrorKind::ShapeMismatch,
                "concat: trailing shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(shape));
        lead += x.shape()[0];
    }
    shape[0] = lead;
    Tensor out(shape);
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::copy(x.value().data(), x.value().data() + x.value().size(), out.data() + off);
        off += x.value().size();
    }
    return make_op(std::move(out), xs, [](Node& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const std::size_t len = n.inputs[k]->value.size();
            if (input_needs(n, k)) {
                auto& g = input_grad(n, k);
                for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[off + i];
            }
            off += len;
        }
    });
}

/// Rows [begin, begin+count) of the leading axis.
inline Var slice(const Var& a, int begin, int count) {
    const Shape& s = a.shape();
    require(begin >= 0 && count >= 0 && begin + count <= s[0], ErrorKind::ShapeMismatch,
            "slice out of range for " + shape_str(s));
    Shape shape = s;
    shape[0] = count;
    const std::size_t inner = a.value().size() / static_cast<std::size_t>(s[0]);
    Tensor out(shape);
    std::copy(a.value().data() + begin * inner, a.value().data() + (begin + count) * inner, out.data());
    return make_op(std::move(out), {a}, [begin, inner](Node& n) {
        auto& g = input_grad(n, 0);
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * inner + i] += n.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), ErrorKind::ShapeMismatch,
            "matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    const int n = av.dim(0), k = av.dim(1), m = bv.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
            const double x = av.at(i, p);
            if (x == 0.0) continue;
            const double* brow = bv.data() + static_cast<std::size_t>(p) * m;
            double* orow = out.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) orow[j] += x * brow[j];
        }
    return make_op(std::move(out), {a, b}, [n, k, m](Node& node) {
        const Tensor& av = input_value(node, 0);
        const Tensor& bv = input_value(node, 1);
        const Tensor& go = node.grad;
        if (input_needs(node, 0)) {
            auto& ga = input_grad(node, 0);
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += go.at(i, j) * bv.at(p, j);
                    ga.at(i, p) += acc;
                }
        }
        if (input_needs(node, 1)) {
            auto& gb = input_grad(node, 1);
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < k; ++p) {
                    const double x = av.at(i, p);
                    if (x == 0.0) continue;
                    for (int j = 0; j < m; ++j) gb.at(p, j) += x * go.at(i, j);
                }
        }
    });
}

/// Adds a length-m bias to every row of an n×m matrix.
inline Var add_row_bias(const Var& a, const Var& bias) {
    const Tensor& av = a.value();
    require(av.rank() == 2 && bias.value().size() == static_cast<std::size_t>(av.dim(1)),
            ErrorKind::ShapeMismatch, "add_row_bias: " + shape_str(av.shape()) + " + " + shape_str(bias.shape()));
    Tensor out = av;
    const int n = av.dim(0), m = av.dim(1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += bias.value()[j];
    return make_op(std::move(out), {a, bias}, [n, m](Node& node) {
        if (input_needs(node, 0)) {
            auto& g = input_grad(node, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
        }
        if (input_needs(node, 1)) {
            auto& g = input_grad(node, 1);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) g[j] += node.grad.at(i, j);
        }
    });
}

/// Row-wise softmax p_j = e_j / (sum_k e_k + eps), with e_j = exp(x_j - max_k x_k).
/// Columns where `key_mask` is 0 are excluded (p = 0).
inline Var softmax_rows(const Var& a, double eps = 0.0, const std::vector<int>& key_mask = {}) {
    const Tensor& av = a.value();
    require(av.rank() == 2, ErrorKind::ShapeMismatch, "softmax_rows: rank-2 input required");
    const int n = av.dim(0), m = av.dim(1);
    require(key_mask.empty() || key_mask.size() == static_cast<std::size_t>(m), ErrorKind::ShapeMismatch,
            "softmax_rows: mask length mismatch");
    auto kept = [&](int j) { return key_mask.empty() || key_mask[j] != 0; };
    Tensor out({n, m});
    for (int i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j)
            if (kept(j)) mx = std::max(mx, av.at(i, j));
        require(std::isfinite(mx), ErrorKind::Numeric, "softmax_rows: no finite entries in row");
        double z = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = kept(j) ? std::exp(av.at(i, j) - mx) : 0.0;
            out.at(i, j) = e;
            z += e;
        }
        z += eps;
        for (int j = 0; j < m; ++j) out.at(i, j) /= z;
    }
    return make_op(std::move(out), {a}, [n, m](Node& node) {
        auto& g = input_grad(node, 0);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < m; ++j) dot += node.grad.at(i, j) * node.value.at(i, j);
            for (int j = 0; j < m; ++j) g.at(i, j) += node.value.at(i, j) * (node.grad.at(i, j) - dot);
        }
    });
}

/// Selects rows of a table (embedding lookup / token pooling).
inline Var gather_rows(const Var& table, const std::vector<int>& rows) {
    const Tensor& tv = table.value();
    require(tv.rank() == 2, ErrorKind::ShapeMismatch, "gather_rows: rank-2 table required");
    const int m = tv.dim(1);
    Tensor out({static_cast<int>(rows.size()), m});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < tv.dim(0), ErrorKind::InvalidArgument, "gather_rows: index out of range");
        for (int j = 0; j < m; ++j) out.at(static_cast<int>(i), j) = tv.at(rows[i], j);
    }
    return make_op(std::move(out), {table}, [rows, m](Node& node) {
        auto& g = input_grad(node, 0);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < m; ++j) g.at(rows[i], j) += node.grad.at(static_cast<int>(i), j);
    });
}

// ---------------------------------------------------------------------------
// Convolution family on single C×H×W maps

/// 2D cross-correlation. `weight` is O×C×k×k; `bias` (length O) may be undefined.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride = 1, int pad = 0) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require(xv.rank() == 3 && wv.rank() == 4 && wv.dim(1) == xv.dim(0) && wv.dim(2) == wv.dim(3),
            ErrorKind::ShapeMismatch, "conv2d: input " + shape_str(xv.shape()) + " weight " + shape_str(wv.shape()));
    require(!bias.defined() || bias.value().size() == static_cast<std::size_t>(wv.dim(0)), ErrorKind::ShapeMismatch,
            "conv2d: bias length mismatch");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    const int O = wv.dim(0), K = wv.dim(2);
    const int OH = (H + 2 * pad - K) / stride + 1;
    const int OW = (W + 2 * pad - K) / stride + 1;
    require(OH > 0 && OW > 0, ErrorKind::ShapeMismatch, "conv2d: empty output");
    Tensor out({O, OH, OW});
    // Valid output range along one axis for kernel offset k.
    auto range = [stride, pad](int k, int in, int outn) {
        int lo = 0;
        while (lo < outn && lo * stride - pad + k < 0) ++lo;
        int hi = outn;
        while (hi > lo && (hi - 1) * stride - pad + k >= in) --hi;
        return std::pair{lo, hi};
    };
    for (int o = 0; o < O; ++o) {
        double* op = out.data() + static_cast<std::size_t>(o) * OH * OW;
        if (bias.defined()) std::fill(op, op + OH * OW, bias.value()[o]);
        for (int c = 0; c < C; ++c) {
            const double* xp = xv.data() + static_cast<std::size_t>(c) * H * W;
            for (int ky = 0; ky < K; ++ky) {
                auto [y0, y1] = range(ky, H, OH);
                for (int kx = 0; kx < K; ++kx) {
                    const double w = wv.data()[((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx];
                    if (w == 0.0) continue;
                    auto [x0, x1] = range(kx, W, OW);
                    for (int oy = y0; oy < y1; ++oy) {
                        const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(oy * stride - pad + ky) * W - pad + kx;
                        double* orow = op + static_cast<std::size_t>(oy) * OW;
                        for (int ox = x0; ox < x1; ++ox) orow[ox] += w * xp[base + ox * stride];
                    }
                }
            }
        }
    }
    std::vector<Var> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_op(std::move(out), inputs, [=](Node& node) {
        const Tensor& xv = input_value(node, 0);
        const Tensor& wv = input_value(node, 1);
        const Tensor& go = node.grad;
        const bool need_x = input_needs(node, 0), need_w = input_needs(node, 1);
        Tensor* gx = need_x ? &input_grad(node, 0) : nullptr;
        Tensor* gw = need_w ? &input_grad(node, 1) : nullptr;
        for (int o = 0; o < O; ++o) {
            const double* gop = go.data() + static_cast<std::size_t>(o) * OH * OW;
            for (int c = 0; c < C; ++c) {
                const double* xp = xv.data() + static_cast<std::size_t>(c) * H * W;
                for (int ky = 0; ky < K; ++ky) {
                    auto [y0, y1] = range(ky, H, OH);
                    for (int kx = 0; kx < K; ++kx) {
                        const std::size_t widx = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx;
                        const double w = wv.data()[widx];
                        auto [x0, x1] = range(kx, W, OW);
                        double acc = 0.0;
                        for (int oy = y0; oy < y1; ++oy) {
                            const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(oy * stride - pad + ky) * W - pad + kx;
                            const double* grow = gop + static_cast<std::size_t>(oy) * OW;
                            if (need_w)
                                for (int ox = x0; ox < x1; ++ox) acc += grow[ox] * xp[base + ox * stride];
                            if (need_x && w != 0.0) {
                                double* gxp = gx->data() + static_cast<std::size_t>(c) * H * W;
                                for (int ox = x0; ox < x1; ++ox) gxp[base + ox * stride] += w * grow[ox];
                            }
                        }
                        if (need_w) (*gw)[widx] += acc;
                    }
                }
            }
        }
        if (node.inputs.size() > 2 && input_needs(node, 2)) {
            auto& gb = input_grad(node, 2);
            for (int o = 0; o < O; ++o) {
                const double* gop = go.data() + static_cast<std::size_t>(o) * OH * OW;
                gb[o] += std::accumulate(gop, gop + OH * OW, 0.0);
            }
        }
    });
}

/// Per-channel normalization over the spatial axes (no affine terms).
inline Var channel_norm(const Var& x, double eps = 1e-5) {
    const Tensor& xv = x.value();
    require(xv.rank() == 3, ErrorKind::ShapeMismatch, "channel_norm: C×H×W input required");
    const int C = xv.dim(0);
    const std::size_t hw = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out(xv.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
        const double* p = xv.data() + c * hw;
        double mean = std::accumulate(p, p + hw, 0.0) / static_cast<double>(hw);
        double var = 0.0;
        for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
        var /= static_cast<double>(hw);
        inv_std[c] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = (p[i] - mean) * inv_std[c];
    }
    return make_op(std::move(out), {x}, [C, hw, inv_std](Node& node) {
        auto& g = input_grad(node, 0);
        const double n = static_cast<double>(hw);
        for (int c = 0; c < C; ++c) {
            const double* dy = node.grad.data() + c * hw;
            const double* xh = node.value.data() + c * hw;
            double mdy = 0.0, mdyx = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                mdy += dy[i];
                mdyx += dy[i] * xh[i];
            }
            mdy /= n;
            mdyx /= n;
            for (std::size_t i = 0; i < hw; ++i) g[c * hw + i] += inv_std[c] * (dy[i] - mdy - xh[i] * mdyx);
        }
    });
}

namespace detail {
struct LerpAxis {
    std::vector<int> lo, hi;
    std::vector<double> t;
};

// Half-pixel-center sampling: src = (dst + 0.5) * in / out - 0.5, clamped at 0.
inline LerpAxis lerp_axis(int in, int out) {
    LerpAxis a;
    a.lo.resize(out);
    a.hi.resize(out);
    a.t.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = std::min(static_cast<int>(src), in - 1);
        a.lo[i] = lo;
        a.hi[i] = std::min(lo + 1, in - 1);
        a.t[i] = src - lo;
    }
    return a;
}
}  // namespace detail

/// Bilinear resampling of every channel to out_h×out_w with half-pixel centers.
inline Var upsample_bilinear(const Var& x, int out_h, int out_w) {
    const Tensor& xv = x.value();
    require(xv.rank() == 3, ErrorKind::ShapeMismatch, "upsample_bilinear: C×H×W input required");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    auto ay = detail::lerp_axis(H, out_h);
    auto ax = detail::lerp_axis(W, out_w);
    Tensor out({C, out_h, out_w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int xx = 0; xx < out_w; ++xx) {
                const double ty = ay.t[y], tx = ax.t[xx];
                out.at(c, y, xx) = (1 - ty) * ((1 - tx) * xv.at(c, ay.lo[y], ax.lo[xx]) + tx * xv.at(c, ay.lo[y], ax.hi[xx])) +
                                   ty * ((1 - tx) * xv.at(c, ay.hi[y], ax.lo[xx]) + tx * xv.at(c, ay.hi[y], ax.hi[xx]));
            }
    return make_op(std::move(out), {x}, [C, out_h, out_w, ay, ax](Node& node) {
        auto& g = input_grad(node, 0);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < out_h; ++y)
                for (int xx = 0; xx < out_w; ++xx) {
                    const double d = node.grad.at(c, y, xx);
                    const double ty = ay.t[y], tx = ax.t[xx];
                    g.at(c, ay.lo[y], ax.lo[xx]) += d * (1 - ty) * (1 - tx);
                    g.at(c, ay.lo[y], ax.hi[xx]) += d * (1 - ty) * tx;
                    g.at(c, ay.hi[y], ax.lo[xx]) += d * ty * (1 - tx);
                    g.at(c, ay.hi[y], ax.hi[xx]) += d * ty * tx;
                }
    });
}

/// Plain (graph-free) bilinear resampling of a tensor.
inline Tensor resample_bilinear(const Tensor& x, int out_h, int out_w) {
    return upsample_bilinear(Var(x), out_h, out_w).value();
}

}  // namespace jvlgs::ag
