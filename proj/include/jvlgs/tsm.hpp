#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "jvlgs/params.hpp"

namespace jvlgs {

/// Denominator guard of the correlation normalization.
inline constexpr double kCorrelationEps = 1e-8;
/// Largest H'·W' for which the 4D volume is materialized.
inline constexpr int kMaxCorrelationPositions = 4096;

/// cv[x,y,u,v] stored as an (H'·W')×(H'·W') matrix: row = current-frame
/// position (x,y), column = adjacent-frame position (u,v), both row-major.
struct CorrelationVolume {
    int height = 0;
    int width = 0;
    Tensor cv;          // exp(<F_j[:,x,y], F_adj[:,u,v]> - max_uv <...>)
    Tensor normalized;  // cv / (sum_uv cv + eps)

    double raw(int x, int y, int u, int v) const { return cv.at(x * width + y, u * width + v); }
    double at(int x, int y, int u, int v) const { return normalized.at(x * width + y, u * width + v); }
};

namespace detail {
inline void check_pair(const Tensor& a, const Tensor& b, int max_positions) {
    require(a.rank() == 3 && a.shape() == b.shape(), ErrorKind::ShapeMismatch,
            "correlation: feature maps " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
    require(a.all_finite() && b.all_finite(), ErrorKind::Numeric, "correlation: non-finite feature values");
    require(a.dim(1) * a.dim(2) <= max_positions, ErrorKind::InvalidArgument,
            "correlation: " + std::to_string(a.dim(1) * a.dim(2)) + " positions exceed the limit of " +
                std::to_string(max_positions));
}
}  // namespace detail

/// Row-normalized correlation between every position of `current` and every
/// position of `adjacent` (both C×H'×W'), as a differentiable (H'W')×(H'W') matrix.
inline Var correlation_attention(const Var& current, const Var& adjacent, int max_positions = kMaxCorrelationPositions) {
    detail::check_pair(current.value(), adjacent.value(), max_positions);
    const int C = current.value().dim(0), HW = current.value().dim(1) * current.value().dim(2);
    const Var a = ag::transpose(ag::reshape(current, {C, HW}));  // HW×C
    const Var b = ag::reshape(adjacent, {C, HW});                 // C×HW
    return ag::softmax_rows(ag::matmul(a, b), kCorrelationEps);
}

inline CorrelationVolume correlation_volume(const Tensor& current, const Tensor& adjacent,
                                            int max_positions = kMaxCorrelationPositions) {
    detail::check_pair(current, adjacent, max_positions);
    const int C = current.dim(0), H = current.dim(1), W = current.dim(2), HW = H * W;
    CorrelationVolume out{H, W, Tensor({HW, HW}), Tensor({HW, HW})};
    for (int p = 0; p < HW; ++p) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int q = 0; q < HW; ++q) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += current[static_cast<std::size_t>(c) * HW + p] * adjacent[static_cast<std::size_t>(c) * HW + q];
            out.cv.at(p, q) = dot;
            mx = std::max(mx, dot);
        }
        double z = 0.0;
        for (int q = 0; q < HW; ++q) z += (out.cv.at(p, q) = std::exp(out.cv.at(p, q) - mx));
        z += kCorrelationEps;
        for (int q = 0; q < HW; ++q) out.normalized.at(p, q) = out.cv.at(p, q) / z;
    }
    return out;
}

/// Weights and bias of a convolution; bias may be undefined.
struct Conv {
    Var weight;
    Var bias;

    Var operator()(const Var& x) const {
        const int k = weight.value().dim(2);
        return ag::conv2d(x, weight, bias, 1, k / 2);
    }

    static Conv make(ParamStore& store, const std::string& name, int in, int out, int kernel, bool with_bias = true) {
        Conv c;
        c.weight = store.uniform(name + ".weight", {out, in, kernel, kernel}, std::sqrt(3.0 / (in * kernel * kernel)));
        if (with_bias) c.bias = store.zeros(name + ".bias", {out});
        return c;
    }
};

/// Gathers λ(F_j, F_adj) (a 1×1 conv of the channel concat, 2C→C) into
/// current-frame coordinates: out[c,x,y] = sum_uv λ[c,u,v] · normalized[x,y,u,v].
inline Var aggregate_cv(const Var& current, const Var& adjacent, const Var& normalized, const Conv& lambda) {
    const Tensor& cv = current.value();
    require(cv.rank() == 3 && adjacent.shape() == current.shape(), ErrorKind::ShapeMismatch, "aggregate_cv: feature shapes differ");
    const int C = cv.dim(0), H = cv.dim(1), W = cv.dim(2);
    require(normalized.value().rank() == 2 && normalized.value().dim(0) == H * W && normalized.value().dim(1) == H * W,
            ErrorKind::ShapeMismatch, "aggregate_cv: volume " + shape_str(normalized.shape()) + " does not match " + shape_str(cv.shape()));
    require(lambda.weight.value().dim(1) == 2 * C, ErrorKind::ShapeMismatch, "aggregate_cv: lambda expects 2C input channels");
    const Var lam = lambda(ag::concat({current, adjacent}));
    const int out_c = lam.value().dim(0);
    const Var gathered = ag::matmul(ag::reshape(lam, {out_c, H * W}), ag::transpose(normalized));
    return ag::reshape(gathered, {out_c, H, W});
}

// ---------------------------------------------------------------------------
// Granular spatial analysis

struct GsaParams {
    int groups = 8;
    bool activations = true;  // channel norm + ReLU after the N2/N3 convolutions
    Conv expand;              // C -> 3g, 1×1
    std::vector<Conv> group;  // g entries: 3 -> 3 for the first, 4 -> 3 after
    Conv n2, n3;              // g -> C, 3×3
    Conv fuse;                // C -> C, 3×3

    static GsaParams make(ParamStore& store, const std::string& prefix, int channels, int groups, bool activations = true) {
        require(groups >= 2, ErrorKind::InvalidArgument, "gsa needs at least 2 groups, got " + std::to_string(groups));
        GsaParams p;
        p.groups = groups;
        p.activations = activations;
        p.expand = Conv::make(store, prefix + "expand", channels, 3 * groups, 1);
        for (int i = 0; i < groups; ++i)
            p.group.push_back(Conv::make(store, prefix + "group" + std::to_string(i), i == 0 ? 3 : 4, 3, 1));
        p.n2 = Conv::make(store, prefix + "n2", groups, channels, 3);
        p.n3 = Conv::make(store, prefix + "n3", groups, channels, 3);
        p.fuse = Conv::make(store, prefix + "fuse", channels, channels, 3);
        return p;
    }
};

/// tau + Conv(N2 ⊙ N3), where N2/N3 mix the second/third channel of every
/// group and each group's first channel is passed on to the next group.
inline Var gsa(const Var& tau, const GsaParams& p) {
    require(p.groups >= 2, ErrorKind::InvalidArgument, "gsa needs at least 2 groups");
    require(tau.value().rank() == 3, ErrorKind::ShapeMismatch, "gsa: input must be C×H×W");
    const Var expanded = p.expand(tau);
    std::vector<Var> second, third;
    Var carry;
    for (int i = 0; i < p.groups; ++i) {
        Var g = ag::slice(expanded, 3 * i, 3);
        if (carry.defined()) g = ag::concat({g, carry});
        const Var mixed = p.group[i](g);
        carry = ag::slice(mixed, 0, 1);
        second.push_back(ag::slice(mixed, 1, 1));
        third.push_back(ag::slice(mixed, 2, 1));
    }
    auto block = [&](const Conv& conv, const std::vector<Var>& parts) {
        Var y = conv(ag::concat(parts));
        return p.activations ? ag::relu(ag::channel_norm(y)) : y;
    };
    const Var n = ag::mul(block(p.n2, second), block(p.n3, third));
    return ag::add(tau, p.fuse(n));
}

// ---------------------------------------------------------------------------
// Temporal-spatial module (one scale)

struct MotionFeatures {
    Var phi_prev;
    Var phi_next;
    Var tau;
    Var gsa;
};

struct TsmScaleParams {
    Conv lambda;     // 2C -> C, 1×1
    Conv tau_merge;  // 3C -> C, 1×1
    GsaParams gsa;

    static TsmScaleParams make(ParamStore& store, const std::string& prefix, int channels, int groups, bool activations = true) {
        TsmScaleParams p;
        p.lambda = Conv::make(store, prefix + "lambda", 2 * channels, channels, 1);
        p.tau_merge = Conv::make(store, prefix + "tau_merge", 3 * channels, channels, 1);
        p.gsa = GsaParams::make(store, prefix + "gsa.", channels, groups, activations);
        return p;
    }
};

inline MotionFeatures tsm_forward(const Var& prev, const Var& cur, const Var& next, const TsmScaleParams& p,
                                  int max_positions = kMaxCorrelationPositions) {
    MotionFeatures m;
    m.phi_prev = aggregate_cv(cur, prev, correlation_attention(cur, prev, max_positions), p.lambda);
    m.phi_next = aggregate_cv(cur, next, correlation_attention(cur, next, max_positions), p.lambda);
    m.tau = p.tau_merge(ag::concat({m.phi_prev, m.phi_next, cur}));
    m.gsa = gsa(m.tau, p.gsa);
    return m;
}

class TemporalSpatialModule {
public:
    TemporalSpatialModule(ParamStore& store, int channels, int groups, bool activations = true) {
        for (int s = 0; s < 3; ++s)
            scales_[s] = TsmScaleParams::make(store, "tsm." + std::to_string(s + 2) + ".", channels, groups, activations);
    }

    /// Per-scale maps for the center frame of a temporally ordered triple.
    std::array<MotionFeatures, 3> forward(const std::array<Var, 3>& prev, const std::array<Var, 3>& cur,
                                          const std::array<Var, 3>& next) const {
        std::array<MotionFeatures, 3> out;
        for (int s = 0; s < 3; ++s) out[s] = tsm_forward(prev[s], cur[s], next[s], scales_[s]);
        return out;
    }

    const TsmScaleParams& scale(int s) const { return scales_[s]; }

private:
    std::array<TsmScaleParams, 3> scales_;
};

}  // namespace jvlgs
