#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "jvlgs/mask.hpp"
#include "jvlgs/tsm.hpp"

namespace jvlgs {

// ---------------------------------------------------------------------------
// FPN decoder

class FpnDecoder {
public:
    FpnDecoder(ParamStore& store, int in_channels, int width = 64, bool activations = true) : activations_(activations) {
        for (int i = 0; i < 3; ++i) lateral_[i] = Conv::make(store, "head.lateral." + std::to_string(i), in_channels, width, 1);
        for (int i = 0; i < 2; ++i) smooth_[i] = Conv::make(store, "head.smooth." + std::to_string(i), width, width, 3);
        predict_ = Conv::make(store, "head.predict", width, 1, 3);
    }

    /// Three maps at strides 8/16/32 -> 1×out_h×out_w logits.
    Var decode(const std::array<Var, 3>& maps, int out_h, int out_w) const {
        for (int i = 0; i < 3; ++i)
            require(maps[i].value().rank() == 3, ErrorKind::ShapeMismatch, "decoder: inputs must be C×H×W");
        for (int i = 0; i < 2; ++i) {
            const auto& fine = maps[i].value();
            const auto& coarse = maps[i + 1].value();
            require(fine.dim(1) == 2 * coarse.dim(1) && fine.dim(2) == 2 * coarse.dim(2), ErrorKind::ShapeMismatch,
                    "decoder: scale " + shape_str(coarse.shape()) + " is not half of " + shape_str(fine.shape()));
        }
        Var top = lateral_[2](maps[2]);
        for (int i = 1; i >= 0; --i) {
            const Var lat = lateral_[i](maps[i]);
            const Var merged = ag::add(ag::upsample_bilinear(top, lat.value().dim(1), lat.value().dim(2)), lat);
            top = smooth_[i](merged);
            if (activations_) top = ag::relu(top);
        }
        return ag::upsample_bilinear(predict_(top), out_h, out_w);
    }

private:
    bool activations_;
    std::array<Conv, 3> lateral_;
    std::array<Conv, 2> smooth_;
    Conv predict_;
};

inline Tensor probabilities(const Tensor& logits) {
    Tensor p = logits;
    for (auto& v : p.values()) v = ag::logistic(v);
    return p;
}

// ---------------------------------------------------------------------------
// Weighted BCE + weighted IoU

inline constexpr int kLossPoolSize = 31;
inline constexpr double kLossBoundaryGain = 5.0;
inline constexpr double kIouSmooth = 1.0;

struct LossBreakdown {
    double total = 0.0;
    double wbce = 0.0;
    double wiou = 0.0;
    Tensor weight_map;
};

namespace detail {
// Mirror index with edge repetition (numpy "symmetric"), valid for any offset.
inline int symmetric_index(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

inline void require_binary_gt(const Tensor& prob, const Tensor& gt) {
    require(prob.shape() == gt.shape(), ErrorKind::ShapeMismatch,
            "loss: prediction " + shape_str(prob.shape()) + " vs ground truth " + shape_str(gt.shape()));
    for (double g : gt.values()) require(g == 0.0 || g == 1.0, ErrorKind::InvalidArgument, "loss: ground truth is not binary");
}
}  // namespace detail

/// ω = 1 + 5·|meanpool31(gt) − gt|, stride 1, symmetric padding. `gt` is H×W
/// (or 1×H×W).
inline Tensor loss_weight_map(const Tensor& gt) {
    const int H = gt.dim(gt.rank() - 2), W = gt.dim(gt.rank() - 1);
    const int r = kLossPoolSize / 2;
    // Separable box sum over the mirrored extension.
    Tensor rows(gt.shape());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += gt[static_cast<std::size_t>(y) * W + detail::symmetric_index(x + d, W)];
            rows[static_cast<std::size_t>(y) * W + x] = s;
        }
    Tensor w(gt.shape());
    const double area = static_cast<double>(kLossPoolSize) * kLossPoolSize;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int d = -r; d <= r; ++d) s += rows[static_cast<std::size_t>(detail::symmetric_index(y + d, H)) * W + x];
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            w[i] = 1.0 + kLossBoundaryGain * std::abs(s / area - gt[i]);
        }
    return w;
}

inline double bce_term(double p, double g) {
    constexpr double tiny = 1e-300;
    double v = 0.0;
    if (g > 0.0) v -= g * std::log(std::max(p, tiny));
    if (g < 1.0) v -= (1.0 - g) * std::log(std::max(1.0 - p, tiny));
    return v;
}

/// Weighted BCE + weighted IoU of a probability map against a binary mask.
inline LossBreakdown structure_loss(const Tensor& prob, const Tensor& gt) {
    detail::require_binary_gt(prob, gt);
    for (double p : prob.values()) require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "loss: probability outside [0,1]");
    LossBreakdown out;
    out.weight_map = loss_weight_map(gt);
    const Tensor& w = out.weight_map;
    double sw = 0.0, sbce = 0.0, inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        sw += w[i];
        sbce += w[i] * bce_term(prob[i], gt[i]);
        inter += w[i] * prob[i] * gt[i];
        uni += w[i] * (prob[i] + gt[i] - prob[i] * gt[i]);
    }
    out.wbce = sbce / sw;
    out.wiou = 1.0 - (inter + kIouSmooth) / (uni + kIouSmooth);
    out.total = out.wbce + out.wiou;
    return out;
}

/// Analytic d(total)/d(prob).
inline Tensor structure_loss_grad(const Tensor& prob, const Tensor& gt) {
    detail::require_binary_gt(prob, gt);
    const Tensor w = loss_weight_map(gt);
    double sw = 0.0, inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        sw += w[i];
        inter += w[i] * prob[i] * gt[i];
        uni += w[i] * (prob[i] + gt[i] - prob[i] * gt[i]);
    }
    const double a = inter + kIouSmooth, b = uni + kIouSmooth;
    Tensor g(prob.shape());
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double p = prob[i], t = gt[i];
        const double dbce = w[i] * (-t / p + (1.0 - t) / (1.0 - p)) / sw;
        const double diou = -(w[i] * t * b - a * w[i] * (1.0 - t)) / (b * b);
        g[i] = dbce + diou;
    }
    return g;
}

/// Differentiable loss on logits (any shape matching `gt`), BCE in its
/// numerically stable logit form.
inline ag::Var structure_loss_from_logits(const ag::Var& logits, const Tensor& gt) {
    const Tensor& z = logits.value();
    detail::require_binary_gt(z, gt);
    const Tensor w = loss_weight_map(gt);
    const std::size_t n = z.size();
    Tensor prob(z.shape());
    double sw = 0.0, sbce = 0.0, inter = 0.0, uni = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = ag::logistic(z[i]);
        prob[i] = p;
        const double bce = std::max(z[i], 0.0) - z[i] * gt[i] + std::log1p(std::exp(-std::abs(z[i])));
        sw += w[i];
        sbce += w[i] * bce;
        inter += w[i] * p * gt[i];
        uni += w[i] * (p + gt[i] - p * gt[i]);
    }
    const double a = inter + kIouSmooth, b = uni + kIouSmooth;
    const double total = sbce / sw + 1.0 - a / b;
    return ag::make_op(Tensor({1}, total), {logits}, [w, gt, prob, sw, a, b](ag::Node& node) {
        auto& g = ag::input_grad(node, 0);
        const double up = node.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double p = prob[i], t = gt[i];
            const double dbce = w[i] * (p - t) / sw;
            const double diou_dp = -(w[i] * t * b - a * w[i] * (1.0 - t)) / (b * b);
            g[i] += up * (dbce + diou_dp * p * (1.0 - p));
        }
    });
}

struct GradcheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = false;
};

/// Central finite differences of the loss against structure_loss_grad.
/// Probabilities are clamped to [1e-4, 1 - 1e-4] first.
inline GradcheckReport loss_gradcheck(Tensor prob, const Tensor& gt, double step = 1e-6, double tolerance = 1e-4) {
    for (auto& p : prob.values()) p = std::clamp(p, 1e-4, 1.0 - 1e-4);
    const Tensor analytic = structure_loss_grad(prob, gt);
    GradcheckReport rep;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        Tensor hi = prob, lo = prob;
        hi[i] += step;
        lo[i] -= step;
        const double numeric = (structure_loss(hi, gt).total - structure_loss(lo, gt).total) / (2 * step);
        const double abs_err = std::abs(numeric - analytic[i]);
        const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
    }
    rep.passed = rep.max_rel_error <= tolerance;
    return rep;
}

}  // namespace jvlgs
