#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "jvlgs/encoders.hpp"

namespace jvlgs {

/// Per scale, one C_v×H'×W' map for each of the T frames.
using FusedFeatures = std::array<std::vector<Var>, 3>;

/// Parameters of one scale's fusion: vision projection C_v→C_t and the
/// similarity mixer φ: P_l→C_v.
struct VlfScaleParams {
    Var proj_weight;  // C_v×C_t
    Var proj_bias;    // C_t
    Var phi_weight;   // P_l×C_v
    Var phi_bias;     // C_v
};

/// Fuses one vision level (C_v×H'×W') with pooled text codes f_t (P_l×C_t).
/// Returns the fused term alone when `residual` is false.
inline Var vlf_fuse_level(const Var& level, const Var& text, const VlfScaleParams& p, bool residual = true) {
    const Tensor& lv = level.value();
    require(lv.rank() == 3, ErrorKind::ShapeMismatch, "vlf: vision level must be C×H×W");
    require(text.value().rank() == 2 && text.value().dim(0) >= 1, ErrorKind::InvalidArgument,
            "vlf: text codes must be P_l×C_t with P_l >= 1");
    const int C = lv.dim(0), H = lv.dim(1), W = lv.dim(2);
    require(p.proj_weight.value().dim(0) == C, ErrorKind::ShapeMismatch, "vlf: projection input width != C_v");
    require(p.proj_weight.value().dim(1) == text.value().dim(1), ErrorKind::ShapeMismatch,
            "vlf: projected width " + std::to_string(p.proj_weight.value().dim(1)) + " != text width " +
                std::to_string(text.value().dim(1)));
    require(p.phi_weight.value().dim(0) == text.value().dim(0), ErrorKind::ShapeMismatch,
            "vlf: phi expects " + std::to_string(p.phi_weight.value().dim(0)) + " prompts, got " +
                std::to_string(text.value().dim(0)));
    // (C, H, W) -> (H·W, C)
    const Var pixels = ag::transpose(ag::reshape(level, {C, H * W}));
    const Var fv = ag::add_row_bias(ag::matmul(pixels, p.proj_weight), p.proj_bias);  // HW×C_t
    const Var sim = ag::matmul(fv, ag::transpose(text));                              // HW×P_l
    const Var mixed = ag::add_row_bias(ag::matmul(sim, p.phi_weight), p.phi_bias);    // HW×C_v
    const Var fused = ag::reshape(ag::transpose(mixed), {C, H, W});
    return residual ? ag::add(level, fused) : fused;
}

/// Vision-language fusion over all scales and frames.
class VisionLanguageFusion {
public:
    VisionLanguageFusion(ParamStore& store, int vision_channels, int text_channels, int prompts, bool residual = true)
        : residual_(residual) {
        require(prompts >= 1, ErrorKind::InvalidArgument, "vlf needs at least one prompt");
        for (int s = 0; s < 3; ++s) {
            const std::string p = "vlf." + std::to_string(s + 2) + ".";
            auto& sp = scales_[s];
            sp.proj_weight = store.uniform(p + "proj_v.weight", {vision_channels, text_channels}, 1.0 / std::sqrt(vision_channels));
            sp.proj_bias = store.zeros(p + "proj_v.bias", {text_channels});
            sp.phi_weight = store.uniform(p + "phi.weight", {prompts, vision_channels}, 1.0 / std::sqrt(prompts));
            sp.phi_bias = store.zeros(p + "phi.bias", {vision_channels});
        }
    }

    FusedFeatures fuse(const std::vector<FeaturePyramid>& pyramids, const Var& text) const {
        require(!pyramids.empty(), ErrorKind::InvalidArgument, "vlf: no frames");
        FusedFeatures out;
        for (int s = 0; s < 3; ++s)
            for (const auto& pyr : pyramids) out[s].push_back(vlf_fuse_level(pyr[s], text, scales_[s], residual_));
        return out;
    }

    const VlfScaleParams& scale(int s) const { return scales_[s]; }

private:
    bool residual_;
    std::array<VlfScaleParams, 3> scales_;
};

/// Identity path used when fusion is disabled.
inline FusedFeatures vlf_bypass(const std::vector<FeaturePyramid>& pyramids) {
    FusedFeatures out;
    for (int s = 0; s < 3; ++s)
        for (const auto& pyr : pyramids) out[s].push_back(pyr[s]);
    return out;
}

}  // namespace jvlgs
