#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "jvlgs/encoders.hpp"
#include "jvlgs/head.hpp"
#include "jvlgs/tsm.hpp"
#include "jvlgs/vlf.hpp"

namespace jvlgs {

inline const std::vector<std::string>& default_prompts() {
    static const std::vector<std::string> prompts{"White Steam", "Floating Steam", "Billowing Smoke", "Blowing Smoke"};
    return prompts;
}

/// Architecture description; stored in checkpoint metadata so a checkpoint
/// rebuilds its own model.
struct ModelConfig {
    Resolution resolution{352, 352};
    int vision_channels = 32;
    int text_channels = 64;
    int text_blocks = 2;
    int token_length = 16;
    int decoder_width = 64;
    int gsa_groups = 8;
    bool use_vlf = true;
    bool vlf_residual = true;
    bool gsa_activations = true;
    bool decoder_activations = true;
    int clip_length = 3;
    int center_index = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> prompts = default_prompts();
    std::vector<std::string> vocabulary = Vocabulary::builtin().tokens();
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"height", c.resolution.height},
            {"width", c.resolution.width},
            {"vision_channels", c.vision_channels},
            {"text_channels", c.text_channels},
            {"text_blocks", c.text_blocks},
            {"token_length", c.token_length},
            {"decoder_width", c.decoder_width},
            {"gsa_groups", c.gsa_groups},
            {"use_vlf", c.use_vlf},
            {"vlf_residual", c.vlf_residual},
            {"gsa_activations", c.gsa_activations},
            {"gsa_block", c.gsa_activations ? "conv3x3 + channel-norm + relu" : "conv3x3"},
            {"decoder_activations", c.decoder_activations},
            {"clip_length", c.clip_length},
            {"center_index", c.center_index},
            {"seed", c.seed},
            {"prompts", c.prompts},
            {"vocabulary", c.vocabulary}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.resolution = {j.at("height").get<int>(), j.at("width").get<int>()};
        c.vision_channels = j.at("vision_channels");
        c.text_channels = j.at("text_channels");
        c.text_blocks = j.at("text_blocks");
        c.token_length = j.at("token_length");
        c.decoder_width = j.at("decoder_width");
        c.gsa_groups = j.at("gsa_groups");
        c.use_vlf = j.at("use_vlf");
        c.vlf_residual = j.at("vlf_residual");
        c.gsa_activations = j.at("gsa_activations");
        c.decoder_activations = j.at("decoder_activations");
        c.clip_length = j.at("clip_length");
        c.center_index = j.at("center_index");
        c.seed = j.at("seed");
        c.prompts = j.at("prompts").get<std::vector<std::string>>();
        c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Checkpoint, std::string("checkpoint metadata incomplete: ") + e.what());
    }
    return c;
}

/// Full network: vision/text encoders → fusion (or bypass) → temporal-spatial
/// module per scale → FPN decoder. Produces center-frame logits for a clip.
class Model {
public:
    explicit Model(ModelConfig config)
        : config_(std::move(config)),
          params_(config_.seed),
          vocab_(config_.vocabulary),
          prompts_(tokenize(config_.prompts, vocab_, config_.token_length)) {
        require(config_.clip_length >= 1 && config_.center_index >= 0 && config_.center_index < config_.clip_length,
                ErrorKind::InvalidArgument, "invalid clip geometry");
        vision_ = std::make_unique<ReferenceVisionEncoder>(params_, config_.resolution, config_.vision_channels);
        text_ = std::make_unique<TextEncoder>(params_, vocab_.size(), config_.text_channels, config_.text_blocks);
        if (config_.use_vlf)
            vlf_ = std::make_unique<VisionLanguageFusion>(params_, config_.vision_channels, config_.text_channels,
                                                          prompts_.count(), config_.vlf_residual);
        tsm_ = std::make_unique<TemporalSpatialModule>(params_, config_.vision_channels, config_.gsa_groups, config_.gsa_activations);
        head_ = std::make_unique<FpnDecoder>(params_, config_.vision_channels, config_.decoder_width, config_.decoder_activations);
    }

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const PromptSet& prompts() const { return prompts_; }
    const VisionBackbone& vision() const { return *vision_; }

    Var encode_text() const { return text_->encode(prompts_); }

    /// Center-frame logits (1×H×W). Pass a precomputed text encoding to share
    /// it across a batch.
    Var forward(const Clip& clip, const Var* text = nullptr) const {
        const auto [prev, cur, next] = features(clip, text);
        const auto motion = tsm_->forward(prev, cur, next);
        return head_->decode({motion[0].gsa, motion[1].gsa, motion[2].gsa}, config_.resolution.height, config_.resolution.width);
    }

    /// Normalized correlation volumes (prev, next) per scale, for inspection.
    std::array<std::array<CorrelationVolume, 2>, 3> correlations(const Clip& clip) const {
        const auto [prev, cur, next] = features(clip, nullptr);
        std::array<std::array<CorrelationVolume, 2>, 3> out;
        for (int s = 0; s < 3; ++s) {
            out[s][0] = correlation_volume(cur[s].value(), prev[s].value());
            out[s][1] = correlation_volume(cur[s].value(), next[s].value());
        }
        return out;
    }

    Tensor predict_prob(const Clip& clip) const { return probabilities(forward(clip).value()); }

    void save(const std::string& path, nlohmann::json extra = nlohmann::json::object()) const {
        nlohmann::json meta = extra;
        meta["model"] = to_json(config_);
        save_checkpoint(path, params_, meta);
    }

    static Model load(const std::string& path) {
        const auto doc = read_checkpoint(path);
        Model m(model_config_from_json(doc.at("metadata").at("model")));
        load_params(doc, m.params_);
        return m;
    }

private:
    using Triple = std::array<std::array<Var, 3>, 3>;  // prev, cur, next; each per scale

    Triple features(const Clip& clip, const Var* text) const {
        const int T = static_cast<int>(clip.frames.size());
        require(T == config_.clip_length && clip.center_index == config_.center_index, ErrorKind::InvalidArgument,
                "clip geometry differs from the model's");
        const int c = clip.center_index;
        const std::array<int, 3> picks{std::max(c - 1, 0), c, std::min(c + 1, T - 1)};
        std::vector<FeaturePyramid> pyramids;
        for (int t : picks) {
            const Image& img = clip.frames[t]->image;
            require(img.height == config_.resolution.height && img.width == config_.resolution.width,
                    ErrorKind::ShapeMismatch, "frame resolution differs from the model's");
            pyramids.push_back(vision_->encode(Var(image_tensor(img))));
        }
        FusedFeatures fused;
        if (vlf_) {
            const Var t = text ? *text : encode_text();
            fused = vlf_->fuse(pyramids, t);
        } else {
            fused = vlf_bypass(pyramids);
        }
        Triple out;
        for (int k = 0; k < 3; ++k)
            for (int s = 0; s < 3; ++s) out[k][s] = fused[s][k];
        return out;
    }

    ModelConfig config_;
    ParamStore params_;
    Vocabulary vocab_;
    PromptSet prompts_;
    std::unique_ptr<VisionBackbone> vision_;
    std::unique_ptr<TextEncoder> text_;
    std::unique_ptr<VisionLanguageFusion> vlf_;
    std::unique_ptr<TemporalSpatialModule> tsm_;
    std::unique_ptr<FpnDecoder> head_;
};

}  // namespace jvlgs
