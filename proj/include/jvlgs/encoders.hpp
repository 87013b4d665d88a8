#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "jvlgs/data.hpp"
#include "jvlgs/params.hpp"

namespace jvlgs {

/// Three feature maps at strides 8, 16, 32, each C_v×H'×W'.
using FeaturePyramid = std::array<Var, 3>;

inline constexpr int kPyramidStrides[3] = {8, 16, 32};

inline Tensor image_tensor(const Image& img) {
    Tensor t({3, img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), t.data());
    return t;
}

// ---------------------------------------------------------------------------
// Vision

/// Interface every vision backbone implements.
class VisionBackbone {
public:
    virtual ~VisionBackbone() = default;
    virtual FeaturePyramid encode(const Var& image) const = 0;
    virtual int channels() const = 0;
    /// Parameter-name prefix owned by this backbone (used for freezing/loading).
    virtual std::string prefix() const = 0;
};

/// Reference backbone: five 3×3 stride-2 convolutions with ReLU; the last
/// three emit the pyramid levels.
class ReferenceVisionEncoder : public VisionBackbone {
public:
    static constexpr int kStemWidth = 16;

    ReferenceVisionEncoder(ParamStore& store, Resolution res, int channels = 32) : channels_(channels) {
        require(res.height % 32 == 0 && res.width % 32 == 0 && res.height > 0 && res.width > 0,
                ErrorKind::InvalidArgument,
                "resolution " + std::to_string(res.height) + "x" + std::to_string(res.width) + " is not divisible by 32");
        require(channels >= 1, ErrorKind::InvalidArgument, "vision channels must be >= 1");
        const int widths[6] = {3, kStemWidth, channels, channels, channels, channels};
        for (int i = 0; i < 5; ++i) {
            const std::string name = "encoder.vision.conv" + std::to_string(i + 1);
            const int fan_in = widths[i] * 9;
            weights_[i] = store.uniform(name + ".weight", {widths[i + 1], widths[i], 3, 3}, std::sqrt(6.0 / fan_in));
            biases_[i] = store.zeros(name + ".bias", {widths[i + 1]});
        }
    }

    FeaturePyramid encode(const Var& image) const override {
        require(image.value().rank() == 3 && image.value().dim(0) == 3, ErrorKind::ShapeMismatch,
                "vision encoder expects a 3×H×W image, got " + shape_str(image.shape()));
        require(image.value().dim(1) % 32 == 0 && image.value().dim(2) % 32 == 0, ErrorKind::ShapeMismatch,
                "image size not divisible by 32");
        FeaturePyramid out;
        Var x = image;
        for (int i = 0; i < 5; ++i) {
            x = ag::relu(ag::conv2d(x, weights_[i], biases_[i], 2, 1));
            if (i >= 2) out[i - 2] = x;
        }
        return out;
    }

    int channels() const override { return channels_; }
    std::string prefix() const override { return "encoder.vision."; }

private:
    int channels_;
    std::array<Var, 5> weights_;
    std::array<Var, 5> biases_;
};

// ---------------------------------------------------------------------------
// Text

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kEndId = 2;

/// One token per line; the id of a token is its 0-based line number.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        require(tokens_.size() >= 3, ErrorKind::Data, "vocabulary needs the three reserved tokens");
        for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
    }

    static Vocabulary from_file(const fs::path& path) {
        std::ifstream in(path);
        require(static_cast<bool>(in), ErrorKind::Io, "cannot open vocabulary " + path.string());
        std::vector<std::string> tokens;
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            tokens.push_back(line);
        }
        return Vocabulary(std::move(tokens));
    }

    static Vocabulary builtin() {
        return Vocabulary({"<pad>", "<unk>", "<end>", "white", "steam", "floating", "billowing", "blowing", "flowing",
                           "smoke", "gas", "leak", "plume", "vapor", "cloud", "faint", "transparent", "rising",
                           "escaping", "drifting", "thin", "haze", "mist", "dark", "black", "grey", "gray", "a", "of",
                           "the", "and", "infrared", "methane", "emission"});
    }

    int id(const std::string& word) const {
        auto it = ids_.find(word);
        return it == ids_.end() ? kUnkId : it->second;
    }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

/// P_l token rows of length d with attention mask (1 on non-padding).
struct PromptSet {
    int length = 0;  // d
    std::vector<std::vector<int>> tokens;
    std::vector<std::vector<int>> attention;

    int count() const { return static_cast<int>(tokens.size()); }
};

inline PromptSet tokenize(const std::vector<std::string>& prompts, const Vocabulary& vocab, int length = 16) {
    require(!prompts.empty(), ErrorKind::InvalidArgument, "prompt list is empty");
    PromptSet ps;
    ps.length = length;
    for (const auto& text : prompts) {
        std::string lower = text;
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        std::istringstream words(lower);
        std::vector<int> row;
        for (std::string w; words >> w;) row.push_back(vocab.id(w));
        require(!row.empty(), ErrorKind::InvalidArgument, "empty prompt string");
        row.push_back(kEndId);
        require(static_cast<int>(row.size()) <= length, ErrorKind::InvalidArgument,
                "prompt \"" + text + "\" exceeds " + std::to_string(length - 1) + " tokens");
        std::vector<int> mask(row.size(), 1);
        row.resize(static_cast<std::size_t>(length), kPadId);
        mask.resize(static_cast<std::size_t>(length), 0);
        ps.tokens.push_back(std::move(row));
        ps.attention.push_back(std::move(mask));
    }
    return ps;
}

/// Sinusoidal position table (length × channels); parameter-free so longer
/// padding never changes the codes of earlier positions.
inline Tensor position_table(int length, int channels) {
    Tensor t({length, channels});
    for (int p = 0; p < length; ++p)
        for (int i = 0; i < channels; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / channels);
            t.at(p, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
        }
    return t;
}

/// Token embedding + masked self-attention blocks; each prompt is pooled at
/// its END token, giving f_t of shape P_l×C_t.
class TextEncoder {
public:
    TextEncoder(ParamStore& store, int vocab_size, int channels = 64, int blocks = 2) : channels_(channels) {
        require(channels >= 1 && blocks >= 0, ErrorKind::InvalidArgument, "bad text encoder geometry");
        embedding_ = store.uniform("encoder.text.embedding", {vocab_size, channels}, 1.0);
        const double b = 1.0 / std::sqrt(channels);
        for (int i = 0; i < blocks; ++i) {
            const std::string p = "encoder.text.block" + std::to_string(i) + ".";
            Block blk;
            blk.wq = store.uniform(p + "wq", {channels, channels}, b);
            blk.wk = store.uniform(p + "wk", {channels, channels}, b);
            blk.wv = store.uniform(p + "wv", {channels, channels}, b);
            blk.wo = store.uniform(p + "wo", {channels, channels}, b);
            blk.w1 = store.uniform(p + "mlp1.weight", {channels, 2 * channels}, b);
            blk.b1 = store.zeros(p + "mlp1.bias", {2 * channels});
            blk.w2 = store.uniform(p + "mlp2.weight", {2 * channels, channels}, 1.0 / std::sqrt(2.0 * channels));
            blk.b2 = store.zeros(p + "mlp2.bias", {channels});
            blocks_.push_back(std::move(blk));
        }
    }

    int channels() const { return channels_; }

    Var encode(const PromptSet& ps) const {
        require(ps.count() >= 1, ErrorKind::InvalidArgument, "prompt set is empty");
        const Var pos(position_table(ps.length, channels_));
        std::vector<Var> pooled;
        for (int p = 0; p < ps.count(); ++p) {
            const auto& mask = ps.attention[p];
            int end = -1;
            for (int i = 0; i < ps.length; ++i)
                if (mask[i]) end = i;
            require(end >= 0, ErrorKind::InvalidArgument, "prompt " + std::to_string(p) + " has an all-zero attention row");
            Var x = ag::add(ag::gather_rows(embedding_, ps.tokens[p]), pos);
            for (const auto& blk : blocks_) x = block(x, blk, mask);
            pooled.push_back(ag::gather_rows(x, {end}));
        }
        return ag::concat(pooled);
    }

private:
    struct Block {
        Var wq, wk, wv, wo, w1, b1, w2, b2;
    };

    Var block(const Var& x, const Block& b, const std::vector<int>& mask) const {
        const Var q = ag::matmul(x, b.wq);
        const Var k = ag::matmul(x, b.wk);
        const Var v = ag::matmul(x, b.wv);
        const Var scores = ag::scale(ag::matmul(q, ag::transpose(k)), 1.0 / std::sqrt(static_cast<double>(channels_)));
        const Var attn = ag::matmul(ag::softmax_rows(scores, 0.0, mask), v);
        const Var h = ag::add(x, ag::matmul(attn, b.wo));
        const Var mlp = ag::add_row_bias(ag::matmul(ag::relu(ag::add_row_bias(ag::matmul(h, b.w1), b.b1)), b.w2), b.b2);
        return ag::add(h, mlp);
    }

    int channels_;
    Var embedding_;
    std::vector<Block> blocks_;
};

}  // namespace jvlgs
