#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "jvlgs/data.hpp"

namespace jvlgs {

/// Parameters of the synthetic gas-clip generator. Identical specs produce
/// byte-identical output trees.
struct SynthSpec {
    std::uint64_t seed = 1;
    int n_videos = 6;
    int frames_per_video = 8;
    double leak_probability = 0.5;
    int leak_videos = -1;  // >= 0: exactly the first leak_videos videos leak, overriding the probability
    int height = 64;
    int width = 64;
    int blob_count_min = 2;
    int blob_count_max = 4;
    double drift_step = 0.6;    // px per frame, random-walk std
    double growth_rate = 0.35;  // px of Gaussian spread added per frame
    bool distractors = false;   // also put transient specks into leak videos
    int speck_count_max = 3;
};

/// Alpha threshold separating plume (mask = 1) from fringe.
inline constexpr double kPlumeMaskAlpha = 0.3;

/// Portable generator: mt19937_64 bits mapped to doubles by hand so the
/// output does not depend on the standard library's distributions.
class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

/// Periodic value noise on an L×L lattice with smoothstep interpolation.
class ValueNoise {
public:
    static constexpr int kLattice = 8;

    explicit ValueNoise(SynthRng& rng, double cell) : cell_(cell) {
        for (auto& v : lattice_) v = rng.uniform();
    }

    double operator()(double x, double y) const {
        const double gx = x / cell_, gy = y / cell_;
        const double fx = std::floor(gx), fy = std::floor(gy);
        const double tx = smooth(gx - fx), ty = smooth(gy - fy);
        const int x0 = wrap(static_cast<long>(fx)), y0 = wrap(static_cast<long>(fy));
        const int x1 = wrap(x0 + 1L), y1 = wrap(y0 + 1L);
        const double a = lat(x0, y0) * (1 - tx) + lat(x1, y0) * tx;
        const double b = lat(x0, y1) * (1 - tx) + lat(x1, y1) * tx;
        return a * (1 - ty) + b * ty;
    }

private:
    static double smooth(double t) { return t * t * (3 - 2 * t); }
    static int wrap(long i) { return static_cast<int>(((i % kLattice) + kLattice) % kLattice); }
    double lat(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * kLattice + x]; }

    double cell_;
    std::array<double, kLattice * kLattice> lattice_{};
};

struct Speck {
    double x, y, sigma, amplitude;
};

/// Adds small bright Gaussian dots as brightness increase. Leaves masks alone.
inline void render_specks(std::vector<double>& gray, int h, int w, const std::vector<Speck>& specks) {
    for (const auto& s : specks) {
        const int r = static_cast<int>(std::ceil(3 * s.sigma));
        for (int y = std::max(0, static_cast<int>(s.y) - r); y <= std::min(h - 1, static_cast<int>(s.y) + r); ++y)
            for (int x = std::max(0, static_cast<int>(s.x) - r); x <= std::min(w - 1, static_cast<int>(s.x) + r); ++x) {
                const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y);
                const double a = s.amplitude * std::exp(-d2 / (2 * s.sigma * s.sigma));
                double& g = gray[static_cast<std::size_t>(y) * w + x];
                g += a * 0.6 * (1.0 - g);
            }
    }
}

inline std::vector<Speck> random_specks(SynthRng& rng, int h, int w, int count, double sigma_lo, double sigma_hi) {
    std::vector<Speck> out;
    for (int i = 0; i < count; ++i)
        out.push_back({rng.uniform(2.0, w - 3.0), rng.uniform(2.0, h - 3.0), rng.uniform(sigma_lo, sigma_hi), rng.uniform(0.8, 1.0)});
    return out;
}

inline Image gray_to_image(const std::vector<double>& gray, int h, int w) {
    Image img{h, w, std::vector<float>(static_cast<std::size_t>(3) * h * w)};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < gray.size(); ++i)
            img.pixels[c * gray.size() + i] = static_cast<float>(std::clamp(gray[i], 0.0, 1.0));
    return img;
}

/// Brightens `img` in place with transient specks (for false-positive probes).
inline void inject_specks(Image& img, SynthRng& rng, int count, double sigma_lo, double sigma_hi) {
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    std::vector<double> gray(n);
    for (std::size_t i = 0; i < n; ++i) gray[i] = img.pixels[i];
    render_specks(gray, img.height, img.width, random_specks(rng, img.height, img.width, count, sigma_lo, sigma_hi));
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) img.pixels[c * n + i] = static_cast<float>(std::clamp(gray[i], 0.0, 1.0));
}

struct SynthVideoSummary {
    std::string id;
    bool leak = false;
    std::vector<std::size_t> mask_pixels;  // per frame
};

struct SynthFrame {
    Image image;
    BinaryMask mask;
};

/// Renders one video. Leak videos carry a plume of Gaussian blobs that drift
/// on a seeded random walk and widen over time.
inline std::vector<SynthFrame> synth_video(const SynthSpec& spec, int video, bool* leak_out = nullptr) {
    require(spec.height > 0 && spec.width > 0 && spec.frames_per_video > 0, ErrorKind::InvalidArgument, "bad synth geometry");
    require(spec.blob_count_min >= 1 && spec.blob_count_max >= spec.blob_count_min, ErrorKind::InvalidArgument,
            "bad blob count range");
    const int h = spec.height, w = spec.width;
    SynthRng rng(spec.seed, static_cast<std::uint64_t>(video));
    const double draw = rng.uniform();
    const bool leak = spec.leak_videos >= 0 ? video < spec.leak_videos : draw < spec.leak_probability;
    if (leak_out) *leak_out = leak;

    ValueNoise coarse(rng, w / 3.0), fine(rng, w / 8.0);
    const double bg_vx = rng.uniform(-1.0, 1.0), bg_vy = rng.uniform(-1.0, 1.0);
    const double bg_level = rng.uniform(0.2, 0.3);

    struct Blob {
        double x, y, sigma, amplitude;
    };
    std::vector<Blob> blobs;
    double wind_x = 0, wind_y = 0;
    if (leak) {
        const double sx = rng.uniform(0.3, 0.7) * w, sy = rng.uniform(0.3, 0.7) * h;
        const int count = rng.integer(spec.blob_count_min, spec.blob_count_max);
        const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
        wind_x = 0.5 * std::cos(angle);
        wind_y = 0.5 * std::sin(angle);
        for (int i = 0; i < count; ++i)
            blobs.push_back({sx + 0.05 * w * rng.normal(), sy + 0.05 * h * rng.normal(), rng.uniform(0.08, 0.12) * w,
                             rng.uniform(0.75, 1.0)});
    }

    std::vector<SynthFrame> frames;
    for (int t = 0; t < spec.frames_per_video; ++t) {
        std::vector<double> gray(static_cast<std::size_t>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double px = x + bg_vx * t, py = y + bg_vy * t;
                gray[static_cast<std::size_t>(y) * w + x] =
                    bg_level + 0.2 * coarse(px, py) + 0.08 * fine(px, py) + 0.01 * rng.normal();
            }
        BinaryMask mask(h, w);
        if (leak) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double clear = 1.0;
                    for (const auto& b : blobs) {
                        const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
                        clear *= 1.0 - b.amplitude * std::exp(-d2 / (2 * b.sigma * b.sigma));
                    }
                    const double alpha = 1.0 - clear;
                    double& g = gray[static_cast<std::size_t>(y) * w + x];
                    g += alpha * 0.6 * (1.0 - g);
                    mask.at(y, x) = alpha > kPlumeMaskAlpha ? 1 : 0;
                }
            for (auto& b : blobs) {
                b.x += wind_x + spec.drift_step * rng.normal();
                b.y += wind_y + spec.drift_step * rng.normal();
                b.sigma += spec.growth_rate;
            }
        }
        if (!leak || spec.distractors) {
            const int count = rng.integer(0, spec.speck_count_max);
            render_specks(gray, h, w, random_specks(rng, h, w, count, 0.7, 1.2));
        }
        frames.push_back({gray_to_image(gray, h, w), std::move(mask)});
    }
    return frames;
}

inline std::string synth_video_id(int video) {
    std::ostringstream os;
    os << "video_" << std::setw(3) << std::setfill('0') << video;
    return os.str();
}

/// Writes `<out>/video_NNN/{frames,masks}/NNNNNN.png`.
inline std::vector<SynthVideoSummary> synth_generate(const SynthSpec& spec, const fs::path& out) {
    require(spec.n_videos >= 1, ErrorKind::InvalidArgument, "synth needs n_videos >= 1");
    require(spec.leak_probability >= 0.0 && spec.leak_probability <= 1.0, ErrorKind::InvalidArgument,
            "leak_probability must lie in [0,1]");
    fs::create_directories(out);
    std::vector<SynthVideoSummary> summary;
    for (int v = 0; v < spec.n_videos; ++v) {
        SynthVideoSummary s{synth_video_id(v), false, {}};
        auto frames = synth_video(spec, v, &s.leak);
        for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
            write_image(out / s.id / "frames" / frame_filename(t), frames[t].image);
            write_mask(out / s.id / "masks" / frame_filename(t), frames[t].mask);
            s.mask_pixels.push_back(frames[t].mask.count());
        }
        summary.push_back(std::move(s));
    }
    return summary;
}

/// In-memory equivalent of synth_generate followed by ingest_dataset at the
/// native resolution (pixels quantized to 8 bits like the PNG round trip).
inline Dataset synth_dataset(const SynthSpec& spec) {
    Dataset ds;
    ds.resolution = {spec.height, spec.width};
    for (int v = 0; v < spec.n_videos; ++v) {
        Video video{synth_video_id(v), {}};
        auto frames = synth_video(spec, v);
        for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
            for (auto& p : frames[t].image.pixels) p = static_cast<float>(std::lround(p * 255.0f)) / 255.0f;
            video.frames.push_back({std::move(frames[t].image), std::move(frames[t].mask), video.id, t});
        }
        ds.videos.push_back(std::move(video));
    }
    return ds;
}

}  // namespace jvlgs
