#pragma once
// Shared test helpers: random generators, brute-force oracles and a
// finite-difference gradient checker. Oracles are written from the formulas
// directly and deliberately share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "jvlgs/jvlgs.hpp"

namespace jvlgs::test {

using ag::Var;

// ---------------------------------------------------------------------------
// Random data

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = d(rng);
    return t;
}

inline BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double density = 0.5) {
    std::bernoulli_distribution d(density);
    BinaryMask m(h, w);
    for (auto& v : m.grid) v = d(rng) ? 1 : 0;
    return m;
}

/// Union of a few random axis-aligned rectangles (blobby shapes with real boundaries).
inline BinaryMask random_rects(std::mt19937_64& rng, int h, int w, int count, int min_side, int max_side) {
    BinaryMask m(h, w);
    std::uniform_int_distribution<int> side(min_side, max_side);
    for (int i = 0; i < count; ++i) {
        const int rh = std::min(h, side(rng)), rw = std::min(w, side(rng));
        const int y0 = std::uniform_int_distribution<int>(0, h - rh)(rng);
        const int x0 = std::uniform_int_distribution<int>(0, w - rw)(rng);
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) m.at(y, x) = 1;
    }
    return m;
}

inline void fill_square(BinaryMask& m, int y0, int x0, int side) {
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
            if (m.inside(y, x)) m.at(y, x) = 1;
}

inline bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.grid.size(); ++i)
        if (a.grid[i] && !b.grid[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Correlation oracles: literal loops over (x, y, u, v).

/// normalized[x][y][u][v] = exp(<F_j[:,x,y], F_adj[:,u,v]>) / sum_{u',v'} exp(...)
inline std::vector<double> correlation_oracle(const Tensor& fj, const Tensor& fadj) {
    const int C = fj.dim(0), H = fj.dim(1), W = fj.dim(2);
    std::vector<double> out(static_cast<std::size_t>(H * W * H * W));
    for (int x = 0; x < H; ++x)
        for (int y = 0; y < W; ++y) {
            double z = 0.0;
            for (int u = 0; u < H; ++u)
                for (int v = 0; v < W; ++v) {
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c) dot += fj.at(c, x, y) * fadj.at(c, u, v);
                    const double e = std::exp(dot);
                    out[((static_cast<std::size_t>(x) * W + y) * H + u) * W + v] = e;
                    z += e;
                }
            for (int u = 0; u < H; ++u)
                for (int v = 0; v < W; ++v) out[((static_cast<std::size_t>(x) * W + y) * H + u) * W + v] /= z;
        }
    return out;
}

/// Direct stride-1 convolution with zero padding K/2.
inline Tensor conv_oracle(const Tensor& in, const Tensor& w, const Tensor* b) {
    const int O = w.dim(0), I = w.dim(1), K = w.dim(2), H = in.dim(1), W = in.dim(2), r = K / 2;
    Tensor out({O, H, W});
    for (int o = 0; o < O; ++o)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = b ? (*b)[o] : 0.0;
                for (int i = 0; i < I; ++i)
                    for (int ky = 0; ky < K; ++ky)
                        for (int kx = 0; kx < K; ++kx) {
                            const int sy = y + ky - r, sx = x + kx - r;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            s += w[((static_cast<std::size_t>(o) * I + i) * K + ky) * K + kx] * in.at(i, sy, sx);
                        }
                out.at(o, y, x) = s;
            }
    return out;
}

inline Tensor conv_oracle(const Tensor& in, const Conv& c) {
    return c.bias.defined() ? conv_oracle(in, c.weight.value(), &c.bias.value()) : conv_oracle(in, c.weight.value(), nullptr);
}

inline Tensor channels(const Tensor& t, int begin, int count) {
    const int H = t.dim(1), W = t.dim(2);
    Tensor out({count, H, W});
    for (int c = 0; c < count; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.at(c, y, x) = t.at(begin + c, y, x);
    return out;
}

inline Tensor stack(const std::vector<Tensor>& parts) {
    int C = 0;
    for (const auto& p : parts) C += p.dim(0);
    const int H = parts[0].dim(1), W = parts[0].dim(2);
    Tensor out({C, H, W});
    int at = 0;
    for (const auto& p : parts)
        for (int c = 0; c < p.dim(0); ++c, ++at)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) out.at(at, y, x) = p.at(c, y, x);
    return out;
}

/// out[c,x,y] = sum_{u,v} lambda_out[c,u,v] * normalized[x,y,u,v]
inline Tensor aggregate_oracle(const Tensor& fj, const Tensor& fadj, const std::vector<double>& normalized, const Conv& lambda) {
    const Tensor lam = conv_oracle(stack({fj, fadj}), lambda);
    const int C = lam.dim(0), H = lam.dim(1), W = lam.dim(2);
    Tensor out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int x = 0; x < H; ++x)
            for (int y = 0; y < W; ++y) {
                double s = 0.0;
                for (int u = 0; u < H; ++u)
                    for (int v = 0; v < W; ++v)
                        s += lam.at(c, u, v) * normalized[((static_cast<std::size_t>(x) * W + y) * H + u) * W + v];
                out.at(c, x, y) = s;
            }
    return out;
}

// ---------------------------------------------------------------------------
// Granular spatial analysis, transcribed step by step.

inline Tensor instance_norm_relu(const Tensor& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    Tensor out(t.shape());
    for (int c = 0; c < C; ++c) {
        double mean = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) mean += t.at(c, y, x);
        mean /= H * W;
        double var = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) var += (t.at(c, y, x) - mean) * (t.at(c, y, x) - mean);
        var /= H * W;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out.at(c, y, x) = std::max(0.0, (t.at(c, y, x) - mean) / std::sqrt(var + 1e-5));
    }
    return out;
}

inline Tensor gsa_oracle(const Tensor& tau, const GsaParams& p) {
    const int g = p.groups;
    // 1. expand C -> 3g
    const Tensor expanded = conv_oracle(tau, p.expand);
    // 2. grouped mixing with the rho^1 carry
    std::vector<Tensor> rho1, rho2, rho3;
    for (int i = 0; i < g; ++i) {
        Tensor group = channels(expanded, 3 * i, 3);
        if (i > 0) group = stack({group, rho1.back()});
        const Tensor mixed = conv_oracle(group, p.group[i]);
        rho1.push_back(channels(mixed, 0, 1));
        rho2.push_back(channels(mixed, 1, 1));
        rho3.push_back(channels(mixed, 2, 1));
    }
    // 3. N2, N3
    Tensor n2 = conv_oracle(stack(rho2), p.n2);
    Tensor n3 = conv_oracle(stack(rho3), p.n3);
    if (p.activations) {
        n2 = instance_norm_relu(n2);
        n3 = instance_norm_relu(n3);
    }
    // 4. N = N2 ⊙ N3
    Tensor n(n2.shape());
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = n2[i] * n3[i];
    // 5. residual
    const Tensor conv = conv_oracle(n, p.fuse);
    Tensor out(tau.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tau[i] + conv[i];
    return out;
}

// ---------------------------------------------------------------------------
// Morphology and metric oracles

inline BinaryMask naive_erode(const BinaryMask& m, int k) {
    const int r = k / 2;
    BinaryMask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy)
                for (int dx = -r; dx <= r && all; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m.at(yy, xx)) all = false;
                }
            out.at(y, x) = all ? 1 : 0;
        }
    return out;
}

inline BinaryMask naive_dilate(const BinaryMask& m, int k) {
    const int r = k / 2;
    BinaryMask out(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool any = false;
            for (int dy = -r; dy <= r && !any; ++dy)
                for (int dx = -r; dx <= r && !any; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width && m.at(yy, xx)) any = true;
                }
            out.at(y, x) = any ? 1 : 0;
        }
    return out;
}

inline double jaccard_oracle(const BinaryMask& p, const BinaryMask& g) {
    int inter = 0, uni = 0;
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            inter += p.at(y, x) && g.at(y, x);
            uni += p.at(y, x) || g.at(y, x);
        }
    return uni == 0 ? 100.0 : 100.0 * inter / uni;
}

/// F over boundary pixels: a boundary pixel is matched when some boundary pixel
/// of the other mask lies within Euclidean distance r.
inline double boundary_f_oracle(const BinaryMask& p, const BinaryMask& g) {
    auto edge = [](const BinaryMask& m) {
        std::vector<std::pair<int, int>> pts;
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                if (!m.at(y, x)) continue;
                const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
                for (int i = 0; i < 4; ++i)
                    if (ny[i] < 0 || ny[i] >= m.height || nx[i] < 0 || nx[i] >= m.width || !m.at(ny[i], nx[i])) {
                        pts.emplace_back(y, x);
                        break;
                    }
            }
        return pts;
    };
    const auto ep = edge(p), eg = edge(g);
    if (ep.empty() && eg.empty()) return 100.0;
    if (ep.empty() || eg.empty()) return 0.0;
    const double r = std::ceil(0.0075 * std::hypot(p.height, p.width));
    auto matched = [r](const std::vector<std::pair<int, int>>& a, const std::vector<std::pair<int, int>>& b) {
        int n = 0;
        for (auto [y, x] : a)
            for (auto [yy, xx] : b)
                if ((y - yy) * (y - yy) + (x - xx) * (x - xx) <= r * r) {
                    ++n;
                    break;
                }
        return n;
    };
    const double precision = static_cast<double>(matched(ep, eg)) / ep.size();
    const double recall = static_cast<double>(matched(eg, ep)) / eg.size();
    return precision + recall == 0 ? 0.0 : 100.0 * 2 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f()` w.r.t. every element
/// of `leaves` (at most `max_per_leaf` evenly spaced elements each) with
/// central differences. Relative error uses max(|a|, |n|, 1e-6) as the scale.
inline GradCheck gradcheck(const std::function<Var()>& f, std::vector<Var> leaves, double step = 1e-6,
                           std::size_t max_per_leaf = 0) {
    for (auto& l : leaves) l.zero_grad();
    f().backward();
    std::vector<Tensor> analytic;
    for (const auto& l : leaves) analytic.push_back(l.grad());
    GradCheck out;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor& v = leaves[li].value();
        const std::size_t n = v.size();
        const std::size_t stride = (max_per_leaf == 0 || n <= max_per_leaf) ? 1 : n / max_per_leaf;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = v[i];
            v[i] = orig + step;
            const double hi = f().item();
            v[i] = orig - step;
            const double lo = f().item();
            v[i] = orig;
            const double numeric = (hi - lo) / (2 * step);
            const double a = analytic[li][i];
            out.max_rel = std::max(out.max_rel, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
            ++out.checked;
        }
    }
    return out;
}

/// Random linear readout sum_i r_i x_i with fixed weights, so every output
/// element carries gradient.
inline Var readout(const Var& x, const Tensor& weights) { return ag::sum(ag::mul(x, Var(weights))); }

// ---------------------------------------------------------------------------
// Published SimGas fold layout (video id, frame count) and per-fold J&F.

inline std::vector<VideoInfo> simgas_videos() {
    const std::vector<std::pair<std::string, int>> rows{
        {"1", 451},  {"2", 451},  {"2_human", 451}, {"3", 451},  {"3_bats", 451},         {"4", 451},  {"5", 451},
        {"6", 450},  {"7", 450},  {"8", 451},       {"9", 300},  {"10", 300},             {"11", 300}, {"11_brightbats", 300},
        {"12", 551}, {"13", 270}, {"15", 270},      {"15_crowd", 270}, {"16", 250},       {"17", 451}, {"18", 551},
        {"19", 400}, {"20", 393}, {"21", 400},      {"22", 400}, {"23", 394},             {"24", 370}, {"25", 350},
        {"26", 350}, {"27", 350}, {"28", 400}};
    std::vector<VideoInfo> out;
    for (const auto& [id, n] : rows) {
        VideoInfo v{id, {}};
        for (int i = 0; i < n; ++i) v.frame_indices.push_back(i);
        out.push_back(std::move(v));
    }
    return out;
}

inline const std::vector<double>& simgas_published_weights() {
    static const std::vector<double> w{0.2603, 0.1856, 0.1576, 0.2140, 0.1825};
    return w;
}

inline const std::vector<double>& simgas_fold_jf() {
    static const std::vector<double> jf{68.39, 58.14, 76.11, 64.78, 63.22};
    return jf;
}

// ---------------------------------------------------------------------------
// Scratch directories

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("jvlgs_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace jvlgs::test
