#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jvlgs/data.hpp"
#include "jvlgs/mask.hpp"
#include "jvlgs/tensor.hpp"

namespace jvlgs {

// ---------------------------------------------------------------------------
// Post-processing

/// 1 where prob > threshold (strict).
inline BinaryMask binarize(const Tensor& prob, double threshold = 0.5) {
    require(threshold > 0.0 && threshold < 1.0, ErrorKind::InvalidArgument, "binarize threshold must lie in (0,1)");
    const int H = prob.dim(prob.rank() - 2), W = prob.dim(prob.rank() - 1);
    BinaryMask m(H, W);
    for (std::size_t i = 0; i < m.grid.size(); ++i) m.grid[i] = prob[i] > threshold ? 1 : 0;
    return m;
}

namespace detail {
// Running min/max over a centered window along one axis; pixels outside the
// image count as 0.
inline BinaryMask box_pass(const BinaryMask& in, int radius, bool horizontal, bool take_min) {
    BinaryMask out(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            std::uint8_t acc = take_min ? 1 : 0;
            for (int d = -radius; d <= radius; ++d) {
                const std::uint8_t v = horizontal ? in.get(y, x + d) : in.get(y + d, x);
                if (take_min ? v == 0 : v == 1) {
                    acc = v;
                    break;
                }
            }
            out.at(y, x) = acc;
        }
    return out;
}

inline void require_odd_kernel(int kernel) {
    require(kernel >= 1 && kernel % 2 == 1, ErrorKind::InvalidArgument,
            "morphology kernel must be odd and >= 1, got " + std::to_string(kernel));
}
}  // namespace detail

/// Erosion by a kernel×kernel square, zero padding outside the image.
inline BinaryMask erode(const BinaryMask& m, int kernel) {
    detail::require_odd_kernel(kernel);
    const int r = kernel / 2;
    return detail::box_pass(detail::box_pass(m, r, true, true), r, false, true);
}

inline BinaryMask dilate(const BinaryMask& m, int kernel) {
    detail::require_odd_kernel(kernel);
    const int r = kernel / 2;
    return detail::box_pass(detail::box_pass(m, r, true, false), r, false, false);
}

/// Morphological opening: dilation of the erosion.
inline BinaryMask opening(const BinaryMask& m, int kernel) { return dilate(erode(m, kernel), kernel); }

// ---------------------------------------------------------------------------
// Metrics, on the 0-100 scale

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt, "confusion");
    Confusion c;
    for (std::size_t i = 0; i < pred.grid.size(); ++i) {
        c.tp += pred.grid[i] & gt.grid[i];
        c.fp += pred.grid[i] & (1 - gt.grid[i]);
        c.fn += (1 - pred.grid[i]) & gt.grid[i];
    }
    return c;
}

inline double jaccard_from(const Confusion& c) {
    const std::size_t uni = c.tp + c.fp + c.fn;
    return uni == 0 ? 100.0 : 100.0 * static_cast<double>(c.tp) / static_cast<double>(uni);
}

/// Region similarity; both-empty scores 100.
inline double jaccard(const BinaryMask& pred, const BinaryMask& gt) { return jaccard_from(confusion(pred, gt)); }

/// Foreground pixels with at least one background 4-neighbor (outside = background).
inline BinaryMask boundary(const BinaryMask& m) {
    BinaryMask b(m.height, m.width);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x) && (!m.get(y - 1, x) || !m.get(y + 1, x) || !m.get(y, x - 1) || !m.get(y, x + 1))) b.at(y, x) = 1;
    return b;
}

/// Dilation by a Euclidean disk of the given radius.
inline BinaryMask dilate_disk(const BinaryMask& m, int radius) {
    BinaryMask out(m.height, m.width);
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offsets.emplace_back(dy, dx);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            for (auto [dy, dx] : offsets)
                if (out.inside(y + dy, x + dx)) out.at(y + dy, x + dx) = 1;
        }
    return out;
}

/// Boundary match tolerance: ceil(0.0075 · image diagonal).
inline int boundary_tolerance(int height, int width) {
    return static_cast<int>(std::ceil(0.0075 * std::sqrt(static_cast<double>(height) * height + static_cast<double>(width) * width)));
}

/// Contour accuracy: F-measure of boundary pixels matched within the tolerance.
inline double boundary_f(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt, "boundary_f");
    const bool pe = pred.empty(), ge = gt.empty();
    if (pe && ge) return 100.0;
    if (pe || ge) return 0.0;
    const int r = boundary_tolerance(pred.height, pred.width);
    const BinaryMask bp = boundary(pred), bg = boundary(gt);
    const BinaryMask bp_d = dilate_disk(bp, r), bg_d = dilate_disk(bg, r);
    std::size_t np = 0, ng = 0, hit_p = 0, hit_g = 0;
    for (std::size_t i = 0; i < bp.grid.size(); ++i) {
        np += bp.grid[i];
        ng += bg.grid[i];
        hit_p += bp.grid[i] & bg_d.grid[i];
        hit_g += bg.grid[i] & bp_d.grid[i];
    }
    const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
    const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
    if (precision + recall == 0.0) return 0.0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Aggregation

enum class Protocol { Unified, PerVideoConfusion, FoldWeighted };

inline const char* to_string(Protocol p) {
    switch (p) {
        case Protocol::Unified: return "unified";
        case Protocol::PerVideoConfusion: return "per_video_confusion";
        case Protocol::FoldWeighted: return "fold_weighted";
    }
    return "?";
}

inline Protocol parse_protocol(const std::string& s) {
    if (s == "unified") return Protocol::Unified;
    if (s == "per_video_confusion" || s == "per-video") return Protocol::PerVideoConfusion;
    if (s == "fold_weighted" || s == "fold-weighted") return Protocol::FoldWeighted;
    fail(ErrorKind::InvalidArgument, "unknown evaluation protocol \"" + s + "\"");
}

struct Scores {
    double j = 0.0, f = 0.0, jf = 0.0;
};

inline Scores make_scores(double j, double f) { return {j, f, (j + f) / 2.0}; }

struct FrameScore {
    FrameRef ref;
    double j = 0.0, f = 0.0;
    Confusion counts;
};

inline FrameScore score_frame(const FrameRef& ref, const BinaryMask& pred, const BinaryMask& gt) {
    return {ref, jaccard(pred, gt), boundary_f(pred, gt), confusion(pred, gt)};
}

struct VideoScore {
    std::string video_id;
    Scores scores;
};

struct FoldScore {
    int fold = 0;
    double weight = 0.0;
    Scores scores;
};

/// Frames of one fold's test part and the fold's weight.
struct FoldAssignment {
    int fold = 0;
    double weight = 0.0;
    std::vector<FrameRef> frames;
};

struct EvalReport {
    Protocol protocol = Protocol::Unified;
    std::vector<FrameScore> per_frame;
    std::vector<VideoScore> per_video;
    std::vector<FoldScore> per_fold;
    Scores overall;
};

inline constexpr double kFoldWeightTolerance = 1e-4;

/// Σ weight·score over folds; weights must sum to 1 ± 1e-4.
inline Scores weighted_fold_average(const std::vector<FoldScore>& folds) {
    require(!folds.empty(), ErrorKind::InvalidArgument, "no folds to aggregate");
    double wsum = 0.0, j = 0.0, f = 0.0, jf = 0.0;
    for (const auto& fs : folds) {
        wsum += fs.weight;
        j += fs.weight * fs.scores.j;
        f += fs.weight * fs.scores.f;
        jf += fs.weight * fs.scores.jf;
    }
    require(std::abs(wsum - 1.0) <= kFoldWeightTolerance, ErrorKind::InvalidArgument,
            "fold weights sum to " + std::to_string(wsum) + ", expected 1");
    return {j, f, jf};
}

namespace detail {
inline Scores frame_mean(const std::vector<const FrameScore*>& frames) {
    double j = 0.0, f = 0.0;
    for (const auto* fs : frames) {
        j += fs->j;
        f += fs->f;
    }
    const double n = static_cast<double>(frames.size());
    return make_scores(j / n, f / n);
}
}  // namespace detail

/// Combines per-frame scores under a protocol:
///  - unified: mean over all frames;
///  - per_video_confusion: J from TP/FP/FN accumulated per video, F as the
///    within-video frame mean, then an unweighted mean over videos;
///  - fold_weighted: frame mean per fold, then Σ weight·fold score.
inline EvalReport aggregate(std::vector<FrameScore> frames, Protocol protocol,
                            const std::vector<FoldAssignment>* folds = nullptr) {
    require(!frames.empty(), ErrorKind::InvalidArgument, "no frame results to aggregate");
    std::sort(frames.begin(), frames.end(), [](const FrameScore& a, const FrameScore& b) { return a.ref < b.ref; });
    EvalReport rep;
    rep.protocol = protocol;
    rep.per_frame = std::move(frames);

    std::map<std::string, std::vector<const FrameScore*>, bool (*)(const std::string&, const std::string&)> by_video(natural_less);
    for (const auto& fs : rep.per_frame) by_video[fs.ref.video_id].push_back(&fs);
    for (const auto& [vid, list] : by_video) {
        if (protocol == Protocol::PerVideoConfusion) {
            Confusion acc;
            double f = 0.0;
            for (const auto* fs : list) {
                acc.tp += fs->counts.tp;
                acc.fp += fs->counts.fp;
                acc.fn += fs->counts.fn;
                f += fs->f;
            }
            rep.per_video.push_back({vid, make_scores(jaccard_from(acc), f / static_cast<double>(list.size()))});
        } else {
            rep.per_video.push_back({vid, detail::frame_mean(list)});
        }
    }

    if (folds) {
        std::map<FrameRef, const FrameScore*> index;
        for (const auto& fs : rep.per_frame) index.emplace(fs.ref, &fs);
        for (const auto& fa : *folds) {
            std::vector<const FrameScore*> list;
            for (const auto& ref : fa.frames) {
                auto it = index.find(ref);
                require(it != index.end(), ErrorKind::Data,
                        "fold " + std::to_string(fa.fold) + " frame " + ref.video_id + "/" + std::to_string(ref.frame_index) +
                            " has no result");
                list.push_back(it->second);
            }
            require(!list.empty(), ErrorKind::Data, "fold " + std::to_string(fa.fold) + " has no frames");
            rep.per_fold.push_back({fa.fold, fa.weight, detail::frame_mean(list)});
        }
    }

    switch (protocol) {
        case Protocol::Unified: {
            std::vector<const FrameScore*> all;
            for (const auto& fs : rep.per_frame) all.push_back(&fs);
            rep.overall = detail::frame_mean(all);
            break;
        }
        case Protocol::PerVideoConfusion: {
            double j = 0.0, f = 0.0;
            for (const auto& v : rep.per_video) {
                j += v.scores.j;
                f += v.scores.f;
            }
            const double n = static_cast<double>(rep.per_video.size());
            rep.overall = make_scores(j / n, f / n);
            break;
        }
        case Protocol::FoldWeighted:
            require(folds != nullptr, ErrorKind::InvalidArgument, "fold-weighted aggregation needs fold assignments");
            rep.overall = weighted_fold_average(rep.per_fold);
            break;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string format_report(const EvalReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "protocol\t" << to_string(rep.protocol) << '\n';
    os << "level\tname\tweight\tJ\tF\tJ&F\n";
    for (const auto& fs : rep.per_frame)
        os << "frame\t" << fs.ref.video_id << '/' << fs.ref.frame_index << "\t-\t" << fs.j << '\t' << fs.f << '\t'
           << (fs.j + fs.f) / 2 << '\n';
    for (const auto& v : rep.per_video)
        os << "video\t" << v.video_id << "\t-\t" << v.scores.j << '\t' << v.scores.f << '\t' << v.scores.jf << '\n';
    for (const auto& f : rep.per_fold)
        os << "fold\t" << f.fold << '\t' << std::setprecision(4) << f.weight << std::setprecision(2) << '\t' << f.scores.j
           << '\t' << f.scores.f << '\t' << f.scores.jf << '\n';
    os << "overall\t-\t-\t" << rep.overall.j << '\t' << rep.overall.f << '\t' << rep.overall.jf << '\n';
    return os.str();
}

inline nlohmann::json report_json(const EvalReport& rep) {
    using nlohmann::json;
    auto scores = [](const Scores& s) { return json{{"J", s.j}, {"F", s.f}, {"J&F", s.jf}}; };
    json doc;
    doc["protocol"] = to_string(rep.protocol);
    doc["per_frame"] = json::array();
    for (const auto& fs : rep.per_frame)
        doc["per_frame"].push_back({{"video_id", fs.ref.video_id}, {"frame_index", fs.ref.frame_index}, {"J", fs.j}, {"F", fs.f}});
    doc["per_video"] = json::array();
    for (const auto& v : rep.per_video) {
        auto e = scores(v.scores);
        e["video_id"] = v.video_id;
        doc["per_video"].push_back(e);
    }
    doc["per_fold"] = json::array();
    for (const auto& f : rep.per_fold) {
        auto e = scores(f.scores);
        e["fold"] = f.fold;
        e["weight"] = f.weight;
        doc["per_fold"].push_back(e);
    }
    doc["overall"] = scores(rep.overall);
    return doc;
}

/// Writes `<stem>.txt` (tab-separated) and `<stem>.json`.
inline void write_report(const fs::path& stem, const EvalReport& rep) {
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    std::ofstream txt(stem.string() + ".txt");
    std::ofstream js(stem.string() + ".json");
    require(txt && js, ErrorKind::Io, "cannot write report " + stem.string());
    txt << format_report(rep);
    js << report_json(rep).dump(2) << '\n';
}

}  // namespace jvlgs
