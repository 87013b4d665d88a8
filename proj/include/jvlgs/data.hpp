#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "jvlgs/mask.hpp"

namespace jvlgs {

namespace fs = std::filesystem;

struct Resolution {
    int height = 352;
    int width = 352;
    friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// 3×H×W image, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // channel-major

    float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    friend bool operator==(const Image&, const Image&) = default;
};

struct Frame {
    Image image;
    std::optional<BinaryMask> mask;
    std::string video_id;
    int frame_index = 0;
    friend bool operator==(const Frame&, const Frame&) = default;
};

struct Video {
    std::string id;
    std::vector<Frame> frames;  // ascending frame_index
    friend bool operator==(const Video&, const Video&) = default;
};

struct FrameRef {
    std::string video_id;
    int frame_index = 0;
    friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

/// Read-only after construction; safe to share between threads.
struct Dataset {
    Resolution resolution;
    std::vector<Video> videos;  // natural order of video_id
    std::vector<std::string> warnings;

    std::size_t frame_count() const {
        std::size_t n = 0;
        for (const auto& v : videos) n += v.frames.size();
        return n;
    }

    const Video& video(const std::string& id) const {
        for (const auto& v : videos)
            if (v.id == id) return v;
        fail(ErrorKind::Data, "unknown video " + id);
    }

    const Frame& frame(const FrameRef& ref) const {
        const auto& v = video(ref.video_id);
        auto it = std::lower_bound(v.frames.begin(), v.frames.end(), ref.frame_index,
                                   [](const Frame& f, int idx) { return f.frame_index < idx; });
        require(it != v.frames.end() && it->frame_index == ref.frame_index, ErrorKind::Data,
                "unknown frame " + ref.video_id + "/" + std::to_string(ref.frame_index));
        return *it;
    }

    bool operator==(const Dataset& o) const { return resolution == o.resolution && videos == o.videos; }
};

/// Ordering that compares digit runs numerically: "2" < "2_human" < "10".
inline bool natural_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
        const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
        if (da && db) {
            std::size_t i2 = i, j2 = j;
            while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
            while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
            std::string na = a.substr(i, i2 - i), nb = b.substr(j, j2 - j);
            na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
            nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
            if (na.size() != nb.size()) return na.size() < nb.size();
            if (na != nb) return na < nb;
            i = i2;
            j = j2;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    return (a.size() - i) < (b.size() - j) || (i == a.size() && j == b.size() && a < b);
}

inline std::string frame_filename(int index) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << index << ".png";
    return os.str();
}

// ---------------------------------------------------------------------------
// Image I/O

inline Image to_image(const cv::Mat& bgr8) {
    cv::Mat rgb;
    cv::cvtColor(bgr8, rgb, cv::COLOR_BGR2RGB);
    Image img{rgb.rows, rgb.cols, std::vector<float>(static_cast<std::size_t>(3) * rgb.rows * rgb.cols)};
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < rgb.cols; ++x)
            for (int c = 0; c < 3; ++c)
                img.pixels[(static_cast<std::size_t>(c) * rgb.rows + y) * rgb.cols + x] = row[x][c] / 255.0f;
    }
    return img;
}

inline Image read_image(const fs::path& path, Resolution res) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
    require(!m.empty(), ErrorKind::Io, "unreadable image " + path.string());
    if (m.rows != res.height || m.cols != res.width) {
        cv::Mat r;
        cv::resize(m, r, cv::Size(res.width, res.height), 0, 0, cv::INTER_LINEAR);
        m = r;
    }
    return to_image(m);
}

/// Nearest-neighbor resize, then binarize at half intensity.
inline BinaryMask read_mask(const fs::path& path, std::optional<Resolution> res = std::nullopt) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    require(!m.empty(), ErrorKind::Io, "unreadable mask " + path.string());
    if (res && (m.rows != res->height || m.cols != res->width)) {
        cv::Mat r;
        cv::resize(m, r, cv::Size(res->width, res->height), 0, 0, cv::INTER_NEAREST);
        m = r;
    }
    BinaryMask mask(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) mask.at(y, x) = row[x] / 255.0 > 0.5 ? 1 : 0;
    }
    return mask;
}

inline void write_mask(const fs::path& path, const BinaryMask& mask) {
    cv::Mat m(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
    fs::create_directories(path.parent_path());
    require(cv::imwrite(path.string(), m), ErrorKind::Io, "cannot write " + path.string());
}

/// Writes an RGB image given as 3×H×W values in [0,1].
inline void write_image(const fs::path& path, const Image& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                m.at<cv::Vec3b>(y, x)[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    fs::create_directories(path.parent_path());
    require(cv::imwrite(path.string(), m), ErrorKind::Io, "cannot write " + path.string());
}

namespace detail {
inline std::vector<std::pair<int, fs::path>> numbered_pngs(const fs::path& dir) {
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        const std::string stem = e.path().stem().string();
        require(!stem.empty() && std::all_of(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }),
                ErrorKind::Data, "non-numeric frame name " + e.path().string());
        files.emplace_back(std::stoi(stem), e.path());
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 1; i < files.size(); ++i)
        require(files[i].first > files[i - 1].first, ErrorKind::Data,
                "non-monotonic frame numbering in " + dir.string() + ": " + files[i - 1].second.filename().string() +
                    " and " + files[i].second.filename().string() + " share index " + std::to_string(files[i].first));
    return files;
}

inline std::vector<fs::path> video_dirs(const fs::path& root) {
    require(fs::is_directory(root), ErrorKind::Io, "dataset root is not a directory: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end(),
              [](const fs::path& a, const fs::path& b) { return natural_less(a.filename().string(), b.filename().string()); });
    return dirs;
}
}  // namespace detail

/// Loads `<root>/<video_id>/frames/NNNNNN.png` with same-named masks under
/// `masks/`. With `require_masks` false, frames without masks are accepted.
inline Dataset ingest_dataset(const fs::path& root, Resolution res, bool require_masks = true) {
    Dataset ds;
    ds.resolution = res;
    for (const auto& dir : detail::video_dirs(root)) {
        const fs::path frames_dir = dir / "frames";
        if (!fs::is_directory(frames_dir)) continue;
        Video video{dir.filename().string(), {}};
        for (const auto& [index, path] : detail::numbered_pngs(frames_dir)) {
            Frame f;
            f.video_id = video.id;
            f.frame_index = index;
            f.image = read_image(path, res);
            const fs::path mask_path = dir / "masks" / path.filename();
            if (fs::exists(mask_path)) {
                f.mask = read_mask(mask_path, res);
            } else {
                require(!require_masks, ErrorKind::Data, "missing mask for frame " + path.string());
            }
            video.frames.push_back(std::move(f));
        }
        if (video.frames.empty()) ds.warnings.push_back("video " + video.id + " has no frames");
        ds.videos.push_back(std::move(video));
    }
    return ds;
}

/// Reads a mask-only tree (`<root>/<video_id>/masks/NNNNNN.png`), e.g. predictions.
inline std::map<FrameRef, BinaryMask> read_mask_tree(const fs::path& root, std::optional<Resolution> res = std::nullopt) {
    std::map<FrameRef, BinaryMask> out;
    for (const auto& dir : detail::video_dirs(root)) {
        const fs::path masks_dir = dir / "masks";
        if (!fs::is_directory(masks_dir)) continue;
        for (const auto& [index, path] : detail::numbered_pngs(masks_dir))
            out.emplace(FrameRef{dir.filename().string(), index}, read_mask(path, res));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Clips

/// T frames of one video around `position`; neighbors beyond the video ends
/// replicate the first/last frame.
struct Clip {
    std::vector<const Frame*> frames;
    int center_index = 0;

    const Frame& center() const { return *frames[static_cast<std::size_t>(center_index)]; }
};

inline std::vector<int> clip_positions(int n_frames, int position, int length, int center) {
    std::vector<int> out(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) out[t] = std::clamp(position - center + t, 0, n_frames - 1);
    return out;
}

inline Clip make_clip(const Video& video, int position, int length, int center) {
    require(length >= 1 && center >= 0 && center < length, ErrorKind::InvalidArgument,
            "clip center " + std::to_string(center) + " invalid for length " + std::to_string(length));
    require(!video.frames.empty(), ErrorKind::Data, "empty video " + video.id);
    Clip clip;
    clip.center_index = center;
    for (int p : clip_positions(static_cast<int>(video.frames.size()), position, length, center))
        clip.frames.push_back(&video.frames[static_cast<std::size_t>(p)]);
    return clip;
}

/// One clip per frame of the dataset, in dataset order. Empty videos are skipped.
inline std::vector<Clip> make_clips(const Dataset& ds, int length, int center, std::vector<std::string>* warnings = nullptr) {
    require(length >= 1 && center >= 0 && center < length, ErrorKind::InvalidArgument, "invalid clip geometry");
    std::vector<Clip> clips;
    for (const auto& v : ds.videos) {
        if (v.frames.empty()) {
            if (warnings) warnings->push_back("skipping empty video " + v.id);
            continue;
        }
        for (int p = 0; p < static_cast<int>(v.frames.size()); ++p) clips.push_back(make_clip(v, p, length, center));
    }
    return clips;
}

/// Clip centered on a referenced frame.
inline Clip clip_for(const Dataset& ds, const FrameRef& ref, int length, int center) {
    const auto& v = ds.video(ref.video_id);
    for (int p = 0; p < static_cast<int>(v.frames.size()); ++p)
        if (v.frames[p].frame_index == ref.frame_index) return make_clip(v, p, length, center);
    fail(ErrorKind::Data, "unknown frame " + ref.video_id + "/" + std::to_string(ref.frame_index));
}

// ---------------------------------------------------------------------------
// Splits

/// Per-video frame listing; enough to build splits without pixel data.
struct VideoInfo {
    std::string id;
    std::vector<int> frame_indices;
};

inline std::vector<VideoInfo> video_index(const Dataset& ds) {
    std::vector<VideoInfo> out;
    for (const auto& v : ds.videos) {
        VideoInfo info{v.id, {}};
        for (const auto& f : v.frames) info.frame_indices.push_back(f.frame_index);
        out.push_back(std::move(info));
    }
    return out;
}

struct DatasetSplit {
    std::string name;  // "kfold", "fewshot", ...
    int fold = 0;      // 1-based for k-fold, 0 otherwise
    int fold_count = 0;
    double weight = 1.0;  // test-frame share of the whole dataset
    std::vector<std::string> test_videos;
    std::vector<FrameRef> train;
    std::vector<FrameRef> test;
    std::vector<std::string> warnings;
};

/// Sequential k-fold over videos in natural id order. The first n mod k groups
/// receive one extra video.
inline std::vector<DatasetSplit> kfold_split(std::vector<VideoInfo> videos, int k) {
    require(k >= 2, ErrorKind::InvalidArgument, "k-fold needs k >= 2");
    require(static_cast<std::size_t>(k) <= videos.size(), ErrorKind::InvalidArgument,
            "k = " + std::to_string(k) + " exceeds the number of videos (" + std::to_string(videos.size()) + ")");
    std::stable_sort(videos.begin(), videos.end(), [](const VideoInfo& a, const VideoInfo& b) { return natural_less(a.id, b.id); });
    const int n = static_cast<int>(videos.size());
    std::vector<int> group(static_cast<std::size_t>(n));
    for (int g = 0, v = 0; g < k; ++g) {
        const int size = n / k + (g < n % k ? 1 : 0);
        for (int i = 0; i < size; ++i) group[v++] = g;
    }
    std::size_t total = 0;
    for (const auto& v : videos) total += v.frame_indices.size();
    require(total > 0, ErrorKind::Data, "k-fold over a dataset with no frames");

    std::vector<DatasetSplit> folds(static_cast<std::size_t>(k));
    for (int g = 0; g < k; ++g) {
        auto& s = folds[g];
        s.name = "kfold";
        s.fold = g + 1;
        s.fold_count = k;
        for (int v = 0; v < n; ++v) {
            auto& dst = group[v] == g ? s.test : s.train;
            if (group[v] == g) s.test_videos.push_back(videos[v].id);
            for (int idx : videos[v].frame_indices) dst.push_back({videos[v].id, idx});
        }
        s.weight = static_cast<double>(s.test.size()) / static_cast<double>(total);
    }
    return folds;
}

inline std::vector<DatasetSplit> kfold_split(const Dataset& ds, int k) { return kfold_split(video_index(ds), k); }

/// Positions round(i (N-1) / (cap-1)), i = 0..cap-1, deduplicated.
inline std::vector<int> uniform_stride_positions(int n, int cap) {
    std::vector<int> pos;
    if (cap == 1) return {0};
    for (int i = 0; i < cap; ++i) {
        const long long num = static_cast<long long>(i) * (n - 1);
        const long long den = cap - 1;
        const int p = static_cast<int>((2 * num + den) / (2 * den));  // round half up
        if (pos.empty() || pos.back() != p) pos.push_back(p);
    }
    return pos;
}

/// Caps training frames per video; the remainder of each video is test data.
inline DatasetSplit fewshot_split(const std::vector<VideoInfo>& videos, int cap) {
    require(cap >= 1, ErrorKind::InvalidArgument, "few-shot cap must be >= 1");
    DatasetSplit s;
    s.name = "fewshot";
    for (const auto& v : videos) {
        const int n = static_cast<int>(v.frame_indices.size());
        if (n <= cap) {
            s.warnings.push_back("video " + v.id + " has " + std::to_string(n) + " frames (<= cap " + std::to_string(cap) +
                                 "); all frames go to train");
            for (int idx : v.frame_indices) s.train.push_back({v.id, idx});
            continue;
        }
        std::vector<char> chosen(static_cast<std::size_t>(n), 0);
        for (int p : uniform_stride_positions(n, cap)) chosen[p] = 1;
        for (int p = 0; p < n; ++p) (chosen[p] ? s.train : s.test).push_back({v.id, v.frame_indices[p]});
    }
    std::size_t total = s.train.size() + s.test.size();
    s.weight = total ? static_cast<double>(s.test.size()) / static_cast<double>(total) : 0.0;
    return s;
}

inline DatasetSplit fewshot_split(const Dataset& ds, int cap) { return fewshot_split(video_index(ds), cap); }

/// Every frame in train; no test part.
inline DatasetSplit full_split(const Dataset& ds) {
    DatasetSplit s;
    s.name = "all";
    for (const auto& v : ds.videos)
        for (const auto& f : v.frames) s.train.push_back({v.id, f.frame_index});
    return s;
}

// ---------------------------------------------------------------------------
// Split files: "# split=<name> fold=<i>/<k> part=<train|test> weight=<w>"
// followed by one "video_id<TAB>frame_index" line per frame.

struct SplitFile {
    std::string name;
    int fold = 0;
    int fold_count = 0;
    std::string part;
    double weight = 1.0;
    std::vector<FrameRef> frames;
};

inline void write_split_file(const fs::path& path, const DatasetSplit& split, const std::string& part) {
    require(part == "train" || part == "test", ErrorKind::InvalidArgument, "split part must be train or test");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write split file " + path.string());
    out << "# split=" << split.name << " fold=" << split.fold << '/' << split.fold_count << " part=" << part
        << " weight=" << std::setprecision(17) << split.weight << '\n';
    for (const auto& r : part == "train" ? split.train : split.test) out << r.video_id << '\t' << r.frame_index << '\n';
}

inline SplitFile read_split_file(const fs::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open split file " + path.string());
    SplitFile sf;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.rfind("# ", 0) == 0, ErrorKind::Data,
            "split file " + path.string() + " lacks a header line");
    std::istringstream header(line.substr(2));
    std::string field;
    while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
        if (key == "split") sf.name = val;
        else if (key == "part") sf.part = val;
        else if (key == "weight") sf.weight = std::stod(val);
        else if (key == "fold") {
            const auto slash = val.find('/');
            sf.fold = std::stoi(val.substr(0, slash));
            if (slash != std::string::npos) sf.fold_count = std::stoi(val.substr(slash + 1));
        }
    }
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        require(tab != std::string::npos, ErrorKind::Data,
                path.string() + ":" + std::to_string(lineno) + ": expected video_id<TAB>frame_index");
        sf.frames.push_back({line.substr(0, tab), std::stoi(line.substr(tab + 1))});
    }
    return sf;
}

}  // namespace jvlgs
