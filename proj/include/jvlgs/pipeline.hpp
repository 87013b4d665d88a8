#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jvlgs/data.hpp"
#include "jvlgs/eval.hpp"
#include "jvlgs/model.hpp"

namespace jvlgs {

enum class EncoderKind { Reference, External };

/// Everything a run needs. Defaults follow the published training setup
/// (352×352, batch 6, lr 1e-4 dropping to 1e-5 for the final 20% of epochs).
struct RunConfig {
    Resolution resolution{352, 352};
    int batch_size = 6;
    int epochs = 60;
    long max_steps = 0;  // 0 = run all epochs
    double lr_initial = 1e-4;
    double lr_final = 1e-5;
    double lr_decay_start_fraction = 0.8;
    int clip_length = 3;
    int center_index = 1;
    std::vector<std::string> prompts = default_prompts();
    std::string vocabulary;  // path; empty = built-in
    std::uint64_t seed = 0;
    bool vlf = true;
    bool postproc = true;
    int kernel = 9;
    double threshold = 0.5;
    EncoderKind encoder = EncoderKind::Reference;
    std::string external_weights;  // checkpoint supplying encoder.vision.* when encoder = external
    bool freeze_encoder = false;
    double validation_fraction = 0.1;
    int vision_channels = 32;
    int text_channels = 64;
    int decoder_width = 64;
    int gsa_groups = 8;
    int token_length = 16;

    void validate() const {
        require(resolution.height > 0 && resolution.width > 0 && resolution.height % 32 == 0 && resolution.width % 32 == 0,
                ErrorKind::InvalidArgument, "resolution must be positive and divisible by 32");
        require(batch_size >= 1 && epochs >= 1, ErrorKind::InvalidArgument, "batch_size and epochs must be >= 1");
        require(lr_final <= lr_initial, ErrorKind::InvalidArgument, "lr_final must not exceed lr_initial");
        require(lr_decay_start_fraction > 0.0 && lr_decay_start_fraction < 1.0, ErrorKind::InvalidArgument,
                "lr_decay_start_fraction must lie in (0,1)");
        require(clip_length >= 1 && center_index >= 0 && center_index < clip_length, ErrorKind::InvalidArgument,
                "center_index must lie in [0, clip_length)");
        require(kernel >= 1 && kernel % 2 == 1, ErrorKind::InvalidArgument, "kernel must be odd and >= 1");
        require(threshold > 0.0 && threshold < 1.0, ErrorKind::InvalidArgument, "threshold must lie in (0,1)");
        require(validation_fraction >= 0.0 && validation_fraction < 1.0, ErrorKind::InvalidArgument,
                "validation_fraction must lie in [0,1)");
        require(!prompts.empty(), ErrorKind::InvalidArgument, "at least one prompt is required");
    }

    /// Step schedule: lr_initial, then lr_final from the first epoch of the
    /// final (1 - fraction) share. `epoch` is 1-based.
    double lr_at_epoch(int epoch) const {
        const int first_decayed = static_cast<int>(std::ceil(lr_decay_start_fraction * epochs - 1e-9));
        return (epoch - 1) >= first_decayed ? lr_final : lr_initial;
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.resolution = resolution;
        m.vision_channels = vision_channels;
        m.text_channels = text_channels;
        m.token_length = token_length;
        m.decoder_width = decoder_width;
        m.gsa_groups = gsa_groups;
        m.use_vlf = vlf;
        m.clip_length = clip_length;
        m.center_index = center_index;
        m.seed = seed;
        m.prompts = prompts;
        if (!vocabulary.empty()) m.vocabulary = Vocabulary::from_file(vocabulary).tokens();
        return m;
    }
};

namespace detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    fail(ErrorKind::InvalidArgument, "config key " + key + ": expected a boolean, got \"" + v + "\"");
}

inline Resolution parse_resolution(const std::string& v) {
    const auto x = v.find('x');
    try {
        if (x == std::string::npos) {
            const int n = std::stoi(v);
            return {n, n};
        }
        return {std::stoi(v.substr(0, x)), std::stoi(v.substr(x + 1))};
    } catch (const std::exception&) {
        fail(ErrorKind::InvalidArgument, "resolution must look like 352x352, got \"" + v + "\"");
    }
}

inline std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream is(v);
    for (std::string item; std::getline(is, item, ';');)
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}
}  // namespace detail

/// Keys accepted by set_config_value, in declaration order.
inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "resolution", "batch_size", "epochs", "max_steps", "lr_initial", "lr_final", "lr_decay_start_fraction",
        "clip_length", "center_index", "prompts", "vocabulary", "seed", "vlf", "postproc", "kernel", "threshold",
        "encoder", "external_weights", "freeze_encoder", "validation_fraction", "vision_channels", "text_channels",
        "decoder_width", "gsa_groups", "token_length"};
    return keys;
}

/// Applies one `key = value` setting; unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = detail::trim(raw);
    try {
        if (key == "resolution") c.resolution = detail::parse_resolution(v);
        else if (key == "batch_size") c.batch_size = std::stoi(v);
        else if (key == "epochs") c.epochs = std::stoi(v);
        else if (key == "max_steps") c.max_steps = std::stol(v);
        else if (key == "lr_initial") c.lr_initial = std::stod(v);
        else if (key == "lr_final") c.lr_final = std::stod(v);
        else if (key == "lr_decay_start_fraction") c.lr_decay_start_fraction = std::stod(v);
        else if (key == "clip_length") c.clip_length = std::stoi(v);
        else if (key == "center_index") c.center_index = std::stoi(v);
        else if (key == "prompts") c.prompts = detail::parse_list(v);
        else if (key == "vocabulary") c.vocabulary = v;
        else if (key == "seed") c.seed = std::stoull(v);
        else if (key == "vlf") c.vlf = detail::parse_bool(key, v);
        else if (key == "postproc") c.postproc = detail::parse_bool(key, v);
        else if (key == "kernel") c.kernel = std::stoi(v);
        else if (key == "threshold") c.threshold = std::stod(v);
        else if (key == "encoder") {
            if (v == "reference") c.encoder = EncoderKind::Reference;
            else if (v == "external") c.encoder = EncoderKind::External;
            else fail(ErrorKind::InvalidArgument, "encoder must be reference or external");
        } else if (key == "external_weights") c.external_weights = v;
        else if (key == "freeze_encoder") c.freeze_encoder = detail::parse_bool(key, v);
        else if (key == "validation_fraction") c.validation_fraction = std::stod(v);
        else if (key == "vision_channels") c.vision_channels = std::stoi(v);
        else if (key == "text_channels") c.text_channels = std::stoi(v);
        else if (key == "decoder_width") c.decoder_width = std::stoi(v);
        else if (key == "gsa_groups") c.gsa_groups = std::stoi(v);
        else if (key == "token_length") c.token_length = std::stoi(v);
        else fail(ErrorKind::InvalidArgument, "unknown config key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
        fail(ErrorKind::InvalidArgument, "config key " + key + ": cannot parse \"" + v + "\"");
    } catch (const std::out_of_range&) {
        fail(ErrorKind::InvalidArgument, "config key " + key + ": value out of range");
    }
}

/// Plain-text `key = value` lines; `#` starts a comment.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key = value");
        set_config_value(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

inline RunConfig load_config(const fs::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
    return parse_config(in, std::move(base));
}

/// Resolves relative output paths under $JVLGS_OUTPUT_ROOT when it is set.
inline fs::path output_path(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("JVLGS_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

/// Builds the model a run config describes, wiring the external-encoder adapter.
inline Model build_model(const RunConfig& cfg) {
    cfg.validate();
    Model model(cfg.model_config());
    if (cfg.encoder == EncoderKind::External) {
        require(!cfg.external_weights.empty(), ErrorKind::InvalidArgument,
                "encoder = external requires external_weights (a checkpoint with encoder.vision.* parameters)");
        load_params(read_checkpoint(cfg.external_weights), model.params(), model.vision().prefix());
    }
    if (cfg.freeze_encoder) model.params().freeze(model.vision().prefix());
    return model;
}

// ---------------------------------------------------------------------------
// Training

struct TrainLogEntry {
    int epoch = 0;
    long step = 0;
    double lr = 0.0;
    double total = 0.0, wbce = 0.0, wiou = 0.0;
};

inline std::string format_log(const TrainLogEntry& e) {
    std::ostringstream os;
    os << "epoch=" << e.epoch << " step=" << e.step << " lr=" << std::scientific << std::setprecision(3) << e.lr
       << std::defaultfloat << std::setprecision(9) << " total=" << e.total << " wbce=" << e.wbce << " wiou=" << e.wiou;
    return os.str();
}

struct TrainResult {
    std::vector<TrainLogEntry> log;
    std::vector<double> epoch_loss;  // mean total loss per epoch
    int best_epoch = 0;
    double best_validation = std::numeric_limits<double>::infinity();
    long steps = 0;
};

struct TrainOptions {
    fs::path checkpoint_dir;  // empty = keep nothing on disk
    std::ostream* log = nullptr;
};

inline Tensor mask_tensor(const BinaryMask& m) {
    Tensor t({1, m.height, m.width});
    for (std::size_t i = 0; i < m.grid.size(); ++i) t[i] = m.grid[i];
    return t;
}

namespace detail {
inline LossBreakdown loss_parts(const Var& logits, const Tensor& gt) {
    return structure_loss(probabilities(logits.value()), gt);
}

/// Splits the training frames into (train, validation) deterministically.
inline std::pair<std::vector<FrameRef>, std::vector<FrameRef>> hold_out(std::vector<FrameRef> frames, double fraction,
                                                                          std::uint64_t seed) {
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(frames.size())));
    if (n_val == 0 || n_val >= frames.size()) return {std::move(frames), {}};
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(frames.begin(), frames.end(), rng);
    std::vector<FrameRef> val(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n_val));
    frames.erase(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(frames.begin(), frames.end());
    std::sort(val.begin(), val.end());
    return {std::move(frames), std::move(val)};
}
}  // namespace detail

/// Mini-batch Adam on the structure loss of center-frame predictions.
inline TrainResult train(Model& model, const RunConfig& cfg, const Dataset& ds, const DatasetSplit& split,
                         const TrainOptions& opts = {}) {
    cfg.validate();
    require(ds.resolution == model.config().resolution, ErrorKind::InvalidArgument, "dataset resolution differs from the model's");
    require(!split.train.empty(), ErrorKind::InvalidArgument, "training split is empty");
    for (const auto& ref : split.train)
        require(ds.frame(ref).mask.has_value(), ErrorKind::Data,
                "training frame " + ref.video_id + "/" + std::to_string(ref.frame_index) + " has no mask");

    auto [train_refs, val_refs] = detail::hold_out(split.train, cfg.validation_fraction, cfg.seed);
    Adam optim;
    TrainResult result;
    std::mt19937_64 rng(cfg.seed);
    if (!opts.checkpoint_dir.empty()) fs::create_directories(opts.checkpoint_dir);

    auto clip_of = [&](const FrameRef& r) { return clip_for(ds, r, cfg.clip_length, cfg.center_index); };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        std::vector<FrameRef> order = train_refs;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        std::size_t epoch_count = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            model.params().zero_grad();
            const Var text = model.encode_text();
            std::vector<Var> losses;
            TrainLogEntry entry{epoch, result.steps + 1, lr, 0, 0, 0};
            for (std::size_t i = b; i < e; ++i) {
                const Clip clip = clip_of(order[i]);
                const Tensor gt = mask_tensor(*clip.center().mask);
                const Var logits = model.forward(clip, &text);
                const Var loss = structure_loss_from_logits(logits, gt);
                const auto parts = detail::loss_parts(logits, gt);
                if (!std::isfinite(loss.item()) || !logits.value().all_finite()) {
                    std::ostringstream os;
                    os << "non-finite loss at epoch " << epoch << " step " << entry.step << " frame " << order[i].video_id << '/'
                       << order[i].frame_index << "; parameter max-abs:";
                    for (const auto& [name, p] : model.params().all()) {
                        double m = 0.0;
                        for (double v : p.value().values()) m = std::max(m, std::abs(v));
                        os << ' ' << name << '=' << m;
                    }
                    fail(ErrorKind::Numeric, os.str());
                }
                entry.total += parts.total;
                entry.wbce += parts.wbce;
                entry.wiou += parts.wiou;
                losses.push_back(loss);
            }
            const double inv = 1.0 / static_cast<double>(losses.size());
            ag::weighted_sum(losses, std::vector<double>(losses.size(), inv)).backward();
            optim.step(model.params(), lr);
            entry.total *= inv;
            entry.wbce *= inv;
            entry.wiou *= inv;
            ++result.steps;
            epoch_total += entry.total * static_cast<double>(losses.size());
            epoch_count += losses.size();
            if (opts.log) *opts.log << format_log(entry) << '\n';
            result.log.push_back(entry);
        }
        if (epoch_count == 0) break;
        result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_count));

        double val = result.epoch_loss.back();
        if (!val_refs.empty()) {
            val = 0.0;
            const Var text = model.encode_text();
            for (const auto& r : val_refs) {
                const Clip clip = clip_of(r);
                val += detail::loss_parts(model.forward(clip, &text), mask_tensor(*clip.center().mask)).total;
            }
            val /= static_cast<double>(val_refs.size());
        }
        const bool best = val <= result.best_validation;
        if (best) {
            result.best_validation = val;
            result.best_epoch = epoch;
        }
        if (!opts.checkpoint_dir.empty()) {
            nlohmann::json meta{{"epoch", epoch}, {"validation_loss", val}};
            model.save((opts.checkpoint_dir / "last.ckpt").string(), meta);
            if (best) model.save((opts.checkpoint_dir / "best.ckpt").string(), meta);
        }
        if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Inference

using MaskSet = std::map<FrameRef, BinaryMask>;

/// Thresholded predictions before post-processing.
inline MaskSet predict_masks(const Model& model, const Dataset& ds, const std::vector<FrameRef>& refs, double threshold = 0.5) {
    require(ds.resolution == model.config().resolution, ErrorKind::InvalidArgument,
            "resolution mismatch between checkpoint (" + std::to_string(model.config().resolution.height) + "x" +
                std::to_string(model.config().resolution.width) + ") and dataset (" + std::to_string(ds.resolution.height) +
                "x" + std::to_string(ds.resolution.width) + ")");
    MaskSet out;
    const Var text = model.encode_text();
    for (const auto& r : refs) {
        const Clip clip = clip_for(ds, r, model.config().clip_length, model.config().center_index);
        out.emplace(r, binarize(probabilities(model.forward(clip, &text).value()), threshold));
    }
    return out;
}

inline MaskSet postprocess(const MaskSet& raw, int kernel) {
    MaskSet out;
    for (const auto& [r, m] : raw) out.emplace(r, opening(m, kernel));
    return out;
}

inline std::vector<FrameRef> all_frames(const Dataset& ds) { return full_split(ds).train; }

/// Full inference: predict → binarize → optional opening → optional PNG output
/// under `<out>/<video_id>/masks/`.
inline MaskSet infer(const Model& model, const Dataset& ds, const RunConfig& cfg, const std::vector<FrameRef>& refs,
                     const fs::path& out_dir = {}) {
    require(cfg.resolution == model.config().resolution, ErrorKind::InvalidArgument,
            "resolution mismatch between checkpoint and config");
    MaskSet masks = predict_masks(model, ds, refs, cfg.threshold);
    if (cfg.postproc) masks = postprocess(masks, cfg.kernel);
    if (!out_dir.empty())
        for (const auto& [r, m] : masks) write_mask(out_dir / r.video_id / "masks" / frame_filename(r.frame_index), m);
    return masks;
}

// ---------------------------------------------------------------------------
// Evaluation glue

inline MaskSet ground_truth(const Dataset& ds, const std::vector<FrameRef>& refs) {
    MaskSet out;
    for (const auto& r : refs) {
        const auto& f = ds.frame(r);
        require(f.mask.has_value(), ErrorKind::Data, "frame " + r.video_id + "/" + std::to_string(r.frame_index) + " has no mask");
        out.emplace(r, *f.mask);
    }
    return out;
}

/// Scores every ground-truth frame; predictions must cover exactly the same frames.
inline std::vector<FrameScore> score_frames(const MaskSet& pred, const MaskSet& gt) {
    std::vector<std::string> missing, extra;
    for (const auto& [r, _] : gt)
        if (!pred.contains(r)) missing.push_back(r.video_id + "/" + std::to_string(r.frame_index));
    for (const auto& [r, _] : pred)
        if (!gt.contains(r)) extra.push_back(r.video_id + "/" + std::to_string(r.frame_index));
    if (!missing.empty() || !extra.empty()) {
        std::ostringstream os;
        os << "prediction/ground-truth frame sets differ;";
        if (!missing.empty()) {
            os << " missing predictions:";
            for (const auto& m : missing) os << ' ' << m;
        }
        if (!extra.empty()) {
            os << " predictions without ground truth:";
            for (const auto& m : extra) os << ' ' << m;
        }
        fail(ErrorKind::Data, os.str());
    }
    std::vector<FrameScore> out;
    for (const auto& [r, g] : gt) out.push_back(score_frame(r, pred.at(r), g));
    return out;
}

inline EvalReport evaluate(const MaskSet& pred, const MaskSet& gt, Protocol protocol,
                           const std::vector<FoldAssignment>* folds = nullptr) {
    return aggregate(score_frames(pred, gt), protocol, folds);
}

// ---------------------------------------------------------------------------
// Kernel sweep

struct SweepRow {
    int kernel = 1;
    Scores scores;
};

/// Opening-kernel sweep on fixed raw predictions (unified protocol).
/// Duplicate kernels are dropped, first occurrence kept.
inline std::vector<SweepRow> sweep_kernel(const MaskSet& raw, const MaskSet& gt, const std::vector<int>& kernels) {
    std::vector<SweepRow> rows;
    std::set<int> seen;
    for (int k : kernels) {
        require(k >= 1 && k % 2 == 1, ErrorKind::InvalidArgument, "sweep kernels must be odd, got " + std::to_string(k));
        if (!seen.insert(k).second) continue;
        rows.push_back({k, evaluate(postprocess(raw, k), gt, Protocol::Unified).overall});
    }
    return rows;
}

inline std::vector<SweepRow> sweep_kernel(const Model& model, const Dataset& ds, const std::vector<FrameRef>& refs,
                                          const std::vector<int>& kernels, double threshold = 0.5) {
    return sweep_kernel(predict_masks(model, ds, refs, threshold), ground_truth(ds, refs), kernels);
}

}  // namespace jvlgs
