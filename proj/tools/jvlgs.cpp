// jvlgs command-line front end: train / infer / eval / split / synth / sweep-kernel.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "jvlgs/jvlgs.hpp"

namespace {

using namespace jvlgs;

std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}

/// Run-configuration flags shared by train / infer / sweep-kernel. Values are
/// applied after the config file so the command line wins.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
        for (const auto& key : config_keys()) cmd->add_option(flag_name(key), values[key], "config " + key);
        cmd->add_option("--set", sets, "extra key=value override (repeatable)");
    }

    RunConfig resolve(const CLI::App* cmd) const {
        RunConfig cfg = config_file.empty() ? RunConfig{} : load_config(config_file);
        for (const auto& key : config_keys())
            if (cmd->count(flag_name(key)) > 0) set_config_value(cfg, key, values.at(key));
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            require(eq != std::string::npos, ErrorKind::InvalidArgument, "--set expects key=value, got " + kv);
            set_config_value(cfg, detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
        }
        cfg.validate();
        return cfg;
    }
};

std::vector<FrameRef> frames_from(const Dataset& ds, const std::string& split_file) {
    if (split_file.empty()) return all_frames(ds);
    auto sf = read_split_file(split_file);
    for (const auto& r : sf.frames) ds.frame(r);  // validates membership
    return sf.frames;
}

std::vector<VideoInfo> scan_videos(const fs::path& root) {
    std::vector<VideoInfo> out;
    for (const auto& dir : detail::video_dirs(root)) {
        if (!fs::is_directory(dir / "frames")) continue;
        VideoInfo info{dir.filename().string(), {}};
        for (const auto& [index, _] : detail::numbered_pngs(dir / "frames")) info.frame_indices.push_back(index);
        out.push_back(std::move(info));
    }
    require(!out.empty(), ErrorKind::Data, "no videos under " + root.string());
    return out;
}

void dump_correlations(const Model& model, const Dataset& ds, const std::vector<FrameRef>& refs, const fs::path& dir) {
    for (const auto& r : refs) {
        const Clip clip = clip_for(ds, r, model.config().clip_length, model.config().center_index);
        const auto volumes = model.correlations(clip);
        for (int s = 0; s < 3; ++s)
            for (int pair = 0; pair < 2; ++pair) {
                // Mosaic: tile (x,y) holds the normalized (u,v) slice for that position.
                const auto& cv = volumes[s][pair];
                const int h = cv.height, w = cv.width;
                cv::Mat img(h * h, w * w, CV_8UC1);
                for (int x = 0; x < h; ++x)
                    for (int y = 0; y < w; ++y) {
                        double mx = 0.0;
                        for (int u = 0; u < h; ++u)
                            for (int v = 0; v < w; ++v) mx = std::max(mx, cv.at(x, y, u, v));
                        for (int u = 0; u < h; ++u)
                            for (int v = 0; v < w; ++v)
                                img.at<unsigned char>(x * h + u, y * w + v) =
                                    static_cast<unsigned char>(mx > 0 ? std::lround(255.0 * cv.at(x, y, u, v) / mx) : 0);
                    }
                const fs::path out = dir / r.video_id /
                                     (frame_filename(r.frame_index).substr(0, 6) + "_s" + std::to_string(s + 2) +
                                      (pair == 0 ? "_prev" : "_next") + ".png");
                fs::create_directories(out.parent_path());
                require(cv::imwrite(out.string(), img), ErrorKind::Io, "cannot write " + out.string());
            }
    }
}

std::vector<FoldAssignment> folds_from(const std::vector<std::string>& files) {
    std::vector<FoldAssignment> folds;
    for (const auto& f : files) {
        auto sf = read_split_file(f);
        require(sf.part == "test", ErrorKind::InvalidArgument, f + " is not a test-part split file");
        folds.push_back({sf.fold, sf.weight, std::move(sf.frames)});
    }
    return folds;
}

int run(int argc, char** argv) {
    CLI::App app{"Gas-leak video segmentation: training, inference and evaluation"};
    app.require_subcommand(1);

    // synth
    SynthSpec spec;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic plume dataset");
    synth->add_option("--out", synth_out, "output dataset root")->required();
    synth->add_option("--seed", spec.seed);
    synth->add_option("--videos", spec.n_videos);
    synth->add_option("--frames", spec.frames_per_video);
    synth->add_option("--leak-probability", spec.leak_probability);
    synth->add_option("--leak-videos", spec.leak_videos, "exactly this many leading videos leak");
    synth->add_option("--height", spec.height);
    synth->add_option("--width", spec.width);
    synth->add_option("--drift", spec.drift_step);
    synth->add_option("--growth", spec.growth_rate);
    synth->add_option("--specks", spec.speck_count_max, "max transient specks per frame");
    synth->add_flag("--distractors", spec.distractors, "specks in leak videos too");

    // split
    std::string split_data, split_out, split_mode = "kfold";
    int split_k = 5, split_cap = 10;
    auto* split = app.add_subcommand("split", "write k-fold or few-shot split files");
    split->add_option("--data", split_data, "dataset root")->required()->check(CLI::ExistingDirectory);
    split->add_option("--out", split_out, "directory for split files")->required();
    split->add_option("--mode", split_mode)->check(CLI::IsMember({"kfold", "fewshot"}));
    split->add_option("--k", split_k, "fold count");
    split->add_option("--cap", split_cap, "few-shot training frames per video");

    // train
    ConfigFlags train_flags;
    std::string train_data, train_split, train_out = "run";
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--data", train_data, "dataset root")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--split", train_split, "train-part split file (default: every frame)");
    train_cmd->add_option("--out", train_out, "checkpoint directory");
    train_flags.attach(train_cmd);

    // infer
    ConfigFlags infer_flags;
    std::string infer_ckpt, infer_data, infer_split, infer_out, infer_debug;
    auto* infer_cmd = app.add_subcommand("infer", "predict masks");
    infer_cmd->add_option("--checkpoint", infer_ckpt)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--data", infer_data, "dataset root")->required()->check(CLI::ExistingDirectory);
    infer_cmd->add_option("--split", infer_split, "restrict to the frames of a split file");
    infer_cmd->add_option("--out", infer_out, "mask output root")->required();
    infer_cmd->add_option("--debug-correlation", infer_debug, "dump normalized correlation slices here");
    infer_flags.attach(infer_cmd);

    // eval
    std::string eval_pred, eval_gt, eval_report, eval_split;
    std::vector<std::string> eval_protocols{"unified"}, eval_folds;
    std::vector<std::string> fold_scores;
    auto* eval_cmd = app.add_subcommand("eval", "score predicted masks");
    eval_cmd->add_option("--pred", eval_pred, "predicted mask root")->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--gt", eval_gt, "ground-truth dataset root")->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--protocol", eval_protocols, "unified, per_video_confusion, fold_weighted (repeatable)");
    eval_cmd->add_option("--split", eval_split, "score only the frames of this split file")->check(CLI::ExistingFile);
    eval_cmd->add_option("--folds", eval_folds, "test-part split files for fold aggregation");
    eval_cmd->add_option("--fold-score", fold_scores, "JF:weight of a precomputed fold (repeatable)");
    eval_cmd->add_option("--report", eval_report, "report stem (<stem>_<protocol>.txt/.json)");

    // sweep-kernel
    ConfigFlags sweep_flags;
    std::string sweep_ckpt, sweep_data, sweep_split;
    std::vector<int> kernels{1, 3, 5, 9, 13, 21};
    auto* sweep = app.add_subcommand("sweep-kernel", "J&F as a function of the opening kernel");
    sweep->add_option("--checkpoint", sweep_ckpt)->required()->check(CLI::ExistingFile);
    sweep->add_option("--data", sweep_data)->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--split", sweep_split);
    sweep->add_option("--kernels", kernels)->delimiter(',');
    sweep_flags.attach(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::InvalidArgument);
    }

    if (*synth) {
        const fs::path out = output_path(synth_out);
        for (const auto& v : synth_generate(spec, out)) {
            std::size_t px = 0;
            for (auto n : v.mask_pixels) px += n;
            std::cout << v.id << '\t' << (v.leak ? "leak" : "no-leak") << '\t' << px << " mask px\n";
        }
        std::cout << "wrote " << out.string() << '\n';
    } else if (*split) {
        const auto videos = scan_videos(split_data);
        const fs::path out = output_path(split_out);
        if (split_mode == "kfold") {
            for (const auto& s : kfold_split(videos, split_k)) {
                const std::string stem = "fold" + std::to_string(s.fold);
                write_split_file(out / (stem + "_train.txt"), s, "train");
                write_split_file(out / (stem + "_test.txt"), s, "test");
                std::cout << stem << "\ttest_videos=" << s.test_videos.size() << "\ttest_frames=" << s.test.size()
                          << "\tweight=" << s.weight << '\n';
            }
        } else {
            const auto s = fewshot_split(videos, split_cap);
            for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
            write_split_file(out / "fewshot_train.txt", s, "train");
            write_split_file(out / "fewshot_test.txt", s, "test");
            std::cout << "train_frames=" << s.train.size() << "\ttest_frames=" << s.test.size() << '\n';
        }
    } else if (*train_cmd) {
        const RunConfig cfg = train_flags.resolve(train_cmd);
        const Dataset ds = ingest_dataset(train_data, cfg.resolution);
        for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
        DatasetSplit s = full_split(ds);
        if (!train_split.empty()) s.train = frames_from(ds, train_split);
        Model model = build_model(cfg);
        const fs::path out = output_path(train_out);
        const auto result = train(model, cfg, ds, s, {out, &std::cout});
        std::cout << "steps=" << result.steps << " best_epoch=" << result.best_epoch
                  << " best_validation=" << result.best_validation << " checkpoints=" << out.string() << '\n';
    } else if (*infer_cmd) {
        const Model model = Model::load(infer_ckpt);
        RunConfig cfg = infer_flags.resolve(infer_cmd);
        if (infer_cmd->count("--resolution") == 0 && infer_flags.config_file.empty()) cfg.resolution = model.config().resolution;
        const Dataset ds = ingest_dataset(infer_data, cfg.resolution, false);
        const auto refs = frames_from(ds, infer_split);
        const fs::path out = output_path(infer_out);
        const auto masks = infer(model, ds, cfg, refs, out);
        if (!infer_debug.empty()) dump_correlations(model, ds, refs, output_path(infer_debug));
        std::cout << "wrote " << masks.size() << " masks under " << out.string() << '\n';
    } else if (*eval_cmd) {
        std::vector<FoldAssignment> folds = folds_from(eval_folds);
        if (!fold_scores.empty()) {
            std::vector<FoldScore> rows;
            for (const auto& fsv : fold_scores) {
                const auto colon = fsv.find(':');
                require(colon != std::string::npos, ErrorKind::InvalidArgument, "--fold-score expects JF:weight, got " + fsv);
                try {
                    const double jf = std::stod(fsv.substr(0, colon));
                    rows.push_back({static_cast<int>(rows.size()) + 1, std::stod(fsv.substr(colon + 1)), {jf, jf, jf}});
                } catch (const std::exception&) {
                    fail(ErrorKind::InvalidArgument, "--fold-score expects numbers, got " + fsv);
                }
            }
            const Scores s = weighted_fold_average(rows);
            std::cout << std::fixed << std::setprecision(2) << "fold_weighted\tJ&F\t" << s.jf << '\n';
            if (eval_pred.empty()) return 0;
        }
        require(!eval_pred.empty() && !eval_gt.empty(), ErrorKind::InvalidArgument, "eval needs --pred and --gt");
        MaskSet gt = read_mask_tree(eval_gt);
        std::set<FrameRef> keep;
        if (!eval_split.empty())
            for (const auto& r : read_split_file(eval_split).frames) keep.insert(r);
        else
            for (const auto& f : folds) keep.insert(f.frames.begin(), f.frames.end());
        if (!keep.empty()) std::erase_if(gt, [&](const auto& kv) { return !keep.contains(kv.first); });
        require(!gt.empty(), ErrorKind::Data, "no ground-truth masks under " + eval_gt);
        const Resolution res{gt.begin()->second.height, gt.begin()->second.width};
        MaskSet pred = read_mask_tree(eval_pred, res);
        if (!keep.empty()) std::erase_if(pred, [&](const auto& kv) { return !keep.contains(kv.first); });
        const auto scores = score_frames(pred, gt);
        for (const auto& name : eval_protocols) {
            const Protocol p = parse_protocol(name);
            const auto rep = aggregate(scores, p, folds.empty() ? nullptr : &folds);
            std::cout << format_report(rep);
            if (!eval_report.empty()) write_report(output_path(eval_report + "_" + to_string(p)), rep);
        }
    } else if (*sweep) {
        const Model model = Model::load(sweep_ckpt);
        RunConfig cfg = sweep_flags.resolve(sweep);
        if (sweep->count("--resolution") == 0 && sweep_flags.config_file.empty()) cfg.resolution = model.config().resolution;
        const Dataset ds = ingest_dataset(sweep_data, cfg.resolution);
        const auto rows = sweep_kernel(model, ds, frames_from(ds, sweep_split), kernels, cfg.threshold);
        std::cout << "kernel\tJ\tF\tJ&F\n" << std::fixed << std::setprecision(2);
        for (const auto& r : rows) std::cout << r.kernel << '\t' << r.scores.j << '\t' << r.scores.f << '\t' << r.scores.jf << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const jvlgs::Error& e) {
        std::cerr << "error [" << jvlgs::to_string(e.kind()) << "]: " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error [io]: " << e.what() << '\n';
        return static_cast<int>(jvlgs::ErrorKind::Io);
    } catch (const std::exception& e) {
        std::cerr << "error [internal]: " << e.what() << '\n';
        return 1;
    }
}
