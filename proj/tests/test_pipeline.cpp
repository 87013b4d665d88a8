#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "support.hpp"

using namespace jvlgs;
using namespace jvlgs::test;

namespace {

RunConfig small_config() {
    RunConfig cfg;
    cfg.resolution = {32, 32};
    cfg.vision_channels = 8;
    cfg.text_channels = 8;
    cfg.decoder_width = 8;
    cfg.gsa_groups = 4;
    cfg.token_length = 6;
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.max_steps = 3;
    cfg.seed = 5;
    return cfg;
}

Dataset small_data() {
    SynthSpec s;
    s.height = s.width = 32;
    s.n_videos = 2;
    s.frames_per_video = 4;
    s.leak_videos = 1;
    s.seed = 3;
    return synth_dataset(s);
}

}  // namespace

TEST(Config, ParseAndOverrides) {
    std::istringstream in(
        "# comment\n"
        "resolution = 64x96\n"
        "epochs = 10\n"
        "vlf = off\n"
        "prompts = white steam; gas plume\n"
        "\n"
        "kernel = 5\n");
    RunConfig cfg = parse_config(in);
    EXPECT_EQ(cfg.resolution, (Resolution{64, 96}));
    EXPECT_EQ(cfg.epochs, 10);
    EXPECT_FALSE(cfg.vlf);
    EXPECT_EQ(cfg.prompts, (std::vector<std::string>{"white steam", "gas plume"}));
    EXPECT_EQ(cfg.kernel, 5);
    set_config_value(cfg, "kernel", "13");
    EXPECT_EQ(cfg.kernel, 13);
    EXPECT_EQ(cfg.batch_size, 6);

    EXPECT_THROW(set_config_value(cfg, "learning_rate", "1"), Error);
    EXPECT_THROW(set_config_value(cfg, "epochs", "ten"), Error);
    std::istringstream bad("epochs 10\n");
    EXPECT_THROW(parse_config(bad), Error);
}

TEST(Config, DefaultsAndSchedule) {
    const RunConfig cfg;
    EXPECT_EQ(cfg.resolution, (Resolution{352, 352}));
    EXPECT_EQ(cfg.batch_size, 6);
    EXPECT_EQ(cfg.epochs, 60);
    EXPECT_EQ(cfg.prompts.size(), 4u);
    EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(1), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(47), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(48), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(49), 1e-5);
    EXPECT_DOUBLE_EQ(cfg.lr_at_epoch(60), 1e-5);
}

TEST(Config, Invariants) {
    auto expect_invalid = [](auto mutate) {
        RunConfig c;
        mutate(c);
        EXPECT_THROW(c.validate(), Error);
    };
    expect_invalid([](RunConfig& c) { c.resolution = {100, 352}; });
    expect_invalid([](RunConfig& c) { c.batch_size = 0; });
    expect_invalid([](RunConfig& c) { c.lr_final = 1e-3; });
    expect_invalid([](RunConfig& c) { c.center_index = 3; });
    expect_invalid([](RunConfig& c) { c.kernel = 4; });
    expect_invalid([](RunConfig& c) { c.threshold = 1.0; });
    expect_invalid([](RunConfig& c) { c.prompts.clear(); });
}

TEST(OutputPath, HonoursRootVariable) {
    ::setenv("JVLGS_OUTPUT_ROOT", "/tmp/jvlgs_root", 1);
    EXPECT_EQ(output_path("run/a"), fs::path("/tmp/jvlgs_root/run/a"));
    EXPECT_EQ(output_path("/abs"), fs::path("/abs"));
    ::unsetenv("JVLGS_OUTPUT_ROOT");
    EXPECT_EQ(output_path("run/a"), fs::path("run/a"));
}

TEST(Training, DeterministicFirstEpoch) {
    const Dataset ds = small_data();
    const RunConfig cfg = small_config();
    Model a = build_model(cfg), b = build_model(cfg);
    const auto ra = train(a, cfg, ds, full_split(ds));
    const auto rb = train(b, cfg, ds, full_split(ds));
    ASSERT_FALSE(ra.epoch_loss.empty());
    EXPECT_EQ(ra.epoch_loss[0], rb.epoch_loss[0]);
    EXPECT_EQ(ra.steps, 3);
    ASSERT_EQ(ra.log.size(), 3u);
    EXPECT_EQ(format_log(ra.log[0]), format_log(rb.log[0]));
    for (const auto& [name, v] : a.params().all()) EXPECT_EQ(v.value(), b.params().get(name).value()) << name;
}

TEST(Training, LossDecreasesOnTinyProblem) {
    const Dataset ds = small_data();
    RunConfig cfg = small_config();
    cfg.max_steps = 30;
    cfg.epochs = 100;
    cfg.lr_initial = cfg.lr_final = 3e-3;
    cfg.validation_fraction = 0.0;
    Model m = build_model(cfg);
    const auto r = train(m, cfg, ds, full_split(ds));
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Training, CheckpointRoundTripGivesIdenticalMasks) {
    TempDir dir("ckpt");
    const Dataset ds = small_data();
    const RunConfig cfg = small_config();
    Model m = build_model(cfg);
    train(m, cfg, ds, full_split(ds), {dir.path(), nullptr});
    ASSERT_TRUE(fs::exists(dir.path() / "last.ckpt"));
    ASSERT_TRUE(fs::exists(dir.path() / "best.ckpt"));
    m.save((dir.path() / "m.ckpt").string());
    const Model loaded = Model::load((dir.path() / "m.ckpt").string());
    const auto refs = all_frames(ds);
    for (const auto& r : refs) {
        const Clip clip = clip_for(ds, r, 3, 1);
        EXPECT_EQ(m.predict_prob(clip), loaded.predict_prob(clip));
    }
    EXPECT_EQ(infer(m, ds, cfg, refs), infer(loaded, ds, cfg, refs));
}

TEST(Training, ErrorsOnEmptySplitAndMissingMasks) {
    Dataset ds = small_data();
    const RunConfig cfg = small_config();
    Model m = build_model(cfg);
    DatasetSplit empty;
    EXPECT_THROW(train(m, cfg, ds, empty), Error);
    ds.videos[0].frames[0].mask.reset();
    EXPECT_THROW(train(m, cfg, ds, full_split(ds)), Error);
}

TEST(Ablation, VlfToggleChangesOnlyFusionParameters) {
    RunConfig on = small_config(), off = small_config();
    off.vlf = false;
    Model a = build_model(on), b = build_model(off);
    std::size_t vlf_scalars = 0;
    for (const auto& [name, v] : a.params().all()) {
        if (name.rfind("vlf.", 0) == 0) {
            vlf_scalars += v.value().size();
            EXPECT_FALSE(b.params().contains(name));
        } else {
            ASSERT_TRUE(b.params().contains(name)) << name;
            EXPECT_EQ(v.value(), b.params().get(name).value()) << name;
        }
    }
    EXPECT_GT(vlf_scalars, 0u);
    EXPECT_EQ(a.params().scalar_count(), b.params().scalar_count() + vlf_scalars);
    EXPECT_EQ(a.params().all().size(), b.params().all().size() + 12);
}

TEST(Inference, PostprocessingIsOpeningOfRaw) {
    const Dataset ds = small_data();
    RunConfig cfg = small_config();
    const Model m = build_model(cfg);
    const auto refs = all_frames(ds);
    cfg.postproc = false;
    const auto raw = infer(m, ds, cfg, refs);
    cfg.postproc = true;
    const auto post = infer(m, ds, cfg, refs);
    for (const auto& [r, mask] : raw) EXPECT_EQ(post.at(r), opening(mask, cfg.kernel));
}

TEST(Inference, WritesMaskPngs) {
    TempDir dir("infer");
    const Dataset ds = small_data();
    const RunConfig cfg = small_config();
    const Model m = build_model(cfg);
    const auto masks = infer(m, ds, cfg, all_frames(ds), dir.path());
    for (const auto& [r, mask] : masks) {
        const auto p = dir.path() / r.video_id / "masks" / frame_filename(r.frame_index);
        ASSERT_TRUE(fs::exists(p));
        EXPECT_EQ(read_mask(p, cfg.resolution), mask);
    }
}

TEST(Inference, ResolutionMismatchRejected) {
    SynthSpec s;
    s.height = s.width = 64;
    s.n_videos = 1;
    s.frames_per_video = 2;
    const Dataset ds = synth_dataset(s);
    const Model m = build_model(small_config());
    try {
        predict_masks(m, ds, all_frames(ds));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
        EXPECT_NE(std::string(e.what()).find("32x32"), std::string::npos);
    }
}

TEST(Evaluation, FrameSetMismatchListsFrames) {
    MaskSet gt{{{"a", 0}, BinaryMask(4, 4)}, {{"a", 1}, BinaryMask(4, 4)}};
    MaskSet pred{{{"a", 0}, BinaryMask(4, 4)}, {{"b", 7}, BinaryMask(4, 4)}};
    try {
        score_frames(pred, gt);
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("a/1"), std::string::npos);
        EXPECT_NE(msg.find("b/7"), std::string::npos);
    }
}

TEST(Sweep, DedupeAndIdentityKernel) {
    std::mt19937_64 rng(11);
    MaskSet raw, gt;
    for (int i = 0; i < 4; ++i) {
        raw.emplace(FrameRef{"v", i}, random_rects(rng, 24, 24, 3, 1, 8));
        gt.emplace(FrameRef{"v", i}, random_rects(rng, 24, 24, 2, 4, 10));
    }
    const auto rows = sweep_kernel(raw, gt, {3, 1, 3, 9, 1});
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].kernel, 3);
    EXPECT_EQ(rows[1].kernel, 1);
    EXPECT_EQ(rows[2].kernel, 9);
    const auto plain = evaluate(raw, gt, Protocol::Unified).overall;
    EXPECT_EQ(rows[1].scores.j, plain.j);
    EXPECT_EQ(rows[1].scores.f, plain.f);
    EXPECT_EQ(rows[2].scores.j, evaluate(postprocess(raw, 9), gt, Protocol::Unified).overall.j);
    EXPECT_THROW(sweep_kernel(raw, gt, {4}), Error);
}

TEST(ExternalEncoder, LoadsVisionWeightsAndFreezes) {
    TempDir dir("external");
    RunConfig donor_cfg = small_config();
    donor_cfg.seed = 99;
    Model donor = build_model(donor_cfg);
    const auto path = dir.path() / "donor.ckpt";
    donor.save(path.string());

    RunConfig cfg = small_config();
    cfg.encoder = EncoderKind::External;
    EXPECT_THROW(build_model(cfg), Error);
    cfg.external_weights = path.string();
    cfg.freeze_encoder = true;
    Model m = build_model(cfg);
    const std::string prefix = m.vision().prefix();
    for (const auto& [name, v] : m.params().all()) {
        if (name.rfind(prefix, 0) == 0) {
            EXPECT_EQ(v.value(), donor.params().get(name).value()) << name;
            EXPECT_TRUE(m.params().frozen(name));
        } else {
            EXPECT_FALSE(m.params().frozen(name)) << name;
        }
    }
    const Dataset ds = small_data();
    std::map<std::string, Tensor> before;
    for (const auto& [name, v] : m.params().all()) before.emplace(name, v.value());
    train(m, cfg, ds, full_split(ds));
    bool others_moved = false;
    for (const auto& [name, v] : m.params().all()) {
        if (name.rfind(prefix, 0) == 0) EXPECT_EQ(v.value(), before.at(name)) << name;
        else others_moved = others_moved || !(v.value() == before.at(name));
    }
    EXPECT_TRUE(others_moved);
}
