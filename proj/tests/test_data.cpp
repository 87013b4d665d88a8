#include <gtest/gtest.h>

#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "support.hpp"

using namespace jvlgs;
using namespace jvlgs::test;

namespace {

void write_gray(const fs::path& p, int h, int w, unsigned char value) {
    fs::create_directories(p.parent_path());
    cv::imwrite(p.string(), cv::Mat(h, w, CV_8UC1, cv::Scalar(value)));
}

std::vector<int> clip_indices(const Clip& c) {
    std::vector<int> out;
    for (const auto* f : c.frames) out.push_back(f->frame_index);
    return out;
}

Video video_of(int n) {
    Video v{"v", {}};
    for (int i = 0; i < n; ++i) v.frames.push_back({Image{1, 1, {0, 0, 0}}, std::nullopt, "v", i});
    return v;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(NaturalOrder, NumericAware) {
    std::vector<std::string> ids{"11", "2_human", "10", "1", "2", "11_brightbats", "3_bats", "3"};
    std::sort(ids.begin(), ids.end(), natural_less);
    EXPECT_EQ(ids, (std::vector<std::string>{"1", "2", "2_human", "3", "3_bats", "10", "11", "11_brightbats"}));
}

TEST(Ingest, TwoVideosFiveFrames) {
    TempDir dir("ingest");
    for (const std::string v : {"b", "a"})
        for (int i = 0; i < 5; ++i) {
            write_gray(dir.path() / v / "frames" / frame_filename(i), 64, 64, 100);
            write_gray(dir.path() / v / "masks" / frame_filename(i), 64, 64, i % 2 ? 255 : 0);
        }
    const Dataset ds = ingest_dataset(dir.path(), {64, 64});
    ASSERT_EQ(ds.videos.size(), 2u);
    EXPECT_EQ(ds.frame_count(), 10u);
    EXPECT_EQ(ds.videos[0].id, "a");
    const auto& f = ds.frame({"b", 3});
    ASSERT_TRUE(f.mask.has_value());
    EXPECT_EQ(f.mask->count(), 64u * 64u);
    EXPECT_EQ(ds.frame({"b", 2}).mask->count(), 0u);
    EXPECT_NEAR(f.image.at(0, 10, 10), 100.0 / 255.0, 1e-6);
}

TEST(Ingest, ResizesAndBinarizes) {
    TempDir dir("resize");
    write_gray(dir.path() / "v" / "frames" / "000000.png", 128, 96, 50);
    cv::Mat mask(128, 96, CV_8UC1, cv::Scalar(0));
    mask(cv::Rect(0, 0, 48, 128)).setTo(200);
    fs::create_directories(dir.path() / "v" / "masks");
    cv::imwrite((dir.path() / "v" / "masks" / "000000.png").string(), mask);
    const Dataset ds = ingest_dataset(dir.path(), {64, 32});
    const auto& f = ds.videos[0].frames[0];
    EXPECT_EQ(f.image.height, 64);
    EXPECT_EQ(f.image.width, 32);
    ASSERT_EQ(f.mask->height, 64);
    for (auto v : f.mask->grid) EXPECT_TRUE(v == 0 || v == 1);
    EXPECT_EQ(f.mask->count(), 64u * 16u);
}

TEST(Ingest, NumericFrameOrderAndErrors) {
    TempDir dir("order");
    for (int i : {10, 2, 1}) {
        write_gray(dir.path() / "v" / "frames" / (std::to_string(i) + ".png"), 32, 32, static_cast<unsigned char>(i));
        write_gray(dir.path() / "v" / "masks" / (std::to_string(i) + ".png"), 32, 32, 0);
    }
    const Dataset ds = ingest_dataset(dir.path(), {32, 32});
    std::vector<int> idx;
    for (const auto& f : ds.videos[0].frames) idx.push_back(f.frame_index);
    EXPECT_EQ(idx, (std::vector<int>{1, 2, 10}));

    write_gray(dir.path() / "v" / "frames" / "0002.png", 32, 32, 0);
    try {
        ingest_dataset(dir.path(), {32, 32});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Data);
        EXPECT_NE(std::string(e.what()).find("non-monotonic"), std::string::npos);
    }

    TempDir missing("missing");
    write_gray(missing.path() / "v" / "frames" / "000000.png", 32, 32, 0);
    EXPECT_THROW(ingest_dataset(missing.path(), {32, 32}), Error);
    EXPECT_NO_THROW(ingest_dataset(missing.path(), {32, 32}, false));
    EXPECT_THROW(ingest_dataset(missing.path() / "nope", {32, 32}), Error);
}

TEST(Clips, BoundaryClamping) {
    Dataset ds;
    ds.videos.push_back(video_of(5));
    const auto clips = make_clips(ds, 3, 1);
    ASSERT_EQ(clips.size(), 5u);
    EXPECT_EQ(clip_indices(clips[0]), (std::vector<int>{0, 0, 1}));
    EXPECT_EQ(clip_indices(clips[4]), (std::vector<int>{3, 4, 4}));
    EXPECT_EQ(clip_indices(clips[2]), (std::vector<int>{1, 2, 3}));

    Dataset one;
    one.videos.push_back(video_of(1));
    EXPECT_EQ(clip_indices(make_clips(one, 3, 1)[0]), (std::vector<int>{0, 0, 0}));
    EXPECT_THROW(make_clips(ds, 3, 3), Error);
}

TEST(KFold, PublishedGroupingAndWeights) {
    const auto folds = kfold_split(simgas_videos(), 5);
    ASSERT_EQ(folds.size(), 5u);
    const std::vector<std::size_t> sizes{7, 6, 6, 6, 6};
    const std::vector<std::size_t> frames{3157, 2251, 1911, 2595, 2214};
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(folds[i].test_videos.size(), sizes[i]);
        EXPECT_EQ(folds[i].test.size(), frames[i]);
        EXPECT_NEAR(folds[i].weight, simgas_published_weights()[i], 1e-4);
        total += folds[i].weight;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(folds[0].test_videos.front(), "1");
    EXPECT_EQ(folds[0].test_videos.back(), "5");
    EXPECT_EQ(folds[2].test_videos.front(), "11_brightbats");
}

TEST(KFold, EveryVideoTestedOnce) {
    const auto folds = kfold_split(simgas_videos(), 4);
    std::map<std::string, int> seen;
    for (const auto& f : folds) {
        for (const auto& v : f.test_videos) ++seen[v];
        EXPECT_EQ(f.train.size() + f.test.size(), 12128u);
    }
    EXPECT_EQ(seen.size(), 31u);
    for (const auto& [_, n] : seen) EXPECT_EQ(n, 1);
}

TEST(KFold, EqualVideosEqualWeights) {
    std::vector<VideoInfo> v;
    for (int i = 0; i < 4; ++i) v.push_back({"v" + std::to_string(i), {0, 1, 2}});
    for (const auto& f : kfold_split(v, 4)) EXPECT_DOUBLE_EQ(f.weight, 0.25);
    EXPECT_THROW(kfold_split(v, 5), Error);
    EXPECT_THROW(kfold_split(v, 1), Error);
}

TEST(FewShot, StrideRule) {
    std::vector<int> idx(61);
    std::iota(idx.begin(), idx.end(), 0);
    const auto s = fewshot_split({{"v", idx}}, 3);
    std::vector<int> train;
    for (const auto& r : s.train) train.push_back(r.frame_index);
    EXPECT_EQ(train, (std::vector<int>{0, 30, 60}));
    EXPECT_EQ(s.test.size(), 58u);
}

TEST(FewShot, CountsAndWarning) {
    std::vector<int> a(300), b(10);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    const auto s = fewshot_split({{"long", a}, {"short", b}}, 30);
    std::size_t long_train = 0, long_test = 0;
    for (const auto& r : s.train) long_train += r.video_id == "long";
    for (const auto& r : s.test) long_test += r.video_id == "long";
    EXPECT_EQ(long_train, 30u);
    EXPECT_EQ(long_test, 270u);
    EXPECT_EQ(s.train.size(), 40u);
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(s.warnings[0].find("short"), std::string::npos);
}

TEST(SplitFiles, RoundTrip) {
    TempDir dir("split");
    const auto folds = kfold_split(simgas_videos(), 5);
    write_split_file(dir.path() / "f2.txt", folds[1], "test");
    const auto sf = read_split_file(dir.path() / "f2.txt");
    EXPECT_EQ(sf.name, "kfold");
    EXPECT_EQ(sf.fold, 2);
    EXPECT_EQ(sf.fold_count, 5);
    EXPECT_EQ(sf.part, "test");
    EXPECT_DOUBLE_EQ(sf.weight, folds[1].weight);
    EXPECT_EQ(sf.frames, folds[1].test);
}

TEST(Synth, DeterministicOnDisk) {
    TempDir a("synth_a"), b("synth_b");
    SynthSpec spec;
    spec.n_videos = 3;
    spec.frames_per_video = 4;
    synth_generate(spec, a.path());
    synth_generate(spec, b.path());
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a.path());
        ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
        EXPECT_EQ(read_file(e.path()), read_file(b.path() / rel)) << rel;
        ++files;
    }
    EXPECT_EQ(files, 3u * 4u * 2u);
}

TEST(Synth, LeakProbabilityExtremes) {
    SynthSpec none;
    none.leak_probability = 0.0;
    for (const auto& v : synth_dataset(none).videos)
        for (const auto& f : v.frames) EXPECT_TRUE(f.mask->empty());

    SynthSpec all;
    all.leak_probability = 1.0;
    all.n_videos = 2;
    all.frames_per_video = 8;
    const auto ds = synth_dataset(all);
    EXPECT_EQ(ds.frame_count(), 16u);
    for (const auto& v : ds.videos) {
        bool any = false;
        for (const auto& f : v.frames) any = any || !f.mask->empty();
        EXPECT_TRUE(any) << v.id;
    }
}

TEST(Synth, InMemoryMatchesDiskRoundTrip) {
    TempDir dir("synth_rt");
    SynthSpec spec;
    spec.n_videos = 2;
    spec.frames_per_video = 3;
    spec.leak_videos = 1;
    synth_generate(spec, dir.path());
    const Dataset disk = ingest_dataset(dir.path(), {spec.height, spec.width});
    const Dataset mem = synth_dataset(spec);
    ASSERT_EQ(disk.videos.size(), mem.videos.size());
    for (std::size_t v = 0; v < mem.videos.size(); ++v)
        for (std::size_t f = 0; f < mem.videos[v].frames.size(); ++f) {
            EXPECT_EQ(disk.videos[v].frames[f].mask, mem.videos[v].frames[f].mask);
            const auto& a = disk.videos[v].frames[f].image.pixels;
            const auto& b = mem.videos[v].frames[f].image.pixels;
            for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-6);
        }
}

TEST(Synth, LeakCountOverride) {
    SynthSpec spec;
    spec.n_videos = 6;
    spec.leak_videos = 4;
    const auto ds = synth_dataset(spec);
    for (int v = 0; v < 6; ++v) {
        std::size_t px = 0;
        for (const auto& f : ds.videos[v].frames) px += f.mask->count();
        if (v < 4) EXPECT_GT(px, 0u);
        else EXPECT_EQ(px, 0u);
    }
}
