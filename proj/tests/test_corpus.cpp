#include "common.hpp"

#include "leaksplit/corpus.hpp"
#include "leaksplit/descriptors.hpp"
#include "leaksplit/matrix_io.hpp"

#include <fstream>

using namespace leaksplit;
using testing_helpers::TempDir;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

double mean_abs_difference(const ImageBuffer& a, const ImageBuffer& b) {
    double total = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        total += std::abs(a.pixels[i] - b.pixels[i]);
    }
    return total / static_cast<double>(a.pixels.size());
}

/// Mean-abs pixel difference separating frames of one video from frames of different videos.
constexpr double same_video_threshold = 0.08;

}

TEST(Manifest, ParsesRecordsInOrder) {
    TempDir dir;
    write_text(dir / "m.csv",
               "frame_id,video_id,frame_index,path,row\n"
               "a,v1,0,img/a.png,\n"
               "b,v1,30,,4\n"
               "\"c,1\",v2,7,/abs/c.png,2\n");
    const auto m = load_manifest(dir / "m.csv");
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m.records[0].frame_id, "a");
    EXPECT_EQ(*m.records[0].path, "img/a.png");
    EXPECT_FALSE(m.records[0].row);
    EXPECT_EQ(*m.records[1].row, 4u);
    EXPECT_FALSE(m.records[1].path);
    EXPECT_EQ(m.records[1].frame_index, 30u);
    EXPECT_EQ(m.records[2].frame_id, "c,1");
    EXPECT_EQ(m.resolve(m.records[0]), dir / "img/a.png");
    EXPECT_EQ(m.resolve(m.records[2]), std::filesystem::path("/abs/c.png"));
    EXPECT_EQ(m.video_ids(), (std::vector<std::string>{"v1", "v2"}));
}

TEST(Manifest, HeaderOnlyIsEmpty) {
    TempDir dir;
    write_text(dir / "m.csv", "frame_id,video_id,frame_index,path,row\n");
    EXPECT_EQ(load_manifest(dir / "m.csv").size(), 0u);
}

TEST(Manifest, Errors) {
    TempDir dir;
    auto expect_error = [&](const std::string& body, const std::string& fragment) {
        write_text(dir / "bad.csv", "frame_id,video_id,frame_index,path,row\n" + body);
        try {
            load_manifest(dir / "bad.csv");
            ADD_FAILURE() << "no error for: " << body;
        } catch (const std::runtime_error& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };
    expect_error("a,v,0,x.png,\na,v,1,y.png,\n", "duplicate frame id");
    expect_error("a,v,-3,x.png,\n", "negative frame index");
    expect_error("a,v,0,x.png\n", "expected 5 columns");
    expect_error("a,v,zero,x.png,\n", "malformed frame index");
    expect_error("a,v,0,,\n", "neither path nor row");
    expect_error(",v,0,x.png,\n", "missing frame_id");

    write_text(dir / "hdr.csv", "id,video,frame\n");
    EXPECT_THROW(load_manifest(dir / "hdr.csv"), std::runtime_error);
    EXPECT_THROW(load_manifest(dir / "nope.csv"), std::runtime_error);
}

TEST(Manifest, WriteReadRoundTripWithPartitionColumn) {
    TempDir dir;
    std::vector<FrameRecord> records{{"a", "v1", 0, "p/a.png", std::nullopt}, {"b", "v,2", 5, std::nullopt, 3}};
    std::vector<std::string> parts{"train", "test"};
    write_manifest(dir / "m.csv", records, &parts);
    const auto back = load_manifest(dir / "m.csv");
    EXPECT_EQ(back.records, records);
}

TEST(FpsTable, RoundTrip) {
    TempDir dir;
    std::map<std::string, double> table{{"v1", 29.97}, {"v2", 25.0}};
    write_fps_table(dir / "fps.csv", table);
    EXPECT_EQ(load_fps_table(dir / "fps.csv"), table);
}

TEST(SampleOneFps, Examples) {
    const auto thirty = sample_one_fps(300, 30.0);
    ASSERT_EQ(thirty.size(), 10u);
    for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_EQ(thirty[j], 30 * j);
    }
    EXPECT_EQ(sample_one_fps(5, 30.0), (std::vector<std::uint64_t>{0}));
    EXPECT_EQ(sample_one_fps(45, 12.5), (std::vector<std::uint64_t>{0, 13, 25, 38}));
    EXPECT_THROW(sample_one_fps(10, 0.0), std::invalid_argument);
    EXPECT_THROW(sample_one_fps(10, -2.0), std::invalid_argument);
}

TEST(SampleOneFps, Properties) {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const std::uint64_t n = 1 + rng.index(2000);
        const double fps = rng.uniform(0.1, 120.0);
        const auto idx = sample_one_fps(n, fps);
        ASSERT_FALSE(idx.empty());
        EXPECT_EQ(idx.front(), 0u);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            EXPECT_LT(idx[k], n);
            if (k > 0) {
                EXPECT_GT(idx[k], idx[k - 1]);
            }
        }
    }
}

TEST(Images, UniformGrayIsResizeInvariant) {
    TempDir dir;
    write_png(dir / "gray.png", RawImage{64, 64, 1, std::vector<std::uint8_t>(64 * 64, 128)});
    const auto img = load_image(dir / "gray.png", 128);
    ASSERT_EQ(img.width, 128u);
    ASSERT_EQ(img.height, 128u);
    for (double p : img.pixels) {
        EXPECT_NEAR(p, 128.0 / 255.0, 1e-12);
    }
}

TEST(Images, IdentityResizeIsLuminancePassThrough) {
    TempDir dir;
    RawImage raw{224, 224, 3, {}};
    Rng rng(1);
    raw.bytes.resize(224 * 224 * 3);
    for (auto& b : raw.bytes) {
        b = static_cast<std::uint8_t>(rng.index(256));
    }
    write_png(dir / "rgb.png", raw);
    const auto img = load_image(dir / "rgb.png", 224);
    const auto lum = to_luminance(raw);
    EXPECT_EQ(img, lum);
    EXPECT_NEAR(lum.pixels[0], (0.299 * raw.bytes[0] + 0.587 * raw.bytes[1] + 0.114 * raw.bytes[2]) / 255.0, 1e-15);
}

TEST(Images, CheckerboardToOnePixelAverages) {
    ImageBuffer board(2, 2);
    board.pixels = {0, 1, 1, 0};
    const auto one = resize_bilinear(board, 1, 1);
    EXPECT_DOUBLE_EQ(one.pixels[0], 0.5);
}

TEST(Images, DeterministicAndErrors) {
    TempDir dir;
    RawImage raw{10, 7, 1, std::vector<std::uint8_t>(70)};
    for (std::size_t i = 0; i < 70; ++i) {
        raw.bytes[i] = static_cast<std::uint8_t>(i * 3);
    }
    write_png(dir / "x.png", raw);
    EXPECT_EQ(load_image(dir / "x.png", 33), load_image(dir / "x.png", 33));

    EXPECT_THROW(load_image(dir / "missing.png", 8), std::runtime_error);
    write_text(dir / "junk.png", "definitely not a png");
    EXPECT_THROW(load_image(dir / "junk.png", 8), std::runtime_error);
    EXPECT_THROW(resize_bilinear(ImageBuffer(0, 0), 4, 4), std::invalid_argument);
}

TEST(SyntheticCorpus, CountsAndIds) {
    TempDir dir;
    const auto m = generate_synthetic_corpus(dir.path(), {20, 10, 64, 7});
    EXPECT_EQ(m.size(), 200u);
    EXPECT_EQ(m.video_ids().size(), 20u);
    const auto reloaded = load_manifest(dir / "manifest.csv");
    EXPECT_EQ(reloaded.records, m.records);
    EXPECT_EQ(load_fps_table(dir / "fps.csv").size(), 20u);
    for (const auto& r : m.records) {
        EXPECT_TRUE(std::filesystem::exists(m.resolve(r)));
        const double fps = m.fps_table.at(r.video_id);
        const auto kept = sample_one_fps(r.frame_index + 1, fps);
        EXPECT_EQ(kept.back(), r.frame_index) << "frame index is not a 1-fps sample";
    }
}

TEST(SyntheticCorpus, ByteIdenticalForSeedAndSeedSensitive) {
    TempDir a;
    const auto m1 = generate_synthetic_corpus(a / "one", {20, 10, 64, 7});
    generate_synthetic_corpus(a / "two", {20, 10, 64, 7});
    generate_synthetic_corpus(a / "other", {20, 10, 64, 8});
    bool any_pixel_differs = false;
    for (const auto& r : m1.records) {
        const auto first = binary::read_file(a / "one" / *r.path);
        EXPECT_EQ(first, binary::read_file(a / "two" / *r.path));
        const auto other = a / "other" / *r.path;
        if (!std::filesystem::exists(other) || binary::read_file(other) != first) {
            any_pixel_differs = true;
        }
    }
    EXPECT_EQ(binary::read_file(a / "one" / "manifest.csv"), binary::read_file(a / "two" / "manifest.csv"));
    EXPECT_TRUE(any_pixel_differs);
}

TEST(SyntheticCorpus, SingleVideoIsCoherent) {
    TempDir dir;
    const auto single = generate_synthetic_corpus(dir / "one", {1, 5, 64, 7});
    ASSERT_EQ(single.size(), 5u);
    EXPECT_EQ(single.video_ids().size(), 1u);
    std::vector<ImageBuffer> frames;
    for (const auto& r : single.records) {
        frames.push_back(load_image(single.resolve(r), 64));
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        for (std::size_t j = i + 1; j < frames.size(); ++j) {
            EXPECT_LT(mean_abs_difference(frames[i], frames[j]), same_video_threshold);
        }
    }

    const auto many = generate_synthetic_corpus(dir / "many", {10, 2, 64, 7});
    std::vector<ImageBuffer> firsts;
    for (std::size_t v = 0; v < 10; ++v) {
        firsts.push_back(load_image(many.resolve(many.records[2 * v]), 64));
    }
    for (std::size_t i = 0; i < firsts.size(); ++i) {
        for (std::size_t j = i + 1; j < firsts.size(); ++j) {
            EXPECT_GT(mean_abs_difference(firsts[i], firsts[j]), same_video_threshold);
        }
    }
}

TEST(SyntheticCorpus, IntraVideoHogCloserThanInterVideo) {
    TempDir dir;
    const auto m = generate_synthetic_corpus(dir.path(), {8, 6, 64, 3});
    std::vector<std::vector<double>> hogs;
    for (const auto& r : m.records) {
        hogs.push_back(compute_hog(load_image(m.resolve(r), 128)).values);
    }
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < hogs.size(); ++i) {
        for (std::size_t j = i + 1; j < hogs.size(); ++j) {
            const double d = euclidean_distance(hogs[i], hogs[j]);
            if (m.records[i].video_id == m.records[j].video_id) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    EXPECT_LT(intra / n_intra, inter / n_inter);
}

TEST(SyntheticCorpus, RejectsZeroCounts) {
    TempDir dir;
    EXPECT_THROW(generate_synthetic_corpus(dir.path(), {0, 10, 64, 0}), std::invalid_argument);
}
