#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "htr/dataset.hpp"
#include "htr/pgm.hpp"
#include "oracles.hpp"

using namespace htr;

namespace {

std::string be32(std::uint32_t v) {
    return {char(v >> 24), char((v >> 16) & 0xff), char((v >> 8) & 0xff), char(v & 0xff)};
}

std::string image_fixture() {
    std::string s = be32(0x803) + be32(2) + be32(2) + be32(2);
    for (char c = 0; c < 8; ++c) {
        s.push_back(c);
    }
    return s;
}

RawImages parse_images(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_idx_images(is);
}

std::vector<std::uint8_t> parse_labels(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_idx_labels(is);
}

} // namespace

TEST(Idx, ParsesSmallFixture) {
    const RawImages r = parse_images(image_fixture());
    EXPECT_EQ(r.count, 2u);
    EXPECT_EQ(r.height, 2u);
    EXPECT_EQ(r.width, 2u);
    EXPECT_EQ(r.image(1)[0], 4);
    EXPECT_EQ(r.image(1)[3], 7);
}

TEST(Idx, RejectsWrongMagic) {
    std::string bytes = image_fixture();
    bytes[3] = 0x01;
    try {
        parse_images(bytes);
        FAIL();
    } catch (const IdxError& e) {
        EXPECT_EQ(e.kind(), IdxError::Kind::bad_magic);
    }
    EXPECT_THROW(parse_labels(image_fixture()), IdxError);
}

TEST(Idx, TruncationReportsLengths) {
    const std::string bytes = image_fixture().substr(0, 16 + 5);
    try {
        parse_images(bytes);
        FAIL();
    } catch (const IdxError& e) {
        EXPECT_EQ(e.kind(), IdxError::Kind::truncated);
        const std::string what = e.what();
        EXPECT_NE(what.find('8'), std::string::npos) << what;
        EXPECT_NE(what.find('5'), std::string::npos) << what;
    }
    EXPECT_THROW(parse_images(image_fixture().substr(0, 10)), IdxError);
}

TEST(Idx, Labels) {
    const auto labels = parse_labels(be32(0x801) + be32(2) + std::string{0, 46});
    EXPECT_EQ(labels, (std::vector<std::uint8_t>{0, 46}));
    EXPECT_TRUE(parse_labels(be32(0x801) + be32(0)).empty());
    EXPECT_EQ(parse_images(be32(0x803) + be32(0) + be32(28) + be32(28)).count, 0u);
}

TEST(Idx, RoundTrip) {
    RawImages r{3, 4, 5, {}};
    std::mt19937 rng(1);
    for (int i = 0; i < 60; ++i) {
        r.pixels.push_back(static_cast<std::uint8_t>(rng()));
    }
    std::ostringstream os(std::ios::binary);
    write_idx_images(os, r);
    const RawImages back = parse_images(os.str());
    EXPECT_EQ(back.pixels, r.pixels);
    EXPECT_EQ(back.height, 4u);
    EXPECT_EQ(back.width, 5u);

    const std::vector<std::uint8_t> labels{3, 1, 4};
    std::ostringstream ls(std::ios::binary);
    write_idx_labels(ls, labels);
    EXPECT_EQ(parse_labels(ls.str()), labels);
}

TEST(Idx, MissingFileNamesPath) {
    try {
        read_idx_labels(std::filesystem::path("/nonexistent/labels.idx"));
        FAIL();
    } catch (const IdxError& e) {
        EXPECT_EQ(e.kind(), IdxError::Kind::io);
        EXPECT_NE(std::string(e.what()).find("/nonexistent/labels.idx"), std::string::npos);
    }
}

TEST(Preprocess, ConstantImage) {
    const std::vector<std::uint8_t> px(128 * 128, 128);
    for (float v : preprocess_image(px, 128, 128)) {
        EXPECT_FLOAT_EQ(v, 128.0f / 255.0f);
    }
}

TEST(Preprocess, SingleBrightBlock) {
    std::vector<std::uint8_t> px(128 * 128, 0);
    for (std::size_t r = 8; r < 12; ++r) {
        for (std::size_t c = 20; c < 24; ++c) {
            px[r * 128 + c] = 255;
        }
    }
    const auto out = preprocess_image(px, 128, 128);
    ASSERT_EQ(out.size(), 1024u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_FLOAT_EQ(out[i], i == 2 * 32 + 5 ? 1.0f : 0.0f) << i;
    }
}

TEST(Preprocess, MatchesBlockMeanOracle) {
    std::mt19937 rng(7);
    std::vector<std::uint8_t> px(64 * 64);
    for (auto& p : px) {
        p = static_cast<std::uint8_t>(rng());
    }
    const auto out = preprocess_image(px, 64, 64);
    const auto expected = oracle::block_mean(px, 64, 64, 32);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_FLOAT_EQ(out[i], static_cast<float>(expected[i]));
        EXPECT_GE(out[i], 0.0f);
        EXPECT_LE(out[i], 1.0f);
    }
}

TEST(Preprocess, NonAlignedSizesStayInRangeAndPreserveMean) {
    std::mt19937 rng(8);
    std::vector<std::uint8_t> px(50 * 45);
    double sum = 0.0;
    for (auto& p : px) {
        p = static_cast<std::uint8_t>(rng());
        sum += p;
    }
    const auto out = preprocess_image(px, 50, 45);
    double out_sum = 0.0;
    for (float v : out) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        out_sum += v;
    }
    EXPECT_NEAR(out_sum / out.size(), sum / px.size() / 255.0, 1e-5);
}

TEST(Preprocess, IdentityAtTargetSize) {
    std::vector<std::uint8_t> px(32 * 32);
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(i % 256);
    }
    const auto out = preprocess_image(px, 32, 32);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_FLOAT_EQ(out[i], float(px[i]) / 255.0f);
    }
}

TEST(Preprocess, RejectsUpscaling) {
    const std::vector<std::uint8_t> px(16 * 16, 0);
    EXPECT_THROW(preprocess_image(px, 16, 16), InputError);
    EXPECT_THROW(preprocess_image(std::vector<std::uint8_t>(10, 0), 16, 16), InputError);
}

TEST(Preprocess, Invert) {
    const std::vector<std::uint8_t> px(64 * 64, 255);
    for (float v : preprocess_image(px, 64, 64, {32, true})) {
        EXPECT_EQ(v, 0.0f);
    }
}

TEST(LabelMap, Balanced47) {
    const auto map = label_map_balanced47();
    ASSERT_EQ(map.size(), 47u);
    EXPECT_EQ(map[0], "0");
    EXPECT_EQ(map[10], "A");
    EXPECT_EQ(map[35], "Z");
    EXPECT_EQ(map[36], "a");
    EXPECT_EQ(map[46], "t");
    EXPECT_EQ(std::set<std::string>(map.begin(), map.end()).size(), 47u);
    EXPECT_EQ(default_label_map(10).back(), "9");
    EXPECT_THROW(default_label_map(48), ConfigError);
}

TEST(LabelMap, ReadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "htr_label_map.txt";
    std::ofstream(path) << "x\ny\nz\n";
    EXPECT_EQ(read_label_map(path, 3), (std::vector<std::string>{"x", "y", "z"}));
    EXPECT_THROW(read_label_map(path, 4), CompatibilityError);
    std::filesystem::remove(path);
}

TEST(Dataset, RejectsOutOfRangeLabel) {
    RawImages raw{1, 32, 32, std::vector<std::uint8_t>(1024, 0)};
    const std::vector<std::uint8_t> ok{46};
    EXPECT_NO_THROW(preprocess(raw, ok, label_map_balanced47()));
    const std::vector<std::uint8_t> bad{47};
    EXPECT_THROW(preprocess(raw, bad, label_map_balanced47()), InputError);
    const std::vector<std::uint8_t> two{1, 2};
    EXPECT_THROW(preprocess(raw, two, label_map_balanced47()), InputError);
}

TEST(Dataset, BatchAndQuantizeRoundTrip) {
    RawImages raw{3, 32, 32, {}};
    for (std::size_t i = 0; i < 3 * 1024; ++i) {
        raw.pixels.push_back(static_cast<std::uint8_t>(i * 7));
    }
    const std::vector<std::uint8_t> labels{0, 1, 2};
    const LabeledDataset data = preprocess(raw, labels, default_label_map(3));
    const std::vector<std::size_t> rows{2, 0};
    const Tensor b = data.batch(rows);
    EXPECT_EQ(b.shape(), (Shape{2, 1, 32, 32}));
    EXPECT_FLOAT_EQ(b.at(0, 0, 0, 1), raw.image(2)[1] / 255.0f);
    EXPECT_EQ(data.labels_of(rows), (std::vector<std::size_t>{2, 0}));
    EXPECT_EQ(quantize(data).pixels, raw.pixels);
}

TEST(Split, SeventyThirtyOfFullDataset) {
    const SplitIndices s = split(101784, 0.7, 42);
    EXPECT_EQ(s.train.size(), 71249u);
    EXPECT_EQ(s.test.size(), 30535u);
    const SplitIndices small = split(10, 0.7, 1);
    EXPECT_EQ(small.train.size(), 7u);
    EXPECT_EQ(small.test.size(), 3u);
}

TEST(Split, PartitionProperty) {
    for (std::size_t n = 2; n <= 1000; n += 7) {
        const SplitIndices s = split(n, 0.7, n);
        EXPECT_EQ(s.train.size() + s.test.size(), n);
        std::vector<std::size_t> all = s.train;
        all.insert(all.end(), s.test.begin(), s.test.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_EQ(all[i], i) << "n=" << n;
        }
    }
}

TEST(Split, SeedDeterminism) {
    const SplitIndices a = split(500, 0.7, 3);
    const SplitIndices b = split(500, 0.7, 3);
    const SplitIndices c = split(500, 0.7, 4);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_NE(a.test, c.test);
}

TEST(Split, RejectsDegenerateInput) {
    EXPECT_THROW(split(1, 0.7, 1), InputError);
    EXPECT_THROW(split(10, 1.5, 1), InputError);
}

TEST(Split, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "htr_split.txt";
    const SplitIndices s = split(50, 0.7, 9);
    write_split(path, s);
    const SplitIndices back = read_split(path, 50);
    EXPECT_EQ(back.train, s.train);
    EXPECT_EQ(back.test, s.test);
    EXPECT_EQ(back.seed, 9u);
    EXPECT_THROW(read_split(path, 40), Error);
    std::filesystem::remove(path);
}

TEST(Pgm, ParsesBinaryWithComment) {
    std::string bytes = "P5\n# scanned\n3 2\n255\n";
    bytes += std::string{1, 2, 3, 4, 5, 6};
    std::istringstream is(bytes, std::ios::binary);
    const RawImages r = read_pgm(is);
    EXPECT_EQ(r.width, 3u);
    EXPECT_EQ(r.height, 2u);
    EXPECT_EQ(r.pixels, (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6}));
}

TEST(Pgm, RejectsAsciiVariant) {
    std::istringstream is("P2\n2 1\n255\n0 255\n");
    try {
        read_pgm(is);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("P5"), std::string::npos) << e.what();
    }
}

TEST(Pgm, RejectsTruncatedPixels) {
    std::istringstream is(std::string("P5\n4 4\n255\n") + std::string(10, 'x'), std::ios::binary);
    EXPECT_THROW(read_pgm(is), ParseError);
}

TEST(Pgm, WriteReadRoundTrip) {
    const std::vector<std::uint8_t> px{0, 255, 128, 64};
    std::ostringstream os(std::ios::binary);
    write_pgm(os, px, 2, 2);
    std::istringstream is(os.str(), std::ios::binary);
    EXPECT_EQ(read_pgm(is).pixels, px);
}
