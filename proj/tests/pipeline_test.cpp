#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "emt/text_pipeline.hpp"
#include "emt/util.hpp"
#include "emt/visual_features.hpp"

using namespace emt;

namespace {

std::string write_tmp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::path(testing::TempDir()) / name;
    write_file(path.string(), content);
    return path.string();
}

VisualFeatureSet make_set(size_t chunks, size_t dim, int window = 16, int stride = 8) {
    VisualFeatureSet s;
    s.movie_id = "TST";
    s.num_chunks = chunks;
    s.feature_dim = dim;
    s.window = window;
    s.stride = stride;
    s.data.resize(chunks * dim);
    for (size_t i = 0; i < s.data.size(); ++i)
        s.data[i] = static_cast<float>(i % 17) * 0.25f - 1.0f;
    s.validate();
    return s;
}

}  // namespace

TEST(Tokenize, LowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(tokenize("Hello, World!"), (std::vector<std::string>{"hello", "world"}));
    EXPECT_EQ(tokenize("it's a2b--c"), (std::vector<std::string>{"it", "s", "a2b", "c"}));
    EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(Vocabulary, FrequencyOrderWithTieBreak) {
    // "good" twice, "day"/"night" once each: day < night alphabetically
    const Vocabulary v = build_vocab({"good day", "good night"});
    EXPECT_EQ(v.size(), 5u);  // <pad>, <unk>, good, day, night
    EXPECT_EQ(v.id_of("good"), 2);
    EXPECT_EQ(v.id_of("day"), 3);
    EXPECT_EQ(v.id_of("night"), 4);
    EXPECT_EQ(v.id_of("missing"), kUnkId);
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"good", "day", "night"}));
}

TEST(Vocabulary, MinCountFilters) {
    const Vocabulary v = build_vocab({"rare common", "common"}, 2);
    EXPECT_EQ(v.size(), 3u);
    EXPECT_EQ(v.id_of("common"), 2);
    EXPECT_EQ(v.id_of("rare"), kUnkId);
}

TEST(Vocabulary, RoundTripThroughTokenList) {
    const Vocabulary v = build_vocab({"b a a"});
    const Vocabulary w(v.tokens());
    for (const auto& tok : v.tokens()) EXPECT_EQ(w.id_of(tok), v.id_of(tok));
    EXPECT_EQ(w.size(), v.size());
}

TEST(TokenizePad, ExactLengthTruncateAndPad) {
    const Vocabulary v = build_vocab({"a b c"});
    const auto short_ids = tokenize_pad("a b", v);
    ASSERT_EQ(short_ids.size(), kSeqLen);
    EXPECT_EQ(short_ids[0], v.id_of("a"));
    EXPECT_EQ(short_ids[1], v.id_of("b"));
    for (size_t i = 2; i < kSeqLen; ++i) EXPECT_EQ(short_ids[i], kPadId);

    std::string long_text;
    for (int i = 0; i < 30; ++i) long_text += "a ";
    long_text += "b";
    const auto long_ids = tokenize_pad(long_text, v);
    ASSERT_EQ(long_ids.size(), kSeqLen);
    for (int id : long_ids) EXPECT_EQ(id, v.id_of("a"));  // first 18 kept
}

TEST(Fvec, RoundTrip) {
    const VisualFeatureSet set = make_set(5, 7);
    const std::string path = write_tmp("rt.fvec", format_fvec(set));
    const VisualFeatureSet back = read_fvec(path, "TST");
    EXPECT_EQ(back.num_chunks, set.num_chunks);
    EXPECT_EQ(back.feature_dim, set.feature_dim);
    EXPECT_EQ(back.window, set.window);
    EXPECT_EQ(back.stride, set.stride);
    EXPECT_EQ(back.data, set.data);
}

TEST(Fvec, RejectsMalformedFiles) {
    const VisualFeatureSet set = make_set(2, 3);
    const std::string good = format_fvec(set);
    EXPECT_THROW(read_fvec(write_tmp("magic.fvec", "NOPE1\n" + good.substr(6)), "TST"),
                 ParseError);
    EXPECT_THROW(read_fvec(write_tmp("trunc.fvec", good.substr(0, good.size() - 4)), "TST"),
                 ParseError);
    EXPECT_THROW(read_fvec(write_tmp("extra.fvec", good + "xx"), "TST"), ParseError);
    EXPECT_THROW(
        read_fvec(write_tmp("header.fvec", "FVEC1\n2 3 16\n" + good.substr(13)), "TST"),
        ParseError);
}

TEST(VisualSegment, ChunkEnumerationOracle) {
    // 40 frames at window 16 stride 8: a segment spanning frames [0, 40)
    // overlaps chunks starting at 0, 8, 16, 24 (chunk 4 starts at 32 and is
    // included too since 32 < 40)
    const VisualFeatureSet set = make_set(5, 2);
    // 40 frames at 25 fps = 1600 ms
    SegmentSpec seg;
    seg.movie_id = "TST";
    seg.start_ms = 0;
    seg.end_ms = 1600;
    const auto got = segment_visual_feature(set, seg);
    std::vector<double> want(set.feature_dim, -1e30);
    for (size_t c = 0; c < 5; ++c)
        for (size_t j = 0; j < set.feature_dim; ++j)
            want[j] = std::max(want[j], static_cast<double>(set.chunk(c)[j]));
    EXPECT_EQ(got, want);
}

TEST(VisualSegment, MatchesBruteForceOnRandomWindows) {
    Rng rng(21);
    const VisualFeatureSet set = make_set(12, 4);
    for (int c = 0; c < 100; ++c) {
        const int64_t start = static_cast<int64_t>(rng.uniform_int(3500));
        const int64_t end = start + 200 + static_cast<int64_t>(rng.uniform_int(1500));
        SegmentSpec seg;
        seg.movie_id = "TST";
        seg.start_ms = start;
        seg.end_ms = end;
        // frame window via the same floor/ceil convention, max via full scan
        const int64_t f0 = start * 25 / 1000;
        const int64_t f1 = (end * 25 + 999) / 1000;
        std::vector<double> want;
        for (size_t ch = 0; ch < set.num_chunks; ++ch) {
            const int64_t c0 = static_cast<int64_t>(ch) * set.stride;
            if (c0 >= f1 || c0 + set.window <= f0) continue;
            if (want.empty()) want.assign(set.feature_dim, -1e30);
            for (size_t j = 0; j < set.feature_dim; ++j)
                want[j] = std::max(want[j], static_cast<double>(set.chunk(ch)[j]));
        }
        if (want.empty()) {
            EXPECT_THROW(segment_visual_feature(set, seg), std::invalid_argument);
        } else {
            EXPECT_EQ(segment_visual_feature(set, seg), want);
        }
    }
}

TEST(VisualSegment, NoOverlapNamesSegment) {
    const VisualFeatureSet set = make_set(2, 2);  // covers frames [0, 24)
    SegmentSpec seg;
    seg.movie_id = "TST";
    seg.start_ms = 5000;
    seg.end_ms = 6000;
    try {
        segment_visual_feature(set, seg);
        FAIL() << "expected error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("[5000, 6000)"), std::string::npos);
    }
}
