#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "emt/annotations.hpp"
#include "emt/util.hpp"

using namespace emt;

namespace {

// Independent oracle: scan every sample index in the whole track and test its
// timestamp against the half-open window, instead of computing index bounds.
double brute_segment_mean(const std::vector<double>& values, int64_t period, int64_t start,
                          int64_t end) {
    double acc = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < values.size(); ++i) {
        const int64_t t = static_cast<int64_t>(i) * period;
        if (t >= start && t < end) {
            acc += values[i];
            ++n;
        }
    }
    EXPECT_GT(n, 0);
    return acc / static_cast<double>(n);
}

AnnotationTrack make_track(std::vector<double> values, int period = 40) {
    AnnotationTrack t;
    t.movie_id = "TST";
    t.viewer_id = 1;
    t.sample_period_ms = period;
    t.values = std::move(values);
    return t;
}

SegmentSpec seg(int64_t start, int64_t end) {
    SegmentSpec s;
    s.movie_id = "TST";
    s.start_ms = start;
    s.end_ms = end;
    return s;
}

std::string write_tmp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::path(testing::TempDir()) / name;
    write_file(path.string(), content);
    return path.string();
}

}  // namespace

TEST(SegmentMean, MatchesBruteForceOnRandomWindows) {
    Rng rng(9);
    for (int c = 0; c < 200; ++c) {
        std::vector<double> values(20 + rng.uniform_int(60));
        for (auto& v : values) v = rng.uniform(-1.0, 1.0);
        const int64_t max_ms = static_cast<int64_t>(values.size()) * 40;
        const int64_t start = static_cast<int64_t>(rng.uniform_int(max_ms - 80));
        const int64_t end = start + 41 + static_cast<int64_t>(rng.uniform_int(
                                              static_cast<uint64_t>(max_ms - start - 40)));
        const AnnotationTrack track = make_track(values);
        const double got = segment_mean(track, seg(start, std::min(end, max_ms)));
        const double want = brute_segment_mean(values, 40, start, std::min(end, max_ms));
        EXPECT_DOUBLE_EQ(got, want);
    }
}

TEST(SegmentMean, HalfOpenBoundaries) {
    // samples at 0, 40, 80, 120 ms
    const AnnotationTrack track = make_track({1.0, 2.0, 4.0, 8.0});
    EXPECT_DOUBLE_EQ(segment_mean(track, seg(0, 40)), 1.0);    // only t=0
    EXPECT_DOUBLE_EQ(segment_mean(track, seg(0, 41)), 1.5);    // t=0 and t=40
    EXPECT_DOUBLE_EQ(segment_mean(track, seg(40, 80)), 2.0);   // start inclusive
    EXPECT_DOUBLE_EQ(segment_mean(track, seg(39, 80)), 2.0);   // 39 rounds up to t=40
    EXPECT_DOUBLE_EQ(segment_mean(track, seg(0, 160)), 3.75);
}

TEST(SegmentMean, AdjacentSegmentsPartitionSamples) {
    Rng rng(5);
    std::vector<double> values(50);
    for (auto& v : values) v = rng.uniform(-1.0, 1.0);
    const AnnotationTrack track = make_track(values);
    // cut points on and off the grid
    const std::vector<int64_t> cuts = {0, 120, 250, 777, 1240, 2000};
    double weighted = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const int64_t lo = cuts[i], hi = cuts[i + 1];
        const int64_t i0 = (lo + 39) / 40, i1 = (hi + 39) / 40;
        weighted += segment_mean(track, seg(lo, hi)) * static_cast<double>(i1 - i0);
        count += i1 - i0;
    }
    ASSERT_EQ(count, 50);
    double whole = segment_mean(track, seg(0, 2000)) * 50.0;
    EXPECT_NEAR(weighted, whole, 1e-9);
}

TEST(SegmentMean, ErrorsNameTheSegment) {
    const AnnotationTrack track = make_track({1.0, 1.0});
    try {
        segment_mean(track, seg(0, 200));
        FAIL() << "expected error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("[0, 200)"), std::string::npos);
    }
    EXPECT_THROW(segment_mean(track, seg(41, 79)), std::invalid_argument);  // no sample inside
}

TEST(Binarize, StrictlyAboveThreshold) {
    EXPECT_FALSE(binarize(0.0));
    EXPECT_TRUE(binarize(1e-12));
    EXPECT_FALSE(binarize(-0.3));
    EXPECT_FALSE(binarize(0.5, 0.5));
    EXPECT_TRUE(binarize(0.51, 0.5));
}

TEST(AverageViewer, MaskAware) {
    EXPECT_DOUBLE_EQ(average_viewer({1.0, 3.0}, {1, 1}), 2.0);
    EXPECT_DOUBLE_EQ(average_viewer({1.0, 3.0}, {0, 1}), 3.0);
    EXPECT_THROW(average_viewer({1.0, 3.0}, {0, 0}), std::invalid_argument);
    EXPECT_THROW(average_viewer({1.0}, {1, 1}), std::invalid_argument);
}

TEST(AverageViewer, CommutesWithSegmentMean) {
    Rng rng(13);
    for (int c = 0; c < 50; ++c) {
        const size_t n = 30;
        std::vector<AnnotationTrack> tracks;
        for (int v = 0; v < 4; ++v) {
            std::vector<double> vals(n);
            for (auto& x : vals) x = rng.uniform(-1.0, 1.0);
            tracks.push_back(make_track(std::move(vals)));
        }
        // average samples first, then take the segment mean
        std::vector<double> avg(n, 0.0);
        for (const auto& t : tracks)
            for (size_t i = 0; i < n; ++i) avg[i] += t.values[i] / 4.0;
        const auto window = seg(77, 1111);
        const double path_a = segment_mean(make_track(avg), window);
        // segment means first, then average across viewers
        std::vector<double> means;
        for (const auto& t : tracks) means.push_back(segment_mean(t, window));
        const double path_b = average_viewer(means, {1, 1, 1, 1});
        EXPECT_NEAR(path_a, path_b, 1e-12);
    }
}

TEST(AnnotationCsv, RoundTrip) {
    AnnotationTrack track = make_track({-1.0, 0.25, 0.5, 1.0});
    const std::string text = format_annotation_csv(track);
    EXPECT_EQ(text.substr(0, 20), "frame_index,valence\n");
    const std::string path = write_tmp("rt.csv", text);
    const AnnotationTrack back = parse_annotation_csv(path, "TST", 1, 40);
    EXPECT_EQ(back.values, track.values);  // %.6f is exact for these values
}

TEST(AnnotationCsv, ErrorsCarryPathAndLine) {
    auto expect_parse_error = [](const std::string& name, const std::string& content,
                                 const std::string& needle) {
        const std::string path = write_tmp(name, content);
        try {
            parse_annotation_csv(path, "TST", 1, 40);
            FAIL() << "expected ParseError for " << name;
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            EXPECT_NE(msg.find(path), std::string::npos) << msg;
            EXPECT_NE(msg.find(needle), std::string::npos) << msg;
        }
    };
    expect_parse_error("bad_header.csv", "frame,valence\n0,0.5\n", ":1");
    expect_parse_error("bad_order.csv", "frame_index,valence\n0,0.5\n2,0.5\n", ":3");
    expect_parse_error("bad_range.csv", "frame_index,valence\n0,1.5\n", ":2");
    expect_parse_error("bad_value.csv", "frame_index,valence\n0,abc\n", ":2");
    expect_parse_error("empty.csv", "frame_index,valence\n", "no annotation samples");
}

TEST(Srt, TimestampRoundTrip) {
    EXPECT_EQ(detail::format_srt_timestamp(0), "00:00:00,000");
    EXPECT_EQ(detail::format_srt_timestamp(3723004), "01:02:03,004");
    EXPECT_EQ(detail::parse_srt_timestamp("01:02:03,004", "p", 1), 3723004);
}

TEST(Srt, ParseAndFormatRoundTrip) {
    const std::string text =
        "1\n00:00:00,000 --> 00:00:01,500\nhello world\n\n"
        "2\n00:00:01,500 --> 00:00:03,000\nsecond line\nwith two rows\n\n";
    const std::string path = write_tmp("ok.srt", text);
    const auto segs = parse_srt(path, "TST");
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[0].start_ms, 0);
    EXPECT_EQ(segs[0].end_ms, 1500);
    EXPECT_EQ(segs[0].text, "hello world");
    EXPECT_EQ(segs[1].text, "second line with two rows");

    const std::string again = format_srt(segs);
    const auto back = parse_srt(write_tmp("ok2.srt", again), "TST");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].start_ms, segs[1].start_ms);
    EXPECT_EQ(back[1].text, segs[1].text);
}

TEST(Srt, RejectsMalformedFiles) {
    auto expect_fail = [](const std::string& name, const std::string& content) {
        const std::string path = write_tmp(name, content);
        EXPECT_THROW(parse_srt(path, "TST"), ParseError) << name;
    };
    expect_fail("bad_index.srt", "2\n00:00:00,000 --> 00:00:01,000\nx\n\n");
    expect_fail("bad_arrow.srt", "1\n00:00:00,000 -> 00:00:01,000\nx\n\n");
    expect_fail("bad_span.srt", "1\n00:00:02,000 --> 00:00:01,000\nx\n\n");
    expect_fail("bad_overlap.srt",
                "1\n00:00:00,000 --> 00:00:02,000\nx\n\n"
                "2\n00:00:01,000 --> 00:00:03,000\ny\n\n");
    expect_fail("bad_stamp.srt", "1\n00:00:00.000 --> 00:00:01,000\nx\n\n");
}
