#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "emt/analysis.hpp"
#include "emt/synth.hpp"

using namespace emt;

namespace {

Corpus rho_corpus(double rho, uint64_t seed, int segments = 300) {
    SynthConfig sc;
    sc.seed = seed;
    sc.movies = 2;
    sc.segments_per_movie = segments;
    sc.viewers = 4;
    sc.correlation = rho;
    sc.vocab_size = 15;
    sc.feature_dim = 4;
    const auto dir = std::filesystem::path(testing::TempDir()) /
                     ("an_corpus_" + std::to_string(seed) + "_" +
                      std::to_string(static_cast<int>(rho * 100)));
    synth_generate(sc, dir.string());
    return build_dataset((dir / "manifest.json").string());
}

}  // namespace

TEST(Correlation, MatrixShapeSymmetryAndDiagonal) {
    const Corpus corpus = rho_corpus(0.7, 41, 40);
    const CorrelationResult r = correlation_analysis(corpus);
    const size_t n = corpus.target_count();
    ASSERT_EQ(r.target_names.size(), n);
    EXPECT_EQ(r.target_names.back(), "V_avg");
    ASSERT_EQ(r.per_movie.size(), corpus.movie_ids.size());
    for (const auto& m : r.per_movie) {
        for (size_t i = 0; i < n; ++i) {
            EXPECT_EQ(m[i][i], 1.0);
            for (size_t j = 0; j < n; ++j) {
                EXPECT_EQ(m[i][j], m[j][i]);
                EXPECT_LE(std::abs(m[i][j]), 1.0 + 1e-12);
            }
        }
    }
    // averaged matrix is the elementwise mean
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (const auto& m : r.per_movie) acc += m[i][j];
            EXPECT_NEAR(r.average[i][j], acc / static_cast<double>(r.per_movie.size()), 1e-12);
        }
}

TEST(Correlation, HigherRhoGivesHigherViewerAgreement) {
    const CorrelationResult hi = correlation_analysis(rho_corpus(0.9, 1001));
    const CorrelationResult lo = correlation_analysis(rho_corpus(0.1, 1001));
    EXPECT_GT(hi.mean_offdiag_viewer_correlation(), lo.mean_offdiag_viewer_correlation());
}

TEST(Correlation, BinaryModeUsesLabels) {
    const Corpus corpus = rho_corpus(0.95, 77, 200);
    const CorrelationResult cont = correlation_analysis(corpus, CorrelationMode::kContinuous);
    const CorrelationResult bin = correlation_analysis(corpus, CorrelationMode::kBinary);
    EXPECT_EQ(bin.mode, CorrelationMode::kBinary);
    // binarization discards information, so binary agreement differs from
    // continuous agreement but both stay strongly positive at high rho
    EXPECT_GT(bin.mean_offdiag_viewer_correlation(), 0.3);
    EXPECT_GT(cont.mean_offdiag_viewer_correlation(), 0.6);
    EXPECT_THROW(correlation_mode_from_string("x"), std::invalid_argument);
    EXPECT_EQ(correlation_mode_from_string("binary"), CorrelationMode::kBinary);
}

TEST(Correlation, TooFewSegmentsIsAnError) {
    Corpus corpus = rho_corpus(0.5, 88, 10);
    // keep a single segment of the first movie
    Corpus cut;
    cut.viewer_count = corpus.viewer_count;
    cut.feature_dim = corpus.feature_dim;
    cut.threshold = corpus.threshold;
    cut.movie_ids = corpus.movie_ids;
    cut.samples.push_back(corpus.samples[0]);
    for (const auto& s : corpus.samples)
        if (s.segment.movie_id == corpus.movie_ids[1]) cut.samples.push_back(s);
    try {
        correlation_analysis(cut);
        FAIL() << "expected error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find(corpus.movie_ids[0]), std::string::npos);
    }
}

TEST(Histograms, PartitionPresentSamples) {
    const Corpus corpus = rho_corpus(0.4, 21, 60);
    const HistogramResult h = label_histograms(corpus);
    ASSERT_EQ(h.movie_ids.size(), corpus.movie_ids.size());
    for (size_t m = 0; m < h.movie_ids.size(); ++m) {
        const auto idx = samples_of_movies(corpus, {h.movie_ids[m]});
        for (size_t t = 0; t < corpus.target_count(); ++t) {
            size_t present = 0, pos = 0;
            for (size_t i : idx) {
                if (!corpus.samples[i].target_present(t)) continue;
                ++present;
                pos += corpus.samples[i].target_label(t) ? 1 : 0;
            }
            EXPECT_EQ(h.positive[m][t] + h.negative[m][t], present);
            EXPECT_EQ(h.positive[m][t], pos);
        }
    }
}

TEST(AnalysisCsv, Layouts) {
    const Corpus corpus = rho_corpus(0.6, 31, 30);
    const CorrelationResult r = correlation_analysis(corpus);
    const std::string long_csv = correlation_csv(r);
    EXPECT_EQ(long_csv.substr(0, long_csv.find('\n')), "movie,target_row,target_col,pearson");
    EXPECT_NE(long_csv.find("average,V1,V1,1.000000"), std::string::npos);

    const std::string grid = correlation_matrix_csv(r);
    const std::string header = grid.substr(0, grid.find('\n'));
    EXPECT_EQ(header, "target,V1,V2,V3,V4,V_avg");
    // one row per target plus the header
    EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 6);

    const std::string hist = histogram_csv(label_histograms(corpus));
    EXPECT_EQ(hist.substr(0, hist.find('\n')), "movie,target,positive,negative");
}
