#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/dataset.hpp"
#include "emt/metrics.hpp"
#include "emt/util.hpp"

namespace emt {

enum class CorrelationMode { kContinuous, kBinary };

inline const char* to_string(CorrelationMode m) {
    return m == CorrelationMode::kContinuous ? "continuous" : "binary";
}
inline CorrelationMode correlation_mode_from_string(const std::string& s) {
    if (s == "continuous") return CorrelationMode::kContinuous;
    if (s == "binary") return CorrelationMode::kBinary;
    throw std::invalid_argument("unknown correlation mode '" + s +
                                "' (expected continuous or binary)");
}

// (V+1)x(V+1) Pearson matrices over targets (viewers plus the average
// viewer), one per movie plus their elementwise average.
struct CorrelationResult {
    std::vector<std::string> target_names;
    std::vector<std::string> movie_ids;
    std::vector<std::vector<std::vector<double>>> per_movie;  // [movie][i][j]
    std::vector<std::vector<double>> average;                 // [i][j]
    CorrelationMode mode = CorrelationMode::kContinuous;

    double mean_offdiag_viewer_correlation() const {
        const size_t viewers = target_names.size() - 1;  // exclude the average target
        double acc = 0.0;
        size_t n = 0;
        for (size_t i = 0; i < viewers; ++i)
            for (size_t j = i + 1; j < viewers; ++j) {
                acc += average[i][j];
                ++n;
            }
        if (n == 0) throw std::invalid_argument("need at least two viewers");
        return acc / static_cast<double>(n);
    }
};

// positive/negative label counts per (movie, target)
struct HistogramResult {
    std::vector<std::string> target_names;
    std::vector<std::string> movie_ids;
    std::vector<std::vector<size_t>> positive;  // [movie][target]
    std::vector<std::vector<size_t>> negative;
};

// Correlates segment-level signals between every target pair, per movie. In
// continuous mode the signal is the segment mean valence (pre-binarization);
// in binary mode it is the 0/1 label. Pairs are restricted to segments where
// both targets are present.
inline CorrelationResult correlation_analysis(const Corpus& corpus,
                                              CorrelationMode mode = CorrelationMode::kContinuous) {
    const size_t targets = corpus.target_count();
    CorrelationResult result;
    result.mode = mode;
    for (size_t t = 0; t < targets; ++t) result.target_names.push_back(corpus.target_name(t));
    result.movie_ids = corpus.movie_ids;

    auto signal = [&](const LabeledSample& s, size_t t) -> double {
        if (mode == CorrelationMode::kBinary) return s.target_label(t) ? 1.0 : 0.0;
        return t == static_cast<size_t>(corpus.viewer_count) ? s.avg_viewer_mean
                                                             : s.per_viewer_mean[t];
    };

    for (const auto& movie : corpus.movie_ids) {
        const auto idx = samples_of_movies(corpus, {movie});
        if (idx.size() < 2)
            throw std::invalid_argument("movie " + movie + " has " + std::to_string(idx.size()) +
                                        " segments; need at least 2 for correlation");
        std::vector<std::vector<double>> matrix(targets, std::vector<double>(targets, 1.0));
        for (size_t i = 0; i < targets; ++i)
            for (size_t j = i + 1; j < targets; ++j) {
                std::vector<double> x, y;
                for (size_t k : idx) {
                    const LabeledSample& s = corpus.samples[k];
                    if (!s.target_present(i) || !s.target_present(j)) continue;
                    x.push_back(signal(s, i));
                    y.push_back(signal(s, j));
                }
                double r;
                try {
                    r = pearson(x, y);
                } catch (const std::invalid_argument& e) {
                    throw std::invalid_argument("movie " + movie + ", targets " +
                                                corpus.target_name(i) + "/" +
                                                corpus.target_name(j) + ": " + e.what());
                }
                matrix[i][j] = r;
                matrix[j][i] = r;
            }
        result.per_movie.push_back(std::move(matrix));
    }

    result.average.assign(targets, std::vector<double>(targets, 0.0));
    for (const auto& m : result.per_movie)
        for (size_t i = 0; i < targets; ++i)
            for (size_t j = 0; j < targets; ++j) result.average[i][j] += m[i][j];
    for (auto& row : result.average)
        for (auto& v : row) v /= static_cast<double>(result.per_movie.size());
    return result;
}

inline HistogramResult label_histograms(const Corpus& corpus) {
    const size_t targets = corpus.target_count();
    HistogramResult result;
    for (size_t t = 0; t < targets; ++t) result.target_names.push_back(corpus.target_name(t));
    result.movie_ids = corpus.movie_ids;
    for (const auto& movie : corpus.movie_ids) {
        const auto idx = samples_of_movies(corpus, {movie});
        std::vector<size_t> pos(targets, 0), neg(targets, 0);
        for (size_t k : idx) {
            const LabeledSample& s = corpus.samples[k];
            for (size_t t = 0; t < targets; ++t) {
                if (!s.target_present(t)) continue;
                if (s.target_label(t))
                    ++pos[t];
                else
                    ++neg[t];
            }
        }
        result.positive.push_back(std::move(pos));
        result.negative.push_back(std::move(neg));
    }
    return result;
}

// long-form CSV: one row per (movie, target pair), average matrix last
inline std::string correlation_csv(const CorrelationResult& r) {
    std::string out = "movie,target_row,target_col,pearson\n";
    auto emit = [&](const std::string& movie, const std::vector<std::vector<double>>& m) {
        for (size_t i = 0; i < r.target_names.size(); ++i)
            for (size_t j = 0; j < r.target_names.size(); ++j)
                out += movie + "," + r.target_names[i] + "," + r.target_names[j] + "," +
                       fmt_f6(m[i][j]) + "\n";
    };
    for (size_t k = 0; k < r.movie_ids.size(); ++k) emit(r.movie_ids[k], r.per_movie[k]);
    emit("average", r.average);
    return out;
}

// grid CSV of the averaged matrix, ready for heatmap plotting
inline std::string correlation_matrix_csv(const CorrelationResult& r) {
    std::string out = "target";
    for (const auto& t : r.target_names) out += "," + t;
    out += "\n";
    for (size_t i = 0; i < r.target_names.size(); ++i) {
        out += r.target_names[i];
        for (size_t j = 0; j < r.target_names.size(); ++j) out += "," + fmt_f6(r.average[i][j]);
        out += "\n";
    }
    return out;
}

inline std::string histogram_csv(const HistogramResult& r) {
    std::string out = "movie,target,positive,negative\n";
    for (size_t k = 0; k < r.movie_ids.size(); ++k)
        for (size_t t = 0; t < r.target_names.size(); ++t)
            out += r.movie_ids[k] + "," + r.target_names[t] + "," +
                   std::to_string(r.positive[k][t]) + "," + std::to_string(r.negative[k][t]) +
                   "\n";
    return out;
}

}  // namespace emt
