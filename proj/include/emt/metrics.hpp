#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "emt/util.hpp"

namespace emt {

// Percentage of present samples classified correctly; predicted positive iff
// the probability is strictly above the threshold.
inline double accuracy(const std::vector<double>& predictions,
                       const std::vector<uint8_t>& labels, const std::vector<uint8_t>& mask,
                       double threshold = 0.5) {
    if (predictions.size() != labels.size() || predictions.size() != mask.size())
        throw std::invalid_argument("accuracy: length mismatch");
    size_t present = 0, correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (!mask[i]) continue;
        ++present;
        const uint8_t pred = predictions[i] > threshold ? 1 : 0;
        if (pred == (labels[i] ? 1 : 0)) ++correct;
    }
    if (present == 0) throw std::invalid_argument("accuracy: mask has no present entries");
    return 100.0 * static_cast<double>(correct) / static_cast<double>(present);
}

struct ReferenceAccuracies {
    double random = 0.0;
    double positive = 0.0;  // equals the positive label fraction, in percent
    double negative = 0.0;
};

// Accuracies of the three label-only baselines. Positive/negative are exact
// label fractions; random is the realized accuracy of a seeded fair coin.
inline ReferenceAccuracies reference_classifiers(const std::vector<uint8_t>& labels,
                                                 const std::vector<uint8_t>& mask,
                                                 uint64_t seed) {
    if (labels.size() != mask.size())
        throw std::invalid_argument("reference_classifiers: length mismatch");
    size_t present = 0, pos = 0, coin_correct = 0;
    Rng rng(seed);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i]) continue;
        ++present;
        const bool y = labels[i] != 0;
        if (y) ++pos;
        if (rng.coin() == y) ++coin_correct;
    }
    if (present == 0)
        throw std::invalid_argument("reference_classifiers: mask has no present entries");
    ReferenceAccuracies out;
    const double n = static_cast<double>(present);
    out.positive = 100.0 * static_cast<double>(pos) / n;
    out.negative = 100.0 * static_cast<double>(present - pos) / n;
    out.random = 100.0 * static_cast<double>(coin_correct) / n;
    return out;
}

// Sample Pearson correlation. Zero variance is an error: the coefficient is
// undefined there, and silently returning 0 would poison averaged matrices.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    const size_t n = x.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: undefined for zero-variance input");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace emt
