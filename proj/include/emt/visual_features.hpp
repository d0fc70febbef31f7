#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "emt/annotations.hpp"
#include "emt/util.hpp"

namespace emt {

// Precomputed per-chunk video features for one movie. Chunk c covers frames
// [c*stride, c*stride + window); each row is already spatially pooled by the
// external extractor, so pooling here is purely temporal.
struct VisualFeatureSet {
    std::string movie_id;
    size_t num_chunks = 0;
    size_t feature_dim = 0;
    int window = 16;  // frames per chunk
    int stride = 8;   // frames between chunk starts
    std::vector<float> data;  // num_chunks x feature_dim, row-major

    void validate() const {
        if (num_chunks == 0)
            throw std::invalid_argument("feature set " + movie_id + " has no chunks");
        if (feature_dim == 0)
            throw std::invalid_argument("feature set " + movie_id + " has feature_dim 0");
        if (window <= 0 || stride <= 0)
            throw std::invalid_argument("feature set " + movie_id +
                                        ": window and stride must be positive");
        if (data.size() != num_chunks * feature_dim)
            throw std::invalid_argument("feature set " + movie_id + ": data length mismatch");
    }

    const float* chunk(size_t c) const { return data.data() + c * feature_dim; }
};

// .fvec layout: "FVEC1\n", ASCII header "num_chunks feature_dim window
// stride\n", then num_chunks*feature_dim little-endian float32, row-major.

inline VisualFeatureSet read_fvec(const std::string& path, const std::string& movie_id) {
    const std::string content = read_file(path);
    constexpr const char* kMagic = "FVEC1\n";
    if (content.size() < 6 || content.compare(0, 6, kMagic) != 0)
        throw ParseError(path, "missing FVEC1 magic");
    const size_t header_end = content.find('\n', 6);
    if (header_end == std::string::npos) throw ParseError(path, "missing header line");
    const std::string header = content.substr(6, header_end - 6);

    VisualFeatureSet set;
    set.movie_id = movie_id;
    {
        long long nc = -1, fd = -1, win = -1, str = -1;
        char extra;
        if (std::sscanf(header.c_str(), "%lld %lld %lld %lld %c", &nc, &fd, &win, &str, &extra) !=
                4 ||
            nc <= 0 || fd <= 0 || win <= 0 || str <= 0)
            throw ParseError(path, "malformed header '" + header + "'");
        set.num_chunks = static_cast<size_t>(nc);
        set.feature_dim = static_cast<size_t>(fd);
        set.window = static_cast<int>(win);
        set.stride = static_cast<int>(str);
    }

    const size_t payload = set.num_chunks * set.feature_dim * 4;
    const size_t body = content.size() - (header_end + 1);
    if (body != payload)
        throw ParseError(path, "expected " + std::to_string(payload) + " payload bytes, found " +
                                   std::to_string(body));
    set.data.resize(set.num_chunks * set.feature_dim);
    le::Reader r(content);
    std::string skip;
    r.read_string(skip, header_end + 1);
    for (float& f : set.data)
        if (!r.read_f32(f)) throw ParseError(path, "truncated payload");
    set.validate();
    return set;
}

inline std::string format_fvec(const VisualFeatureSet& set) {
    set.validate();
    std::string out = "FVEC1\n";
    out += std::to_string(set.num_chunks) + " " + std::to_string(set.feature_dim) + " " +
           std::to_string(set.window) + " " + std::to_string(set.stride) + "\n";
    out.reserve(out.size() + set.data.size() * 4);
    for (float f : set.data) le::put_f32(out, f);
    return out;
}

// Elementwise temporal max over the chunks whose frame windows intersect the
// segment (overlap of at least one frame). Segment frames come from its
// millisecond span at the given frame rate.
inline std::vector<double> segment_visual_feature(const VisualFeatureSet& set,
                                                  const SegmentSpec& seg, int fps = 25) {
    if (fps <= 0) throw std::invalid_argument("segment_visual_feature: fps must be positive");
    const int64_t f0 = seg.start_ms * fps / 1000;               // floor
    const int64_t f1 = (seg.end_ms * fps + 999) / 1000;         // ceil, exclusive
    std::vector<double> out(set.feature_dim, 0.0);
    bool any = false;
    for (size_t c = 0; c < set.num_chunks; ++c) {
        const int64_t c0 = static_cast<int64_t>(c) * set.stride;
        const int64_t c1 = c0 + set.window;
        if (c0 >= f1 || c1 <= f0) continue;
        const float* row = set.chunk(c);
        if (!any) {
            for (size_t j = 0; j < set.feature_dim; ++j) out[j] = row[j];
            any = true;
        } else {
            for (size_t j = 0; j < set.feature_dim; ++j)
                out[j] = std::max(out[j], static_cast<double>(row[j]));
        }
    }
    if (!any)
        throw std::invalid_argument("segment " + seg.span_str() +
                                    " overlaps no feature chunks (movie has " +
                                    std::to_string(set.num_chunks) + ")");
    return out;
}

}  // namespace emt
