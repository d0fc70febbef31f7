#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/annotations.hpp"
#include "emt/util.hpp"
#include "emt/visual_features.hpp"

namespace emt {

struct MovieEntry {
    std::string movie_id;
    std::vector<std::string> annotation_paths;  // per viewer; "" marks an absent viewer
    std::string subtitle_path;
    std::string feature_path;
};

struct DatasetManifest {
    int viewer_count = 0;
    int sample_period_ms = 40;
    std::vector<MovieEntry> movies;

    void validate() const {
        if (viewer_count <= 0) throw std::invalid_argument("manifest: viewer_count must be >= 1");
        if (sample_period_ms <= 0)
            throw std::invalid_argument("manifest: sample_period_ms must be positive");
        if (movies.empty()) throw std::invalid_argument("manifest: no movies");
        for (const auto& m : movies) {
            if (m.movie_id.empty()) throw std::invalid_argument("manifest: empty movie_id");
            if (m.annotation_paths.size() != static_cast<size_t>(viewer_count))
                throw std::invalid_argument("manifest: movie " + m.movie_id + " lists " +
                                            std::to_string(m.annotation_paths.size()) +
                                            " annotation files, expected " +
                                            std::to_string(viewer_count));
            bool any = false;
            for (const auto& p : m.annotation_paths) any = any || !p.empty();
            if (!any)
                throw std::invalid_argument("manifest: movie " + m.movie_id +
                                            " has no annotated viewer");
            if (m.subtitle_path.empty())
                throw std::invalid_argument("manifest: movie " + m.movie_id + " missing subtitles");
            if (m.feature_path.empty())
                throw std::invalid_argument("manifest: movie " + m.movie_id + " missing features");
        }
    }
};

// Manifest JSON:
// {
//   "viewer_count": 7,
//   "sample_period_ms": 40,
//   "movies": [
//     {"movie_id": "BMI", "annotations": ["bmi_v1.csv", ...],
//      "subtitles": "bmi.srt", "features": "bmi.fvec"},
//     ...
//   ]
// }
// Relative paths are resolved against the manifest's directory.
inline DatasetManifest parse_manifest(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, std::string("invalid JSON: ") + e.what());
    }
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty()) return p;
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    DatasetManifest m;
    try {
        m.viewer_count = doc.at("viewer_count").get<int>();
        m.sample_period_ms = doc.value("sample_period_ms", 40);
        for (const auto& jm : doc.at("movies")) {
            MovieEntry e;
            e.movie_id = jm.at("movie_id").get<std::string>();
            for (const auto& ja : jm.at("annotations")) {
                if (ja.is_null())
                    e.annotation_paths.push_back("");
                else
                    e.annotation_paths.push_back(resolve(ja.get<std::string>()));
            }
            e.subtitle_path = resolve(jm.at("subtitles").get<std::string>());
            e.feature_path = resolve(jm.at("features").get<std::string>());
            m.movies.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, std::string("manifest field error: ") + e.what());
    }
    m.validate();
    return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json doc;
    doc["viewer_count"] = m.viewer_count;
    doc["sample_period_ms"] = m.sample_period_ms;
    doc["movies"] = nlohmann::json::array();
    for (const auto& e : m.movies) {
        nlohmann::json jm;
        jm["movie_id"] = e.movie_id;
        jm["annotations"] = e.annotation_paths;
        jm["subtitles"] = e.subtitle_path;
        jm["features"] = e.feature_path;
        doc["movies"].push_back(jm);
    }
    return doc;
}

// One subtitle-aligned segment with labels for every target. Targets are
// indexed 0..V-1 for viewers 1..V and V for the average viewer. Token ids are
// not stored here: the vocabulary is a per-split artifact.
struct LabeledSample {
    SegmentSpec segment;
    std::vector<double> per_viewer_mean;
    std::vector<uint8_t> viewer_mask;      // 1 where the viewer annotated this movie
    double avg_viewer_mean = 0.0;
    std::vector<uint8_t> per_viewer_label;
    uint8_t avg_viewer_label = 0;
    std::vector<double> visual;            // temporally pooled chunk features

    // label/mask of target t; t == viewer_count selects the average viewer
    bool target_present(size_t t) const {
        return t == viewer_mask.size() ? true : viewer_mask[t] != 0;
    }
    uint8_t target_label(size_t t) const {
        return t == per_viewer_label.size() ? avg_viewer_label : per_viewer_label[t];
    }
};

struct Corpus {
    int viewer_count = 0;
    size_t feature_dim = 0;
    double threshold = 0.0;
    std::vector<std::string> movie_ids;  // manifest order
    std::vector<LabeledSample> samples;  // movie order, then start time

    size_t target_count() const { return static_cast<size_t>(viewer_count) + 1; }

    // display name of target t: V1..Vn then V_avg
    std::string target_name(size_t t) const {
        return t == static_cast<size_t>(viewer_count) ? "V_avg" : "V" + std::to_string(t + 1);
    }
};

// Parses every referenced file and assembles one LabeledSample per segment.
// Ordering is deterministic: manifest movie order, then segment start time
// (subtitle files are already sorted; parse_srt enforces it).
inline Corpus build_dataset(const DatasetManifest& manifest, double threshold = 0.0) {
    manifest.validate();
    Corpus corpus;
    corpus.viewer_count = manifest.viewer_count;
    corpus.threshold = threshold;

    for (const auto& movie : manifest.movies) {
        corpus.movie_ids.push_back(movie.movie_id);
        const auto segments = parse_srt(movie.subtitle_path, movie.movie_id);
        const auto features = read_fvec(movie.feature_path, movie.movie_id);
        if (corpus.feature_dim == 0)
            corpus.feature_dim = features.feature_dim;
        else if (corpus.feature_dim != features.feature_dim)
            throw std::invalid_argument("movie " + movie.movie_id + " has feature_dim " +
                                        std::to_string(features.feature_dim) +
                                        ", corpus established " +
                                        std::to_string(corpus.feature_dim));

        std::vector<AnnotationTrack> tracks(static_cast<size_t>(manifest.viewer_count));
        std::vector<uint8_t> present(static_cast<size_t>(manifest.viewer_count), 0);
        for (int v = 0; v < manifest.viewer_count; ++v) {
            const std::string& path = movie.annotation_paths[static_cast<size_t>(v)];
            if (path.empty()) continue;
            tracks[static_cast<size_t>(v)] =
                parse_annotation_csv(path, movie.movie_id, v + 1, manifest.sample_period_ms);
            tracks[static_cast<size_t>(v)].validate();
            present[static_cast<size_t>(v)] = 1;
        }

        for (const auto& seg : segments) {
            LabeledSample s;
            s.segment = seg;
            s.viewer_mask = present;
            s.per_viewer_mean.assign(static_cast<size_t>(manifest.viewer_count), 0.0);
            s.per_viewer_label.assign(static_cast<size_t>(manifest.viewer_count), 0);
            for (int v = 0; v < manifest.viewer_count; ++v) {
                if (!present[static_cast<size_t>(v)]) continue;
                const double mean = segment_mean(tracks[static_cast<size_t>(v)], seg);
                s.per_viewer_mean[static_cast<size_t>(v)] = mean;
                s.per_viewer_label[static_cast<size_t>(v)] = binarize(mean, threshold) ? 1 : 0;
            }
            s.avg_viewer_mean = average_viewer(s.per_viewer_mean, s.viewer_mask);
            s.avg_viewer_label = binarize(s.avg_viewer_mean, threshold) ? 1 : 0;
            s.visual = segment_visual_feature(features, seg);
            corpus.samples.push_back(std::move(s));
        }
    }
    return corpus;
}

inline Corpus build_dataset(const std::string& manifest_path, double threshold = 0.0) {
    return build_dataset(parse_manifest(manifest_path), threshold);
}

// Index subsets by movie, preserving sample order.
inline std::vector<size_t> samples_of_movies(const Corpus& corpus,
                                             const std::vector<std::string>& movie_ids) {
    std::vector<size_t> out;
    for (size_t i = 0; i < corpus.samples.size(); ++i)
        for (const auto& id : movie_ids)
            if (corpus.samples[i].segment.movie_id == id) {
                out.push_back(i);
                break;
            }
    return out;
}

}  // namespace emt
