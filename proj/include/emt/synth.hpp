#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/annotations.hpp"
#include "emt/dataset.hpp"
#include "emt/util.hpp"
#include "emt/visual_features.hpp"

namespace emt {

struct SynthConfig {
    uint64_t seed = 0;
    int movies = 7;
    int segments_per_movie = 200;
    int viewers = 7;
    double correlation = 0.6;  // rho: how strongly viewers track the latent signal
    double noise_scale = 1.0;
    int vocab_size = 60;
    int feature_dim = 32;

    void validate() const {
        if (movies < 1 || segments_per_movie < 1 || viewers < 1)
            throw std::invalid_argument("synth: movie/segment/viewer counts must be positive");
        if (!(correlation >= 0.0 && correlation <= 1.0))
            throw std::invalid_argument("synth: correlation must be in [0, 1]");
        if (noise_scale < 0.0) throw std::invalid_argument("synth: noise_scale must be >= 0");
        if (vocab_size < 5) throw std::invalid_argument("synth: vocab_size must be >= 5");
        if (feature_dim < 1) throw std::invalid_argument("synth: feature_dim must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["movies"] = movies;
        j["segments_per_movie"] = segments_per_movie;
        j["viewers"] = viewers;
        j["correlation"] = correlation;
        j["noise_scale"] = noise_scale;
        j["vocab_size"] = vocab_size;
        j["feature_dim"] = feature_dim;
        return j;
    }

    static SynthConfig from_json(const nlohmann::json& j) {
        SynthConfig c;
        if (j.contains("movies")) c.movies = j["movies"].get<int>();
        if (j.contains("segments_per_movie"))
            c.segments_per_movie = j["segments_per_movie"].get<int>();
        if (j.contains("viewers")) c.viewers = j["viewers"].get<int>();
        if (j.contains("correlation")) c.correlation = j["correlation"].get<double>();
        if (j.contains("noise_scale")) c.noise_scale = j["noise_scale"].get<double>();
        if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int>();
        if (j.contains("feature_dim")) c.feature_dim = j["feature_dim"].get<int>();
        c.validate();
        return c;
    }
};

namespace detail {

// Movie codes for generated corpora. The first seven reuse the corpus codes
// the built-in fold protocols expect, so a 7-movie synthetic corpus can run
// them directly.
inline std::string synth_movie_id(int index) {
    static const char* kCodes[] = {"BMI", "CHI", "CRA", "FNE", "GLA", "DEP", "LOR"};
    if (index < 7) return kCodes[index];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%02d", index + 1);
    return buf;
}

}  // namespace detail

// Generates a corpus in the exact on-disk formats of the ingestion path and
// returns the manifest (absolute paths). Layout per movie: one annotation CSV
// per viewer, one subtitle file, one feature file; plus manifest.json and
// ground_truth.json at the root of out_dir.
//
// Generator model, all draws from one seeded stream in a fixed order:
//   - latent per-segment signal s: s_0 ~ U(-0.8, 0.8),
//     s_{i+1} = clip(0.85*s_i + 0.35*U(-1,1), -0.95, 0.95)
//   - viewer bias b_v = 0.3 * noise_scale * N(0,1) per (movie, viewer)
//   - viewer observation per segment:
//     clip(rho*s + (1-rho)*noise_scale*N(0,1) + b_v, -1, 1),
//     written as a constant annotation value across the segment
//   - tokens: vocab is w000..w{N-1}; the first 40% lean positive, the next
//     40% lean negative, the rest neutral. Each token signals sign(s) with
//     probability 0.35 + 0.35*|s|, else is drawn from the whole vocabulary.
//   - features: f_j = s*proj_j + 0.35*N(0,1) per chunk, proj ~ N(0,1) fixed
//     per corpus, with s taken from the segment nearest the chunk's center.
inline DatasetManifest synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    Rng rng(cfg.seed);

    constexpr int64_t kPeriodMs = 40;  // one annotation sample and one frame per 40 ms
    constexpr int kWindow = 16, kStride = 8;

    // corpus-level feature projection
    std::vector<double> proj(static_cast<size_t>(cfg.feature_dim));
    for (double& p : proj) p = rng.gauss();

    // token pools by polarity
    std::vector<std::string> vocab(static_cast<size_t>(cfg.vocab_size));
    for (int i = 0; i < cfg.vocab_size; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "w%03d", i);
        vocab[static_cast<size_t>(i)] = buf;
    }
    const size_t pos_n = std::max<size_t>(1, static_cast<size_t>(cfg.vocab_size) * 2 / 5);
    const size_t neg_n = std::max<size_t>(1, static_cast<size_t>(cfg.vocab_size) * 2 / 5);

    DatasetManifest manifest;
    manifest.viewer_count = cfg.viewers;
    manifest.sample_period_ms = static_cast<int>(kPeriodMs);

    nlohmann::json truth;
    truth["seed"] = cfg.seed;
    truth["correlation"] = cfg.correlation;
    truth["noise_scale"] = cfg.noise_scale;
    truth["movies"] = nlohmann::json::object();

    nlohmann::json manifest_doc;
    manifest_doc["viewer_count"] = cfg.viewers;
    manifest_doc["sample_period_ms"] = static_cast<int>(kPeriodMs);
    manifest_doc["movies"] = nlohmann::json::array();

    for (int mi = 0; mi < cfg.movies; ++mi) {
        const std::string movie = detail::synth_movie_id(mi);

        // segment layout: 1.2 - 3.6 s segments with occasional small gaps,
        // everything aligned to the 40 ms sample grid
        std::vector<SegmentSpec> segments(static_cast<size_t>(cfg.segments_per_movie));
        int64_t cursor = 0;
        for (auto& seg : segments) {
            cursor += kPeriodMs * static_cast<int64_t>(rng.uniform_int(3));
            seg.movie_id = movie;
            seg.start_ms = cursor;
            cursor += kPeriodMs * (30 + static_cast<int64_t>(rng.uniform_int(61)));
            seg.end_ms = cursor;
        }
        const int64_t total_ms = cursor;
        const size_t track_len = static_cast<size_t>(total_ms / kPeriodMs);

        // latent affect walk
        std::vector<double> latent(segments.size());
        latent[0] = rng.uniform(-0.8, 0.8);
        for (size_t i = 1; i < latent.size(); ++i)
            latent[i] =
                std::clamp(0.85 * latent[i - 1] + 0.35 * rng.uniform(-1.0, 1.0), -0.95, 0.95);

        // viewer biases, then per-viewer observations
        std::vector<double> bias(static_cast<size_t>(cfg.viewers));
        for (double& b : bias) b = 0.3 * cfg.noise_scale * rng.gauss();
        std::vector<std::vector<double>> obs(
            static_cast<size_t>(cfg.viewers), std::vector<double>(segments.size()));
        for (int v = 0; v < cfg.viewers; ++v)
            for (size_t i = 0; i < segments.size(); ++i)
                obs[static_cast<size_t>(v)][i] =
                    std::clamp(cfg.correlation * latent[i] +
                                   (1.0 - cfg.correlation) * cfg.noise_scale * rng.gauss() +
                                   bias[static_cast<size_t>(v)],
                               -1.0, 1.0);

        // sentences conditioned on the latent sign
        for (size_t i = 0; i < segments.size(); ++i) {
            const double s = latent[i];
            const double p_signal = 0.35 + 0.35 * std::abs(s);
            const size_t len = 4 + rng.uniform_int(9);
            std::string text;
            for (size_t t = 0; t < len; ++t) {
                size_t tok;
                if (rng.uniform() < p_signal) {
                    tok = s > 0.0 ? rng.uniform_int(pos_n)
                                  : pos_n + rng.uniform_int(neg_n);
                } else {
                    tok = rng.uniform_int(static_cast<uint64_t>(cfg.vocab_size));
                }
                if (t) text += " ";
                text += vocab[tok];
            }
            segments[i].text = text;
        }

        // chunk features tied to the latent of the segment under the chunk center
        VisualFeatureSet feats;
        feats.movie_id = movie;
        feats.feature_dim = static_cast<size_t>(cfg.feature_dim);
        feats.window = kWindow;
        feats.stride = kStride;
        const size_t total_frames = track_len;  // 25 fps on a 40 ms grid
        feats.num_chunks =
            total_frames > kWindow ? (total_frames - kWindow) / kStride + 1 : 1;
        feats.data.resize(feats.num_chunks * feats.feature_dim);
        size_t seg_hint = 0;
        for (size_t c = 0; c < feats.num_chunks; ++c) {
            const int64_t center_ms = (static_cast<int64_t>(c) * kStride + kWindow / 2) * kPeriodMs;
            while (seg_hint + 1 < segments.size() && segments[seg_hint].end_ms <= center_ms)
                ++seg_hint;
            const double s = latent[seg_hint];
            float* row = feats.data.data() + c * feats.feature_dim;
            for (size_t j = 0; j < feats.feature_dim; ++j)
                row[j] = static_cast<float>(s * proj[j] + 0.35 * rng.gauss());
        }

        // write the movie's files
        MovieEntry entry;
        entry.movie_id = movie;
        nlohmann::json jm;
        jm["movie_id"] = movie;
        jm["annotations"] = nlohmann::json::array();
        for (int v = 0; v < cfg.viewers; ++v) {
            AnnotationTrack track;
            track.movie_id = movie;
            track.viewer_id = v + 1;
            track.sample_period_ms = static_cast<int>(kPeriodMs);
            track.values.assign(track_len, 0.0);
            size_t si = 0;
            double current = obs[static_cast<size_t>(v)][0];
            for (size_t i = 0; i < track_len; ++i) {
                const int64_t t = static_cast<int64_t>(i) * kPeriodMs;
                while (si < segments.size() && segments[si].end_ms <= t) ++si;
                if (si < segments.size() && t >= segments[si].start_ms)
                    current = obs[static_cast<size_t>(v)][si];
                track.values[i] = current;
            }
            const std::string name = movie + "_v" + std::to_string(v + 1) + ".csv";
            write_file((dir / name).string(), format_annotation_csv(track));
            entry.annotation_paths.push_back((dir / name).string());
            jm["annotations"].push_back(name);
        }
        {
            const std::string name = movie + ".srt";
            write_file((dir / name).string(), format_srt(segments));
            entry.subtitle_path = (dir / name).string();
            jm["subtitles"] = name;
        }
        {
            const std::string name = movie + ".fvec";
            write_file((dir / name).string(), format_fvec(feats));
            entry.feature_path = (dir / name).string();
            jm["features"] = name;
        }
        manifest.movies.push_back(std::move(entry));
        manifest_doc["movies"].push_back(jm);

        nlohmann::json jt;
        jt["latent"] = latent;
        jt["viewer_bias"] = bias;
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& seg : segments)
            spans.push_back({seg.start_ms, seg.end_ms});
        jt["segments"] = spans;
        truth["movies"][movie] = jt;
    }

    write_file((dir / "manifest.json").string(), manifest_doc.dump(2) + "\n");
    write_file((dir / "ground_truth.json").string(), truth.dump(2) + "\n");
    manifest.validate();
    return manifest;
}

}  // namespace emt
