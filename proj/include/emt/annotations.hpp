#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "emt/util.hpp"

namespace emt {

// One viewer's continuous valence stream for one movie. Sample i sits at
// t = i * sample_period_ms; values live in [-1, +1].
struct AnnotationTrack {
    std::string movie_id;
    int viewer_id = 0;  // 1-based
    int sample_period_ms = 40;
    std::vector<double> values;

    void validate() const {
        if (values.empty())
            throw std::invalid_argument("annotation track " + movie_id + "/viewer " +
                                        std::to_string(viewer_id) + " is empty");
        if (sample_period_ms <= 0)
            throw std::invalid_argument("annotation track " + movie_id +
                                        ": sample period must be positive");
        for (double v : values)
            if (!(v >= -1.0 && v <= 1.0))
                throw std::invalid_argument("annotation track " + movie_id + "/viewer " +
                                            std::to_string(viewer_id) +
                                            ": value outside [-1, 1]: " + std::to_string(v));
    }
};

// One subtitle-aligned segment of a movie, [start_ms, end_ms).
struct SegmentSpec {
    std::string movie_id;
    int64_t start_ms = 0;
    int64_t end_ms = 0;
    std::string text;

    std::string span_str() const {
        return movie_id + " [" + std::to_string(start_ms) + ", " + std::to_string(end_ms) + ")";
    }
};

// Mean of the annotation samples falling inside [start_ms, end_ms). A sample
// at t = i * period is included when start <= t < end (half-open, so adjacent
// segments partition the samples). Every in-range sample index must exist in
// the track; a short track is an error, not a silent truncation.
inline double segment_mean(const AnnotationTrack& track, const SegmentSpec& seg) {
    const int64_t period = track.sample_period_ms;
    const int64_t i0 = (seg.start_ms + period - 1) / period;  // first i with i*period >= start
    const int64_t i1 = (seg.end_ms + period - 1) / period;    // first i with i*period >= end
    if (i0 >= i1)
        throw std::invalid_argument("segment " + seg.span_str() +
                                    " covers no annotation samples (period " +
                                    std::to_string(period) + " ms)");
    if (i1 > static_cast<int64_t>(track.values.size()))
        throw std::invalid_argument(
            "segment " + seg.span_str() + " extends past viewer " +
            std::to_string(track.viewer_id) + "'s track (" +
            std::to_string(track.values.size()) + " samples)");
    double acc = 0.0;
    for (int64_t i = i0; i < i1; ++i) acc += track.values[static_cast<size_t>(i)];
    return acc / static_cast<double>(i1 - i0);
}

// Positive iff strictly above the threshold; an exact tie is negative.
inline bool binarize(double mean_valence, double threshold = 0.0) {
    return mean_valence > threshold;
}

// Mean over the entries whose mask bit is set.
inline double average_viewer(const std::vector<double>& per_viewer_means,
                             const std::vector<uint8_t>& mask) {
    if (per_viewer_means.size() != mask.size())
        throw std::invalid_argument("average_viewer: mask length mismatch");
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        acc += per_viewer_means[i];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("average_viewer: no present entries");
    return acc / static_cast<double>(n);
}

// --- annotation CSV: header "frame_index,valence", frame i at i*period ---

inline AnnotationTrack parse_annotation_csv(const std::string& path, const std::string& movie_id,
                                            int viewer_id, int sample_period_ms) {
    const std::string content = read_file(path);
    AnnotationTrack track;
    track.movie_id = movie_id;
    track.viewer_id = viewer_id;
    track.sample_period_ms = sample_period_ms;

    size_t line_no = 0;
    size_t pos = 0;
    while (pos <= content.size()) {
        size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;
        ++line_no;
        if (line_no == 1) {
            if (line != "frame_index,valence")
                throw ParseError(path, line_no, "expected header 'frame_index,valence'");
            continue;
        }
        if (line.empty()) {
            if (pos > content.size()) break;  // trailing newline
            throw ParseError(path, line_no, "blank line inside annotation data");
        }
        auto fields = split(line, ',');
        if (fields.size() != 2) throw ParseError(path, line_no, "expected 2 fields");
        size_t idx_len = 0, val_len = 0;
        long idx;
        double v;
        try {
            idx = std::stol(fields[0], &idx_len);
            v = std::stod(fields[1], &val_len);
        } catch (const std::exception&) {
            throw ParseError(path, line_no, "malformed number");
        }
        if (idx_len != fields[0].size() || val_len != fields[1].size())
            throw ParseError(path, line_no, "trailing characters after number");
        if (idx != static_cast<long>(track.values.size()))
            throw ParseError(path, line_no,
                             "frame_index " + std::to_string(idx) + " out of sequence, expected " +
                                 std::to_string(track.values.size()));
        if (!(v >= -1.0 && v <= 1.0))
            throw ParseError(path, line_no, "valence outside [-1, 1]: " + fields[1]);
        track.values.push_back(v);
        if (pos > content.size()) break;
    }
    if (track.values.empty()) throw ParseError(path, "no annotation samples");
    return track;
}

inline std::string format_annotation_csv(const AnnotationTrack& track) {
    std::string out = "frame_index,valence\n";
    for (size_t i = 0; i < track.values.size(); ++i)
        out += std::to_string(i) + "," + fmt_f6(track.values[i]) + "\n";
    return out;
}

// --- simplified SRT: index line, "HH:MM:SS,mmm --> HH:MM:SS,mmm", text
// lines, blank-line separator ---

namespace detail {

inline int64_t parse_srt_timestamp(const std::string& s, const std::string& path, size_t line_no) {
    // HH:MM:SS,mmm
    if (s.size() != 12 || s[2] != ':' || s[5] != ':' || s[8] != ',')
        throw ParseError(path, line_no, "malformed timestamp '" + s + "'");
    for (size_t i : {0u, 1u, 3u, 4u, 6u, 7u, 9u, 10u, 11u})
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
            throw ParseError(path, line_no, "malformed timestamp '" + s + "'");
    const int64_t hh = std::stol(s.substr(0, 2));
    const int64_t mm = std::stol(s.substr(3, 2));
    const int64_t ss = std::stol(s.substr(6, 2));
    const int64_t ms = std::stol(s.substr(9, 3));
    if (mm >= 60 || ss >= 60) throw ParseError(path, line_no, "timestamp field out of range");
    return ((hh * 60 + mm) * 60 + ss) * 1000 + ms;
}

inline std::string format_srt_timestamp(int64_t t_ms) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d:%02d:%02d,%03d", static_cast<int>(t_ms / 3600000),
                  static_cast<int>(t_ms / 60000 % 60), static_cast<int>(t_ms / 1000 % 60),
                  static_cast<int>(t_ms % 1000));
    return buf;
}

}  // namespace detail

inline std::vector<SegmentSpec> parse_srt(const std::string& path, const std::string& movie_id) {
    const std::string content = read_file(path);
    std::vector<std::string> lines;
    {
        size_t pos = 0;
        while (pos <= content.size()) {
            size_t eol = content.find('\n', pos);
            if (eol == std::string::npos) eol = content.size();
            std::string line = content.substr(pos, eol - pos);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
            if (eol == content.size()) break;
            pos = eol + 1;
        }
    }

    std::vector<SegmentSpec> segments;
    size_t i = 0;
    while (i < lines.size()) {
        if (strip(lines[i]).empty()) {
            ++i;
            continue;
        }
        const size_t index_line = i + 1;
        size_t len = 0;
        long index;
        try {
            index = std::stol(strip(lines[i]), &len);
        } catch (const std::exception&) {
            throw ParseError(path, index_line, "expected subtitle index");
        }
        if (len != strip(lines[i]).size() || index != static_cast<long>(segments.size()) + 1)
            throw ParseError(path, index_line,
                             "expected subtitle index " + std::to_string(segments.size() + 1));
        ++i;
        if (i >= lines.size()) throw ParseError(path, index_line, "block truncated after index");
        const std::string ts = strip(lines[i]);
        const size_t ts_line = i + 1;
        const size_t arrow = ts.find(" --> ");
        if (arrow == std::string::npos)
            throw ParseError(path, ts_line, "expected 'start --> end' timestamp line");
        SegmentSpec seg;
        seg.movie_id = movie_id;
        seg.start_ms = detail::parse_srt_timestamp(ts.substr(0, arrow), path, ts_line);
        seg.end_ms = detail::parse_srt_timestamp(ts.substr(arrow + 5), path, ts_line);
        if (seg.start_ms >= seg.end_ms)
            throw ParseError(path, ts_line, "segment start is not before its end");
        if (!segments.empty() && seg.start_ms < segments.back().end_ms)
            throw ParseError(path, ts_line, "segment overlaps or precedes the previous one");
        ++i;
        std::string text;
        bool any = false;
        while (i < lines.size() && !strip(lines[i]).empty()) {
            if (any) text += " ";
            text += strip(lines[i]);
            any = true;
            ++i;
        }
        if (!any) throw ParseError(path, ts_line + 1, "subtitle block has no text line");
        seg.text = text;
        segments.push_back(std::move(seg));
    }
    if (segments.empty()) throw ParseError(path, "no subtitle blocks");
    return segments;
}

inline std::string format_srt(const std::vector<SegmentSpec>& segments) {
    std::string out;
    for (size_t k = 0; k < segments.size(); ++k) {
        const SegmentSpec& seg = segments[k];
        out += std::to_string(k + 1) + "\n";
        out += detail::format_srt_timestamp(seg.start_ms) + " --> " +
               detail::format_srt_timestamp(seg.end_ms) + "\n";
        out += seg.text + "\n\n";
    }
    return out;
}

}  // namespace emt
