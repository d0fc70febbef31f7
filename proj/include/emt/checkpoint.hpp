#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/model.hpp"
#include "emt/training.hpp"
#include "emt/util.hpp"

namespace emt {

// Checkpoint layout (all integers little-endian):
//   magic "EMTCKPT1"
//   u32 descriptor length, descriptor JSON (architecture, vocab, provenance)
//   u32 parameter count
//   per parameter: u32 name length, name bytes, u32 ndim, u64 dims,
//                  f64 values (row-major)
//   u8 has optimizer state; if set, per parameter: u64 step, f64 m, f64 v
//   u32 CRC-32 of everything above
// Same model state always serializes to identical bytes.

inline constexpr char kCheckpointMagic[8] = {'E', 'M', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json checkpoint_descriptor(const Model& model) {
    nlohmann::json d;
    d["config"] = model.config.to_json();
    d["format_version"] = kCheckpointVersion;
    d["kind"] = to_string(model.kind);
    d["meta"] = model.meta;
    d["modalities"] = to_string(model.modalities);
    d["seed"] = model.seed;
    d["viewer_count"] = model.viewer_count;
    d["vocab"] = model.vocab.tokens();
    return d;
}

}  // namespace detail

inline void save_checkpoint(const Model& model, const std::string& path,
                            const AdamState* adam = nullptr) {
    std::string out;
    out.append(kCheckpointMagic, 8);

    const std::string descriptor = detail::checkpoint_descriptor(model).dump();
    le::put_u32(out, static_cast<uint32_t>(descriptor.size()));
    out += descriptor;

    le::put_u32(out, static_cast<uint32_t>(model.params.size()));
    for (const auto& p : model.params) {
        le::put_u32(out, static_cast<uint32_t>(p.name.size()));
        out += p.name;
        const Tensor& t = p.node->value;
        le::put_u32(out, static_cast<uint32_t>(t.ndim()));
        for (size_t d : t.shape()) le::put_u64(out, d);
        for (size_t i = 0; i < t.size(); ++i) le::put_f64(out, t[i]);
    }

    if (adam) {
        if (adam->slots.size() != model.params.size())
            throw std::invalid_argument("save_checkpoint: optimizer state count mismatch");
        out.push_back(1);
        for (size_t i = 0; i < model.params.size(); ++i) {
            const AdamParamState& s = adam->slots[i];
            if (s.m.size() != model.params[i].node->value.size())
                throw std::invalid_argument("save_checkpoint: optimizer state shape mismatch at " +
                                            model.params[i].name);
            le::put_u64(out, s.step);
            for (double v : s.m) le::put_f64(out, v);
            for (double v : s.v) le::put_f64(out, v);
        }
    } else {
        out.push_back(0);
    }

    le::put_u32(out, Crc32::of(out.data(), out.size()));
    write_file(path, out);
}

struct LoadedCheckpoint {
    Model model;
    std::optional<AdamState> adam;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path,
                                        std::optional<ModelKind> expect_kind = std::nullopt) {
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 8, kCheckpointMagic, 8) != 0)
        throw ParseError(path, "not a checkpoint file (bad magic)");
    {
        const uint32_t stored =
            static_cast<uint8_t>(buf[buf.size() - 4]) |
            (static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 3])) << 8) |
            (static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 2])) << 16) |
            (static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 1])) << 24);
        if (Crc32::of(buf.data(), buf.size() - 4) != stored)
            throw ParseError(path, "corrupt checkpoint (checksum mismatch)");
    }

    le::Reader r(buf);
    std::string magic;
    r.read_string(magic, 8);
    uint32_t desc_len = 0;
    std::string desc_str;
    if (!r.read_u32(desc_len) || !r.read_string(desc_str, desc_len))
        throw ParseError(path, "truncated descriptor");

    nlohmann::json desc;
    try {
        desc = nlohmann::json::parse(desc_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, std::string("bad descriptor JSON: ") + e.what());
    }

    LoadedCheckpoint loaded;
    try {
        if (desc.at("format_version").get<uint32_t>() != kCheckpointVersion)
            throw ParseError(path, "unsupported checkpoint version " +
                                       desc.at("format_version").dump());
        const ModelKind kind = model_kind_from_string(desc.at("kind").get<std::string>());
        if (expect_kind && kind != *expect_kind)
            throw ParseError(path, std::string("architecture mismatch: checkpoint holds a ") +
                                       to_string(kind) + " model, expected " +
                                       to_string(*expect_kind));
        const Modalities modalities =
            modalities_from_string(desc.at("modalities").get<std::string>());
        const BackboneConfig cfg = BackboneConfig::from_json(desc.at("config"));
        const Vocabulary vocab(desc.at("vocab").get<std::vector<std::string>>());
        const uint64_t seed = desc.at("seed").get<uint64_t>();
        const int viewer_count = desc.at("viewer_count").get<int>();
        loaded.model = kind == ModelKind::kST
                           ? build_st(cfg, seed, modalities, vocab)
                           : build_mt(cfg, viewer_count, seed, modalities, vocab);
        loaded.model.meta = desc.value("meta", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, std::string("descriptor field error: ") + e.what());
    }

    uint32_t param_count = 0;
    if (!r.read_u32(param_count)) throw ParseError(path, "truncated parameter table");
    if (param_count != loaded.model.params.size())
        throw ParseError(path, "architecture mismatch: " + std::to_string(param_count) +
                                   " stored parameters, architecture has " +
                                   std::to_string(loaded.model.params.size()));
    for (auto& p : loaded.model.params) {
        uint32_t name_len = 0;
        std::string name;
        if (!r.read_u32(name_len) || !r.read_string(name, name_len))
            throw ParseError(path, "truncated parameter record");
        if (name != p.name)
            throw ParseError(path, "architecture mismatch: parameter '" + name +
                                       "' where '" + p.name + "' was expected");
        uint32_t ndim = 0;
        if (!r.read_u32(ndim)) throw ParseError(path, "truncated parameter record");
        std::vector<size_t> shape(ndim);
        for (auto& d : shape) {
            uint64_t v = 0;
            if (!r.read_u64(v)) throw ParseError(path, "truncated parameter record");
            d = static_cast<size_t>(v);
        }
        if (shape != p.node->value.shape())
            throw ParseError(path, "architecture mismatch: parameter '" + name +
                                       "' has stored shape incompatible with the architecture");
        std::vector<double> data(p.node->value.size());
        for (auto& v : data)
            if (!r.read_f64(v)) throw ParseError(path, "truncated parameter data");
        p.node->value = Tensor(shape, std::move(data));
    }

    uint8_t has_state = 0;
    if (!r.read_bytes(&has_state, 1)) throw ParseError(path, "truncated state flag");
    if (has_state) {
        AdamState adam;
        adam.slots.resize(loaded.model.params.size());
        for (size_t i = 0; i < adam.slots.size(); ++i) {
            AdamParamState& s = adam.slots[i];
            if (!r.read_u64(s.step)) throw ParseError(path, "truncated optimizer state");
            const size_t n = loaded.model.params[i].node->value.size();
            s.m.resize(n);
            s.v.resize(n);
            for (auto& v : s.m)
                if (!r.read_f64(v)) throw ParseError(path, "truncated optimizer state");
            for (auto& v : s.v)
                if (!r.read_f64(v)) throw ParseError(path, "truncated optimizer state");
        }
        loaded.adam = std::move(adam);
    }
    if (r.remaining() != 4)
        throw ParseError(path, "trailing bytes after optimizer state");
    return loaded;
}

}  // namespace emt
