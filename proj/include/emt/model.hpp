#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/autograd.hpp"
#include "emt/dataset.hpp"
#include "emt/text_pipeline.hpp"
#include "emt/util.hpp"

namespace emt {

enum class ModelKind { kST, kMT };
enum class Modalities { kText, kVisual, kBoth };

inline const char* to_string(ModelKind k) { return k == ModelKind::kST ? "st" : "mt"; }
inline const char* to_string(Modalities m) {
    switch (m) {
        case Modalities::kText: return "text";
        case Modalities::kVisual: return "visual";
        case Modalities::kBoth: return "both";
    }
    return "both";
}
inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "st") return ModelKind::kST;
    if (s == "mt") return ModelKind::kMT;
    throw std::invalid_argument("unknown model kind '" + s + "' (expected st or mt)");
}
inline Modalities modalities_from_string(const std::string& s) {
    if (s == "text") return Modalities::kText;
    if (s == "visual") return Modalities::kVisual;
    if (s == "both") return Modalities::kBoth;
    throw std::invalid_argument("unknown modality '" + s + "' (expected text, visual or both)");
}

struct ConvStage {
    int kernel_width = 3;
    int out_channels = 64;
    int pool_width = 2;
};

// Architecture hyperparameters. The default widths are the reference
// configuration; the dim lists stay overridable so scaled-down variants (for
// gradient checks and desk-scale studies) use the same code path.
struct BackboneConfig {
    int embed_dim = 64;
    std::vector<ConvStage> stages = {{3, 64, 2}, {3, 128, 2}};
    int visual_dim = 1024;
    int seq_len = static_cast<int>(kSeqLen);
    std::vector<int> st_head_dims = {1024, 512, 256};
    std::vector<int> mt_trunk_dims = {2048, 1024};
    std::vector<int> mt_branch_dims = {512, 256, 128};

    void validate(Modalities modalities) const {
        if (embed_dim < 1) throw std::invalid_argument("model config: embed_dim must be >= 1");
        if (seq_len < 1) throw std::invalid_argument("model config: seq_len must be >= 1");
        if (visual_dim < 1 && modalities != Modalities::kText)
            throw std::invalid_argument("model config: visual_dim must be >= 1");
        if (stages.empty()) throw std::invalid_argument("model config: need >= 1 conv stage");
        for (const auto& s : stages)
            if (s.kernel_width < 1 || s.out_channels < 1 || s.pool_width < 1)
                throw std::invalid_argument("model config: conv stage dims must be positive");
        if (st_head_dims.empty() || mt_trunk_dims.empty() || mt_branch_dims.empty())
            throw std::invalid_argument("model config: layer dim lists must be non-empty");
        for (int d : st_head_dims)
            if (d < 1) throw std::invalid_argument("model config: st_head_dims must be positive");
        for (int d : mt_trunk_dims)
            if (d < 1) throw std::invalid_argument("model config: mt_trunk_dims must be positive");
        for (int d : mt_branch_dims)
            if (d < 1)
                throw std::invalid_argument("model config: mt_branch_dims must be positive");
        if (modalities != Modalities::kVisual) text_out_len();  // throws if it underflows
    }

    // sequence length surviving the conv/pool stack
    int text_out_len() const {
        int len = seq_len;
        for (size_t i = 0; i < stages.size(); ++i) {
            len = len - stages[i].kernel_width + 1;  // valid conv, stride 1
            if (len < 1)
                throw std::invalid_argument("model config: conv stage " + std::to_string(i) +
                                            " consumes the whole sequence");
            if (len < stages[i].pool_width)
                throw std::invalid_argument("model config: pool stage " + std::to_string(i) +
                                            " window exceeds remaining length " +
                                            std::to_string(len));
            len = (len - stages[i].pool_width) / stages[i].pool_width + 1;
        }
        return len;
    }

    int fused_dim(Modalities modalities) const {
        const int text_dim = stages.back().out_channels;
        switch (modalities) {
            case Modalities::kText: return text_dim;
            case Modalities::kVisual: return visual_dim;
            case Modalities::kBoth: return text_dim + visual_dim;
        }
        return text_dim + visual_dim;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["embed_dim"] = embed_dim;
        j["visual_dim"] = visual_dim;
        j["seq_len"] = seq_len;
        j["stages"] = nlohmann::json::array();
        for (const auto& s : stages)
            j["stages"].push_back({s.kernel_width, s.out_channels, s.pool_width});
        j["st_head_dims"] = st_head_dims;
        j["mt_trunk_dims"] = mt_trunk_dims;
        j["mt_branch_dims"] = mt_branch_dims;
        return j;
    }

    static BackboneConfig from_json(const nlohmann::json& j) {
        BackboneConfig cfg;  // absent keys keep their defaults
        cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
        cfg.visual_dim = j.value("visual_dim", cfg.visual_dim);
        cfg.seq_len = j.value("seq_len", cfg.seq_len);
        if (j.contains("stages")) {
            cfg.stages.clear();
            for (const auto& js : j.at("stages"))
                cfg.stages.push_back(
                    {js.at(0).get<int>(), js.at(1).get<int>(), js.at(2).get<int>()});
        }
        cfg.st_head_dims = j.value("st_head_dims", cfg.st_head_dims);
        cfg.mt_trunk_dims = j.value("mt_trunk_dims", cfg.mt_trunk_dims);
        cfg.mt_branch_dims = j.value("mt_branch_dims", cfg.mt_branch_dims);
        return cfg;
    }
};

// One inference/training batch. Token ids are row-major [batch, seq_len];
// visual is [batch, visual_dim] (empty tensor allowed for text-only models).
struct Batch {
    size_t size = 0;
    std::vector<int> token_ids;
    Tensor visual;
};

struct ForwardOut {
    NodePtr output;                    // ST: [B,1]; MT: [B, V+1]
    std::vector<NodePtr> per_target;   // each [B,1]; ST has exactly one
};

// A built network: named parameters plus everything needed to rebuild the
// forward graph. The vocabulary travels with the model so a checkpoint is
// usable for inference on raw text.
class Model {
public:
    ModelKind kind = ModelKind::kST;
    Modalities modalities = Modalities::kBoth;
    int viewer_count = 0;  // MT only; ST keeps 0
    BackboneConfig config;
    uint64_t seed = 0;
    Vocabulary vocab;
    nlohmann::json meta = nlohmann::json::object();  // run provenance (config hash, seed)
    std::vector<Parameter> params;

    size_t target_count() const {
        return kind == ModelKind::kMT ? static_cast<size_t>(viewer_count) + 1 : 1;
    }

    Parameter& param(const std::string& name) {
        for (auto& p : params)
            if (p.name == name) return p;
        throw std::invalid_argument("model has no parameter '" + name + "'");
    }
    const Parameter& param(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p;
        throw std::invalid_argument("model has no parameter '" + name + "'");
    }

    size_t param_scalars() const {
        size_t n = 0;
        for (const auto& p : params) n += p.node->value.size();
        return n;
    }

    ForwardOut forward(const Batch& batch) const;

    // full parameter snapshot / restore, used by model selection
    std::vector<Tensor> snapshot() const {
        std::vector<Tensor> out;
        out.reserve(params.size());
        for (const auto& p : params) out.push_back(p.node->value);
        return out;
    }
    void restore(const std::vector<Tensor>& snap) {
        if (snap.size() != params.size())
            throw std::invalid_argument("snapshot size mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            if (!snap[i].same_shape(params[i].node->value))
                throw std::invalid_argument("snapshot shape mismatch at " + params[i].name);
            params[i].node->value = snap[i];
        }
    }
};

namespace detail {

inline void add_param(Model& m, const std::string& name, std::vector<size_t> shape,
                      size_t fan_in, size_t fan_out, Rng& rng, bool is_weight) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> data(n, 0.0);
    if (is_weight) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : data) v = rng.uniform(-bound, bound);
    }
    Parameter p;
    p.name = name;
    p.node = TapeNode::leaf(Tensor(std::move(shape), std::move(data)));
    p.is_weight = is_weight;
    m.params.push_back(std::move(p));
}

// text backbone + head parameter construction shared by ST and MT
inline void add_text_params(Model& m, Rng& rng) {
    const auto& cfg = m.config;
    add_param(m, "text.embed", {m.vocab.size(), static_cast<size_t>(cfg.embed_dim)},
              m.vocab.size(), static_cast<size_t>(cfg.embed_dim), rng, true);
    int in_ch = cfg.embed_dim;
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& s = cfg.stages[i];
        const std::string base = "text.conv" + std::to_string(i);
        add_param(m, base + ".w",
                  {static_cast<size_t>(s.kernel_width), static_cast<size_t>(in_ch),
                   static_cast<size_t>(s.out_channels)},
                  static_cast<size_t>(s.kernel_width) * static_cast<size_t>(in_ch),
                  static_cast<size_t>(s.out_channels), rng, true);
        add_param(m, base + ".b", {static_cast<size_t>(s.out_channels)}, 0, 0, rng, false);
        in_ch = s.out_channels;
    }
}

inline void add_fc_params(Model& m, const std::string& prefix, int in_dim,
                          const std::vector<int>& hidden, int out_dim, Rng& rng) {
    int d = in_dim;
    for (size_t i = 0; i < hidden.size(); ++i) {
        const std::string base = prefix + ".fc" + std::to_string(i);
        add_param(m, base + ".w", {static_cast<size_t>(d), static_cast<size_t>(hidden[i])},
                  static_cast<size_t>(d), static_cast<size_t>(hidden[i]), rng, true);
        add_param(m, base + ".b", {static_cast<size_t>(hidden[i])}, 0, 0, rng, false);
        d = hidden[i];
    }
    if (out_dim > 0) {
        add_param(m, prefix + ".out.w", {static_cast<size_t>(d), static_cast<size_t>(out_dim)},
                  static_cast<size_t>(d), static_cast<size_t>(out_dim), rng, true);
        add_param(m, prefix + ".out.b", {static_cast<size_t>(out_dim)}, 0, 0, rng, false);
    }
}

}  // namespace detail

// ST: backbones -> fusion -> FC head -> single sigmoid output.
inline Model build_st(const BackboneConfig& cfg, uint64_t seed, Modalities modalities,
                      const Vocabulary& vocab) {
    cfg.validate(modalities);
    Model m;
    m.kind = ModelKind::kST;
    m.modalities = modalities;
    m.config = cfg;
    m.seed = seed;
    m.vocab = vocab;
    Rng rng(seed);
    if (modalities != Modalities::kVisual) detail::add_text_params(m, rng);
    detail::add_fc_params(m, "head", cfg.fused_dim(modalities), cfg.st_head_dims, 1, rng);
    return m;
}

// MT: shared backbones and trunk, one FC branch per viewer plus one for the
// average viewer (branch index viewer_count).
inline Model build_mt(const BackboneConfig& cfg, int viewer_count, uint64_t seed,
                      Modalities modalities, const Vocabulary& vocab) {
    cfg.validate(modalities);
    if (viewer_count < 1) throw std::invalid_argument("build_mt: viewer_count must be >= 1");
    Model m;
    m.kind = ModelKind::kMT;
    m.modalities = modalities;
    m.viewer_count = viewer_count;
    m.config = cfg;
    m.seed = seed;
    m.vocab = vocab;
    Rng rng(seed);
    if (modalities != Modalities::kVisual) detail::add_text_params(m, rng);
    detail::add_fc_params(m, "trunk", cfg.fused_dim(modalities), cfg.mt_trunk_dims, 0, rng);
    for (int t = 0; t <= viewer_count; ++t)
        detail::add_fc_params(m, "branch" + std::to_string(t), cfg.mt_trunk_dims.back(),
                              cfg.mt_branch_dims, 1, rng);
    return m;
}

inline ForwardOut Model::forward(const Batch& batch) const {
    if (batch.size == 0) throw std::invalid_argument("forward: empty batch");

    NodePtr fused;
    NodePtr text_vec, visual_vec;
    if (modalities != Modalities::kVisual) {
        if (batch.token_ids.size() != batch.size * static_cast<size_t>(config.seq_len))
            throw std::invalid_argument("forward: token batch has wrong length");
        NodePtr x = embedding_lookup(param("text.embed").node, batch.token_ids,
                                     {batch.size, static_cast<size_t>(config.seq_len)});
        for (size_t i = 0; i < config.stages.size(); ++i) {
            const std::string base = "text.conv" + std::to_string(i);
            x = conv1d(x, param(base + ".w").node, param(base + ".b").node);
            x = relu(x);
            x = maxpool1d(x, config.stages[i].pool_width);
        }
        text_vec = temporal_max_pool(x);
    }
    if (modalities != Modalities::kText) {
        if (batch.visual.ndim() != 2 || batch.visual.dim(0) != batch.size ||
            batch.visual.dim(1) != static_cast<size_t>(config.visual_dim))
            throw std::invalid_argument("forward: visual batch shape mismatch, want [" +
                                        std::to_string(batch.size) + ", " +
                                        std::to_string(config.visual_dim) + "]");
        visual_vec = constant(batch.visual);
    }
    switch (modalities) {
        case Modalities::kText: fused = text_vec; break;
        case Modalities::kVisual: fused = visual_vec; break;
        case Modalities::kBoth: fused = concat({text_vec, visual_vec}); break;
    }

    auto run_fc = [&](const std::string& prefix, NodePtr h, const std::vector<int>& hidden,
                      bool with_out) {
        for (size_t i = 0; i < hidden.size(); ++i) {
            const std::string base = prefix + ".fc" + std::to_string(i);
            h = relu(linear(h, param(base + ".w").node, param(base + ".b").node));
        }
        if (with_out)
            h = sigmoid(linear(h, param(prefix + ".out.w").node, param(prefix + ".out.b").node));
        return h;
    };

    ForwardOut out;
    if (kind == ModelKind::kST) {
        out.output = run_fc("head", fused, config.st_head_dims, true);
        out.per_target = {out.output};
    } else {
        NodePtr h = run_fc("trunk", fused, config.mt_trunk_dims, false);
        for (int t = 0; t <= viewer_count; ++t)
            out.per_target.push_back(
                run_fc("branch" + std::to_string(t), h, config.mt_branch_dims, true));
        out.output = concat(out.per_target);
    }
    return out;
}

// Assembles a Batch from corpus samples using the model's vocabulary.
inline Batch make_batch(const Model& model, const Corpus& corpus,
                        const std::vector<size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    Batch b;
    b.size = indices.size();
    if (model.modalities != Modalities::kVisual) {
        b.token_ids.reserve(b.size * kSeqLen);
        for (size_t i : indices) {
            const auto ids = tokenize_pad(corpus.samples[i].segment.text, model.vocab);
            b.token_ids.insert(b.token_ids.end(), ids.begin(), ids.end());
        }
    }
    if (model.modalities != Modalities::kText) {
        const size_t dim = static_cast<size_t>(model.config.visual_dim);
        std::vector<double> vis;
        vis.reserve(b.size * dim);
        for (size_t i : indices) {
            const auto& v = corpus.samples[i].visual;
            if (v.size() != dim)
                throw std::invalid_argument(
                    "make_batch: sample visual dim " + std::to_string(v.size()) +
                    " != model visual_dim " + std::to_string(dim));
            vis.insert(vis.end(), v.begin(), v.end());
        }
        b.visual = Tensor({b.size, dim}, std::move(vis));
    }
    return b;
}

}  // namespace emt
