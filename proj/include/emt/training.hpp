#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/autograd.hpp"
#include "emt/dataset.hpp"
#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/util.hpp"

namespace emt {

struct TargetWeights {
    double w_pos = 1.0;
    double w_neg = 1.0;
};

// Per-target class weights chosen so positive and negative examples
// contribute equal total mass: w_pos*N_pos == w_neg*N_neg == N/2.
inline std::vector<TargetWeights> compute_class_weights(
    const std::vector<std::vector<uint8_t>>& labels,
    const std::vector<std::vector<uint8_t>>& mask,
    const std::vector<std::string>& target_names) {
    if (labels.size() != mask.size() || labels.size() != target_names.size())
        throw std::invalid_argument("compute_class_weights: target count mismatch");
    std::vector<TargetWeights> out(labels.size());
    for (size_t t = 0; t < labels.size(); ++t) {
        if (labels[t].size() != mask[t].size())
            throw std::invalid_argument("compute_class_weights: length mismatch for target " +
                                        target_names[t]);
        size_t pos = 0, neg = 0;
        for (size_t i = 0; i < labels[t].size(); ++i) {
            if (!mask[t][i]) continue;
            if (labels[t][i])
                ++pos;
            else
                ++neg;
        }
        if (pos == 0 || neg == 0)
            throw std::invalid_argument("target " + target_names[t] + " has only " +
                                        (pos == 0 ? "negative" : "positive") +
                                        " training labels; class weights undefined");
        const double n = static_cast<double>(pos + neg);
        out[t].w_pos = n / (2.0 * static_cast<double>(pos));
        out[t].w_neg = n / (2.0 * static_cast<double>(neg));
    }
    return out;
}

// labels[t][j], mask[t][j] for the given corpus samples; target t in
// [0, viewer_count] with the last slot the average viewer
inline void collect_targets(const Corpus& corpus, const std::vector<size_t>& indices,
                            std::vector<std::vector<uint8_t>>& labels,
                            std::vector<std::vector<uint8_t>>& mask) {
    const size_t targets = corpus.target_count();
    labels.assign(targets, std::vector<uint8_t>(indices.size(), 0));
    mask.assign(targets, std::vector<uint8_t>(indices.size(), 0));
    for (size_t j = 0; j < indices.size(); ++j) {
        const LabeledSample& s = corpus.samples[indices[j]];
        for (size_t t = 0; t < targets; ++t) {
            mask[t][j] = s.target_present(t) ? 1 : 0;
            labels[t][j] = s.target_label(t);
        }
    }
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l1_lambda = 1e-5;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    uint64_t seed = 0;
    double decision_threshold = 0.5;

    void validate() const {
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("train config: learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("train config: betas must be in [0, 1)");
        if (!(eps > 0.0)) throw std::invalid_argument("train config: eps must be > 0");
        if (l1_lambda < 0.0) throw std::invalid_argument("train config: l1_lambda must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["learning_rate"] = learning_rate;
        j["beta1"] = beta1;
        j["beta2"] = beta2;
        j["eps"] = eps;
        j["l1_lambda"] = l1_lambda;
        j["batch_size"] = batch_size;
        j["max_epochs"] = max_epochs;
        j["patience"] = patience;
        j["seed"] = seed;
        j["decision_threshold"] = decision_threshold;
        return j;
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.l1_lambda = j.value("l1_lambda", c.l1_lambda);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
        c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
        return c;
    }
};

// Adam with per-parameter moments and step counts. A parameter whose gradient
// is absent in a step is skipped entirely: values, moments, and step count
// stay bitwise identical, which is what makes the masked multi-task update
// rule hold exactly.
struct AdamParamState {
    std::vector<double> m, v;
    uint64_t step = 0;
};

struct AdamState {
    std::vector<AdamParamState> slots;  // parallel to the model's params
};

inline AdamState init_adam(const Model& model) {
    AdamState state;
    state.slots.resize(model.params.size());
    for (size_t i = 0; i < model.params.size(); ++i) {
        const size_t n = model.params[i].node->value.size();
        state.slots[i].m.assign(n, 0.0);
        state.slots[i].v.assign(n, 0.0);
    }
    return state;
}

inline void adam_step(std::vector<Parameter>& params, AdamState& state, const TrainConfig& cfg) {
    if (state.slots.size() != params.size())
        throw std::invalid_argument("adam_step: state/param count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (!p.trainable || !p.node->grad) continue;
        AdamParamState& s = state.slots[i];
        const Tensor& g = *p.node->grad;
        if (s.m.size() != g.size())
            throw std::invalid_argument("adam_step: state shape mismatch at " + p.name);
        ++s.step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
        double* theta = p.node->value.mut_data();
        for (size_t k = 0; k < g.size(); ++k) {
            s.m[k] = cfg.beta1 * s.m[k] + (1.0 - cfg.beta1) * g[k];
            s.v[k] = cfg.beta2 * s.v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double mhat = s.m[k] / bc1;
            const double vhat = s.v[k] / bc2;
            theta[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// lambda * sum(|w|) over weight matrices (biases excluded), built on the tape
// so backward contributes lambda * sign(w).
inline NodePtr l1_penalty(const std::vector<Parameter>& params, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("l1_penalty: lambda must be >= 0");
    NodePtr total;
    for (const auto& p : params) {
        if (!p.is_weight || !p.trainable) continue;
        NodePtr term = reduce_sum(abs_node(p.node));
        total = total ? add(total, term) : term;
    }
    if (!total) return constant(Tensor::scalar(0.0));
    return mul(constant(Tensor::scalar(lambda)), total);
}

// Masked class-weighted binary cross entropy for one target.
inline NodePtr weighted_bce(const NodePtr& pred, const std::vector<uint8_t>& labels,
                            const std::vector<uint8_t>& mask, const TargetWeights& w) {
    return weighted_bce_node(pred, labels, mask, w.w_pos, w.w_neg);
}

// Mean of the per-target losses over targets with at least one present label
// in the batch. Targets with an all-absent mask contribute no loss node at
// all, so their branches receive exactly zero gradient.
inline NodePtr compose_loss(const ForwardOut& out,
                            const std::vector<std::vector<uint8_t>>& labels,
                            const std::vector<std::vector<uint8_t>>& mask,
                            const std::vector<TargetWeights>& weights) {
    if (out.per_target.size() != labels.size() || labels.size() != mask.size() ||
        labels.size() != weights.size())
        throw std::invalid_argument("compose_loss: target count mismatch");
    NodePtr total;
    size_t present_targets = 0;
    for (size_t t = 0; t < out.per_target.size(); ++t) {
        bool any = false;
        for (uint8_t m : mask[t]) any = any || m;
        if (!any) continue;
        NodePtr term = weighted_bce(out.per_target[t], labels[t], mask[t], weights[t]);
        total = total ? add(total, term) : term;
        ++present_targets;
    }
    if (!total) throw std::invalid_argument("compose_loss: batch has no present labels");
    if (present_targets > 1)
        total = mul(constant(Tensor::scalar(1.0 / static_cast<double>(present_targets))), total);
    return total;
}

struct TrainResult {
    std::vector<Tensor> best_params;
    AdamState best_adam;
    int best_epoch = 0;
    double best_val_accuracy = 0.0;
    int epochs_run = 0;
    bool stopped_early = false;
    double final_train_loss = 0.0;
    std::vector<std::string> log_lines;  // one JSON object per epoch
};

namespace detail {

// Token ids and visual rows are reused every epoch; cache them per sample.
struct SampleCache {
    std::vector<std::vector<int>> token_ids;
    const Corpus* corpus = nullptr;
};

inline Batch cached_batch(const Model& model, const SampleCache& cache,
                          const std::vector<size_t>& indices) {
    Batch b;
    b.size = indices.size();
    if (model.modalities != Modalities::kVisual) {
        b.token_ids.reserve(b.size * static_cast<size_t>(model.config.seq_len));
        for (size_t i : indices) {
            const auto& ids = cache.token_ids[i];
            b.token_ids.insert(b.token_ids.end(), ids.begin(), ids.end());
        }
    }
    if (model.modalities != Modalities::kText) {
        const size_t dim = static_cast<size_t>(model.config.visual_dim);
        std::vector<double> vis;
        vis.reserve(b.size * dim);
        for (size_t i : indices) {
            const auto& v = cache.corpus->samples[i].visual;
            if (v.size() != dim)
                throw std::invalid_argument("sample visual dim " + std::to_string(v.size()) +
                                            " != model visual_dim " + std::to_string(dim));
            vis.insert(vis.end(), v.begin(), v.end());
        }
        b.visual = Tensor({b.size, dim}, std::move(vis));
    }
    return b;
}

}  // namespace detail

// Per-target predicted probabilities for a set of samples, batched forward.
inline std::vector<std::vector<double>> predict(const Model& model, const Corpus& corpus,
                                                const std::vector<size_t>& indices,
                                                int batch_size = 64) {
    std::vector<std::vector<double>> preds(model.target_count());
    for (auto& p : preds) p.reserve(indices.size());
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch_size)) {
        const size_t stop = std::min(indices.size(), start + static_cast<size_t>(batch_size));
        const std::vector<size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                        indices.begin() + static_cast<std::ptrdiff_t>(stop));
        const Batch b = make_batch(model, corpus, chunk);
        const ForwardOut out = model.forward(b);
        for (size_t t = 0; t < out.per_target.size(); ++t) {
            const Tensor& v = out.per_target[t]->value;
            for (size_t j = 0; j < v.size(); ++j) preds[t].push_back(v[j]);
        }
    }
    return preds;
}

// Full training loop: shuffled minibatches, masked class-weighted loss plus
// L1, Adam updates, validation-accuracy model selection with patience-based
// early stopping. For ST models st_target picks the corpus target the single
// output learns (viewer index, or viewer_count for the average viewer).
// Returns the best snapshot; the model is left restored to it.
inline TrainResult train(Model& model, const Corpus& corpus,
                         const std::vector<size_t>& train_idx,
                         const std::vector<size_t>& val_idx, const TrainConfig& cfg,
                         int st_target = -1) {
    cfg.validate();
    if (train_idx.empty()) throw std::invalid_argument("train: empty training split");
    if (val_idx.empty()) throw std::invalid_argument("train: empty validation split");
    if (model.kind == ModelKind::kMT &&
        model.viewer_count != corpus.viewer_count)
        throw std::invalid_argument("train: model viewer_count " +
                                    std::to_string(model.viewer_count) + " != corpus " +
                                    std::to_string(corpus.viewer_count));

    // targets this model trains on: all of them for MT, one for ST
    std::vector<size_t> model_targets;
    if (model.kind == ModelKind::kMT) {
        for (size_t t = 0; t < corpus.target_count(); ++t) model_targets.push_back(t);
    } else {
        if (st_target < 0 || static_cast<size_t>(st_target) >= corpus.target_count())
            throw std::invalid_argument("train: ST model needs a target in [0, " +
                                        std::to_string(corpus.target_count()) + ")");
        model_targets.push_back(static_cast<size_t>(st_target));
    }
    // selection target: the average viewer for MT, the trained target for ST
    const size_t sel_slot = model.kind == ModelKind::kMT ? model_targets.size() - 1 : 0;

    // class weights from the training split
    std::vector<std::vector<uint8_t>> all_labels, all_mask;
    collect_targets(corpus, train_idx, all_labels, all_mask);
    std::vector<std::vector<uint8_t>> train_labels, train_mask;
    std::vector<std::string> names;
    for (size_t t : model_targets) {
        train_labels.push_back(all_labels[t]);
        train_mask.push_back(all_mask[t]);
        names.push_back(corpus.target_name(t));
    }
    const auto weights = compute_class_weights(train_labels, train_mask, names);

    // validation labels
    std::vector<std::vector<uint8_t>> val_labels_all, val_mask_all;
    collect_targets(corpus, val_idx, val_labels_all, val_mask_all);

    detail::SampleCache cache;
    cache.corpus = &corpus;
    if (model.modalities != Modalities::kVisual) {
        cache.token_ids.resize(corpus.samples.size());
        auto fill = [&](const std::vector<size_t>& idx) {
            for (size_t i : idx)
                if (cache.token_ids[i].empty())
                    cache.token_ids[i] = tokenize_pad(corpus.samples[i].segment.text, model.vocab);
        };
        fill(train_idx);
        fill(val_idx);
    }

    AdamState adam = init_adam(model);
    Rng shuffle_rng(cfg.seed);
    TrainResult result;
    result.best_val_accuracy = -1.0;
    int epochs_since_improve = 0;

    std::vector<size_t> order(train_idx);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const std::vector<size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(stop));
            try {
                const Batch batch = detail::cached_batch(model, cache, chunk);
                const ForwardOut out = model.forward(batch);

                std::vector<std::vector<uint8_t>> blabels(model_targets.size()),
                    bmask(model_targets.size());
                for (size_t k = 0; k < model_targets.size(); ++k) {
                    blabels[k].resize(chunk.size());
                    bmask[k].resize(chunk.size());
                    for (size_t j = 0; j < chunk.size(); ++j) {
                        const LabeledSample& s = corpus.samples[chunk[j]];
                        bmask[k][j] = s.target_present(model_targets[k]) ? 1 : 0;
                        blabels[k][j] = s.target_label(model_targets[k]);
                    }
                }
                NodePtr loss = compose_loss(out, blabels, bmask, weights);
                if (cfg.l1_lambda > 0.0)
                    loss = add(loss, l1_penalty(model.params, cfg.l1_lambda));
                const double loss_value = loss->value[0];
                if (!std::isfinite(loss_value))
                    throw std::runtime_error("loss is non-finite");
                backward(loss);
                adam_step(model.params, adam, cfg);
                zero_grads(model.params);
                loss_sum += loss_value;
                ++batches;
            } catch (const std::exception& e) {
                throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches + 1) + ": " +
                                         e.what());
            }
        }
        const double train_loss = loss_sum / static_cast<double>(batches);

        // validation accuracy per trained target
        const auto preds = predict(model, corpus, val_idx, cfg.batch_size);
        nlohmann::json val_acc = nlohmann::json::object();
        double sel_acc = 0.0;
        for (size_t k = 0; k < model_targets.size(); ++k) {
            const size_t t = model_targets[k];
            const size_t slot = model.kind == ModelKind::kMT ? t : 0;
            double acc;
            try {
                acc = accuracy(preds[slot], val_labels_all[t], val_mask_all[t],
                               cfg.decision_threshold);
            } catch (const std::invalid_argument&) {
                continue;  // target absent from the validation split
            }
            val_acc[corpus.target_name(t)] = acc;
            if (k == sel_slot) sel_acc = acc;
        }

        const bool improved = sel_acc > result.best_val_accuracy;
        if (improved) {
            result.best_val_accuracy = sel_acc;
            result.best_epoch = epoch;
            result.best_params = model.snapshot();
            result.best_adam = adam;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
        }
        result.epochs_run = epoch;
        result.final_train_loss = train_loss;

        nlohmann::json line;
        line["type"] = "epoch";
        line["epoch"] = epoch;
        line["train_loss"] = train_loss;
        line["val_accuracy"] = val_acc;
        nlohmann::json events = nlohmann::json::array();
        if (improved) events.push_back("improved");
        const bool stopping = epochs_since_improve >= cfg.patience;
        if (stopping) events.push_back("early_stop");
        line["events"] = events;
        line["best_epoch"] = result.best_epoch;
        result.log_lines.push_back(line.dump());

        if (stopping) {
            result.stopped_early = true;
            break;
        }
    }

    model.restore(result.best_params);
    return result;
}

}  // namespace emt
