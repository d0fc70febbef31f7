#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "emt/checkpoint.hpp"
#include "emt/dataset.hpp"
#include "emt/metrics.hpp"
#include "emt/model.hpp"
#include "emt/text_pipeline.hpp"
#include "emt/training.hpp"

namespace emt {

struct FoldPlan {
    std::string fold_id;
    std::vector<std::string> train;
    std::vector<std::string> validation;  // may be empty (selection falls back to train)
    std::vector<std::string> test;
};

// The two built-in protocols over the seven-movie corpus: the seven
// cross-validation folds, and the single 5/2 split used for baseline
// comparisons (no validation movie).
inline std::vector<FoldPlan> builtin_folds(const std::string& protocol) {
    if (protocol == "table1") {
        return {
            {"F1", {"CRA", "DEP", "FNE", "GLA", "LOR"}, {"CHI"}, {"BMI"}},
            {"F2", {"BMI", "DEP", "FNE", "GLA", "LOR"}, {"CRA"}, {"CHI"}},
            {"F3", {"BMI", "CHI", "FNE", "GLA", "LOR"}, {"DEP"}, {"CRA"}},
            {"F4", {"BMI", "CHI", "CRA", "GLA", "LOR"}, {"FNE"}, {"DEP"}},
            {"F5", {"BMI", "CHI", "CRA", "DEP", "LOR"}, {"GLA"}, {"FNE"}},
            {"F6", {"BMI", "CHI", "CRA", "DEP", "FNE"}, {"LOR"}, {"GLA"}},
            {"F7", {"BMI", "CRA", "DEP", "FNE", "GLA"}, {"CHI"}, {"LOR"}},
        };
    }
    if (protocol == "baseline") {
        return {{"baseline", {"BMI", "CHI", "FNE", "GLA", "LOR"}, {}, {"CRA", "DEP"}}};
    }
    throw std::invalid_argument("unknown protocol '" + protocol +
                                "' (expected table1 or baseline)");
}

inline void validate_folds(const Corpus& corpus, const std::vector<FoldPlan>& folds) {
    if (folds.empty()) throw std::invalid_argument("fold list is empty");
    for (const auto& fold : folds) {
        std::vector<std::string> seen;
        auto check = [&](const std::vector<std::string>& ids, const char* role) {
            for (const auto& id : ids) {
                bool in_corpus = false;
                for (const auto& m : corpus.movie_ids) in_corpus = in_corpus || m == id;
                if (!in_corpus)
                    throw std::invalid_argument("fold " + fold.fold_id + ": " + role +
                                                " movie " + id + " is not in the dataset");
                for (const auto& s : seen)
                    if (s == id)
                        throw std::invalid_argument("fold " + fold.fold_id + ": movie " + id +
                                                    " appears in more than one split");
                seen.push_back(id);
            }
        };
        check(fold.train, "train");
        check(fold.validation, "validation");
        check(fold.test, "test");
        if (fold.train.empty() || fold.test.empty())
            throw std::invalid_argument("fold " + fold.fold_id +
                                        " needs non-empty train and test splits");
        if (seen.size() != corpus.movie_ids.size())
            throw std::invalid_argument("fold " + fold.fold_id + " covers " +
                                        std::to_string(seen.size()) + " of " +
                                        std::to_string(corpus.movie_ids.size()) +
                                        " corpus movies");
    }
}

// One table row: a model (or reference classifier) with one accuracy per
// (fold, target), target means over folds, and the overall row mean.
struct EvalRow {
    std::string model;
    std::vector<std::vector<double>> per_fold;  // [fold][target]
    std::vector<double> target_mean;            // [target]
    double mean = 0.0;

    void finalize() {
        if (per_fold.empty()) throw std::invalid_argument("eval row has no folds");
        const size_t targets = per_fold.front().size();
        target_mean.assign(targets, 0.0);
        for (const auto& fold : per_fold) {
            if (fold.size() != targets)
                throw std::invalid_argument("eval row has ragged fold entries");
            for (size_t t = 0; t < targets; ++t) target_mean[t] += fold[t];
        }
        for (auto& v : target_mean) v /= static_cast<double>(per_fold.size());
        mean = 0.0;
        for (double v : target_mean) mean += v;
        mean /= static_cast<double>(targets);
    }
};

struct EvalReport {
    std::vector<std::string> fold_ids;
    std::vector<std::string> target_names;
    std::vector<EvalRow> rows;
    nlohmann::json metadata = nlohmann::json::object();

    const EvalRow& row(const std::string& model) const {
        for (const auto& r : rows)
            if (r.model == model) return r;
        throw std::invalid_argument("report has no row '" + model + "'");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["metadata"] = metadata;
        j["folds"] = fold_ids;
        j["targets"] = target_names;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json jr;
            jr["model"] = r.model;
            jr["per_fold"] = nlohmann::json::object();
            for (size_t f = 0; f < fold_ids.size(); ++f) {
                nlohmann::json jf = nlohmann::json::object();
                for (size_t t = 0; t < target_names.size(); ++t)
                    jf[target_names[t]] = r.per_fold[f][t];
                jr["per_fold"][fold_ids[f]] = jf;
            }
            jr["target_mean"] = nlohmann::json::object();
            for (size_t t = 0; t < target_names.size(); ++t)
                jr["target_mean"][target_names[t]] = r.target_mean[t];
            jr["mean"] = r.mean;
            j["rows"].push_back(jr);
        }
        return j;
    }

    // rows = models, columns = targets plus the row mean, accuracies averaged
    // over folds, two decimals as in the usual table layout
    std::string to_csv() const {
        std::string out = "model";
        for (const auto& t : target_names) out += "," + t;
        out += ",Mean\n";
        for (const auto& r : rows) {
            out += r.model;
            for (double v : r.target_mean) out += "," + fmt_f2(v);
            out += "," + fmt_f2(r.mean) + "\n";
        }
        return out;
    }
};

// deterministic per-(fold, target) seed derivation
inline uint64_t derive_seed(uint64_t base, const std::string& fold_id, const std::string& tag) {
    return fnv1a64(hex64(base) + ":" + fold_id + ":" + tag);
}

struct CrossValConfig {
    ModelKind kind = ModelKind::kMT;
    Modalities modalities = Modalities::kBoth;
    BackboneConfig model;
    TrainConfig train;
    int vocab_min_count = 1;
    int workers = 1;
    std::string artifacts_dir;  // when set, checkpoints and logs land here
    nlohmann::json meta = nlohmann::json::object();  // stamped into every artifact
};

namespace detail {

inline std::vector<size_t> present_subset(const Corpus& corpus, const std::vector<size_t>& idx,
                                          size_t target) {
    std::vector<size_t> out;
    for (size_t i : idx)
        if (corpus.samples[i].target_present(target)) out.push_back(i);
    return out;
}

inline void write_train_log(const std::string& path, const nlohmann::json& header,
                            const std::vector<std::string>& lines) {
    std::string out = header.dump() + "\n";
    for (const auto& line : lines) out += line + "\n";
    write_file(path, out);
}

}  // namespace detail

// Runs the full protocol: per fold, train on the train movies, select on the
// validation movies (or the train split when the fold has none), report
// accuracy on the test movies. MT trains one joint model per fold; ST trains
// one model per target. Reference-classifier rows are computed on the same
// test labels. Folds run on a bounded worker pool; outputs are assembled in
// fold order and do not depend on the worker count.
inline EvalReport cross_validate(const Corpus& corpus, const std::vector<FoldPlan>& folds,
                                 const CrossValConfig& cv) {
    validate_folds(corpus, folds);
    cv.train.validate();
    const size_t targets = corpus.target_count();
    const size_t nfolds = folds.size();

    struct FoldOutcome {
        std::vector<double> model_acc;
        std::vector<double> random_acc, positive_acc, negative_acc;
    };
    std::vector<FoldOutcome> outcomes(nfolds);
    std::vector<std::exception_ptr> errors(nfolds);

    if (!cv.artifacts_dir.empty()) std::filesystem::create_directories(cv.artifacts_dir);

    auto run_fold = [&](size_t fi) {
        const FoldPlan& fold = folds[fi];
        FoldOutcome& oc = outcomes[fi];
        const auto train_idx = samples_of_movies(corpus, fold.train);
        auto val_idx = samples_of_movies(corpus, fold.validation);
        const auto test_idx = samples_of_movies(corpus, fold.test);
        if (train_idx.empty() || test_idx.empty())
            throw std::invalid_argument("fold " + fold.fold_id +
                                        ": train or test split has no samples");
        // no validation movie: select on the training split
        const bool val_is_train = val_idx.empty();
        if (val_is_train) val_idx = train_idx;

        const Vocabulary vocab = build_vocab(corpus, train_idx, cv.vocab_min_count);
        oc.model_acc.assign(targets, 0.0);
        oc.random_acc.assign(targets, 0.0);
        oc.positive_acc.assign(targets, 0.0);
        oc.negative_acc.assign(targets, 0.0);

        // reference classifiers on the fold's test labels
        std::vector<std::vector<uint8_t>> test_labels, test_mask;
        collect_targets(corpus, test_idx, test_labels, test_mask);
        for (size_t t = 0; t < targets; ++t) {
            const auto refs = reference_classifiers(
                test_labels[t], test_mask[t],
                derive_seed(cv.train.seed, fold.fold_id, "ref:" + corpus.target_name(t)));
            oc.random_acc[t] = refs.random;
            oc.positive_acc[t] = refs.positive;
            oc.negative_acc[t] = refs.negative;
        }

        if (cv.kind == ModelKind::kMT) {
            TrainConfig tcfg = cv.train;
            tcfg.seed = derive_seed(cv.train.seed, fold.fold_id, "mt");
            Model model = build_mt(cv.model, corpus.viewer_count, tcfg.seed, cv.modalities, vocab);
            model.meta = cv.meta;
            model.meta["fold"] = fold.fold_id;
            TrainResult res = train(model, corpus, train_idx, val_idx, tcfg);
            const auto preds = predict(model, corpus, test_idx, cv.train.batch_size);
            for (size_t t = 0; t < targets; ++t)
                oc.model_acc[t] = accuracy(preds[t], test_labels[t], test_mask[t],
                                           cv.train.decision_threshold);
            if (!cv.artifacts_dir.empty()) {
                const auto base =
                    std::filesystem::path(cv.artifacts_dir) / (fold.fold_id + "_mt");
                save_checkpoint(model, base.string() + ".ckpt", &res.best_adam);
                nlohmann::json header;
                header["type"] = "run_header";
                header["fold"] = fold.fold_id;
                header["model"] = "mt";
                header["meta"] = cv.meta;
                detail::write_train_log(base.string() + "_train.jsonl", header, res.log_lines);
            }
        } else {
            for (size_t t = 0; t < targets; ++t) {
                const std::string tname = corpus.target_name(t);
                const auto st_train = detail::present_subset(corpus, train_idx, t);
                auto st_val = detail::present_subset(corpus, val_idx, t);
                const auto st_test = detail::present_subset(corpus, test_idx, t);
                if (st_train.empty() || st_test.empty())
                    throw std::invalid_argument("fold " + fold.fold_id + ": target " + tname +
                                                " has no train or test samples");
                if (st_val.empty()) st_val = st_train;
                TrainConfig tcfg = cv.train;
                tcfg.seed = derive_seed(cv.train.seed, fold.fold_id, "st:" + tname);
                Model model = build_st(cv.model, tcfg.seed, cv.modalities, vocab);
                model.meta = cv.meta;
                model.meta["fold"] = fold.fold_id;
                model.meta["st_target"] = static_cast<int>(t);
                TrainResult res =
                    train(model, corpus, st_train, st_val, tcfg, static_cast<int>(t));
                const auto preds = predict(model, corpus, st_test, cv.train.batch_size);
                std::vector<std::vector<uint8_t>> lbl, msk;
                collect_targets(corpus, st_test, lbl, msk);
                oc.model_acc[t] =
                    accuracy(preds[0], lbl[t], msk[t], cv.train.decision_threshold);
                if (!cv.artifacts_dir.empty()) {
                    const auto base = std::filesystem::path(cv.artifacts_dir) /
                                      (fold.fold_id + "_st_" + tname);
                    save_checkpoint(model, base.string() + ".ckpt", &res.best_adam);
                    nlohmann::json header;
                    header["type"] = "run_header";
                    header["fold"] = fold.fold_id;
                    header["model"] = "st";
                    header["target"] = tname;
                    header["meta"] = cv.meta;
                    detail::write_train_log(base.string() + "_train.jsonl", header,
                                            res.log_lines);
                }
            }
        }
    };

    const int workers = std::max(1, cv.workers);
    if (workers == 1 || nfolds == 1) {
        for (size_t fi = 0; fi < nfolds; ++fi) run_fold(fi);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&] {
            while (true) {
                const size_t fi = next.fetch_add(1);
                if (fi >= nfolds) break;
                try {
                    run_fold(fi);
                } catch (...) {
                    errors[fi] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const size_t n = std::min<size_t>(static_cast<size_t>(workers), nfolds);
        for (size_t i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    EvalReport report;
    report.metadata = cv.meta;
    report.metadata["model"] = to_string(cv.kind);
    report.metadata["modalities"] = to_string(cv.modalities);
    for (const auto& fold : folds) report.fold_ids.push_back(fold.fold_id);
    for (size_t t = 0; t < targets; ++t) report.target_names.push_back(corpus.target_name(t));

    auto add_row = [&](const std::string& name, auto member) {
        EvalRow row;
        row.model = name;
        for (const auto& oc : outcomes) row.per_fold.push_back(oc.*member);
        row.finalize();
        report.rows.push_back(std::move(row));
    };
    add_row(to_string(cv.kind), &FoldOutcome::model_acc);
    add_row("random", &FoldOutcome::random_acc);
    add_row("positive", &FoldOutcome::positive_acc);
    add_row("negative", &FoldOutcome::negative_acc);
    return report;
}

// Per-target accuracies of a trained model over a sample subset. ST models
// read their target from meta.st_target (default: the average viewer).
inline EvalReport evaluate_model(const Model& model, const Corpus& corpus,
                                 const std::vector<size_t>& indices, double threshold,
                                 uint64_t ref_seed) {
    if (indices.empty()) throw std::invalid_argument("evaluate_model: no samples selected");
    std::vector<std::vector<uint8_t>> labels, mask;
    collect_targets(corpus, indices, labels, mask);

    EvalReport report;
    report.fold_ids = {"all"};
    EvalRow model_row, rnd, pos, neg;
    model_row.model = to_string(model.kind);
    rnd.model = "random";
    pos.model = "positive";
    neg.model = "negative";

    std::vector<size_t> eval_targets;
    if (model.kind == ModelKind::kMT) {
        if (model.viewer_count != corpus.viewer_count)
            throw std::invalid_argument("evaluate_model: model viewer_count mismatch");
        for (size_t t = 0; t < corpus.target_count(); ++t) eval_targets.push_back(t);
    } else {
        size_t t = static_cast<size_t>(corpus.viewer_count);
        if (model.meta.contains("st_target")) t = model.meta["st_target"].get<size_t>();
        if (t >= corpus.target_count())
            throw std::invalid_argument("evaluate_model: st_target out of range");
        eval_targets.push_back(t);
    }

    model_row.per_fold.emplace_back();
    rnd.per_fold.emplace_back();
    pos.per_fold.emplace_back();
    neg.per_fold.emplace_back();
    for (size_t k = 0; k < eval_targets.size(); ++k) {
        const size_t t = eval_targets[k];
        report.target_names.push_back(corpus.target_name(t));
        const auto subset = detail::present_subset(corpus, indices, t);
        if (subset.empty())
            throw std::invalid_argument("evaluate_model: target " + corpus.target_name(t) +
                                        " has no labeled samples in the selection");
        const auto preds = predict(model, corpus, subset);
        std::vector<std::vector<uint8_t>> slabels, smask;
        collect_targets(corpus, subset, slabels, smask);
        const size_t slot = model.kind == ModelKind::kMT ? t : 0;
        model_row.per_fold[0].push_back(accuracy(preds[slot], slabels[t], smask[t], threshold));
        const auto refs = reference_classifiers(
            slabels[t], smask[t], derive_seed(ref_seed, "eval", corpus.target_name(t)));
        rnd.per_fold[0].push_back(refs.random);
        pos.per_fold[0].push_back(refs.positive);
        neg.per_fold[0].push_back(refs.negative);
    }
    for (EvalRow* r : {&model_row, &rnd, &pos, &neg}) {
        r->finalize();
        report.rows.push_back(*r);
    }
    return report;
}

}  // namespace emt
