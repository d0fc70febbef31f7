#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "emt/analysis.hpp"
#include "emt/checkpoint.hpp"
#include "emt/dataset.hpp"
#include "emt/evaluation.hpp"
#include "emt/model.hpp"
#include "emt/synth.hpp"
#include "emt/training.hpp"
#include "emt/util.hpp"

namespace emt {

// One resolved invocation: a command plus every knob it can read. A JSON
// config file fills the same fields; command-line flags override it. The
// run id is a hash of the semantic fields (everything except outdir and
// workers, which cannot change results), so re-running an identical config
// lands in the same directory and every artifact can be traced back to its
// exact configuration.
struct RunConfig {
    std::string command;
    std::string manifest;
    std::string checkpoint;
    std::string protocol = "table1";
    ModelKind kind = ModelKind::kMT;
    Modalities modalities = Modalities::kBoth;
    std::string outdir = "runs";
    uint64_t seed = 0;
    int workers = 1;
    double binarize_threshold = 0.0;
    int vocab_min_count = 1;
    std::string st_target = "V_avg";
    CorrelationMode correlation = CorrelationMode::kContinuous;
    std::vector<std::string> eval_movies;  // eval: restrict to these movies (empty = all)
    std::optional<FoldPlan> custom_fold;   // overrides the protocol's fold list
    BackboneConfig model;
    TrainConfig train;
    SynthConfig synth;

    nlohmann::json to_canonical_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["manifest"] = manifest;
        j["checkpoint"] = checkpoint;
        j["protocol"] = protocol;
        j["model"] = to_string(kind);
        j["modality"] = to_string(modalities);
        j["seed"] = seed;
        j["binarize_threshold"] = binarize_threshold;
        j["vocab_min_count"] = vocab_min_count;
        j["st_target"] = st_target;
        j["correlation"] = to_string(correlation);
        j["eval_movies"] = eval_movies;
        if (custom_fold) {
            nlohmann::json f;
            f["fold_id"] = custom_fold->fold_id;
            f["train"] = custom_fold->train;
            f["validation"] = custom_fold->validation;
            f["test"] = custom_fold->test;
            j["fold"] = f;
        } else {
            j["fold"] = nullptr;
        }
        j["train"] = train.to_json();
        j["model_config"] = model.to_json();
        j["synth"] = synth.to_json();
        return j;
    }

    std::string config_hash() const { return hex64(fnv1a64(to_canonical_json().dump())); }
    std::string run_id() const { return config_hash().substr(0, 12); }

    static RunConfig from_json(const nlohmann::json& j) {
        static const std::vector<std::string> known = {
            "command",     "manifest",    "checkpoint",         "protocol",
            "model",       "modality",    "outdir",             "seed",
            "workers",     "binarize_threshold",                "vocab_min_count",
            "st_target",   "correlation", "eval_movies",        "fold",
            "train",       "model_config", "synth"};
        if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const auto& k : known) ok = ok || k == it.key();
            if (!ok) throw std::invalid_argument("config has unknown key '" + it.key() + "'");
        }
        RunConfig c;
        if (j.contains("command")) c.command = j["command"].get<std::string>();
        if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
        if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
        if (j.contains("protocol")) c.protocol = j["protocol"].get<std::string>();
        if (j.contains("model")) c.kind = model_kind_from_string(j["model"].get<std::string>());
        if (j.contains("modality"))
            c.modalities = modalities_from_string(j["modality"].get<std::string>());
        if (j.contains("outdir")) c.outdir = j["outdir"].get<std::string>();
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("workers")) c.workers = j["workers"].get<int>();
        if (j.contains("binarize_threshold"))
            c.binarize_threshold = j["binarize_threshold"].get<double>();
        if (j.contains("vocab_min_count")) c.vocab_min_count = j["vocab_min_count"].get<int>();
        if (j.contains("st_target")) c.st_target = j["st_target"].get<std::string>();
        if (j.contains("correlation"))
            c.correlation = correlation_mode_from_string(j["correlation"].get<std::string>());
        if (j.contains("eval_movies"))
            c.eval_movies = j["eval_movies"].get<std::vector<std::string>>();
        if (j.contains("fold") && !j["fold"].is_null()) {
            const auto& f = j["fold"];
            FoldPlan plan;
            plan.fold_id = f.contains("fold_id") ? f["fold_id"].get<std::string>() : "custom";
            plan.train = f.at("train").get<std::vector<std::string>>();
            if (f.contains("validation"))
                plan.validation = f["validation"].get<std::vector<std::string>>();
            plan.test = f.at("test").get<std::vector<std::string>>();
            c.custom_fold = plan;
        }
        if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
        if (j.contains("model_config")) c.model = BackboneConfig::from_json(j["model_config"]);
        if (j.contains("synth")) c.synth = SynthConfig::from_json(j["synth"]);
        return c;
    }
};

inline RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(path, e.what());
    }
    try {
        return RunConfig::from_json(j);
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(path, e.what());
    }
}

struct RunResult {
    std::string run_id;
    std::string run_dir;
};

namespace detail {

inline std::filesystem::path prepare_run_dir(const RunConfig& cfg) {
    const auto dir = std::filesystem::path(cfg.outdir) / cfg.run_id();
    std::filesystem::create_directories(dir);
    nlohmann::json j = cfg.to_canonical_json();
    j["outdir"] = cfg.outdir;
    j["workers"] = cfg.workers;
    j["config_hash"] = cfg.config_hash();
    write_file((dir / "config.json").string(), j.dump(2) + "\n");
    return dir;
}

inline nlohmann::json run_meta(const RunConfig& cfg) {
    nlohmann::json m;
    m["config_hash"] = cfg.config_hash();
    m["seed"] = cfg.seed;
    return m;
}

inline Corpus load_corpus(const RunConfig& cfg) {
    if (cfg.manifest.empty())
        throw std::invalid_argument("command '" + cfg.command + "' requires a manifest path");
    return build_dataset(cfg.manifest, cfg.binarize_threshold);
}

inline std::vector<FoldPlan> resolve_folds(const RunConfig& cfg) {
    if (cfg.custom_fold) return {*cfg.custom_fold};
    return builtin_folds(cfg.protocol);
}

inline size_t resolve_target(const Corpus& corpus, const std::string& name) {
    for (size_t t = 0; t < corpus.target_count(); ++t)
        if (corpus.target_name(t) == name) return t;
    throw std::invalid_argument("unknown target '" + name + "' (targets: V1..V" +
                                std::to_string(corpus.viewer_count) + ", V_avg)");
}

inline std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
    return out.empty() ? "-" : out;
}

inline void cmd_synth(const RunConfig& cfg, const std::filesystem::path& dir,
                      std::ostream& out) {
    SynthConfig s = cfg.synth;
    s.seed = cfg.seed;
    const auto corpus_dir = dir / "corpus";
    synth_generate(s, corpus_dir.string());
    out << "wrote " << (corpus_dir / "manifest.json").string() << " (" << s.movies
        << " movies, " << s.viewers << " viewers, " << s.segments_per_movie
        << " segments each)\n";
}

inline void cmd_ingest(const RunConfig& cfg, const std::filesystem::path& dir,
                       std::ostream& out) {
    const Corpus corpus = load_corpus(cfg);
    const HistogramResult hist = label_histograms(corpus);
    nlohmann::json stats;
    stats["metadata"] = run_meta(cfg);
    stats["viewer_count"] = corpus.viewer_count;
    stats["feature_dim"] = corpus.feature_dim;
    stats["binarize_threshold"] = corpus.threshold;
    stats["movies"] = nlohmann::json::object();
    for (const auto& id : corpus.movie_ids)
        stats["movies"][id] = samples_of_movies(corpus, {id}).size();
    stats["labels"] = nlohmann::json::object();
    for (size_t t = 0; t < corpus.target_count(); ++t) {
        size_t pos = 0, neg = 0;
        for (size_t m = 0; m < hist.movie_ids.size(); ++m) {
            pos += hist.positive[m][t];
            neg += hist.negative[m][t];
        }
        stats["labels"][corpus.target_name(t)] = {{"positive", pos}, {"negative", neg}};
    }
    write_file((dir / "stats.json").string(), stats.dump(2) + "\n");
    out << "dataset: " << corpus.movie_ids.size() << " movies, " << corpus.samples.size()
        << " segments, " << corpus.viewer_count << " viewers, feature_dim "
        << corpus.feature_dim << "\n";
    for (size_t t = 0; t < corpus.target_count(); ++t) {
        const auto& l = stats["labels"][corpus.target_name(t)];
        out << "  " << corpus.target_name(t) << ": " << l["positive"].get<size_t>()
            << " positive / " << l["negative"].get<size_t>() << " negative\n";
    }
}

inline void cmd_folds(const RunConfig& cfg, const std::filesystem::path& dir,
                      std::ostream& out) {
    const auto folds = resolve_folds(cfg);
    if (!cfg.manifest.empty()) {
        const Corpus corpus = load_corpus(cfg);
        validate_folds(corpus, folds);
    }
    std::string text;
    for (const auto& f : folds)
        text += f.fold_id + " train=" + join_ids(f.train) + " val=" + join_ids(f.validation) +
                " test=" + join_ids(f.test) + "\n";
    write_file((dir / "folds.txt").string(), text);
    out << text;
}

inline void cmd_train(const RunConfig& cfg, const std::filesystem::path& dir,
                      std::ostream& out) {
    const Corpus corpus = load_corpus(cfg);
    const FoldPlan fold = resolve_folds(cfg).front();
    validate_folds(corpus, {fold});
    const auto train_idx = samples_of_movies(corpus, fold.train);
    auto val_idx = samples_of_movies(corpus, fold.validation);
    const Vocabulary vocab = build_vocab(corpus, train_idx, cfg.vocab_min_count);

    TrainConfig tcfg = cfg.train;
    nlohmann::json meta = run_meta(cfg);
    meta["fold"] = fold.fold_id;
    std::string model_name;

    Model model;
    int st_slot = -1;
    if (cfg.kind == ModelKind::kMT) {
        tcfg.seed = derive_seed(cfg.seed, fold.fold_id, "mt");
        model = build_mt(cfg.model, corpus.viewer_count, tcfg.seed, cfg.modalities, vocab);
        model_name = "mt";
    } else {
        const size_t t = resolve_target(corpus, cfg.st_target);
        st_slot = static_cast<int>(t);
        tcfg.seed = derive_seed(cfg.seed, fold.fold_id, "st:" + cfg.st_target);
        model = build_st(cfg.model, tcfg.seed, cfg.modalities, vocab);
        meta["st_target"] = t;
        model_name = "st_" + cfg.st_target;
    }
    model.meta = meta;

    auto tr = train_idx;
    auto va = val_idx.empty() ? train_idx : val_idx;
    if (st_slot >= 0) {
        tr = present_subset(corpus, tr, static_cast<size_t>(st_slot));
        va = present_subset(corpus, va, static_cast<size_t>(st_slot));
        if (va.empty()) va = tr;
    }
    const TrainResult res = train(model, corpus, tr, va, tcfg, st_slot);

    const auto ckpt = dir / (model_name + ".ckpt");
    save_checkpoint(model, ckpt.string(), &res.best_adam);
    nlohmann::json header;
    header["type"] = "run_header";
    header["fold"] = fold.fold_id;
    header["model"] = to_string(cfg.kind);
    header["meta"] = meta;
    write_train_log((dir / (model_name + "_train.jsonl")).string(), header, res.log_lines);
    out << "trained " << model_name << " on fold " << fold.fold_id << ": best epoch "
        << res.best_epoch << ", selection accuracy " << fmt_f2(res.best_val_accuracy)
        << ", checkpoint " << ckpt.string() << "\n";
}

inline void cmd_eval(const RunConfig& cfg, const std::filesystem::path& dir,
                     std::ostream& out) {
    if (cfg.checkpoint.empty())
        throw std::invalid_argument("command 'eval' requires a checkpoint path");
    const Corpus corpus = load_corpus(cfg);
    LoadedCheckpoint loaded = load_checkpoint(cfg.checkpoint);
    std::vector<size_t> indices;
    if (cfg.eval_movies.empty()) {
        for (size_t i = 0; i < corpus.samples.size(); ++i) indices.push_back(i);
    } else {
        indices = samples_of_movies(corpus, cfg.eval_movies);
    }
    EvalReport report = evaluate_model(loaded.model, corpus, indices,
                                       cfg.train.decision_threshold, cfg.seed);
    report.metadata.update(run_meta(cfg));
    report.metadata["checkpoint"] =
        std::filesystem::path(cfg.checkpoint).filename().string();
    write_file((dir / "report.json").string(), report.to_json().dump(2) + "\n");
    write_file((dir / "report.csv").string(), report.to_csv());
    out << report.to_csv();
}

inline void cmd_crossval(const RunConfig& cfg, const std::filesystem::path& dir,
                         std::ostream& out) {
    const Corpus corpus = load_corpus(cfg);
    const auto folds = resolve_folds(cfg);
    CrossValConfig cv;
    cv.kind = cfg.kind;
    cv.modalities = cfg.modalities;
    cv.model = cfg.model;
    cv.train = cfg.train;
    cv.train.seed = cfg.seed;
    cv.vocab_min_count = cfg.vocab_min_count;
    cv.workers = cfg.workers;
    cv.artifacts_dir = (dir / "folds").string();
    cv.meta = run_meta(cfg);
    const EvalReport report = cross_validate(corpus, folds, cv);
    write_file((dir / "report.json").string(), report.to_json().dump(2) + "\n");
    write_file((dir / "report.csv").string(), report.to_csv());
    out << report.to_csv();
    out << to_string(cfg.kind) << " mean accuracy over folds: "
        << fmt_f2(report.row(to_string(cfg.kind)).mean) << "\n";
}

inline void cmd_analyze(const RunConfig& cfg, const std::filesystem::path& dir,
                        std::ostream& out) {
    const Corpus corpus = load_corpus(cfg);
    const CorrelationResult corr = correlation_analysis(corpus, cfg.correlation);
    const HistogramResult hist = label_histograms(corpus);
    nlohmann::json j;
    j["metadata"] = run_meta(cfg);
    j["mode"] = to_string(corr.mode);
    j["mean_offdiag_viewer_correlation"] = corr.mean_offdiag_viewer_correlation();
    j["targets"] = corr.target_names;
    j["average"] = corr.average;
    write_file((dir / "analysis.json").string(), j.dump(2) + "\n");
    write_file((dir / "correlations.csv").string(), correlation_csv(corr));
    write_file((dir / "correlation_matrix.csv").string(), correlation_matrix_csv(corr));
    write_file((dir / "histograms.csv").string(), histogram_csv(hist));
    out << correlation_matrix_csv(corr);
    out << "mean off-diagonal viewer correlation: "
        << fmt_f6(corr.mean_offdiag_viewer_correlation()) << "\n";
}

}  // namespace detail

// Dispatches one configured run. Throws std::invalid_argument for anything
// wrong with the inputs and std::runtime_error for failures mid-run; the CLI
// maps those to exit codes 1 and 2.
inline RunResult run(const RunConfig& cfg, std::ostream& out) {
    static const std::vector<std::string> commands = {"synth",    "ingest", "folds", "train",
                                                      "eval",     "crossval", "analyze"};
    bool known = false;
    for (const auto& c : commands) known = known || c == cfg.command;
    if (!known)
        throw std::invalid_argument("unknown command '" + cfg.command +
                                    "' (expected synth, ingest, folds, train, eval, "
                                    "crossval or analyze)");
    if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");
    cfg.train.validate();
    cfg.model.validate(cfg.modalities);

    const auto dir = detail::prepare_run_dir(cfg);
    if (cfg.command == "synth") detail::cmd_synth(cfg, dir, out);
    if (cfg.command == "ingest") detail::cmd_ingest(cfg, dir, out);
    if (cfg.command == "folds") detail::cmd_folds(cfg, dir, out);
    if (cfg.command == "train") detail::cmd_train(cfg, dir, out);
    if (cfg.command == "eval") detail::cmd_eval(cfg, dir, out);
    if (cfg.command == "crossval") detail::cmd_crossval(cfg, dir, out);
    if (cfg.command == "analyze") detail::cmd_analyze(cfg, dir, out);
    return {cfg.run_id(), dir.string()};
}

inline int run_cli(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        run(cfg, out);
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace emt
