#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emt/emt.hpp"

namespace {

struct Flags {
    std::string config, manifest, checkpoint, protocol, model, modality, outdir;
    std::string st_target, correlation;
    std::vector<std::string> eval_movies;
    uint64_t seed = 0;
    int workers = 0;
    double binarize_threshold = 0.0;
    bool has_seed = false, has_workers = false, has_threshold = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file; flags override its fields");
    cmd->add_option("--seed", f.seed, "base RNG seed")->each([&](const std::string&) {
        f.has_seed = true;
    });
    cmd->add_option("--outdir", f.outdir, "artifact root; runs land in <outdir>/<run-id>/");
    cmd->add_option("--workers", f.workers, "parallel fold workers")
        ->each([&](const std::string&) { f.has_workers = true; });
}

void add_data(CLI::App* cmd, Flags& f) {
    cmd->add_option("--manifest", f.manifest, "dataset manifest JSON");
    cmd->add_option("--threshold", f.binarize_threshold, "binarization threshold on valence")
        ->each([&](const std::string&) { f.has_threshold = true; });
}

void add_protocol(CLI::App* cmd, Flags& f) {
    cmd->add_option("--protocol", f.protocol, "fold protocol: table1 or baseline");
}

void add_model(CLI::App* cmd, Flags& f) {
    cmd->add_option("--model", f.model, "model kind: st or mt");
    cmd->add_option("--modality", f.modality, "input modalities: text, visual or both");
    cmd->add_option("--st-target", f.st_target, "target for st models (V1..Vn or V_avg)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evoked-emotion multi-task training and evaluation"};
    app.require_subcommand(1);
    Flags f;

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common(synth, f);

    auto* ingest = app.add_subcommand("ingest", "validate a manifest and print statistics");
    add_common(ingest, f);
    add_data(ingest, f);

    auto* folds = app.add_subcommand("folds", "print the fold plan for a protocol");
    add_common(folds, f);
    add_data(folds, f);
    add_protocol(folds, f);

    auto* train = app.add_subcommand("train", "train one model on the first fold");
    add_common(train, f);
    add_data(train, f);
    add_protocol(train, f);
    add_model(train, f);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a dataset");
    add_common(eval, f);
    add_data(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "model checkpoint to load");
    eval->add_option("--movies", f.eval_movies, "restrict evaluation to these movie ids");

    auto* crossval = app.add_subcommand("crossval", "run the full cross-validation protocol");
    add_common(crossval, f);
    add_data(crossval, f);
    add_protocol(crossval, f);
    add_model(crossval, f);

    auto* analyze = app.add_subcommand("analyze", "viewer correlation and label analysis");
    add_common(analyze, f);
    add_data(analyze, f);
    analyze->add_option("--correlation", f.correlation,
                        "correlate continuous means or binary labels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    emt::RunConfig cfg;
    try {
        if (!f.config.empty()) cfg = emt::load_run_config(f.config);
        cfg.command = app.get_subcommands().front()->get_name();
        if (!f.manifest.empty()) cfg.manifest = f.manifest;
        if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
        if (!f.protocol.empty()) cfg.protocol = f.protocol;
        if (!f.model.empty()) cfg.kind = emt::model_kind_from_string(f.model);
        if (!f.modality.empty()) cfg.modalities = emt::modalities_from_string(f.modality);
        if (!f.outdir.empty()) cfg.outdir = f.outdir;
        if (!f.st_target.empty()) cfg.st_target = f.st_target;
        if (!f.correlation.empty())
            cfg.correlation = emt::correlation_mode_from_string(f.correlation);
        if (!f.eval_movies.empty()) cfg.eval_movies = f.eval_movies;
        if (f.has_seed) cfg.seed = f.seed;
        if (f.has_workers) cfg.workers = f.workers;
        if (f.has_threshold) cfg.binarize_threshold = f.binarize_threshold;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    return emt::run_cli(cfg, std::cout, std::cerr);
}
