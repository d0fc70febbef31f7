#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "emt/util.hpp"

namespace {

struct CmdResult {
    int status = -1;
    std::string output;
};

CmdResult run_cmd(const std::string& args) {
    const std::string cmd = std::string(EMT_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    EXPECT_NE(pipe, nullptr);
    CmdResult res;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
    const int rc = pclose(pipe);
    res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return res;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::path(testing::TempDir()) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// one run directory is created per invocation; return its single entry
std::filesystem::path only_run_dir(const std::filesystem::path& outdir) {
    std::vector<std::filesystem::path> entries;
    for (const auto& e : std::filesystem::directory_iterator(outdir))
        entries.push_back(e.path());
    EXPECT_EQ(entries.size(), 1u) << outdir;
    return entries.front();
}

std::string write_config(const std::filesystem::path& dir, const std::string& name,
                         const nlohmann::json& j) {
    const auto path = dir / name;
    emt::write_file(path.string(), j.dump(2) + "\n");
    return path.string();
}

nlohmann::json small_model_config() {
    nlohmann::json j;
    j["model_config"] = {{"embed_dim", 4},
                         {"stages", {{3, 4, 2}, {3, 4, 2}}},
                         {"visual_dim", 4},
                         {"st_head_dims", {8, 4}},
                         {"mt_trunk_dims", {8}},
                         {"mt_branch_dims", {4}}};
    j["train"] = {{"max_epochs", 2}, {"patience", 2}, {"batch_size", 16}};
    return j;
}

}  // namespace

TEST(Cli, FoldsPrintsTheProtocol) {
    const auto out = fresh_dir("cli_folds");
    const CmdResult res = run_cmd("folds --protocol table1 --outdir " + out.string());
    EXPECT_EQ(res.status, 0);
    EXPECT_NE(res.output.find("F1 train=CRA,DEP,FNE,GLA,LOR val=CHI test=BMI"),
              std::string::npos)
        << res.output;
    EXPECT_NE(res.output.find("F7 train=BMI,CRA,DEP,FNE,GLA val=CHI test=LOR"),
              std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(only_run_dir(out) / "folds.txt"));
    EXPECT_TRUE(std::filesystem::exists(only_run_dir(out) / "config.json"));

    const CmdResult base = run_cmd("folds --protocol baseline --outdir " + out.string() + "2");
    EXPECT_EQ(base.status, 0);
    EXPECT_NE(base.output.find("baseline train=BMI,CHI,FNE,GLA,LOR val=- test=CRA,DEP"),
              std::string::npos)
        << base.output;
}

TEST(Cli, ExitCodesFollowErrorKind) {
    const auto out = fresh_dir("cli_exit");
    EXPECT_EQ(run_cmd("folds --protocol nope --outdir " + out.string()).status, 1);
    EXPECT_EQ(run_cmd("ingest --outdir " + out.string()).status, 1);  // no manifest
    EXPECT_EQ(run_cmd("ingest --manifest /does/not/exist.json --outdir " + out.string()).status,
              1);
    EXPECT_EQ(run_cmd("bogus-command").status, 1);  // flag parser rejects it

    const std::string bad_cfg = write_config(out, "bad.json", nlohmann::json{{"unknown_key", 1}});
    EXPECT_EQ(run_cmd("folds --config " + bad_cfg).status, 1);

    const auto broken = out / "broken.json";
    emt::write_file(broken.string(), "{not json");
    EXPECT_EQ(run_cmd("folds --config " + broken.string()).status, 1);

    // unwritable artifact root surfaces as a runtime failure
    EXPECT_EQ(run_cmd("folds --protocol table1 --outdir /proc/nope/x").status, 2);
}

TEST(Cli, SynthIngestTrainEvalCrossvalComposition) {
    const auto base = fresh_dir("cli_pipeline");

    nlohmann::json scfg;
    scfg["synth"] = {{"movies", 7}, {"segments_per_movie", 8}, {"viewers", 2},
                     {"vocab_size", 12}, {"feature_dim", 4}};
    const std::string synth_cfg = write_config(base, "synth_cfg.json", scfg);
    const auto synth_out = base / "synth";
    const CmdResult synth =
        run_cmd("synth --seed 21 --config " + synth_cfg + " --outdir " + synth_out.string());
    ASSERT_EQ(synth.status, 0) << synth.output;
    const auto manifest = only_run_dir(synth_out) / "corpus" / "manifest.json";
    ASSERT_TRUE(std::filesystem::exists(manifest));

    const CmdResult ingest = run_cmd("ingest --manifest " + manifest.string() + " --outdir " +
                                     (base / "ingest").string());
    ASSERT_EQ(ingest.status, 0) << ingest.output;
    EXPECT_NE(ingest.output.find("7 movies"), std::string::npos) << ingest.output;
    EXPECT_TRUE(
        std::filesystem::exists(only_run_dir(base / "ingest") / "stats.json"));

    nlohmann::json mcfg = small_model_config();
    const std::string model_cfg = write_config(base, "model_cfg.json", mcfg);

    const auto train_out = base / "train";
    const CmdResult train = run_cmd("train --model mt --seed 4 --config " + model_cfg +
                                    " --manifest " + manifest.string() + " --outdir " +
                                    train_out.string());
    ASSERT_EQ(train.status, 0) << train.output;
    const auto ckpt = only_run_dir(train_out) / "mt.ckpt";
    ASSERT_TRUE(std::filesystem::exists(ckpt));
    EXPECT_TRUE(std::filesystem::exists(only_run_dir(train_out) / "mt_train.jsonl"));

    // evaluating the trained checkpoint on F1's test movie must reproduce the
    // crossval fold F1 numbers: same seed derivation, same vocabulary
    const auto eval_out = base / "eval";
    const CmdResult eval = run_cmd("eval --checkpoint " + ckpt.string() + " --manifest " +
                                   manifest.string() + " --movies BMI --seed 4 --config " +
                                   model_cfg + " --outdir " + eval_out.string());
    ASSERT_EQ(eval.status, 0) << eval.output;
    const auto eval_json = nlohmann::json::parse(
        emt::read_file((only_run_dir(eval_out) / "report.json").string()));

    const auto cv_out = base / "cv";
    const CmdResult cv = run_cmd("crossval --model mt --seed 4 --config " + model_cfg +
                                 " --manifest " + manifest.string() + " --outdir " +
                                 cv_out.string());
    ASSERT_EQ(cv.status, 0) << cv.output;
    const auto cv_json = nlohmann::json::parse(
        emt::read_file((only_run_dir(cv_out) / "report.json").string()));

    for (const std::string target : {"V1", "V2", "V_avg"}) {
        const double via_eval = eval_json["rows"][0]["per_fold"]["all"][target].get<double>();
        const double via_cv = cv_json["rows"][0]["per_fold"]["F1"][target].get<double>();
        EXPECT_DOUBLE_EQ(via_eval, via_cv) << target;
    }
    EXPECT_TRUE(std::filesystem::exists(only_run_dir(cv_out) / "folds" / "F1_mt.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(only_run_dir(cv_out) / "report.csv"));

    const CmdResult analyze = run_cmd("analyze --manifest " + manifest.string() +
                                      " --outdir " + (base / "an").string());
    ASSERT_EQ(analyze.status, 0) << analyze.output;
    EXPECT_NE(analyze.output.find("mean off-diagonal viewer correlation"), std::string::npos);
    EXPECT_TRUE(
        std::filesystem::exists(only_run_dir(base / "an") / "correlation_matrix.csv"));
}

TEST(Cli, SynthIsDeterministicAcrossInvocations) {
    const auto base = fresh_dir("cli_synth_det");
    nlohmann::json scfg;
    scfg["synth"] = {{"movies", 2}, {"segments_per_movie", 6}, {"viewers", 2},
                     {"vocab_size", 10}, {"feature_dim", 3}};
    const std::string cfg = write_config(base, "synth_cfg.json", scfg);
    const auto o1 = base / "r1", o2 = base / "r2";
    ASSERT_EQ(run_cmd("synth --seed 5 --config " + cfg + " --outdir " + o1.string()).status, 0);
    ASSERT_EQ(run_cmd("synth --seed 5 --config " + cfg + " --outdir " + o2.string()).status, 0);
    const auto m1 = only_run_dir(o1) / "corpus", m2 = only_run_dir(o2) / "corpus";
    for (const char* name : {"manifest.json", "ground_truth.json", "BMI.fvec", "BMI.srt",
                             "BMI_v1.csv", "CHI_v2.csv"}) {
        EXPECT_EQ(emt::read_file((m1 / name).string()), emt::read_file((m2 / name).string()))
            << name;
    }
}
