#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "emt/checkpoint.hpp"
#include "emt/model.hpp"
#include "emt/synth.hpp"
#include "emt/training.hpp"
#include "emt/util.hpp"

using namespace emt;

namespace {

size_t param_count(const Model& m, const std::string& prefix = "") {
    size_t n = 0;
    for (const auto& p : m.params)
        if (prefix.empty() || p.name.rfind(prefix, 0) == 0) n += p.node->value.size();
    return n;
}

Vocabulary tiny_vocab() { return build_vocab({"a b c d e f g h"}); }

BackboneConfig tiny_config() {
    BackboneConfig c;
    c.embed_dim = 4;
    c.stages = {{3, 4, 2}, {3, 6, 2}};
    c.visual_dim = 5;
    c.st_head_dims = {8, 4};
    c.mt_trunk_dims = {8};
    c.mt_branch_dims = {6};
    return c;
}

struct CorpusFixture {
    Corpus corpus;
    CorpusFixture() {
        SynthConfig sc;
        sc.seed = 404;
        sc.movies = 2;
        sc.segments_per_movie = 12;
        sc.viewers = 2;
        sc.vocab_size = 12;
        sc.feature_dim = 5;
        const auto dir = std::filesystem::path(testing::TempDir()) / "model_corpus";
        synth_generate(sc, dir.string());
        corpus = build_dataset((dir / "manifest.json").string());
    }
};

const Corpus& fixture_corpus() {
    static CorpusFixture f;
    return f.corpus;
}

}  // namespace

TEST(Model, StHeadParameterCountOracle) {
    // visual-only, 128-dim input, head 1024/512/256: classic closed-form count
    BackboneConfig c;
    c.visual_dim = 128;
    const Model m = build_st(c, 1, Modalities::kVisual, Vocabulary());
    EXPECT_EQ(param_count(m), 788481u);
    EXPECT_EQ(param_count(m, "head."), 788481u);
    EXPECT_EQ(param_count(m, "text."), 0u);
}

TEST(Model, TextParameterShapes) {
    BackboneConfig c = tiny_config();
    const Vocabulary v = tiny_vocab();
    const Model m = build_st(c, 1, Modalities::kText, v);
    EXPECT_EQ(m.param("text.embed").node->value.shape(),
              (std::vector<size_t>{v.size(), 4}));
    // conv kernels are stored [k, Cin, Cout]
    EXPECT_EQ(m.param("text.conv0.w").node->value.shape(), (std::vector<size_t>{3, 4, 4}));
    EXPECT_EQ(m.param("text.conv1.w").node->value.shape(), (std::vector<size_t>{3, 4, 6}));
    // 18 -> conv3 -> 16 -> pool2 -> 8 -> conv3 -> 6 -> pool2 -> 3
    EXPECT_EQ(c.text_out_len(), 3u);
}

TEST(Model, MtHasOneBranchPerViewerPlusAverage) {
    const Model m = build_mt(tiny_config(), 3, 1, Modalities::kBoth, tiny_vocab());
    EXPECT_EQ(m.target_count(), 4u);
    for (int t = 0; t < 4; ++t)
        EXPECT_GT(param_count(m, "branch" + std::to_string(t) + "."), 0u);
    EXPECT_EQ(param_count(m, "branch4."), 0u);
    EXPECT_GT(param_count(m, "trunk."), 0u);
    EXPECT_THROW(build_mt(tiny_config(), 0, 1, Modalities::kBoth, tiny_vocab()),
                 std::invalid_argument);
}

TEST(Model, SeededInitIsDeterministic) {
    const Model a = build_mt(tiny_config(), 2, 9, Modalities::kBoth, tiny_vocab());
    const Model b = build_mt(tiny_config(), 2, 9, Modalities::kBoth, tiny_vocab());
    const Model c = build_mt(tiny_config(), 2, 10, Modalities::kBoth, tiny_vocab());
    ASSERT_EQ(a.params.size(), b.params.size());
    bool any_diff_c = false;
    for (size_t i = 0; i < a.params.size(); ++i) {
        const auto &va = a.params[i].node->value, &vb = b.params[i].node->value,
                   &vc = c.params[i].node->value;
        for (size_t j = 0; j < va.size(); ++j) {
            EXPECT_EQ(va[j], vb[j]);
            any_diff_c = any_diff_c || va[j] != vc[j];
        }
    }
    EXPECT_TRUE(any_diff_c);
}

TEST(Model, ForwardShapesAndBatchInvariance) {
    const Corpus& corpus = fixture_corpus();
    const Vocabulary v = build_vocab(corpus, {0, 1, 2, 3});
    const Model mt = build_mt(tiny_config(), corpus.viewer_count, 3, Modalities::kBoth, v);

    const Batch pair = make_batch(mt, corpus, {0, 1});
    const ForwardOut out = mt.forward(pair);
    EXPECT_EQ(out.output->value.shape(),
              (std::vector<size_t>{2, static_cast<size_t>(corpus.viewer_count) + 1}));
    ASSERT_EQ(out.per_target.size(), static_cast<size_t>(corpus.viewer_count) + 1);
    for (const auto& node : out.per_target)
        EXPECT_EQ(node->value.shape(), (std::vector<size_t>{2, 1}));

    const ForwardOut solo = mt.forward(make_batch(mt, corpus, {1}));
    for (size_t t = 0; t < out.per_target.size(); ++t)
        EXPECT_DOUBLE_EQ(out.per_target[t]->value.at(1), solo.per_target[t]->value.at(0));

    const Model st = build_st(tiny_config(), 3, Modalities::kBoth, v);
    const ForwardOut sout = st.forward(pair);
    EXPECT_EQ(sout.output->value.shape(), (std::vector<size_t>{2, 1}));
    ASSERT_EQ(sout.per_target.size(), 1u);
}

TEST(Model, ZeroParametersPredictHalf) {
    const Corpus& corpus = fixture_corpus();
    Model m = build_mt(tiny_config(), corpus.viewer_count, 3, Modalities::kBoth,
                       build_vocab(corpus, {0, 1}));
    for (auto& p : m.params) p.node->value = Tensor::zeros(p.node->value.shape());
    const ForwardOut out = m.forward(make_batch(m, corpus, {0, 1, 2}));
    for (const auto& node : out.per_target)
        for (size_t i = 0; i < node->value.size(); ++i) EXPECT_EQ(node->value.at(i), 0.5);
}

TEST(Model, SnapshotRestore) {
    Model m = build_st(tiny_config(), 7, Modalities::kVisual, Vocabulary());
    const auto snap = m.snapshot();
    m.params[0].node->value.mut_data()[0] += 1.0;
    m.restore(snap);
    const Model fresh = build_st(tiny_config(), 7, Modalities::kVisual, Vocabulary());
    for (size_t i = 0; i < m.params.size(); ++i)
        for (size_t j = 0; j < m.params[i].node->value.size(); ++j)
            EXPECT_EQ(m.params[i].node->value.at(j), fresh.params[i].node->value.at(j));
    EXPECT_THROW(m.param("not.there"), std::invalid_argument);
}

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
    const Corpus& corpus = fixture_corpus();
    const Vocabulary v = build_vocab(corpus, {0, 1, 2, 3, 4});
    Model m = build_mt(tiny_config(), corpus.viewer_count, 11, Modalities::kBoth, v);
    m.meta["note"] = "fixture";
    AdamState adam = init_adam(m);
    adam.slots[2].step = 5;
    adam.slots[2].m[0] = 0.25;

    const auto dir = std::filesystem::path(testing::TempDir());
    const std::string p1 = (dir / "a.ckpt").string(), p2 = (dir / "b.ckpt").string();
    save_checkpoint(m, p1, &adam);
    LoadedCheckpoint lc = load_checkpoint(p1);
    ASSERT_TRUE(lc.adam.has_value());
    save_checkpoint(lc.model, p2, &*lc.adam);
    EXPECT_EQ(read_file(p1), read_file(p2));

    // bitwise-equal forward on a fixed batch
    const Batch batch = make_batch(m, corpus, {0, 3, 5});
    const ForwardOut a = m.forward(batch), b = lc.model.forward(batch);
    for (size_t t = 0; t < a.per_target.size(); ++t)
        for (size_t i = 0; i < a.per_target[t]->value.size(); ++i)
            EXPECT_EQ(a.per_target[t]->value.at(i), b.per_target[t]->value.at(i));

    EXPECT_EQ(lc.adam->slots[2].step, 5u);
    EXPECT_EQ(lc.adam->slots[2].m.at(0), 0.25);
    EXPECT_EQ(lc.model.meta["note"], "fixture");
}

TEST(Checkpoint, WithoutOptimizerState) {
    Model m = build_st(tiny_config(), 1, Modalities::kVisual, Vocabulary());
    const std::string p = (std::filesystem::path(testing::TempDir()) / "ns.ckpt").string();
    save_checkpoint(m, p);
    EXPECT_FALSE(load_checkpoint(p).adam.has_value());
}

TEST(Checkpoint, RejectsWrongKindTruncationAndCorruption) {
    Model m = build_st(tiny_config(), 1, Modalities::kVisual, Vocabulary());
    const auto dir = std::filesystem::path(testing::TempDir());
    const std::string p = (dir / "st.ckpt").string();
    save_checkpoint(m, p);

    try {
        load_checkpoint(p, ModelKind::kMT);
        FAIL() << "expected kind mismatch";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("architecture mismatch"), std::string::npos);
    }

    const std::string bytes = read_file(p);
    const std::string trunc_path = (dir / "trunc.ckpt").string();
    write_file(trunc_path, bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(load_checkpoint(trunc_path), std::invalid_argument);

    std::string corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x40;
    const std::string corrupt_path = (dir / "corrupt.ckpt").string();
    write_file(corrupt_path, corrupt);
    try {
        load_checkpoint(corrupt_path);
        FAIL() << "expected checksum failure";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }

    const std::string not_ckpt = (dir / "not.ckpt").string();
    write_file(not_ckpt, "hello");
    EXPECT_THROW(load_checkpoint(not_ckpt), std::invalid_argument);
}
