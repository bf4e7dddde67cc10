#include <fstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "test_support.hpp"
#include "wordlens/commands.hpp"
#include "wordlens/util.hpp"

using namespace wordlens;
using nlohmann::json;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "wordlens");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

// Word embeddings with unit vector e_k for the k-th builtin word in `dim` dimensions.
void write_orthonormal_words(const fs::path& p, std::size_t dim, const std::vector<std::string>& extra = {}) {
    std::vector<std::string> ids;
    for (const auto& e : builtin_table1()) ids.push_back(e.word);
    ids.insert(ids.end(), extra.begin(), extra.end());
    std::vector<float> data(ids.size() * dim, 0.0f);
    for (std::size_t k = 0; k < ids.size(); ++k) data[k * dim + k] = 1.0f;
    write_embeddings(EmbeddingMatrix(ids, dim, data), p);
}

void write_probe(const fs::path& p, const std::vector<double>& w, bool normalized) {
    ProbeModel m;
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.normalize_inputs = normalized;
    write_text(p, probe_to_json(m));
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override { ASSERT_EQ(run_cli({"synth", "--seed", "1", "--out-dir", (dir_ / "synth").string()}), 0); }
    std::string in(const std::string& name) const { return (dir_ / "synth" / name).string(); }
    std::string out(const std::string& name) const { return (dir_ / name).string(); }

    int fit(const std::string& out_dir, const std::string& labels = {}) {
        return run_cli({"fit", "--embeddings", in("images.emb"), "--labels", labels.empty() ? in("labels.csv") : labels,
                        "--split", in("split.json"), "--out-dir", out_dir});
    }

    TempDir dir_{"cli"};
};

}  // namespace

TEST_F(Cli, FitWritesArtifactsThatReferenceTheManifest) {
    ASSERT_EQ(fit(out("fit")), 0);
    for (const char* f : {"probe.json", "metrics.json", "scores_train.csv", "scores_test.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(fs::path(out("fit")) / f)) << f;
    }
    const auto manifest = read_json(fs::path(out("fit")) / "manifest.json");
    const std::string hash = manifest.at("manifest_hash");
    EXPECT_EQ(read_json(fs::path(out("fit")) / "probe.json").at("manifest_hash"), hash);
    const auto metrics = read_json(fs::path(out("fit")) / "metrics.json");
    EXPECT_EQ(metrics.at("manifest_hash"), hash);
    EXPECT_GE(metrics.at("test").at("auroc").at("auc").get<double>(), 0.95);
    EXPECT_EQ(manifest.at("config").at("normalize"), true);
    EXPECT_EQ(manifest.at("inputs").at("labels").at("sha256"), sha256_file(in("labels.csv")));
}

TEST_F(Cli, RerunsAreByteIdentical) {
    ASSERT_EQ(fit(out("a")), 0);
    ASSERT_EQ(fit(out("b")), 0);
    for (const char* f : {"probe.json", "metrics.json", "scores_train.csv", "scores_test.csv"}) {
        EXPECT_EQ(read_file(fs::path(out("a")) / f), read_file(fs::path(out("b")) / f)) << f;
    }
    auto ma = read_json(fs::path(out("a")) / "manifest.json"), mb = read_json(fs::path(out("b")) / "manifest.json");
    ma.erase("created_at");
    mb.erase("created_at");
    EXPECT_EQ(ma, mb);
}

TEST_F(Cli, ShuffledLabelsGiveChanceAuroc) {
    // Permute the label column with a fixed seed; the probe then has nothing to learn. A large
    // test split keeps the null AUROC standard deviation near 0.018.
    const fs::path big = out("big");
    ASSERT_EQ(run_cli({"synth", "--seed", "1", "--n-test", "3000", "--out-dir", big.string()}), 0);
    const auto labels = read_labels(big / "labels.csv");
    std::vector<std::string> ids;
    std::vector<int> values;
    for (const auto& [id, v] : labels.entries) {
        ids.push_back(id);
        values.push_back(v);
    }
    std::mt19937_64 rng(20240601);
    seeded_shuffle(values, rng);
    std::string csv = "id,label\n";
    for (std::size_t i = 0; i < ids.size(); ++i) csv += ids[i] + "," + std::to_string(values[i]) + "\n";
    write_text(out("shuffled.csv"), csv);
    ASSERT_EQ(run_cli({"fit", "--embeddings", (big / "images.emb").string(), "--labels", out("shuffled.csv"), "--split",
                       (big / "split.json").string(), "--out-dir", out("null")}),
              0);
    const double auc = read_json(fs::path(out("null")) / "metrics.json").at("test").at("auroc").at("auc");
    EXPECT_GE(auc, 0.40);
    EXPECT_LE(auc, 0.60);
}

TEST_F(Cli, SeparableFixtureHasPerfectAuroc) {
    std::vector<std::string> ids;
    std::vector<float> data;
    std::string labels = "id,label\n";
    json split{{"train", json::array()}, {"test", json::array()}, {"groups", nullptr}};
    for (int i = 0; i < 40; ++i) {
        const std::string id = "s" + std::to_string(i);
        const int y = i % 2;
        ids.push_back(id);
        data.push_back(y ? 1.0f : -1.0f);
        data.push_back(0.05f * static_cast<float>(i % 7));
        labels += id + "," + std::to_string(y) + "\n";
        split[i < 30 ? "train" : "test"].push_back(id);
    }
    write_embeddings(EmbeddingMatrix(ids, 2, data), out("sep.emb"));
    write_text(out("sep.csv"), labels);
    write_text(out("sep.json"), split.dump());
    ASSERT_EQ(run_cli({"fit", "--embeddings", out("sep.emb"), "--labels", out("sep.csv"), "--split", out("sep.json"),
                       "--out-dir", out("sep")}),
              0);
    const auto auroc = read_json(fs::path(out("sep")) / "metrics.json").at("test").at("auroc");
    EXPECT_EQ(auroc.at("auc"), 1.0);
    EXPECT_EQ(auroc.at("ci_low"), 1.0);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(fit(out("missing"), out("no-such-labels.csv")), cli::kExitValidation);
    EXPECT_FALSE(fs::exists(out("missing")));
    EXPECT_EQ(run_cli({"fit", "--bogus"}), cli::kExitValidation);
    EXPECT_EQ(run_cli({"fit", "--embeddings", in("images.emb"), "--labels", in("labels.csv"), "--split", in("split.json"),
                       "--max-iter", "0", "--out-dir", out("nc")}),
              cli::kExitNumerical);
    EXPECT_FALSE(fs::exists(out("nc")));
}

TEST_F(Cli, EvaluateScoresFile) {
    ASSERT_EQ(fit(out("fit")), 0);
    ASSERT_EQ(run_cli({"evaluate", "--scores", (fs::path(out("fit")) / "scores_test.csv").string(), "--labels",
                       in("labels.csv"), "--out-dir", out("ev")}),
              0);
    const auto a = read_json(fs::path(out("fit")) / "metrics.json").at("test").at("auroc").at("auc");
    const auto b = read_json(fs::path(out("ev")) / "metrics.json").at("scores").at("auroc").at("auc");
    EXPECT_EQ(a, b);
}

TEST_F(Cli, DecomposeRecoversPlantedWords) {
    ASSERT_EQ(fit(out("fit")), 0);
    ASSERT_EQ(run_cli({"decompose", "--probe", (fs::path(out("fit")) / "probe.json").string(), "--text-embeddings",
                       in("words.emb"), "--out-dir", out("dec")}),
              0);
    const auto ww = read_json(fs::path(out("dec")) / "word_weights.json");
    EXPECT_EQ(ww.at("format"), "wordweights-v1");
    EXPECT_EQ(ww.at("top_words").at("positive").at(0), "coarse");
    EXPECT_EQ(ww.at("top_words").at("negative").at(0), "smooth");
    const std::string csv = read_file(fs::path(out("dec")) / "word_weights.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "word,property,weight");
    // The probe was fit on normalized inputs.
    EXPECT_EQ(run_cli({"decompose", "--probe", (fs::path(out("fit")) / "probe.json").string(), "--text-embeddings",
                       in("words.emb"), "--no-normalize", "--out-dir", out("dec2")}),
              cli::kExitValidation);
}

TEST_F(Cli, DecomposeOrthonormalDictionaryGivesProjections) {
    write_orthonormal_words(out("ortho.emb"), 16, {"ruler"});
    std::vector<double> w(16);
    for (std::size_t i = 0; i < 14; ++i) w[i] = 0.1 * static_cast<double>(i) - 0.6;
    w[15] = 2.0;  // outside the span of every word
    write_probe(out("probe.json"), w, false);
    ASSERT_EQ(run_cli({"decompose", "--probe", out("probe.json"), "--text-embeddings", out("ortho.emb"), "--no-normalize",
                       "--extra-word", "ruler", "--out-dir", out("dec")}),
              0);
    const auto coef = read_json(fs::path(out("dec")) / "word_weights.json").at("coefficients");
    const auto table = builtin_table1();
    for (std::size_t i = 0; i < 14; ++i) EXPECT_NEAR(coef.at(table[i].word).get<double>(), w[i], 1e-12);
    EXPECT_EQ(coef.at("ruler").get<double>(), 0.0);
}

TEST_F(Cli, DecomposeRankDeficiencyIsNumerical) {
    std::vector<std::string> ids;
    for (const auto& e : builtin_table1()) ids.push_back(e.word);
    std::vector<float> data(14 * 16, 0.0f);
    for (std::size_t k = 0; k < 14; ++k) data[k * 16 + (k == 13 ? 0 : k)] = 1.0f;
    write_embeddings(EmbeddingMatrix(ids, 16, data), out("dup.emb"));
    write_probe(out("probe.json"), std::vector<double>(16, 0.5), false);
    EXPECT_EQ(run_cli({"decompose", "--probe", out("probe.json"), "--text-embeddings", out("dup.emb"), "--no-normalize",
                       "--out-dir", out("dec")}),
              cli::kExitNumerical);
    EXPECT_FALSE(fs::exists(out("dec")));
}

TEST_F(Cli, PrototypeGalleriesHonorTopK) {
    ASSERT_EQ(run_cli({"prototypes", "--embeddings", in("images.emb"), "--text-embeddings", in("words.emb"), "--split",
                       in("split.json"), "--top-k", "5", "--out-dir", out("pro")}),
              0);
    const auto g = read_json(fs::path(out("pro")) / "galleries.json");
    EXPECT_EQ(g.at("format"), "gallery-v1");
    EXPECT_EQ(g.at("population"), "train");
    ASSERT_EQ(g.at("galleries").size(), 14u);
    for (const auto& gal : g.at("galleries")) {
        EXPECT_EQ(gal.at("images").size(), 5u);
        EXPECT_FALSE(gal.at("degenerate").get<bool>());
    }
    const std::string csv = read_file(fs::path(out("pro")) / "prototypes.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 400 * 14);
    EXPECT_FALSE(fs::exists(fs::path(out("pro")) / "prevalence.json"));
}

TEST_F(Cli, PredictableColumnIsFlagged) {
    DictionaryFile d{{{"Color", "light", "light"}, {"Color", "pale", "pale"}}, "{word}"};
    write_text(out("dict.json"), dictionary_to_json(d));
    Eigen::VectorXf v = Eigen::VectorXf::LinSpaced(64, -1.0f, 1.0f);
    std::vector<float> data(v.data(), v.data() + 64);
    data.insert(data.end(), v.data(), v.data() + 64);
    write_embeddings(EmbeddingMatrix({"light", "pale"}, 64, data), out("twins.emb"));
    cli::PrototypesArgs args;
    args.embeddings = in("images.emb");
    args.text_embeddings = out("twins.emb");
    args.dictionary = out("dict.json");
    args.out_dir = out("pro");
    const auto r = cli::cmd_prototypes(args);
    ASSERT_FALSE(r.warnings.empty());
    const auto g = read_json(fs::path(out("pro")) / "galleries.json");
    EXPECT_TRUE(g.at("galleries").at(0).at("degenerate").get<bool>());
    EXPECT_TRUE(g.at("galleries").at(1).at("degenerate").get<bool>());
}

TEST_F(Cli, ShortcutWordWithoutLabelsWritesNothing) {
    EXPECT_EQ(run_cli({"prototypes", "--embeddings", in("images.emb"), "--text-embeddings", in("words.emb"),
                       "--shortcut-word", "coarse", "--out-dir", out("pro")}),
              cli::kExitValidation);
    EXPECT_FALSE(fs::exists(out("pro")));
}

TEST_F(Cli, DictionaryCommand) {
    ASSERT_EQ(run_cli({"dictionary", "--prompt-template", "a {word} lesion", "--out-dir", out("dict")}), 0);
    const auto d = read_dictionary(fs::path(out("dict")) / "table1.json");
    EXPECT_EQ(d.entries.size(), 14u);
    EXPECT_EQ(d.entries[0].prompt_text, "a light lesion");
    EXPECT_EQ(run_cli({"dictionary", "--prompt-template", "no placeholder", "--out-dir", out("bad")}), cli::kExitValidation);
}

TEST(CliStudy, SummaryOfFixtureTranscript) {
    const fs::path fixture = fs::path(WORDLENS_FIXTURE_DIR) / "study";
    TempDir dir("cli-study");
    fs::copy(fixture / "data", dir.path(), fs::copy_options::recursive);
    ASSERT_EQ(run_cli({"study-summary", "--config", (fixture / "config.json").string(), "--out-dir", dir.path().string()}), 0);
    const auto s = read_json(dir / "summary.json");
    EXPECT_EQ(s.at("n_complete"), 2);
    EXPECT_EQ(s.at("participants").at(0).at("acc_s1"), 33.0 / 50);
    EXPECT_EQ(s.at("participants").at(1).at("acc_s2"), 38.0 / 50);
    EXPECT_EQ(s.at("aggregate").at("session_1").at("mean_accuracy"), (33.0 / 50 + 25.0 / 50) / 2);
}

TEST(CliStudy, SummaryWithoutSessionsFails) {
    const fs::path fixture = fs::path(WORDLENS_FIXTURE_DIR) / "study";
    TempDir dir("cli-study");
    fs::create_directories(dir / "studies");
    for (const auto& e : fs::directory_iterator(fixture / "data" / "studies")) fs::copy(e.path(), dir / "studies");
    EXPECT_EQ(run_cli({"study-summary", "--config", (fixture / "config.json").string(), "--out-dir", dir.path().string()}),
              cli::kExitValidation);
    EXPECT_EQ(run_cli({"study-summary", "--config", (fixture / "config.json").string(), "--out-dir",
                       (dir / "missing").string()}),
              cli::kExitValidation);
}
