#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wordlens/lexicon.hpp"
#include "wordlens/probe.hpp"
#include "wordlens/prototype.hpp"
#include "wordlens/stats.hpp"
#include "wordlens/study.hpp"

namespace wordlens::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct FitArgs {
    fs::path embeddings;
    fs::path labels;
    fs::path split;
    bool normalize = true;
    double reg_c = 1.0;
    double tol = 1e-8;
    int max_iter = 1000;
    fs::path out_dir;
};

struct SplitMetrics {
    AurocResult auroc;
    ProportionResult accuracy;
};

struct FitResult {
    ProbeModel model;
    SplitMetrics train;
    SplitMetrics test;
    std::string manifest_hash;
};

/// Writes probe.json, metrics.json, scores_train.csv, scores_test.csv and manifest.json.
FitResult cmd_fit(const FitArgs& args);

struct EvaluateArgs {
    fs::path scores;
    fs::path labels;
    double threshold = 0.5;
    fs::path out_dir;
};

/// Scores CSV -> metrics.json.
SplitMetrics cmd_evaluate(const EvaluateArgs& args);

struct DecomposeArgs {
    fs::path probe;
    fs::path text_embeddings;
    std::optional<fs::path> dictionary;  // builtin table when absent
    std::string prompt_template = kDefaultPromptTemplate;
    bool normalize = true;
    std::vector<std::string> extra_words;  // "word" or "word=prompt text"
    fs::path out_dir;
};

/// Writes word_weights.json, word_weights.csv and manifest.json.
WordWeights cmd_decompose(const DecomposeArgs& args);

struct PrototypesArgs {
    fs::path embeddings;
    fs::path text_embeddings;
    std::optional<fs::path> dictionary;
    std::string prompt_template = kDefaultPromptTemplate;
    std::optional<fs::path> split;
    std::string population = "train";  // train | test | all
    std::optional<fs::path> labels;
    std::optional<fs::path> probe;
    std::vector<std::string> extra_words;
    std::vector<std::string> shortcut_words;
    double fraction = 0.10;
    std::size_t top_k = 9;
    bool normalize = true;
    fs::path out_dir;
};

struct PrototypesResult {
    PrototypeTable table;
    std::vector<PrevalenceReport> prevalence;
    std::vector<std::string> warnings;
};

/// Writes prototypes.csv, galleries.json, prevalence.json (with --shortcut-word) and manifest.json.
PrototypesResult cmd_prototypes(const PrototypesArgs& args);

/// Writes table1.json with the given prompt template.
void cmd_dictionary(const std::string& prompt_template, const fs::path& out_dir);

struct SynthArgs {
    std::uint64_t seed = 1;
    bool confounder = false;
    std::size_t n_train = 400;
    std::size_t n_test = 200;
    fs::path out_dir;
};

/// images.emb, words.emb, labels.csv, split.json, table1.json for trying the pipeline.
void cmd_synth(const SynthArgs& args);

/// Offline summary from a study data directory; writes summary.json into `out` when non-empty.
/// `seed` must match the override the study was served with, if any.
study::StudySummary cmd_study_summary(const fs::path& config, const fs::path& data_dir, const fs::path& out = {},
                                      std::optional<std::uint64_t> seed = std::nullopt);

/// Blocks serving the study API until the process is stopped.
int cmd_study_serve(const fs::path& config, const fs::path& data_dir, const std::string& host, int port,
                    std::optional<std::uint64_t> seed);

/// Full command line entry point; maps exceptions to exit codes.
int run(int argc, const char* const* argv);

}  // namespace wordlens::cli
