#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wordlens/embed_io.hpp"
#include "wordlens/lexicon.hpp"

namespace wordlens {

/// Per-image, per-word prototype scores. residual(i, j) is how much image i's similarity to
/// word j exceeds what an OLS fit (with intercept) on the other words' similarities predicts.
struct PrototypeTable {
    std::vector<std::string> image_ids;
    std::vector<std::string> words;
    Eigen::MatrixXd dot;       // n x k
    Eigen::MatrixXd residual;  // n x k
    std::vector<double> r_squared;

    std::size_t word_index(const std::string& word) const;
};

PrototypeTable build_prototype_table(const EmbeddingMatrix& images, const WordDictionary& dict);

/// Same regressions on a precomputed n x k similarity matrix.
PrototypeTable build_prototype_table_from_dots(std::vector<std::string> image_ids, std::vector<std::string> words,
                                               Eigen::MatrixXd dot);

struct PrototypeHit {
    std::string image_id;
    double score;
};

/// Descending residual; equal residuals in ascending image id order. top_k > n returns all.
std::vector<PrototypeHit> top_prototypes(const PrototypeTable& t, const std::string& word, std::size_t top_k);

struct PrevalenceReport {
    std::string word;
    double fraction = 0.10;
    double p_top = 0.0;
    double p_rest = 0.0;
    std::size_t n_top = 0;
    std::size_t n_rest = 0;
    std::optional<double> word_weight;
};

/// n_top = ceil(fraction * n) highest-residual images (cutoff ties by id order); the remainder
/// must be non-empty.
PrevalenceReport shortcut_prevalence(const PrototypeTable& t, const std::string& word, const LabelSet& labels,
                                     double fraction = 0.10);

/// `image_id,word,dot,residual`
std::string prototype_table_to_csv(const PrototypeTable& t);
std::string prevalence_to_json(const PrevalenceReport& r, const std::string& manifest_hash = {});

}  // namespace wordlens
