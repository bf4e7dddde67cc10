#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wordlens/embed_io.hpp"
#include "wordlens/lexicon.hpp"

namespace wordlens {

/// Seeded generator for a toy joint space: the fourteen dictionary words get near-orthogonal
/// unit vectors, and class-1 images are shifted along a planted combination of them.
struct SyntheticSpec {
    std::size_t dim = 64;
    std::size_t n_train = 400;
    std::size_t n_test = 200;
    double noise = 0.25;  // per-coordinate standard deviation
    double positive_rate = 0.5;
    // Every image is shifted this far along one direction orthogonal to the word basis, the
    // shared mean of real image embeddings; an intercept-free probe uses it as its bias.
    double common_offset = 3.0;
    std::vector<std::pair<std::string, double>> planted = {{"coarse", 0.8}, {"smooth", -0.6}};
    std::uint64_t seed = 1;

    // Optional confounder word added after the dictionary. Carriers are shifted along its vector
    // and have their own positive rate. A strong_fraction of carriers get strong_multiplier times
    // the shift; each tier holds the carrier positive rate exactly, so with the defaults the
    // strong tier is the top decile of the population.
    bool confounder = false;
    std::string confounder_word = "confounder";
    double carrier_rate = 0.2;
    double carrier_positive_rate = 0.7;
    double confounder_strength = 1.0;
    double strong_fraction = 0.5;
    double strong_multiplier = 2.0;
};

struct SyntheticData {
    std::vector<WordEntry> entries;   // builtin dictionary
    EmbeddingMatrix images;           // train ids then test ids, unnormalized
    EmbeddingMatrix words;            // dictionary words, then the confounder when enabled
    LabelSet labels;
    SplitManifest split;
    std::set<std::string> carriers;
    Eigen::VectorXd true_direction;   // sum of planted coefficient * word vector
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace wordlens
