#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wordlens/embed_io.hpp"
#include "wordlens/probe.hpp"

namespace wordlens {

struct WordEntry {
    std::string property;
    std::string word;
    std::string prompt_text;

    friend bool operator==(const WordEntry&, const WordEntry&) = default;
};

inline constexpr const char* kDefaultPromptTemplate = "{word}";

/// Substitutes `word` for the single "{word}" placeholder. Throws ValidationError if the
/// template has zero or several placeholders.
std::string apply_prompt_template(const std::string& tmpl, const std::string& word);

/// The fourteen general-purpose (property, adjective) pairs, in table order.
std::vector<WordEntry> builtin_table1(const std::string& prompt_template = kDefaultPromptTemplate);

struct DictionaryFile {
    std::vector<WordEntry> entries;
    std::string prompt_template = kDefaultPromptTemplate;
};

std::string dictionary_to_json(const DictionaryFile& d);
DictionaryFile parse_dictionary(std::string_view json);
DictionaryFile read_dictionary(const std::filesystem::path& path);

/// Dictionary entries paired with their text embeddings (rows in entry order, ids == words).
struct WordDictionary {
    std::vector<WordEntry> entries;
    EmbeddingMatrix embeddings;

    std::size_t size() const noexcept { return entries.size(); }
    std::vector<std::string> words() const;
};

/// Joins entries to `text_embeddings` by word id and applies the pipeline normalization setting.
WordDictionary make_dictionary(std::vector<WordEntry> entries, const EmbeddingMatrix& text_embeddings,
                               bool normalize);

struct WordWeights {
    std::vector<std::string> words;       // dictionary order, extra words last
    std::vector<std::string> properties;  // parallel to words
    Eigen::VectorXd coefficients;         // parallel to words
    Eigen::VectorXd estimated_classifier;
    double cosine_to_probe = 0.0;
    double residual_norm = 0.0;
    std::string dictionary_hash;

    double coefficient(const std::string& word) const;
    std::map<std::string, double> coefficient_map() const;
};

/// beta = argmin ||E beta - w||, E's columns the word embeddings, no intercept.
/// Rank-deficient E raises RankDeficiencyError.
WordWeights decompose(const Eigen::VectorXd& probe_weights, const WordDictionary& dict);
WordWeights decompose(const ProbeModel& probe, const WordDictionary& dict);

/// Same fit over the dictionary augmented with `extra` (rows of `extra_embeddings` matched by word).
/// `extra_embeddings` is normalized iff the dictionary's embeddings are.
WordWeights decompose_with_extra(const ProbeModel& probe, const WordDictionary& dict,
                                 const std::vector<WordEntry>& extra, const EmbeddingMatrix& extra_embeddings);

/// Augments a dictionary with extra words; errors on duplicates.
WordDictionary augment_dictionary(const WordDictionary& dict, const std::vector<WordEntry>& extra,
                                  const EmbeddingMatrix& extra_embeddings);

struct WordRanking {
    std::vector<std::string> positive;  // largest coefficients first
    std::vector<std::string> negative;  // most negative first
};

/// Ties keep dictionary order.
WordRanking rank_words(const WordWeights& ww, std::size_t top_n);

std::string wordweights_to_json(const WordWeights& ww, const std::string& manifest_hash = {});
/// `word,property,weight`
std::string wordweights_to_csv(const WordWeights& ww);

}  // namespace wordlens
