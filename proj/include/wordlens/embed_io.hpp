#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wordlens {

/// Row-per-item dense vectors in a joint image/text space.
///
/// Storage is 32-bit (the on-disk precision); consumers convert to 64-bit via `to_eigen`
/// before doing arithmetic. Rows are addressed by stable string ids.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    /// Validates ids (unique, count matches), dim > 0 and finiteness. Throws ValidationError.
    EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                    bool normalized = false, std::string source_tag = {});

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<float>& data() const noexcept { return data_; }
    bool normalized() const noexcept { return normalized_; }
    const std::string& source_tag() const noexcept { return source_tag_; }

    std::span<const float> row(std::size_t i) const;

    /// Row index for `id`, or nullopt.
    std::optional<std::size_t> find(const std::string& id) const;
    /// Row index for `id`; throws ValidationError naming the id when absent.
    std::size_t index_of(const std::string& id) const;

    /// New matrix holding the requested rows in the requested order. Missing id -> error.
    EmbeddingMatrix select(const std::vector<std::string>& ids) const;

    /// n x dim matrix in double precision.
    Eigen::MatrixXd to_eigen() const;

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

private:
    std::vector<std::string> ids_;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    bool normalized_ = false;
    std::string source_tag_;
    std::map<std::string, std::size_t> index_;
};

struct LabelSet {
    std::map<std::string, int> entries;
    std::string positive_name = "positive";
    std::string negative_name = "negative";

    int at(const std::string& id) const;
    /// Labels for `ids` in order; errors on a missing id.
    std::vector<int> aligned(const std::vector<std::string>& ids) const;
};

struct SplitManifest {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::optional<std::map<std::string, std::string>> group_key;

    /// Disjointness of train/test and, with groups, no group on both sides.
    void validate() const;
};

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
/// Validates first, so an invalid matrix never produces a partial file.
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// In-memory codec for the EMB1 layout; the file functions wrap these.
EmbeddingMatrix decode_embeddings(std::string_view bytes);
std::string encode_embeddings(const EmbeddingMatrix& m);

/// Divides every row by its Euclidean norm (computed in double). Zero rows are rejected.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

LabelSet read_labels(const std::filesystem::path& path);
LabelSet parse_labels(std::string_view csv);

SplitManifest read_split(const std::filesystem::path& path);
SplitManifest parse_split(std::string_view json);

/// `id,score` CSV.
std::map<std::string, double> read_scores(const std::filesystem::path& path);
std::map<std::string, double> parse_scores(std::string_view csv);
std::string format_scores(const std::map<std::string, double>& scores);

}  // namespace wordlens
