#include "wordlens/embed_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

#include "wordlens/error.hpp"
#include "wordlens/util.hpp"

namespace wordlens {

namespace {

constexpr std::string_view kMagic = "EMB1\n";

static_assert(std::endian::native == std::endian::little, "EMB1 payload codec assumes a little-endian host");

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                                 bool normalized, std::string source_tag)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), normalized_(normalized),
      source_tag_(std::move(source_tag)) {
    if (dim_ == 0) throw ValidationError("embedding dim must be positive");
    if (data_.size() != ids_.size() * dim_) {
        throw ValidationError("embedding payload has " + std::to_string(data_.size()) + " values, expected " +
                              std::to_string(ids_.size() * dim_));
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) throw ValidationError("duplicate id: " + ids_[i]);
    }
    for (std::size_t k = 0; k < data_.size(); ++k) {
        if (!std::isfinite(data_[k])) {
            throw ValidationError("non-finite value in row " + ids_[k / dim_]);
        }
    }
    if (normalized_) {
        for (std::size_t i = 0; i < rows(); ++i) {
            double s = 0.0;
            for (float v : row(i)) s += static_cast<double>(v) * v;
            if (std::abs(std::sqrt(s) - 1.0) > 1e-4) {
                throw ValidationError("row " + ids_[i] + " is flagged normalized but has norm " +
                                      format_double(std::sqrt(s)));
            }
        }
    }
}

std::span<const float> EmbeddingMatrix::row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingMatrix::index_of(const std::string& id) const {
    auto i = find(id);
    if (!i) throw ValidationError("id not found in embeddings: " + id);
    return *i;
}

EmbeddingMatrix EmbeddingMatrix::select(const std::vector<std::string>& ids) const {
    std::vector<float> out;
    out.reserve(ids.size() * dim_);
    for (const auto& id : ids) {
        auto r = row(index_of(id));
        out.insert(out.end(), r.begin(), r.end());
    }
    return EmbeddingMatrix(ids, dim_, std::move(out), normalized_, source_tag_);
}

Eigen::MatrixXd EmbeddingMatrix::to_eigen() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < rows(); ++i) {
        for (std::size_t j = 0; j < dim_; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data_[i * dim_ + j];
        }
    }
    return m;
}

int LabelSet::at(const std::string& id) const {
    auto it = entries.find(id);
    if (it == entries.end()) throw ValidationError("id not found in labels: " + id);
    return it->second;
}

std::vector<int> LabelSet::aligned(const std::vector<std::string>& ids) const {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(at(id));
    return out;
}

void SplitManifest::validate() const {
    std::set<std::string> train(train_ids.begin(), train_ids.end());
    if (train.size() != train_ids.size()) throw ValidationError("duplicate id in train split");
    std::set<std::string> test;
    for (const auto& id : test_ids) {
        if (!test.insert(id).second) throw ValidationError("duplicate id in test split");
        if (train.count(id)) throw ValidationError("id in both train and test: " + id);
    }
    if (!group_key) return;
    std::map<std::string, std::string> side;
    auto check = [&](const std::vector<std::string>& ids, const std::string& name) {
        for (const auto& id : ids) {
            auto g = group_key->find(id);
            if (g == group_key->end()) throw ValidationError("id has no group: " + id);
            auto [it, fresh] = side.emplace(g->second, name);
            if (!fresh && it->second != name) throw ValidationError("group spans train and test: " + g->second);
        }
    };
    check(train_ids, "train");
    check(test_ids, "test");
}

std::string encode_embeddings(const EmbeddingMatrix& m) {
    nlohmann::json header = {
        {"n_rows", m.rows()}, {"dim", m.dim()}, {"dtype", "f32le"}, {"ids", m.ids()}, {"source_tag", m.source_tag()}};
    std::string out(kMagic);
    out += header.dump();
    out += '\n';
    const std::size_t offset = out.size();
    out.resize(offset + m.data().size() * sizeof(float));
    std::memcpy(out.data() + offset, m.data().data(), m.data().size() * sizeof(float));
    return out;
}

EmbeddingMatrix decode_embeddings(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) throw ValidationError("bad magic: not an EMB1 file");
    bytes.remove_prefix(kMagic.size());
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) throw ValidationError("EMB1 header line is not terminated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("EMB1 header is not valid JSON: ") + e.what());
    }
    bytes.remove_prefix(nl + 1);

    std::size_t n_rows = 0, dim = 0;
    std::vector<std::string> ids;
    std::string source_tag;
    try {
        n_rows = header.at("n_rows").get<std::size_t>();
        dim = header.at("dim").get<std::size_t>();
        if (header.at("dtype").get<std::string>() != "f32le") throw ValidationError("unsupported dtype");
        ids = header.at("ids").get<std::vector<std::string>>();
        source_tag = header.value("source_tag", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("EMB1 header field error: ") + e.what());
    }
    if (ids.size() != n_rows) throw ValidationError("header ids count does not match n_rows");
    const std::size_t expected = n_rows * dim * sizeof(float);
    if (bytes.size() != expected) {
        throw ValidationError("payload length mismatch: expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(bytes.size()));
    }
    std::vector<float> data(n_rows * dim);
    std::memcpy(data.data(), bytes.data(), expected);
    return EmbeddingMatrix(std::move(ids), dim, std::move(data), false, std::move(source_tag));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) { return decode_embeddings(read_file(path)); }

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
    // Re-run the invariant checks: a default-constructed or moved-from matrix bypasses the constructor.
    EmbeddingMatrix checked(m.ids(), m.dim(), m.data(), m.normalized(), m.source_tag());
    write_file_atomic(path, encode_embeddings(checked));
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
    std::vector<float> out(m.data().size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        double s = 0.0;
        for (float v : r) s += static_cast<double>(v) * v;
        const double norm = std::sqrt(s);
        if (norm == 0.0) throw ValidationError("cannot normalize zero-norm row: " + m.ids()[i]);
        for (std::size_t j = 0; j < m.dim(); ++j) out[i * m.dim() + j] = static_cast<float>(r[j] / norm);
    }
    return EmbeddingMatrix(m.ids(), m.dim(), std::move(out), true, m.source_tag());
}

LabelSet parse_labels(std::string_view csv) {
    LabelSet labels;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (!csv.empty()) {
        auto nl = csv.find('\n');
        auto line = csv.substr(0, nl);
        csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (!header_seen) {
            if (fields.size() < 2 || fields[0] != "id" || fields[1] != "label") {
                throw ValidationError("labels CSV must start with header id,label");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 2) throw ValidationError("labels CSV line " + std::to_string(line_no) + ": expected 2 fields");
        int v;
        if (fields[1] == "0") v = 0;
        else if (fields[1] == "1") v = 1;
        else throw ValidationError("label for " + fields[0] + " must be 0 or 1, got '" + fields[1] + "'");
        if (!labels.entries.emplace(fields[0], v).second) throw ValidationError("duplicate label id: " + fields[0]);
    }
    if (!header_seen) throw ValidationError("labels CSV is empty");
    return labels;
}

LabelSet read_labels(const std::filesystem::path& path) { return parse_labels(read_file(path)); }

SplitManifest parse_split(std::string_view text) {
    SplitManifest s;
    try {
        auto j = nlohmann::json::parse(text);
        s.train_ids = j.at("train").get<std::vector<std::string>>();
        s.test_ids = j.at("test").get<std::vector<std::string>>();
        if (j.contains("groups") && !j["groups"].is_null()) {
            s.group_key = j["groups"].get<std::map<std::string, std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid split manifest: ") + e.what());
    }
    s.validate();
    return s;
}

SplitManifest read_split(const std::filesystem::path& path) { return parse_split(read_file(path)); }

std::map<std::string, double> parse_scores(std::string_view csv) {
    std::map<std::string, double> scores;
    bool header_seen = false;
    while (!csv.empty()) {
        auto nl = csv.find('\n');
        auto line = csv.substr(0, nl);
        csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (!header_seen) {
            if (fields.size() != 2 || fields[0] != "id" || fields[1] != "score") {
                throw ValidationError("scores CSV must start with header id,score");
            }
            header_seen = true;
            continue;
        }
        if (fields.size() != 2) throw ValidationError("scores CSV: expected 2 fields");
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ValidationError("score for " + fields[0] + " is not a number");
        }
        if (!std::isfinite(v)) throw ValidationError("non-finite score for " + fields[0]);
        if (!scores.emplace(fields[0], v).second) throw ValidationError("duplicate score id: " + fields[0]);
    }
    if (!header_seen) throw ValidationError("scores CSV is empty");
    return scores;
}

std::map<std::string, double> read_scores(const std::filesystem::path& path) { return parse_scores(read_file(path)); }

std::string format_scores(const std::map<std::string, double>& scores) {
    std::string out = "id,score\n";
    for (const auto& [id, s] : scores) out += csv_field(id) + "," + format_double(s) + "\n";
    return out;
}

}  // namespace wordlens
