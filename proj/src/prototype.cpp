#include "wordlens/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "wordlens/error.hpp"
#include "wordlens/util.hpp"

namespace wordlens {

namespace {

// Relative to the largest pivot; above float32 rounding of stored embeddings.
constexpr double kRankThreshold = 1e-6;

// Descending score, ascending id.
std::vector<std::size_t> ranked_images(const PrototypeTable& t, std::size_t col) {
    std::vector<std::size_t> order(t.image_ids.size());
    std::iota(order.begin(), order.end(), 0);
    const auto c = static_cast<Eigen::Index>(col);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = t.residual(static_cast<Eigen::Index>(a), c);
        const double sb = t.residual(static_cast<Eigen::Index>(b), c);
        if (sa != sb) return sa > sb;
        return t.image_ids[a] < t.image_ids[b];
    });
    return order;
}

[[noreturn]] void throw_collinear(const Eigen::MatrixXd& A, const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                                  const std::vector<std::string>& names, const std::string& target) {
    // Column 0 of A is the intercept; report pairs among predictors, and predictors that are constant.
    std::vector<RankDeficiencyError::Pair> pairs;
    const Eigen::Index p = A.cols();
    const Eigen::Index n = A.rows();
    Eigen::MatrixXd centered = A.rightCols(p - 1).rowwise() - A.rightCols(p - 1).colwise().mean();
    for (Eigen::Index a = 0; a < p - 1; ++a) {
        const double na = centered.col(a).norm();
        if (na <= 1e-12 * std::max(1.0, A.col(a + 1).norm())) {
            pairs.push_back({names[static_cast<std::size_t>(a + 1)], "(intercept)", 1.0});
            continue;
        }
        for (Eigen::Index b = a + 1; b < p - 1; ++b) {
            const double nb = centered.col(b).norm();
            if (nb == 0) continue;
            const double corr = std::abs(centered.col(a).dot(centered.col(b))) / (na * nb);
            if (corr > 0.999) pairs.push_back({names[static_cast<std::size_t>(a + 1)], names[static_cast<std::size_t>(b + 1)], corr});
        }
    }
    std::vector<std::string> dependent;
    for (Eigen::Index r = qr.rank(); r < p; ++r) dependent.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()[r])]);
    std::string msg = "predictors for word '" + target + "' are rank deficient (n=" + std::to_string(n) + ")";
    for (const auto& pr : pairs) msg += "; '" + pr.first + "' ~ '" + pr.second + "'";
    if (pairs.empty()) {
        msg += "; linearly dependent:";
        for (const auto& d : dependent) msg += " '" + d + "'";
    }
    throw RankDeficiencyError(msg, std::move(pairs), std::move(dependent));
}

}  // namespace

std::size_t PrototypeTable::word_index(const std::string& word) const {
    auto it = std::find(words.begin(), words.end(), word);
    if (it == words.end()) throw ValidationError("unknown word: " + word);
    return static_cast<std::size_t>(std::distance(words.begin(), it));
}

PrototypeTable build_prototype_table_from_dots(std::vector<std::string> image_ids, std::vector<std::string> words,
                                               Eigen::MatrixXd dot) {
    const Eigen::Index n = dot.rows();
    const Eigen::Index k = dot.cols();
    if (static_cast<std::size_t>(n) != image_ids.size() || static_cast<std::size_t>(k) != words.size()) {
        throw ValidationError("similarity matrix shape does not match ids/words");
    }
    if (k == 0) throw ValidationError("prototype table needs at least one word");
    if (n <= k) {
        throw ValidationError("prototype regressions need more images than words (n=" + std::to_string(n) +
                              ", k=" + std::to_string(k) + ")");
    }
    if (!dot.allFinite()) throw ValidationError("non-finite similarity value");

    PrototypeTable t;
    t.image_ids = std::move(image_ids);
    t.words = std::move(words);
    t.residual.resize(n, k);
    t.r_squared.resize(static_cast<std::size_t>(k));

    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::MatrixXd A(n, k);
        std::vector<std::string> names{"(intercept)"};
        A.col(0).setOnes();
        for (Eigen::Index c = 0, out = 1; c < k; ++c) {
            if (c == j) continue;
            A.col(out++) = dot.col(c);
            names.push_back(t.words[static_cast<std::size_t>(c)]);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(kRankThreshold);
        if (qr.rank() < A.cols()) throw_collinear(A, qr, names, t.words[static_cast<std::size_t>(j)]);

        const Eigen::VectorXd y = dot.col(j);
        const Eigen::VectorXd coef = qr.solve(y);
        t.residual.col(j) = y - A * coef;
        const double ss_res = t.residual.col(j).squaredNorm();
        const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
        t.r_squared[static_cast<std::size_t>(j)] = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    }
    t.dot = std::move(dot);
    return t;
}

PrototypeTable build_prototype_table(const EmbeddingMatrix& images, const WordDictionary& dict) {
    if (images.dim() != dict.embeddings.dim()) {
        throw ValidationError("image embedding dim " + std::to_string(images.dim()) +
                              " does not match word embedding dim " + std::to_string(dict.embeddings.dim()));
    }
    if (images.normalized() != dict.embeddings.normalized()) {
        throw ValidationError("image and word embeddings disagree on normalization");
    }
    Eigen::MatrixXd dot = images.to_eigen() * dict.embeddings.to_eigen().transpose();
    return build_prototype_table_from_dots(images.ids(), dict.words(), std::move(dot));
}

std::vector<PrototypeHit> top_prototypes(const PrototypeTable& t, const std::string& word, std::size_t top_k) {
    if (top_k == 0) throw ValidationError("top_k must be at least 1");
    const auto col = t.word_index(word);
    const auto order = ranked_images(t, col);
    std::vector<PrototypeHit> out;
    for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
        out.push_back({t.image_ids[order[i]],
                       t.residual(static_cast<Eigen::Index>(order[i]), static_cast<Eigen::Index>(col))});
    }
    return out;
}

PrevalenceReport shortcut_prevalence(const PrototypeTable& t, const std::string& word, const LabelSet& labels,
                                     double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("fraction must lie strictly between 0 and 1");
    const auto col = t.word_index(word);
    const auto y = labels.aligned(t.image_ids);
    const auto order = ranked_images(t, col);
    const std::size_t n = order.size();
    // The small slack keeps products such as 0.1 * 30 = 3.0000000000000004 from rounding up.
    const auto n_top =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9 * static_cast<double>(n)));
    if (n_top == 0 || n_top >= n) {
        throw ValidationError("fraction " + format_double(fraction) + " of " + std::to_string(n) +
                              " images leaves an empty group");
    }
    std::size_t pos_top = 0, pos_rest = 0;
    for (std::size_t i = 0; i < n; ++i) (i < n_top ? pos_top : pos_rest) += static_cast<std::size_t>(y[order[i]]);

    PrevalenceReport r;
    r.word = word;
    r.fraction = fraction;
    r.n_top = n_top;
    r.n_rest = n - n_top;
    r.p_top = static_cast<double>(pos_top) / static_cast<double>(r.n_top);
    r.p_rest = static_cast<double>(pos_rest) / static_cast<double>(r.n_rest);
    return r;
}

std::string prototype_table_to_csv(const PrototypeTable& t) {
    std::string out = "image_id,word,dot,residual\n";
    for (std::size_t i = 0; i < t.image_ids.size(); ++i) {
        for (std::size_t j = 0; j < t.words.size(); ++j) {
            const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(j);
            out += csv_field(t.image_ids[i]) + "," + csv_field(t.words[j]) + "," + format_double(t.dot(r, c)) + "," +
                   format_double(t.residual(r, c)) + "\n";
        }
    }
    return out;
}

std::string prevalence_to_json(const PrevalenceReport& r, const std::string& manifest_hash) {
    nlohmann::ordered_json j;
    j["word"] = r.word;
    j["fraction"] = r.fraction;
    j["p_top"] = r.p_top;
    j["p_rest"] = r.p_rest;
    j["n_top"] = r.n_top;
    j["n_rest"] = r.n_rest;
    j["word_weight"] = r.word_weight ? nlohmann::ordered_json(*r.word_weight) : nlohmann::ordered_json(nullptr);
    if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
    return j.dump(2) + "\n";
}

}  // namespace wordlens
