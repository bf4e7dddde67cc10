#include "wordlens/synthetic.hpp"

#include <cmath>
#include <random>

#include "wordlens/error.hpp"
#include "wordlens/util.hpp"

namespace wordlens {

namespace {

// Box-Muller over the raw engine so the sequence does not depend on the standard library's distributions.
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : rng_(seed) {}
    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
    std::mt19937_64& engine() { return rng_; }

private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::mt19937_64 rng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::string image_id(const char* prefix, std::size_t i) {
    std::string num = std::to_string(i);
    return std::string(prefix) + std::string(num.size() < 5 ? 5 - num.size() : 0, '0') + num;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    SyntheticData out;
    out.entries = builtin_table1();
    const std::size_t k = out.entries.size() + (spec.confounder ? 1 : 0);
    if (spec.dim < k + 2) throw ValidationError("synthetic dim too small for the dictionary");
    const auto d = static_cast<Eigen::Index>(spec.dim);

    Gaussian gauss(derive_seed(spec.seed, "synthetic"));

    // Orthonormal directions from a QR of a Gaussian matrix, lightly perturbed so words are
    // near-orthogonal rather than exactly orthogonal. Words stay orthogonal to the shared mean.
    // The extra last column is the shared mean direction.
    Eigen::MatrixXd G(d, static_cast<Eigen::Index>(k + 1));
    for (Eigen::Index c = 0; c < G.cols(); ++c)
        for (Eigen::Index r = 0; r < d; ++r) G(r, c) = gauss();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, static_cast<Eigen::Index>(k + 1));
    const Eigen::VectorXd common = Q.col(static_cast<Eigen::Index>(k));
    Eigen::MatrixXd V(d, static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < V.cols(); ++c) {
        Eigen::VectorXd g(d);
        for (Eigen::Index r = 0; r < d; ++r) g[r] = gauss();
        g -= g.dot(common) * common;
        V.col(c) = (Q.col(c) + 0.1 * g / std::sqrt(static_cast<double>(d))).normalized();
    }

    std::vector<std::string> word_ids;
    for (const auto& e : out.entries) word_ids.push_back(e.word);
    if (spec.confounder) word_ids.push_back(spec.confounder_word);
    auto column = [&](const std::string& w) {
        for (std::size_t i = 0; i < word_ids.size(); ++i)
            if (word_ids[i] == w) return V.col(static_cast<Eigen::Index>(i));
        throw ValidationError("planted word not in dictionary: " + w);
    };

    out.true_direction = Eigen::VectorXd::Zero(d);
    for (const auto& [w, c] : spec.planted) out.true_direction += c * column(w);

    std::vector<std::string> all_ids;
    std::vector<float> data;
    auto emit_split = [&](const char* prefix, std::size_t n, std::vector<std::string>& split_ids) {
        // Exact counts per group, then a seeded shuffle of label assignments.
        const std::size_t n_carriers =
            spec.confounder ? static_cast<std::size_t>(std::llround(spec.carrier_rate * static_cast<double>(n))) : 0;
        const auto n_strong = static_cast<std::size_t>(std::llround(spec.strong_fraction * static_cast<double>(n_carriers)));
        const std::size_t n_other = n - n_carriers;
        auto tier_labels = [&](std::size_t size, double rate) {
            std::vector<int> labels(size, 0);
            const auto pos = static_cast<std::size_t>(std::llround(rate * static_cast<double>(size)));
            std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(pos), 1);
            seeded_shuffle(labels, gauss.engine());
            return labels;
        };
        std::vector<int> strong_labels = tier_labels(n_strong, spec.carrier_positive_rate);
        std::vector<int> weak_labels = tier_labels(n_carriers - n_strong, spec.carrier_positive_rate);
        std::vector<int> other_labels = tier_labels(n_other, spec.positive_rate);
        // 2 strong carrier, 1 weak carrier, 0 other.
        std::vector<int> tier(n, 0);
        std::fill(tier.begin(), tier.begin() + static_cast<std::ptrdiff_t>(n_carriers), 1);
        std::fill(tier.begin(), tier.begin() + static_cast<std::ptrdiff_t>(n_strong), 2);
        seeded_shuffle(tier, gauss.engine());

        std::size_t si = 0, wi = 0, oi = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = image_id(prefix, i);
            const int label = tier[i] == 2 ? strong_labels[si++] : tier[i] == 1 ? weak_labels[wi++] : other_labels[oi++];
            Eigen::VectorXd x(d);
            for (Eigen::Index r = 0; r < d; ++r) x[r] = spec.noise * gauss();
            x += spec.common_offset * common;
            if (label == 1) x += out.true_direction;
            if (tier[i] > 0) {
                const double shift = spec.confounder_strength * (tier[i] == 2 ? spec.strong_multiplier : 1.0);
                x += shift * column(spec.confounder_word);
                out.carriers.insert(id);
            }
            for (Eigen::Index r = 0; r < d; ++r) data.push_back(static_cast<float>(x[r]));
            out.labels.entries.emplace(id, label);
            split_ids.push_back(id);
            all_ids.push_back(id);
        }
    };
    emit_split("train-", spec.n_train, out.split.train_ids);
    emit_split("test-", spec.n_test, out.split.test_ids);

    out.images = EmbeddingMatrix(all_ids, spec.dim, std::move(data), false, "synthetic seed=" + std::to_string(spec.seed));
    std::vector<float> wdata;
    for (Eigen::Index c = 0; c < V.cols(); ++c)
        for (Eigen::Index r = 0; r < d; ++r) wdata.push_back(static_cast<float>(V(r, c)));
    out.words = EmbeddingMatrix(word_ids, spec.dim, std::move(wdata), false, "synthetic template={word}");
    out.labels.positive_name = "malignant";
    out.labels.negative_name = "benign";
    return out;
}

}  // namespace wordlens
