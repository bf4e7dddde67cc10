#include "wordlens/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "wordlens/error.hpp"

namespace wordlens {

namespace {

// 1-based midranks of `values` (average rank over tied groups).
std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie strictly between 0 and 1");
}

}  // namespace

double normal_critical(double alpha) {
    check_alpha(alpha);
    return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

double student_t_sf(double t, double df) {
    if (!(df > 0)) throw ValidationError("degrees of freedom must be positive");
    if (std::isnan(t)) throw ValidationError("t statistic is NaN");
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    const double x = df / (df + t * t);
    const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, x);
    return t >= 0 ? tail : 1.0 - tail;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0)) throw ValidationError("degrees of freedom must be positive");
    if (std::isnan(t)) throw ValidationError("t statistic is NaN");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, x);
    return t >= 0 ? 1.0 - tail : tail;
}

AurocResult auroc_delong(std::span<const double> pos, std::span<const double> neg, double alpha) {
    check_alpha(alpha);
    if (pos.empty() || neg.empty()) throw ValidationError("AUROC needs at least one positive and one negative");
    for (double v : pos) if (std::isnan(v)) throw ValidationError("NaN score");
    for (double v : neg) if (std::isnan(v)) throw ValidationError("NaN score");

    const std::size_t m = pos.size(), n = neg.size();
    std::vector<double> all(pos.begin(), pos.end());
    all.insert(all.end(), neg.begin(), neg.end());
    const auto r_all = midranks(all);
    const auto r_pos = midranks(pos);
    const auto r_neg = midranks(neg);

    const double dm = static_cast<double>(m), dn = static_cast<double>(n);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) rank_sum += r_all[i];

    // V10_i: fraction of negatives a positive beats (ties 1/2); V01_j: fraction of positives beating a negative.
    std::vector<double> v10(m), v01(n);
    for (std::size_t i = 0; i < m; ++i) v10[i] = (r_all[i] - r_pos[i]) / dn;
    for (std::size_t j = 0; j < n; ++j) v01[j] = 1.0 - (r_all[m + j] - r_neg[j]) / dm;

    AurocResult r;
    r.n_pos = m;
    r.n_neg = n;
    r.alpha = alpha;
    r.auc = (rank_sum - dm * (dm + 1.0) / 2.0) / (dm * dn);
    r.variance = sample_variance(v10) / dm + sample_variance(v01) / dn;
    const double half = normal_critical(alpha) * std::sqrt(r.variance);
    r.ci_low = std::clamp(r.auc - half, 0.0, 1.0);
    r.ci_high = std::clamp(r.auc + half, 0.0, 1.0);
    return r;
}

AurocResult auroc_delong(const std::map<std::string, double>& scores, const LabelSet& labels, double alpha) {
    std::vector<double> pos, neg;
    for (const auto& [id, s] : scores) (labels.at(id) == 1 ? pos : neg).push_back(s);
    return auroc_delong(pos, neg, alpha);
}

ProportionResult accuracy_adjusted_wald(std::size_t successes, std::size_t n, double alpha) {
    if (n == 0) throw ValidationError("proportion needs n >= 1");
    if (successes > n) throw ValidationError("successes exceed trials");
    const double z = normal_critical(alpha);
    const double z2 = z * z;
    const double dn = static_cast<double>(n);
    const double center = (static_cast<double>(successes) + z2 / 2.0) / (dn + z2);
    const double half = z * std::sqrt(center * (1.0 - center) / (dn + z2));

    ProportionResult r;
    r.successes = successes;
    r.n = n;
    r.alpha = alpha;
    r.estimate = static_cast<double>(successes) / dn;
    r.center = center;
    r.ci_low = std::clamp(center - half, 0.0, 1.0);
    r.ci_high = std::clamp(center + half, 0.0, 1.0);
    return r;
}

PairedTestResult paired_t_one_sided(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("paired samples differ in length");
    if (a.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = b[i] - a[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    const double sd = std::sqrt(sample_variance(d));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) throw NumericalError("degenerate paired sample");

    PairedTestResult r;
    r.n = n;
    r.df = n - 1;
    r.mean_diff = mean;
    r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p_one_sided = student_t_sf(r.t_stat, static_cast<double>(r.df));
    return r;
}

double reader_accuracy(const std::map<std::string, int>& responses, const LabelSet& labels) {
    if (responses.empty()) throw ValidationError("no responses");
    std::size_t correct = 0;
    for (const auto& [id, choice] : responses) {
        if (choice != 0 && choice != 1) throw ValidationError("response must be 0 or 1");
        if (labels.at(id) == choice) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(responses.size());
}

}  // namespace wordlens
