#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "wordlens/embed_io.hpp"

namespace wordlens {

struct AurocResult {
    double auc = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double alpha = 0.05;
};

struct ProportionResult {
    std::size_t successes = 0;
    std::size_t n = 0;
    double estimate = 0.0;  // successes / n
    double center = 0.0;    // adjusted center (x + z^2/2) / (n + z^2)
    double ci_low = 0.0;
    double ci_high = 0.0;
    double alpha = 0.05;
};

struct PairedTestResult {
    std::size_t n = 0;
    double mean_diff = 0.0;
    double t_stat = 0.0;
    std::size_t df = 0;
    double p_one_sided = 0.0;
};

/// Two-sided standard normal critical value z_{1 - alpha/2}.
double normal_critical(double alpha);

/// Student t CDF through the regularized incomplete beta function.
double student_t_cdf(double t, double df);
/// P(T > t).
double student_t_sf(double t, double df);

/// AUC by midranks (ties count 1/2) with the DeLong structural-component variance
/// var(V10)/m + var(V01)/n (sample variances). The Wald interval is clipped to [0, 1].
/// A class with a single observation contributes zero variance.
AurocResult auroc_delong(std::span<const double> positives, std::span<const double> negatives, double alpha = 0.05);
AurocResult auroc_delong(const std::map<std::string, double>& scores, const LabelSet& labels, double alpha = 0.05);

/// Agresti-Coull interval, clipped to [0, 1].
ProportionResult accuracy_adjusted_wald(std::size_t successes, std::size_t n, double alpha = 0.05);

/// Tests mean(b - a) > 0 with n - 1 degrees of freedom.
PairedTestResult paired_t_one_sided(std::span<const double> a, std::span<const double> b);

/// Fraction of responses equal to the label.
double reader_accuracy(const std::map<std::string, int>& responses, const LabelSet& labels);

}  // namespace wordlens
