#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wordlens/embed_io.hpp"

namespace wordlens {

struct FitReport {
    int iterations = 0;
    double final_grad_norm = 0.0;
    bool converged = false;
    double objective = 0.0;
    double tol = 0.0;
};

/// Intercept-free L2-regularized logistic classifier over embedding dimensions.
struct ProbeModel {
    Eigen::VectorXd weights;
    double reg_c = 1.0;
    bool normalize_inputs = true;
    FitReport fit_report;
};

struct FitOptions {
    double reg_c = 1.0;
    double tol = 1e-8;
    int max_iter = 1000;
};

/// Objective J(w) = sum_i log(1 + exp(-s_i x_i.w)) + ||w||^2 / (2C), with s_i = 2 y_i - 1.
/// The loss is summed, not averaged.
double probe_objective(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double reg_c);
Eigen::VectorXd probe_gradient(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w,
                               double reg_c);

/// Damped Newton from w = 0. Non-convergence is reported in fit_report rather than thrown.
ProbeModel fit_probe(const Eigen::MatrixXd& X, std::span<const int> y, const FitOptions& opts = {});

/// Joins rows to labels by id (missing id is an error). `normalize_inputs` is recorded on the
/// model; the caller passes X already normalized or not.
ProbeModel fit_probe(const EmbeddingMatrix& X, const LabelSet& y, const FitOptions& opts = {});

/// sigma(x_i . w) per id.
std::map<std::string, double> predict_scores(const ProbeModel& m, const EmbeddingMatrix& X);

/// score >= threshold -> 1. A score exactly at the threshold goes to the positive class.
std::map<std::string, int> binarize(const std::map<std::string, double>& scores, double threshold = 0.5);

double sigmoid(double z);

std::string probe_to_json(const ProbeModel& m, const std::string& manifest_hash = {});
ProbeModel probe_from_json(std::string_view text);

}  // namespace wordlens
