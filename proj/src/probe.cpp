#include "wordlens/probe.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "wordlens/error.hpp"

namespace wordlens {

namespace {

// log(1 + exp(-z)) without overflow.
double log1p_exp_neg(double z) {
    if (z > 0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

void check_inputs(const Eigen::MatrixXd& X, std::span<const int> y) {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("row count does not match label count");
    bool pos = false, neg = false;
    for (int v : y) {
        if (v == 1) pos = true;
        else if (v == 0) neg = true;
        else throw ValidationError("labels must be 0 or 1");
    }
    if (!pos || !neg) throw ValidationError("both classes must be present to fit a probe");
}

Eigen::VectorXd signs(std::span<const int> y) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) s[static_cast<Eigen::Index>(i)] = y[i] == 1 ? 1.0 : -1.0;
    return s;
}

}  // namespace

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double probe_objective(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double reg_c) {
    const Eigen::VectorXd margin = signs(y).cwiseProduct(X * w);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < margin.size(); ++i) loss += log1p_exp_neg(margin[i]);
    return loss + w.squaredNorm() / (2.0 * reg_c);
}

Eigen::VectorXd probe_gradient(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w,
                               double reg_c) {
    const Eigen::VectorXd s = signs(y);
    const Eigen::VectorXd margin = s.cwiseProduct(X * w);
    // d/dm log(1 + e^{-m}) = -sigma(-m)
    Eigen::VectorXd coef(margin.size());
    for (Eigen::Index i = 0; i < margin.size(); ++i) coef[i] = -s[i] * sigmoid(-margin[i]);
    return X.transpose() * coef + w / reg_c;
}

ProbeModel fit_probe(const Eigen::MatrixXd& X, std::span<const int> y, const FitOptions& opts) {
    check_inputs(X, y);
    if (!(opts.reg_c > 0) || !std::isfinite(opts.reg_c)) throw ValidationError("reg_c must be positive");
    if (!(opts.tol > 0)) throw ValidationError("tol must be positive");

    const Eigen::Index d = X.cols();
    const Eigen::VectorXd s = signs(y);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double f = probe_objective(X, y, w, opts.reg_c);
    Eigen::VectorXd g = probe_gradient(X, y, w, opts.reg_c);

    ProbeModel model;
    model.reg_c = opts.reg_c;
    model.fit_report.tol = opts.tol;

    int iter = 0;
    while (g.norm() > opts.tol && iter < opts.max_iter) {
        ++iter;
        const Eigen::VectorXd margin = s.cwiseProduct(X * w);
        Eigen::VectorXd curvature(margin.size());
        for (Eigen::Index i = 0; i < margin.size(); ++i) {
            const double p = sigmoid(margin[i]);
            curvature[i] = p * (1.0 - p);
        }
        Eigen::MatrixXd H = X.transpose() * curvature.asDiagonal() * X;
        H.diagonal().array() += 1.0 / opts.reg_c;
        const Eigen::VectorXd step = H.ldlt().solve(-g);

        // Backtracking on the Armijo condition; the Hessian is positive definite so step is a descent direction.
        // Close to the optimum, objective differences fall below roundoff before the gradient reaches tol,
        // so a full step that leaves the objective flat (to roundoff) but shrinks the gradient is accepted.
        const double slope = g.dot(step);
        Eigen::VectorXd w_next = w + step;
        double f_next = probe_objective(X, y, w_next, opts.reg_c);
        Eigen::VectorXd g_next = probe_gradient(X, y, w_next, opts.reg_c);
        const bool flat = f_next <= f + 1e-12 * std::max(1.0, std::abs(f)) && g_next.norm() < g.norm();
        if (!flat) {
            double t = 1.0;
            while (f_next > f + 1e-4 * t * slope) {
                t *= 0.5;
                if (t < 1e-12) break;
                w_next = w + t * step;
                f_next = probe_objective(X, y, w_next, opts.reg_c);
            }
            if (t < 1e-12) break;
            g_next = probe_gradient(X, y, w_next, opts.reg_c);
        }
        w = std::move(w_next);
        f = f_next;
        g = std::move(g_next);
    }

    model.weights = w;
    model.fit_report.iterations = iter;
    model.fit_report.final_grad_norm = g.norm();
    model.fit_report.converged = g.norm() <= opts.tol;
    model.fit_report.objective = f;
    if (!w.allFinite()) throw NumericalError("probe fit produced non-finite weights");
    return model;
}

ProbeModel fit_probe(const EmbeddingMatrix& X, const LabelSet& y, const FitOptions& opts) {
    const auto labels = y.aligned(X.ids());
    auto model = fit_probe(X.to_eigen(), labels, opts);
    model.normalize_inputs = X.normalized();
    return model;
}

std::map<std::string, double> predict_scores(const ProbeModel& m, const EmbeddingMatrix& X) {
    if (static_cast<Eigen::Index>(X.dim()) != m.weights.size()) {
        throw ValidationError("embedding dim " + std::to_string(X.dim()) + " does not match probe dim " +
                              std::to_string(m.weights.size()));
    }
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        double z = 0.0;
        auto r = X.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) z += static_cast<double>(r[j]) * m.weights[static_cast<Eigen::Index>(j)];
        out.emplace(X.ids()[i], sigmoid(z));
    }
    return out;
}

std::map<std::string, int> binarize(const std::map<std::string, double>& scores, double threshold) {
    std::map<std::string, int> out;
    for (const auto& [id, s] : scores) out.emplace(id, s >= threshold ? 1 : 0);
    return out;
}

std::string probe_to_json(const ProbeModel& m, const std::string& manifest_hash) {
    nlohmann::ordered_json j;
    j["format"] = "probe-v1";
    j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
    j["reg_c"] = m.reg_c;
    j["normalize_inputs"] = m.normalize_inputs;
    j["objective"] = {{"loss", "summed"}, {"penalty", "||w||^2/(2*reg_c)"}, {"intercept", false}};
    j["fit_report"] = {{"iterations", m.fit_report.iterations},
                       {"final_grad_norm", m.fit_report.final_grad_norm},
                       {"converged", m.fit_report.converged},
                       {"objective", m.fit_report.objective},
                       {"tol", m.fit_report.tol}};
    if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
    return j.dump(2) + "\n";
}

ProbeModel probe_from_json(std::string_view text) {
    ProbeModel m;
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != "probe-v1") throw ValidationError("unsupported probe format");
        auto w = j.at("weights").get<std::vector<double>>();
        if (w.empty()) throw ValidationError("probe has no weights");
        m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        m.reg_c = j.at("reg_c").get<double>();
        m.normalize_inputs = j.at("normalize_inputs").get<bool>();
        const auto& r = j.at("fit_report");
        m.fit_report.iterations = r.at("iterations").get<int>();
        m.fit_report.final_grad_norm = r.at("final_grad_norm").get<double>();
        m.fit_report.converged = r.at("converged").get<bool>();
        m.fit_report.objective = r.value("objective", 0.0);
        m.fit_report.tol = r.value("tol", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid probe artifact: ") + e.what());
    }
    if (!m.weights.allFinite()) throw ValidationError("probe artifact has non-finite weights");
    return m;
}

}  // namespace wordlens
