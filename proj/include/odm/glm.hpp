#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace odm {

enum class GlmFamily { poisson_log, binomial_logit, binomial_cloglog };

/// Response is real-valued: Poisson counts may be fractional (E-step
/// output) and binomial successes are paired with real-valued trials.
struct GlmProblem {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    /// Poisson: prior weights (default 1). Binomial: number of trials.
    Eigen::VectorXd weights;
    /// Added to the linear predictor; empty means zero.
    Eigen::VectorXd offset;
};

struct GlmOptions {
    int max_iter = 100;
    /// Relative change in the log-likelihood below which IRLS stops.
    double tol = 1e-12;
    double ridge = 1e-8;
};

struct GlmFit {
    Eigen::VectorXd beta;
    /// Inverse Fisher information at the solution.
    Eigen::MatrixXd covariance;
    double loglik = 0.0;
    int iterations = 0;
    bool boundary = false;
    std::vector<std::string> warnings;
};

/// Log-likelihood up to terms constant in the parameters.
double glm_loglik(GlmFamily family, const GlmProblem& p, const Eigen::VectorXd& beta);

/// Iteratively reweighted least squares with step-halving. Throws
/// ConvergenceError with the last log-likelihood when IRLS fails.
GlmFit fit_glm(GlmFamily family, const GlmProblem& p, const GlmOptions& options = {},
               const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// Inverse link for the two binomial links.
double binomial_mean(GlmFamily family, double eta);
double binomial_link(GlmFamily family, double q);

}  // namespace odm
