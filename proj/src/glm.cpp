#include "odm/glm.hpp"

#include <cmath>

#include "odm/error.hpp"
#include "odm/numeric.hpp"

namespace odm {

namespace {

constexpr double kEtaMax = 40.0;
constexpr double kCloglogMax = 4.0;

double clamp_eta(GlmFamily f, double eta) {
    const double hi = f == GlmFamily::binomial_cloglog ? kCloglogMax : kEtaMax;
    return std::clamp(eta, -kEtaMax, hi);
}

bool has_intercept(const Eigen::MatrixXd& X) {
    if (X.cols() == 0) return false;
    return (X.col(0).array() == 1.0).all();
}

double weight_of(const GlmProblem& p, Eigen::Index i) { return p.weights.size() ? p.weights[i] : 1.0; }
double offset_of(const GlmProblem& p, Eigen::Index i) { return p.offset.size() ? p.offset[i] : 0.0; }

double row_loglik(GlmFamily f, double y, double w, double eta) {
    eta = clamp_eta(f, eta);
    switch (f) {
        case GlmFamily::poisson_log:
            return w * (y * eta - std::exp(eta));
        case GlmFamily::binomial_logit:
            return y * eta - w * num::log1pexp(eta);
        case GlmFamily::binomial_cloglog: {
            const double e = std::exp(eta);
            const double log_q = std::log(-std::expm1(-e));
            return (y > 0 ? y * log_q : 0.0) - (w - y) * e;
        }
    }
    return 0.0;
}

}  // namespace

double binomial_mean(GlmFamily family, double eta) {
    if (family == GlmFamily::binomial_cloglog) return -std::expm1(-std::exp(std::min(eta, 700.0)));
    return num::inv_logit(eta);
}

double binomial_link(GlmFamily family, double q) {
    if (family == GlmFamily::binomial_cloglog) return std::log(-std::log1p(-q));
    return num::logit(q);
}

double glm_loglik(GlmFamily family, const GlmProblem& p, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = p.X * beta;
    num::CompensatedSum s;
    for (Eigen::Index i = 0; i < p.X.rows(); ++i) {
        const double w = weight_of(p, i);
        if (w == 0.0) continue;
        s.add(row_loglik(family, p.y[i], w, eta[i] + offset_of(p, i)));
    }
    return s.value();
}

GlmFit fit_glm(GlmFamily family, const GlmProblem& p, const GlmOptions& opt,
               const std::optional<Eigen::VectorXd>& start) {
    const Eigen::Index n = p.X.rows();
    const Eigen::Index k = p.X.cols();
    if (p.y.size() != n) throw DomainError("fit_glm: response length does not match design");
    if (p.weights.size() && p.weights.size() != n) throw DomainError("fit_glm: weight length does not match design");
    if (p.offset.size() && p.offset.size() != n) throw DomainError("fit_glm: offset length does not match design");

    const bool poisson = family == GlmFamily::poisson_log;
    double sum_y = 0.0, sum_w = 0.0, sum_base = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = weight_of(p, i);
        if (p.y[i] < 0 || w < 0) throw DomainError("fit_glm: negative response or weight");
        if (!poisson && p.y[i] > w * (1 + 1e-12)) throw DomainError("fit_glm: successes exceed trials");
        sum_y += poisson ? w * p.y[i] : p.y[i];
        sum_w += w;
        sum_base += poisson ? w * std::exp(offset_of(p, i)) : w;
    }

    GlmFit fit;
    fit.beta = Eigen::VectorXd::Zero(k);
    const bool intercept = has_intercept(p.X);

    // Boundary: all-zero (or all-success) response has no finite MLE.
    const bool all_zero = sum_y == 0.0;
    const bool all_success = !poisson && sum_w > 0 && std::abs(sum_y - sum_w) <= 1e-12 * sum_w;
    if (all_zero || all_success || sum_w == 0.0) {
        fit.boundary = true;
        if (intercept) {
            if (all_zero || sum_w == 0.0)
                fit.beta[0] = -kEtaMax;
            else
                fit.beta[0] = family == GlmFamily::binomial_cloglog ? kCloglogMax : kEtaMax;
        }
        fit.warnings.push_back(sum_w == 0.0 ? "empty stratum: coefficients pinned"
                                            : "boundary solution: response is degenerate");
        fit.loglik = glm_loglik(family, p, fit.beta);
        fit.covariance = Eigen::MatrixXd::Zero(k, k);
        return fit;
    }

    if (start && start->size() == k) {
        fit.beta = *start;
    } else if (intercept) {
        if (poisson) {
            fit.beta[0] = std::log(sum_y / sum_base);
        } else {
            const double q = std::clamp(sum_y / sum_w, 1e-6, 1 - 1e-6);
            fit.beta[0] = binomial_link(family, q);
        }
    }

    double ll = glm_loglik(family, p, fit.beta);
    Eigen::VectorXd W(n), z(n);
    Eigen::MatrixXd info;
    bool converged = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
        fit.iterations = it;
        const Eigen::VectorXd eta0 = p.X * fit.beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double o = offset_of(p, i);
            const double eta = clamp_eta(family, eta0[i] + o);
            const double w = weight_of(p, i);
            double wi = 0.0, zi = eta0[i];
            if (w > 0.0) {
                switch (family) {
                    case GlmFamily::poisson_log: {
                        const double mu = std::exp(eta);
                        wi = w * mu;
                        zi = eta - o + (p.y[i] - mu) / mu;
                        break;
                    }
                    case GlmFamily::binomial_logit: {
                        const double q = num::inv_logit(eta);
                        const double v = std::max(q * (1 - q), 1e-300);
                        wi = w * v;
                        zi = eta - o + (p.y[i] - w * q) / (w * v);
                        break;
                    }
                    case GlmFamily::binomial_cloglog: {
                        const double e = std::exp(eta);
                        const double q = -std::expm1(-e);
                        const double dq = std::max(e * std::exp(-e), 1e-300);
                        const double v = std::max(q * (1 - q), 1e-300);
                        wi = w * dq * dq / v;
                        zi = eta - o + (p.y[i] - w * q) / (w * dq);
                        break;
                    }
                }
            }
            W[i] = wi;
            z[i] = zi;
        }
        info = p.X.transpose() * W.asDiagonal() * p.X;
        const Eigen::VectorXd rhs = p.X.transpose() * (W.array() * z.array()).matrix();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd target;
        if (ldlt.info() != Eigen::Success || ldlt.isNegative() || (ldlt.vectorD().array() <= 1e-14 * info.diagonal().maxCoeff()).any()) {
            Eigen::MatrixXd jittered = info;
            jittered.diagonal().array() += opt.ridge * std::max(1.0, info.diagonal().maxCoeff());
            target = jittered.ldlt().solve(rhs);
        } else {
            target = ldlt.solve(rhs);
        }
        Eigen::VectorXd step = target - fit.beta;
        double ll_new = glm_loglik(family, p, fit.beta + step);
        int halvings = 0;
        while (!(ll_new >= ll - 1e-13 * std::abs(ll)) && halvings < 40) {
            step *= 0.5;
            ll_new = glm_loglik(family, p, fit.beta + step);
            ++halvings;
        }
        if (!(ll_new >= ll - 1e-13 * std::abs(ll))) {
            converged = true;  // no ascent direction left at working precision
            break;
        }
        fit.beta += step;
        const double change = std::abs(ll_new - ll);
        ll = ll_new;
        if (change <= opt.tol * (std::abs(ll) + 0.1) || step.cwiseAbs().maxCoeff() < 1e-13) {
            converged = true;
            break;
        }
    }
    fit.loglik = ll;
    if (!converged) throw ConvergenceError("fit_glm: IRLS did not converge", ll);

    Eigen::LDLT<Eigen::MatrixXd> final_ldlt(info);
    if (final_ldlt.info() == Eigen::Success && !final_ldlt.isNegative())
        fit.covariance = final_ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    else
        fit.covariance = Eigen::MatrixXd::Constant(k, k, std::nan(""));
    return fit;
}

}  // namespace odm
