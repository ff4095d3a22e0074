#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/glm.hpp"

namespace odm {

/// Reporting delay probabilities from inverted discrete-time hazards:
/// p_1 = prod_k (1 - q_k), p_j = q_{j-1} prod_{k >= j} (1 - q_k), p_d = q_{d-1}.
std::vector<double> q_to_p(std::span<const double> q);
/// q_j = p_{j+1} / sum_{k <= j+1} p_k. Throws DomainError on a zero prefix sum.
std::vector<double> p_to_q(std::span<const double> p);

/// Maps schema covariates to a design row: optional intercept, numeric
/// values as-is, one indicator per categorical level beyond the first.
/// The unknown level encodes as the reference level.
class LinearEncoder {
public:
    LinearEncoder() = default;
    LinearEncoder(const CovariateSchema& schema, const std::vector<std::string>& names, bool intercept);

    std::size_t width() const { return (intercept_ ? 1 : 0) + terms_.size(); }
    bool intercept() const { return intercept_; }
    void encode(std::span<const double> covariates, double* out) const;
    std::vector<std::string> labels() const;
    const std::vector<std::string>& covariate_names() const { return names_; }

    nlohmann::json to_json() const;
    static LinearEncoder from_json(const nlohmann::json& j);

private:
    struct Term {
        std::size_t covariate;
        int level;  // 0 for numeric terms
        std::string label;
    };
    bool intercept_ = true;
    std::vector<std::string> names_;
    std::vector<Term> terms_;
};

enum class HazardLink { logit, cloglog };
/// per_delay fits one binomial model per hazard; pooled stacks all hazards
/// with delay-specific intercepts and shared covariate effects.
enum class HazardStructure { per_delay, pooled };

std::string to_string(HazardLink link);
HazardLink hazard_link_from_string(const std::string& s);
std::string to_string(HazardStructure s);
HazardStructure hazard_structure_from_string(const std::string& s);

struct ReportingModel {
    int d = 1;
    HazardLink link = HazardLink::logit;
    HazardStructure structure = HazardStructure::per_delay;
    LinearEncoder occurrence_encoder;
    LinearEncoder hazard_encoder;
    Eigen::VectorXd occurrence_beta;
    Eigen::MatrixXd occurrence_cov;
    /// per_delay: d-1 vectors; pooled: one vector of d-1 intercepts then shared effects.
    std::vector<Eigen::VectorXd> hazard_beta;

    /// Occurrence intensity per unit exposure.
    double lambda(std::span<const double> covariates) const;
    std::vector<double> hazards(std::span<const double> covariates) const;
    std::vector<double> probabilities(std::span<const double> covariates) const;
    /// All coefficients concatenated (occurrence first).
    Eigen::VectorXd coefficients() const;

    nlohmann::json to_json() const;
    static ReportingModel from_json(const nlohmann::json& j);
};

struct EMOptions {
    HazardLink link = HazardLink::logit;
    HazardStructure structure = HazardStructure::per_delay;
    std::vector<std::string> occurrence_covariates;
    std::vector<std::string> hazard_covariates;
    double tol = 1e-8;
    double coef_tol = 1e-6;
    int max_iter = 200;
};

struct EMTrace {
    /// Observed-data log-likelihood; entry 0 is the initial model.
    std::vector<double> loglik;
    std::vector<double> max_delta;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct EMResult {
    ReportingModel model;
    EMTrace trace;
};

/// Completed counts (policies x d). Observed cells are copied, hidden cells
/// are e_i lambda(x_i) p_j(x_i). Zero-exposure policies give zero rows.
Eigen::MatrixXd e_step(const ReportingModel& model, const Portfolio& portfolio);

GlmFit m_step_occurrence(const Eigen::MatrixXd& completed, const Portfolio& portfolio, const LinearEncoder& encoder,
                         const std::optional<Eigen::VectorXd>& start = std::nullopt);

std::vector<GlmFit> m_step_reporting(const Eigen::MatrixXd& completed, const Portfolio& portfolio,
                                     const LinearEncoder& encoder, HazardLink link, HazardStructure structure,
                                     const std::vector<Eigen::VectorXd>& start = {});

/// Log-likelihood of the observed counts under the model.
double observed_loglik(const ReportingModel& model, const Portfolio& portfolio);

EMResult fit_em(const Portfolio& portfolio, const EMOptions& options);

struct UnreportedPrediction {
    /// Keyed by reporting delay index j (1 = reporting in the occurrence year).
    std::map<int, double> by_delay;
    double total = 0.0;
};

UnreportedPrediction predict_unreported(const ReportingModel& model, const PolicyRecord& policy);

}  // namespace odm
