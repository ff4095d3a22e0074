#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/development.hpp"
#include "odm/reporting.hpp"
#include "odm/simulation.hpp"

namespace odm {

/// Weighted empirical severity distribution.
struct SeverityDistribution {
    std::vector<double> values;
    std::vector<double> weights;

    double total_weight() const;
    double mean() const;
    double variance() const;
    double cdf(double x) const;
    /// Smallest value whose cumulative weight share reaches prob.
    double quantile(double prob) const;
};

/// Settled claims weigh 1; each path of an open claim weighs 1 / (its path count).
SeverityDistribution build_severity_weighted(std::span<const double> settled,
                                             const std::vector<std::vector<double>>& open_paths);
/// Each open claim contributes its path mean with weight 1.
SeverityDistribution build_severity_best_estimate(std::span<const double> settled,
                                                  const std::vector<std::vector<double>>& open_paths);

struct XlContract {
    double deductible = 0.0;
    double limit = std::numeric_limits<double>::infinity();
    double priority = 0.0;

    /// ConfigError unless 0 <= D < L and P <= D.
    void validate() const;
    double payout(double y) const { return std::max(0.0, std::min(y, limit) - deductible); }
};

double xl_expected_cost(const SeverityDistribution& dist, const XlContract& contract);
/// exposure * lambda * expected XL cost.
double pure_premium(double lambda, const SeverityDistribution& dist, const XlContract& contract, double exposure = 1.0);
double pure_premium(const ReportingModel& reporting, std::span<const double> covariates,
                    const SeverityDistribution& dist, const XlContract& contract, double exposure = 1.0);

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double median = 0.0;
    double q975 = 0.0;

    static Summary of(std::vector<double> xs);
    nlohmann::json to_json() const;
};

struct IbnrResult {
    /// Closed-form expectation: sum of E N_ij times the simulated mean severity.
    double expected = 0.0;
    double expected_count = 0.0;
    std::map<int, double> expected_by_delay;  // delay index j -> cost
    std::vector<double> replications;
    Summary distribution;
    /// [replication][calendar year] paid by unreported claims; years start at evaluation + 1.
    std::vector<int> years;
    std::vector<std::vector<double>> paid_by_year;
};

/// Unreported claims grouped by (covariates, occurrence year, delay).
IbnrResult ibnr_reserve(const ReportingModel& reporting, const HierarchicalModel& model, const Portfolio& portfolio,
                        const SimConfig& cfg, int n_replications);

struct RbnsResult {
    PortfolioEvolution evolution;
    Summary distribution;  // future paid
};

RbnsResult rbns_reserve(const HierarchicalModel& model, const std::vector<ClaimRecord>& open_claims,
                        int evaluation_year, const SimConfig& cfg, int n_replications);

struct ReserveEstimate {
    IbnrResult ibnr;
    RbnsResult rbns;
    std::vector<double> total_replications;
    Summary total;
    /// Mean paid per calendar year, IBNR plus RBNS.
    std::vector<std::pair<int, double>> payout_schedule;

    nlohmann::json to_json() const;
};

ReserveEstimate combine_reserves(IbnrResult ibnr, RbnsResult rbns);

/// Open claims at the evaluation year with history truncated to it.
std::vector<ClaimRecord> truncate_history(const std::vector<ClaimRecord>& claims, int evaluation_year);
std::vector<ClaimRecord> open_claims(const std::vector<ClaimRecord>& claims);

struct BacktestRow {
    int evaluation_year = 0;
    int calendar_year = 0;
    double predicted_mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    /// Realized cumulative paid on the same claims; NaN past the data.
    double realized = std::numeric_limits<double>::quiet_NaN();
};

/// Moving evaluation date on the reported claims: cumulative future paid of
/// the claims open at each date against what the data records afterwards.
std::vector<BacktestRow> backtest(const HierarchicalModel& model, const std::vector<ClaimRecord>& claims,
                                  const std::vector<int>& evaluation_years, const SimConfig& cfg, int n_replications);

}  // namespace odm
