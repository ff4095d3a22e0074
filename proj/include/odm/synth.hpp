#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/development.hpp"
#include "odm/reporting.hpp"

namespace odm {

/// Intercept plus coefficients keyed by covariate name (numeric) or
/// "name=level" (categorical indicator).
struct LinearTruth {
    double intercept = 0.0;
    std::map<std::string, double> coefficients;

    nlohmann::json to_json() const;
    static LinearTruth from_json(const nlohmann::json& j);
};

struct CovariateGenerator {
    std::string name;
    CovariateKind kind = CovariateKind::categorical;
    std::vector<std::string> levels;
    std::vector<double> probabilities;  // categorical
    double mean = 0.0;                  // numeric: normal(mean, sd)
    double sd = 1.0;

    nlohmann::json to_json() const;
    static CovariateGenerator from_json(const nlohmann::json& j);
};

struct TruthLayer {
    LayerKind kind = LayerKind::settlement;
    FamilySpec family;  // nuisance parameters are the true ones
    LinearTruth eta;

    nlohmann::json to_json() const;
    static TruthLayer from_json(const nlohmann::json& j, DatasetMode mode, Phase phase, std::size_t position);
};

struct TruthSpec {
    DatasetMode mode = DatasetMode::insurance;
    int max_delay = 3;
    int first_year = 2010;
    int n_years = 10;
    /// Last observed calendar year.
    int evaluation_year = 2019;
    long n_policies = 1000;
    /// Exposure per policy-year drawn uniformly in [low, high].
    double exposure_low = 1.0;
    double exposure_high = 1.0;
    std::vector<CovariateGenerator> covariates;
    LinearTruth occurrence;  // log intensity per unit exposure
    HazardLink link = HazardLink::logit;
    std::vector<LinearTruth> hazards;  // d-1 entries
    double priority = 750000.0;
    double min_amount = 100.0;
    std::vector<TruthLayer> initial;
    std::vector<TruthLayer> update;
    int horizon_years = 60;
    std::uint64_t seed = 1;

    static TruthSpec insurance_preset();
    static TruthSpec reinsurance_preset();
    void validate() const;
    nlohmann::json to_json() const;
    static TruthSpec from_json(const nlohmann::json& j);

    CovariateSchema schema() const;
};

struct LedgerClaim {
    std::string claim_id;
    std::string policy_id;
    int occurrence_year = 0;
    int reporting_year = 0;
    bool reported = false;  // by the evaluation year
    double ultimate = 0.0;
    double future_paid = 0.0;  // paid after the evaluation year
    bool settled_by_horizon = true;
};

struct TruthLedger {
    std::vector<LedgerClaim> claims;
    /// Unreported counts keyed by delay index j.
    std::map<int, long> unreported_by_delay;
    long unreported = 0;
    double rbns_future_paid = 0.0;
    double ibnr_cost = 0.0;
    /// Future paid of reported claims by calendar year (evaluation year + 1 onward).
    std::map<int, double> rbns_paid_by_year;

    nlohmann::json to_json() const;
};

struct SynthData {
    TruthSpec spec;
    Portfolio portfolio;              // censored at the evaluation year
    std::vector<ClaimRecord> claims;  // reported claims, history up to the evaluation year
    std::vector<ClaimRecord> full_claims;  // reported claims, complete development
    TruthLedger ledger;
};

SynthData generate_portfolio(const TruthSpec& spec);

/// Ultimate severities of ground-up claims drawn from the true process with
/// delays drawn from the true reporting probabilities.
std::vector<double> truth_ground_up_severities(const TruthSpec& spec, const std::vector<double>& covariates,
                                               int n_paths, std::uint64_t seed);
/// True intensity and reporting probabilities for covariate codes.
double truth_lambda(const TruthSpec& spec, const std::vector<double>& covariates);
std::vector<double> truth_probabilities(const TruthSpec& spec, const std::vector<double>& covariates);

struct TruthModels {
    ReportingModel reporting;
    HierarchicalModel development;
};

/// Fitted-model objects holding the true parameters.
TruthModels truth_to_models(const TruthSpec& spec);

struct OracleReport {
    std::map<std::string, double> parameter_errors;  // label -> fitted - true
    double max_abs_parameter_error = 0.0;
    /// Per replication: whether [lower, upper] holds the truth.
    long coverage_hits = 0;
    long coverage_total = 0;
    double coverage_rate = 0.0;
    double premium_relative_bias = 0.0;

    nlohmann::json to_json() const;
};

struct IntervalPrediction {
    std::string id;
    double lower = 0.0;
    double upper = 0.0;
};

/// Compares fitted coefficients with the truth and interval predictions
/// with realized values keyed by id.
OracleReport oracle_report(const std::map<std::string, double>& truth_values,
                           const std::map<std::string, double>& fitted_values,
                           const std::vector<IntervalPrediction>& intervals,
                           const std::map<std::string, double>& realized, double premium_estimate = 0.0,
                           double premium_truth = 0.0);

/// Writes policies.csv and claims.csv in the ingestion schema plus truth.json.
void write_synth_files(const SynthData& data, const std::string& directory);

}  // namespace odm
