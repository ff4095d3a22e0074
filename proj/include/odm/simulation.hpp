#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/development.hpp"
#include "odm/reporting.hpp"

namespace odm {

struct SimConfig {
    int n_paths = 200;
    /// Development years simulated after reporting, reporting year included.
    int horizon_years = 60;
    std::uint64_t seed = 1;
    /// Applied to simulated payments by calendar year; empty means none.
    InflationCurve curve;

    void validate() const;
    nlohmann::json to_json() const;
    static SimConfig from_json(const nlohmann::json& j);
};

struct PathYear {
    int calendar_year = 0;
    double paid = 0.0;      // increment in the year
    double incurred = 0.0;  // at year end
};

struct SimulatedPath {
    std::string origin;  // "new" or the open claim id
    int path_id = 0;
    int reporting_delay = 0;
    std::vector<PathYear> series;
    /// Total paid when settled, terminal incurred otherwise.
    double ultimate = 0.0;
    /// Paid in the simulated years only.
    double future_paid = 0.0;
    bool settled = false;
    bool extrapolated_inflation = false;
};

/// Ground-up path of a new claim; the delay is drawn from the reporting model.
SimulatedPath simulate_new_claim(const HierarchicalModel& model, const ReportingModel& reporting,
                                 const std::vector<double>& covariates, int occurrence_year, const SimConfig& cfg,
                                 Rng& rng);
/// Ground-up path with a given reporting delay (0 = reported in the occurrence year).
SimulatedPath simulate_new_claim_with_delay(const HierarchicalModel& model, const std::vector<double>& covariates,
                                            int occurrence_year, int reporting_delay, const SimConfig& cfg, Rng& rng);

/// Continues an open claim from its last recorded year.
SimulatedPath simulate_open_claim(const HierarchicalModel& model, const ClaimRecord& claim, const SimConfig& cfg,
                                  Rng& rng, int path_id = 0);
/// cfg.n_paths paths, path p drawn from stream (seed, claim key, p).
std::vector<SimulatedPath> simulate_future_paths(const HierarchicalModel& model, const ClaimRecord& claim,
                                                 const SimConfig& cfg);

struct Band {
    int calendar_year = 0;
    double mean = 0.0;
    double lower = 0.0;
    double median = 0.0;
    double upper = 0.0;
};

struct PortfolioEvolution {
    int evaluation_year = 0;
    std::vector<int> years;
    /// [replication][year]: cumulative future paid and total incurred.
    std::vector<std::vector<double>> cum_paid;
    std::vector<std::vector<double>> incurred;
    /// Total future paid per replication.
    std::vector<double> future_paid;
    std::vector<Band> paid_bands;
    std::vector<Band> incurred_bands;
    long unsettled_at_horizon = 0;
};

/// One path per open claim per replication; replication r uses path index r.
PortfolioEvolution rbns_portfolio_evolution(const HierarchicalModel& model, const std::vector<ClaimRecord>& open_claims,
                                            int evaluation_year, const SimConfig& cfg, int n_replications,
                                            double band_level = 0.95);

std::vector<Band> quantile_bands(const std::vector<int>& years, const std::vector<std::vector<double>>& values,
                                 double level);

}  // namespace odm
