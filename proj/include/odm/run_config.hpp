#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/development.hpp"
#include "odm/reporting.hpp"
#include "odm/simulation.hpp"
#include "odm/synth.hpp"

namespace odm {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct DataConfig {
    std::string policies;
    std::string claims;
    int max_delay = 1;
    int evaluation_year = 0;
    char delimiter = ',';
    PolicyColumns policy_columns;
    ClaimColumns claim_columns;
    /// Merge small development changes before fitting (min_change <= 0 disables it).
    double min_change = 0.0;
    bool drop_negative = true;
    /// Deflation curve for amounts; simulations reinflate with the same curve.
    InflationCurve inflation;
};

struct PricingConfig {
    double deductible = 0.0;
    double limit = std::numeric_limits<double>::infinity();
    double priority = 0.0;
    /// "name=level" selecting the priced policies; empty prices the whole book.
    std::string portfolio;
    /// weighted | best_estimate | ground_up
    std::string method = "weighted";
    int n_paths = 200;
    int ground_up_paths = 20000;
    double exposure = 1.0;
    std::uint64_t seed = 1;
};

struct ReserveConfig {
    std::optional<int> evaluation_year;
    int n_replications = 200;
    double level = 0.95;
    std::uint64_t seed = 1;
};

struct BacktestConfig {
    std::vector<int> evaluation_years;
    int n_replications = 100;
    std::uint64_t seed = 1;
};

struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    DatasetMode mode = DatasetMode::insurance;
    std::string output = "out";
    unsigned threads = 0;
    DataConfig data;
    EMOptions occurrence;
    /// Empty means the mode defaults for the data's covariates.
    std::optional<DevelopmentConfig> development;
    DevelopmentFitOptions fit;
    SimConfig simulation;
    PricingConfig pricing;
    ReserveConfig reserve;
    BacktestConfig backtest;
    std::optional<TruthSpec> synth;

    /// Relative paths resolve against `base_dir`; "{out}" expands to the output directory.
    static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
    static RunConfig load(const std::string& path);
    nlohmann::json to_json() const;
    /// Checks field invariants that need no data.
    void validate() const;
    /// FNV-1a of the canonical JSON without output and threads, as 16 hex digits.
    std::string hash() const;

    std::string resolve(const std::string& path) const;
    /// Skeleton of the covariate schema listed in the config.
    CovariateSchema declared_schema() const;

private:
    std::string base_dir_ = ".";
};

}  // namespace odm
