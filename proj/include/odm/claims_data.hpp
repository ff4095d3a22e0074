#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "odm/csv.hpp"

namespace odm {

enum class CovariateKind { numeric, categorical };

/// Categorical levels are interned to codes 1..K; code 0 is the reserved
/// "unknown" level used for values never seen at ingestion.
inline constexpr double kUnknownLevel = 0.0;

struct CovariateInfo {
    std::string name;
    CovariateKind kind = CovariateKind::numeric;
    std::vector<std::string> levels;

    std::size_t n_levels() const { return levels.size(); }
};

class CovariateSchema {
public:
    std::vector<CovariateInfo> covariates;

    std::size_t size() const { return covariates.size(); }
    int index(std::string_view name) const;
    std::size_t require(std::string_view name) const;
    void add(std::string name, CovariateKind kind, std::vector<std::string> levels = {});
    /// Encodes a raw value, adding new categorical levels.
    double intern(std::size_t i, std::string_view raw);
    /// Encodes a raw value without growing the schema; unseen levels map to kUnknownLevel.
    double encode(std::size_t i, std::string_view raw) const;
    std::string decode(std::size_t i, double code) const;

    nlohmann::json to_json() const;
    static CovariateSchema from_json(const nlohmann::json& j);
};

struct PolicyRecord {
    std::string policy_id;
    int occurrence_year = 0;
    double exposure = 0.0;
    std::vector<double> covariates;
    /// N_i1..N_i,tau_i; tau_i = min(d, evaluation_year - occurrence_year + 1).
    std::vector<long long> reported_counts;

    int observed_years() const { return static_cast<int>(reported_counts.size()); }
};

/// Number of reporting years observed for a policy at the evaluation date.
int observed_delay_years(int max_delay, int evaluation_year, int occurrence_year);

struct Portfolio {
    CovariateSchema schema;
    std::vector<PolicyRecord> policies;
    int max_delay = 1;
    int evaluation_year = 0;

    /// Position of (policy_id, occurrence_year), or -1.
    long find(std::string_view policy_id, int occurrence_year) const;
    void rebuild_index();

private:
    std::map<std::pair<std::string, int>, long> index_;
};

struct PolicyColumns {
    std::string policy_id = "policy_id";
    std::string occurrence_year = "occurrence_year";
    std::string exposure = "exposure";
    /// Optional period columns (ISO dates); a row spanning two calendar
    /// years is rejected.
    std::string period_start;
    std::string period_end;
    /// Optional count columns count_1..count_d. When absent the counts are
    /// attached from the claims table.
    std::string count_prefix = "count_";
    std::vector<std::pair<std::string, CovariateKind>> covariates;
};

Portfolio ingest_policies(const CsvTable& table, const PolicyColumns& columns, int max_delay,
                          int evaluation_year);
Portfolio ingest_policies(const std::string& path, const PolicyColumns& columns, int max_delay,
                          int evaluation_year, char delimiter = ',');

struct ClaimSnapshot {
    int dev_year = 1;
    bool settlement = false;
    bool payment_flag = false;
    double payment_amount = 0.0;
    double reserve = 0.0;
    double incurred = 0.0;
};

struct ClaimRecord {
    std::string claim_id;
    std::string policy_id;
    int occurrence_year = 0;
    int reporting_year = 0;
    int reporting_delay = 0;
    std::vector<double> covariates;
    std::vector<ClaimSnapshot> snapshots;
    bool settled = false;

    double paid_to_date() const;
    int calendar_year(const ClaimSnapshot& s) const { return reporting_year + s.dev_year - 1; }
    int last_calendar_year() const { return reporting_year + static_cast<int>(snapshots.size()) - 1; }
};

/// Checks the ordering and settlement invariants of a claim record.
void validate_claim(const ClaimRecord& claim);
/// Recomputes incurred = paid_to_date + reserve for every snapshot.
void normalize_bookkeeping(ClaimRecord& claim);

struct ClaimColumns {
    std::string claim_id = "claim_id";
    std::string policy_id = "policy_id";
    std::string occurrence_year = "occurrence_year";
    std::string reporting_year = "reporting_year";
    std::string dev_year = "dev_year";
    std::string settlement = "settlement";
    std::string payment = "payment";
    /// One of reserve / incurred must be present; reserve wins when both are.
    std::string reserve = "reserve";
    std::string incurred = "incurred";
};

/// Reads claim development rows (one per claim and development year) and
/// joins static covariates from the portfolio.
std::vector<ClaimRecord> ingest_claims(const CsvTable& table, const ClaimColumns& columns,
                                       const Portfolio& portfolio);
std::vector<ClaimRecord> ingest_claims(const std::string& path, const ClaimColumns& columns,
                                       const Portfolio& portfolio, char delimiter = ',');

/// Fills PolicyRecord::reported_counts from the reporting delays of claims.
void attach_reported_counts(Portfolio& portfolio, const std::vector<ClaimRecord>& claims);

struct PreprocessReport {
    long negative_payments_dropped = 0;
    double negative_amount_removed = 0.0;
    long payments_merged = 0;
    long trailing_payments_merged_back = 0;
    long incurred_changes_merged = 0;
    long reserves_clamped = 0;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct PreprocessResult {
    std::vector<ClaimRecord> claims;
    PreprocessReport report;
};

/// Removes negative payments and merges payments and incurred changes below
/// `min_change` forward into the next large one.
PreprocessResult preprocess_developments(std::vector<ClaimRecord> claims, double min_change = 100.0,
                                         bool drop_negative = true);

class InflationCurve {
public:
    InflationCurve() = default;
    InflationCurve(int base_year, std::map<int, double> factors);

    int base_year() const { return base_year_; }
    const std::map<int, double>& factors() const { return factors_; }
    bool empty() const { return factors_.empty(); }
    /// Throws DomainError naming the year when outside the curve.
    double factor(int year) const;
    /// Last (or first) available factor outside the curve; sets `extrapolated`.
    double factor_or_last(int year, bool* extrapolated = nullptr) const;

    nlohmann::json to_json() const;
    static InflationCurve from_json(const nlohmann::json& j);

private:
    int base_year_ = 0;
    std::map<int, double> factors_;
};

/// Divides payments and reserves by the factor of their calendar year.
std::vector<ClaimRecord> deflate(std::vector<ClaimRecord> claims, const InflationCurve& curve);
/// Inverse of deflate.
std::vector<ClaimRecord> reinflate(std::vector<ClaimRecord> claims, const InflationCurve& curve);

}  // namespace odm
