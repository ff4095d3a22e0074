#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/claims_data.hpp"
#include "odm/features.hpp"
#include "odm/layer_model.hpp"
#include "odm/rng.hpp"

namespace odm {

enum class DatasetMode { insurance, reinsurance };
enum class Phase { initial, update };

enum class LayerKind {
    settlement,
    payment,
    increase_paid,
    initial_reserve,
    excess_incurred,
    pct_paid,
    change_reserve,
    reserve_is_zero,
    change_reserve_pos,
    increase_reserve,
    pct_decrease_reserve,
};

std::string to_string(DatasetMode m);
DatasetMode mode_from_string(const std::string& s);
std::string to_string(Phase p);
std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// Layer kinds in evaluation order for a mode and phase.
std::vector<LayerKind> layer_sequence(DatasetMode mode, Phase phase);

struct LayerSpec {
    LayerKind kind = LayerKind::settlement;
    Phase phase = Phase::initial;
    FamilySpec family;
    std::vector<std::string> covariates;

    std::string name() const { return to_string(phase) + "/" + to_string(kind); }
    nlohmann::json to_json() const;
    static LayerSpec from_json(const nlohmann::json& j, Phase phase);
};

/// Names understood by the covariate registry besides the policy covariates.
/// Static: reporting_delay. History (update phase): dev_year, log_paid,
/// log_reserve, log_incurred, ratio_paid_incurred, prev_payment_flag,
/// log_prev_payment. Current year: cur_settlement, cur_payment,
/// cur_change_reserve, log_increase_paid, log_excess_incurred,
/// log_reserve_after_payment.
const std::vector<std::string>& registry_terms();

struct DevelopmentConfig {
    DatasetMode mode = DatasetMode::reinsurance;
    double priority = 750000.0;
    /// Floor on recorded amounts; truncation point of the power families.
    double min_amount = 100.0;
    std::vector<LayerSpec> initial;
    std::vector<LayerSpec> update;

    /// Mode layout with default families and covariate lists.
    static DevelopmentConfig defaults(DatasetMode mode, const CovariateSchema& schema);
    /// Checks layer order, families and covariate references (ConfigError).
    void validate(const CovariateSchema& schema) const;
    nlohmann::json to_json() const;
    static DevelopmentConfig from_json(const nlohmann::json& j);
};

struct ClaimState {
    double paid = 0.0;
    double reserve = 0.0;
    double incurred = 0.0;
    bool settled = false;
    int dev_year = 1;  // last completed development year
    double prev_payment = 0.0;
    bool prev_payment_flag = false;
    int reporting_delay = 0;
    std::vector<double> covariates;  // policy covariate values in schema order
};

/// Layer outcomes of one development year.
struct YearOutcomes {
    bool settlement = false;
    bool payment = false;
    double increase_paid = 0.0;
    double initial_reserve = 0.0;
    double excess_incurred = 0.0;
    double pct_paid = 0.0;
    bool change_reserve = false;
    bool reserve_is_zero = false;
    bool change_reserve_pos = false;
    double increase_reserve = 0.0;
    double pct_decrease_reserve = 0.0;
    double reserve_after_payment = 0.0;  // derived
};

/// Whether a layer is evaluated given the prior state and the outcomes of
/// the earlier layers in the same year.
bool layer_applies(LayerKind kind, Phase phase, DatasetMode mode, const ClaimState& prior, const YearOutcomes& o);

/// Layer outcome as a real value (flags as 0/1).
double outcome_value(LayerKind kind, const YearOutcomes& o);
void set_outcome(LayerKind kind, YearOutcomes& o, double value);

/// State after the reporting year.
ClaimState initial_state(const YearOutcomes& o, DatasetMode mode, double priority, int reporting_delay,
                         std::vector<double> covariates);

/// Deterministic bookkeeping of one update year.
ClaimState transition(const ClaimState& s, const YearOutcomes& o, DatasetMode mode);

/// Recorded outcomes of the reporting year / of update year j given the
/// state after year j-1.
YearOutcomes observed_initial_outcomes(const ClaimSnapshot& s, DatasetMode mode, double priority);
YearOutcomes observed_update_outcomes(const ClaimState& prior, const ClaimSnapshot& s, DatasetMode mode);

/// State after the `n_years` first recorded years of a claim.
ClaimState state_from_history(const ClaimRecord& c, std::size_t n_years);

/// Resolved covariate list of one layer.
class LayerFeatures {
public:
    LayerFeatures() = default;
    LayerFeatures(const LayerSpec& spec, const CovariateSchema& schema);

    const std::vector<FeatureInfo>& info() const { return info_; }
    void fill(const ClaimState& prior, const YearOutcomes& o, double* out) const;

private:
    struct Ref {
        int term = -1;          // registry index, -1 for a policy covariate
        std::size_t policy = 0;  // schema index
    };
    std::vector<Ref> refs_;
    std::vector<FeatureInfo> info_;
};

struct LayerTable {
    FeatureMatrix X;
    std::vector<double> y;
    std::vector<std::string> claim_ids;
    std::vector<int> dev_years;
};

struct TrainingTables {
    std::vector<LayerTable> initial;
    std::vector<LayerTable> update;
    std::vector<std::string> warnings;
    std::map<std::string, long> dropped;  // layer name -> rows dropped
};

TrainingTables assemble_training_records(const std::vector<ClaimRecord>& claims, const DevelopmentConfig& config,
                                         const CovariateSchema& schema);

struct DevelopmentFitOptions {
    Learner learner = Learner::glm;
    std::vector<GbmConfig> grid{GbmConfig{}};
    /// Per-layer grids keyed by LayerSpec::name().
    std::map<std::string, std::vector<GbmConfig>> layer_grids;
    int cv_folds = 5;
    std::uint64_t seed = 1;
    std::size_t min_rows = 50;
};

struct HierarchicalModel {
    DevelopmentConfig config;
    CovariateSchema schema;
    std::vector<LayerModel> initial;
    std::vector<LayerModel> update;
    std::vector<std::string> warnings;

    const LayerFeatures& features(Phase p, std::size_t k) const;
    void rebuild_features();

    nlohmann::json to_json() const;
    static HierarchicalModel from_json(const nlohmann::json& j);

private:
    std::vector<LayerFeatures> initial_features_;
    std::vector<LayerFeatures> update_features_;
};

HierarchicalModel fit_hierarchical(const TrainingTables& tables, const DevelopmentConfig& config,
                                   const CovariateSchema& schema, const DevelopmentFitOptions& options);

struct LoglikBreakdown {
    std::map<std::string, double> per_layer;
    double total = 0.0;
};

/// Per-layer log-likelihoods over the training tables.
LoglikBreakdown layer_loglik(const HierarchicalModel& model, const TrainingTables& tables);
/// Log-likelihood accumulated claim by claim in chronological order.
double joint_loglik(const HierarchicalModel& model, const std::vector<ClaimRecord>& claims);

/// Samples the reporting year of a new claim.
ClaimState simulate_initial_year(const HierarchicalModel& model, int reporting_delay,
                                 const std::vector<double>& covariates, Rng& rng, YearOutcomes* outcomes = nullptr);
/// Samples one update year of an open claim.
ClaimState simulate_update_year(const HierarchicalModel& model, const ClaimState& state, Rng& rng,
                                YearOutcomes* outcomes = nullptr);

}  // namespace odm
