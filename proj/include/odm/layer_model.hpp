#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/boosting.hpp"
#include "odm/families.hpp"
#include "odm/features.hpp"
#include "odm/rng.hpp"

namespace odm {

enum class Learner { constant, glm, gbm };

std::string to_string(Learner l);
Learner learner_from_string(const std::string& s);

struct LayerFitOptions {
    Learner learner = Learner::glm;
    /// Candidate boosting configs; one entry skips cross validation.
    std::vector<GbmConfig> grid{GbmConfig{}};
    int cv_folds = 5;
    std::uint64_t seed = 1;
    /// Alternating predictor / sigma refits for the truncated family.
    int sigma_rounds = 3;
};

/// Result of the joint (constant mean, sigma, power) calibration.
struct PowerProfile {
    double power = 1.0;
    double mu = 0.0;
    double sigma = 1.0;
    double objective = 0.0;  // mean loss per observation
};

/// Profiles (mu, sigma) for a fixed power.
PowerProfile profile_power_trunc(std::span<const double> y, std::span<const double> w, double truncation,
                                 double power);

/// Golden-section search for the power over [lo, hi] on the profiled objective.
PowerProfile fit_power_trunc_constant(std::span<const double> y, std::span<const double> w, double truncation,
                                      double lo = 0.01, double hi = 1.0);

/// One fitted layer: family with calibrated nuisance parameters plus a predictor.
class LayerModel {
public:
    FamilySpec family;
    Learner learner = Learner::constant;
    double constant = 0.0;
    std::optional<LinearPredictor> linear;
    std::optional<GbmEnsemble> gbm;
    double training_loss = 0.0;
    std::size_t n_rows = 0;
    std::vector<std::string> warnings;

    static LayerModel make_constant(const FamilySpec& family, double value);

    double score(const double* row) const;
    double sample(const double* row, Rng& rng) const { return odm::sample(family, score(row), rng); }
    double log_density(const double* row, double y) const { return odm::log_density(family, y, score(row)); }

    nlohmann::json to_json() const;
    static LayerModel from_json(const nlohmann::json& j);
};

/// Fits the predictor and the family's nuisance parameters. Outcomes outside
/// the support raise DomainError. Zero rows give the family default constant.
LayerModel fit_layer(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                     std::span<const double> w, const LayerFitOptions& options);

}  // namespace odm
