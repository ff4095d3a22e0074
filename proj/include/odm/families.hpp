#pragma once

#include <span>
#include <string>

#include "json.hpp"
#include "odm/rng.hpp"

namespace odm {

enum class Family { binary, gamma, logit_gaussian, power_trunc_gaussian };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

/// Outcome family of a layer. The score f is on the link scale:
/// logit P(Y=1) for binary, log mean for gamma, mean of logit(Y) for
/// logit_gaussian and mean of Y^p for power_trunc_gaussian.
struct FamilySpec {
    Family family = Family::binary;
    double power = 1.0;
    /// Truncation point T in original units (power_trunc_gaussian).
    double truncation = 0.0;
    /// When false the power is calibrated from data.
    bool power_fixed = false;
    double sigma = 1.0;
    double shape = 1.0;
    bool shape_capped = false;

    /// Validates parameter domains; throws DomainError.
    void validate() const;
    nlohmann::json to_json() const;
    static FamilySpec from_json(const nlohmann::json& j);
};

inline constexpr double kPercentClamp = 1e-6;
inline constexpr double kGammaShapeMax = 1e6;

/// Per-observation loss (lower is better) with its first and second
/// derivative in f. y is in original units.
double family_loss(const FamilySpec& s, double y, double f);
double family_gradient(const FamilySpec& s, double y, double f);
double family_hessian(const FamilySpec& s, double y, double f);

/// Log density of y in original units, including all Jacobian terms.
double log_density(const FamilySpec& s, double y, double f);

/// Throws DomainError when y is outside the family's support.
void check_support(const FamilySpec& s, double y);

double sample(const FamilySpec& s, double f, Rng& rng);

struct GammaShapeFit {
    double shape = 1.0;
    bool capped = false;
};

/// Maximizes the gamma profile likelihood in the shape k given fitted means.
GammaShapeFit gamma_fit_shape(std::span<const double> y, std::span<const double> mu,
                              std::span<const double> weights = {});

/// Shape-profile objective sum k[log(y/mu) - y/mu] + n[k log k - lgamma(k)].
double gamma_shape_profile(double k, std::span<const double> y, std::span<const double> mu);

/// Clamps a percentage into [1e-6, 1 - 1e-6].
double clamp_percent(double y);

}  // namespace odm
