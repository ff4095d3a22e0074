#include "odm/families.hpp"

#include <cmath>

#include <boost/math/tools/roots.hpp>

#include "odm/error.hpp"
#include "odm/numeric.hpp"

namespace odm {

std::string to_string(Family f) {
    switch (f) {
        case Family::binary: return "binary";
        case Family::gamma: return "gamma";
        case Family::logit_gaussian: return "logit_gaussian";
        case Family::power_trunc_gaussian: return "power_trunc_gaussian";
    }
    return "binary";
}

Family family_from_string(const std::string& s) {
    if (s == "binary") return Family::binary;
    if (s == "gamma") return Family::gamma;
    if (s == "logit_gaussian") return Family::logit_gaussian;
    if (s == "power_trunc_gaussian") return Family::power_trunc_gaussian;
    throw ConfigError("unknown family '" + s + "'");
}

void FamilySpec::validate() const {
    if (!(power > 0.0)) throw DomainError("family: power must be positive");
    if (!(truncation >= 0.0)) throw DomainError("family: truncation must be >= 0");
    if (!(sigma >= 0.0)) throw DomainError("family: sigma must be >= 0");
    if (!(shape > 0.0)) throw DomainError("family: gamma shape must be positive");
}

nlohmann::json FamilySpec::to_json() const {
    nlohmann::json j{{"family", to_string(family)}};
    switch (family) {
        case Family::binary: break;
        case Family::gamma:
            j["shape"] = shape;
            j["shape_capped"] = shape_capped;
            break;
        case Family::logit_gaussian: j["sigma"] = sigma; break;
        case Family::power_trunc_gaussian:
            j["power"] = power;
            j["power_fixed"] = power_fixed;
            j["truncation"] = truncation;
            j["sigma"] = sigma;
            break;
    }
    return j;
}

FamilySpec FamilySpec::from_json(const nlohmann::json& j) {
    FamilySpec s;
    s.family = family_from_string(j.at("family").get<std::string>());
    s.power = j.value("power", 1.0);
    s.power_fixed = j.value("power_fixed", false);
    s.truncation = j.value("truncation", 0.0);
    s.sigma = j.value("sigma", 1.0);
    s.shape = j.value("shape", 1.0);
    s.shape_capped = j.value("shape_capped", false);
    s.validate();
    return s;
}

double clamp_percent(double y) { return std::clamp(y, kPercentClamp, 1.0 - kPercentClamp); }

void check_support(const FamilySpec& s, double y) {
    switch (s.family) {
        case Family::binary:
            if (y != 0.0 && y != 1.0) throw DomainError("binary outcome must be 0 or 1");
            break;
        case Family::gamma:
            if (!(y > 0.0)) throw DomainError("gamma outcome must be positive");
            break;
        case Family::logit_gaussian:
            if (!(y > 0.0 && y < 1.0)) throw DomainError("percentage outcome must lie strictly inside (0,1)");
            break;
        case Family::power_trunc_gaussian:
            if (!(y >= s.truncation)) throw DomainError("outcome below the truncation point");
            if (s.power != 1.0 && !(y > 0.0)) throw DomainError("power transform needs a positive outcome");
            break;
    }
}

namespace {

inline double transformed(const FamilySpec& s, double y) { return s.power == 1.0 ? y : std::pow(y, s.power); }

inline double trunc_point(const FamilySpec& s) {
    return s.power == 1.0 ? s.truncation : std::pow(s.truncation, s.power);
}

}  // namespace

double family_loss(const FamilySpec& s, double y, double f) {
    switch (s.family) {
        case Family::binary: return num::log1pexp(f) - y * f;
        case Family::gamma: return 2.0 * (y * std::exp(-f) - 1.0 - std::log(y) + f);
        case Family::logit_gaussian: {
            const double r = num::logit(y) - f;
            return r * r;
        }
        case Family::power_trunc_gaussian: {
            const double x = transformed(s, y);
            const double a = (trunc_point(s) - f) / s.sigma;
            const double r = x - f;
            double v = std::log(s.sigma) + r * r / (2.0 * s.sigma * s.sigma) + num::log_norm_sf(a);
            if (s.power != 1.0) v += -std::log(s.power) - (s.power - 1.0) * std::log(y);
            return v;
        }
    }
    return 0.0;
}

double family_gradient(const FamilySpec& s, double y, double f) {
    switch (s.family) {
        case Family::binary: return num::inv_logit(f) - y;
        case Family::gamma: return 2.0 * (1.0 - y * std::exp(-f));
        case Family::logit_gaussian: return -2.0 * (num::logit(y) - f);
        case Family::power_trunc_gaussian: {
            const double x = transformed(s, y);
            const double a = (trunc_point(s) - f) / s.sigma;
            return -(x - f) / (s.sigma * s.sigma) + num::norm_hazard(a) / s.sigma;
        }
    }
    return 0.0;
}

double family_hessian(const FamilySpec& s, double y, double f) {
    switch (s.family) {
        case Family::binary: {
            const double p = num::inv_logit(f);
            return p * (1.0 - p);
        }
        case Family::gamma: return 2.0 * y * std::exp(-f);
        case Family::logit_gaussian: return 2.0;
        case Family::power_trunc_gaussian: {
            const double a = (trunc_point(s) - f) / s.sigma;
            const double h = num::norm_hazard(a);
            return (1.0 - h * (h - a)) / (s.sigma * s.sigma);
        }
    }
    return 0.0;
}

double log_density(const FamilySpec& s, double y, double f) {
    switch (s.family) {
        case Family::binary: return y * f - num::log1pexp(f);
        case Family::gamma: {
            const double k = s.shape;
            return k * std::log(k) - num::lgamma(k) - k * f + (k - 1.0) * std::log(y) - k * y * std::exp(-f);
        }
        case Family::logit_gaussian: {
            const double z = (num::logit(y) - f) / s.sigma;
            return -0.5 * z * z - std::log(s.sigma) - num::kLogSqrt2Pi - std::log(y) - std::log1p(-y);
        }
        case Family::power_trunc_gaussian: return -family_loss(s, y, f) - num::kLogSqrt2Pi;
    }
    return 0.0;
}

double sample(const FamilySpec& s, double f, Rng& rng) {
    switch (s.family) {
        case Family::binary: return rng.bernoulli(num::inv_logit(f)) ? 1.0 : 0.0;
        case Family::gamma: return rng.gamma(s.shape, std::exp(f) / s.shape);
        case Family::logit_gaussian: return num::inv_logit(f + s.sigma * rng.normal());
        case Family::power_trunc_gaussian: {
            const double x = rng.truncated_normal_above(f, s.sigma, trunc_point(s));
            const double y = s.power == 1.0 ? x : std::pow(x, 1.0 / s.power);
            return std::max(y, s.truncation);
        }
    }
    return 0.0;
}

double gamma_shape_profile(double k, std::span<const double> y, std::span<const double> mu) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] / mu[i];
        acc += k * (std::log(r) - r);
    }
    return acc + static_cast<double>(y.size()) * (k * std::log(k) - num::lgamma(k));
}

GammaShapeFit gamma_fit_shape(std::span<const double> y, std::span<const double> mu, std::span<const double> w) {
    if (y.empty()) throw DomainError("gamma_fit_shape: empty input");
    if (y.size() != mu.size() || (!w.empty() && w.size() != y.size()))
        throw DomainError("gamma_fit_shape: length mismatch");
    num::CompensatedSum num_s, den_s;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0) || !(mu[i] > 0.0)) throw DomainError("gamma_fit_shape: y and mu must be positive");
        const double wi = w.empty() ? 1.0 : w[i];
        const double r = y[i] / mu[i];
        // r - log r - 1 >= 0, computed without cancellation near r = 1.
        const double dev = r - 1.0 - std::log(r);
        num_s.add(wi * dev);
        den_s.add(wi);
    }
    const double target = num_s.value() / den_s.value();
    // log k - digamma(k) is decreasing from +inf to 0.
    auto h = [&](double u) {
        const double k = std::exp(u);
        return u - num::digamma(k) - target;
    };
    const double u_hi = std::log(kGammaShapeMax);
    const double u_lo = std::log(1e-10);
    if (!(target > 0.0) || h(u_hi) > 0.0) return {kGammaShapeMax, true};
    if (h(u_lo) < 0.0) return {1e-10, false};
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(h, u_lo, u_hi, boost::math::tools::eps_tolerance<double>(50), iters);
    return {std::exp(0.5 * (r.first + r.second)), false};
}

}  // namespace odm
