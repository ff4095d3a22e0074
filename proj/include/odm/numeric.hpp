#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace odm::num {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double inv_logit(double f) {
    if (f >= 0) {
        const double e = std::exp(-f);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(f);
    return e / (1.0 + e);
}

/// log(1 + exp(f)) without overflow.
inline double log1pexp(double f) {
    if (f > 35.0) return f;
    if (f < -35.0) return std::exp(f);
    return std::log1p(std::exp(f));
}

double norm_pdf(double x);
double norm_cdf(double x);
/// Upper tail 1 - Phi(x).
double norm_sf(double x);
/// log(1 - Phi(x)), accurate far into the upper tail.
double log_norm_sf(double x);
/// Inverse Mills ratio phi(x) / (1 - Phi(x)).
double norm_hazard(double x);
double norm_quantile(double p);
/// Inverse of the upper tail: x with 1 - Phi(x) = s.
double norm_sf_inverse(double s);

double digamma(double x);
double trigamma(double x);
double lgamma(double x);

/// Neumaier compensated summation.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs);
double mean(std::span<const double> xs);
/// Population variance (divides by n).
double variance(std::span<const double> xs);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double prob);
double quantile(std::vector<double> xs, double prob);

/// Golden-section search for a minimum of a unimodal function on [lo, hi].
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol = 1e-10, int max_iter = 500);

/// Brent minimization on [lo, hi]; returns argmin.
double brent_minimize(const std::function<double(double)>& f, double lo, double hi,
                      int bits = 52, std::uintmax_t max_iter = 500);

/// 64-bit FNV-1a hash, used for stable identifiers and config stamps.
std::uint64_t fnv1a(std::string_view s);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace odm::num
