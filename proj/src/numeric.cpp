#include "odm/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "odm/error.hpp"

namespace odm::num {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;
}

double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double log_norm_sf(double x) {
    if (x < 0) return std::log1p(-0.5 * std::erfc(-x / kSqrt2));
    if (x < 30.0) return std::log(0.5 * std::erfc(x / kSqrt2));
    // Asymptotic expansion of the Mills ratio.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -0.5 * x2 - std::log(x) - kLogSqrt2Pi + std::log(series);
}

double norm_hazard(double x) {
    if (x < 30.0) {
        const double sf = norm_sf(x);
        return norm_pdf(x) / sf;
    }
    const double x2 = x * x;
    const double inv = 1.0 / x - 1.0 / (x2 * x) + 3.0 / (x2 * x2 * x) - 15.0 / (x2 * x2 * x2 * x);
    return 1.0 / inv;
}

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("norm_quantile: probability must be in (0,1)");
    return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

double norm_sf_inverse(double s) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("norm_sf_inverse: probability must be in (0,1)");
    return kSqrt2 * boost::math::erfc_inv(2.0 * s);
}

double digamma(double x) { return boost::math::digamma(x); }
double trigamma(double x) { return boost::math::trigamma(x); }
double lgamma(double x) { return boost::math::lgamma(x); }

double compensated_sum(std::span<const double> xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return compensated_sum(xs) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    const double m = mean(xs);
    CompensatedSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(xs.size());
}

double quantile_sorted(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    if (sorted.size() == 1) return sorted.front();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(prob, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> xs, double prob) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, prob);
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol, int max_iter) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

double brent_minimize(const std::function<double(double)>& f, double lo, double hi, int bits,
                      std::uintmax_t max_iter) {
    auto r = boost::math::tools::brent_find_minima(f, lo, hi, bits, max_iter);
    return r.first;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

}  // namespace odm::num
