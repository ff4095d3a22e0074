#include "odm/rng.hpp"

#include <cmath>

#include "odm/error.hpp"
#include "odm/numeric.hpp"

namespace odm {

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    return mix64(state);
}

std::uint64_t stream_key(std::string_view id) { return num::fnv1a(id); }

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc908ULL);
    std::uint64_t i = 0;
    for (std::uint64_t k : key) {
        ++i;
        h = mix64(h ^ mix64(k + 0x9e3779b97f4a7c15ULL * i));
    }
    return Rng(h);
}

Rng::result_type Rng::operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 random bits, shifted off zero.
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: empty range");
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>((*this)()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() {
    // Box-Muller without caching so the stream position is a pure function
    // of the number of draws.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0)) throw DomainError("Rng::gamma: shape and scale must be positive");
    if (shape < 1.0) {
        const double u = uniform();
        return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * scale;
    }
}

std::uint64_t Rng::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("Rng::poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean < 10.0) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t k = 0;
        while (prod > limit) {
            ++k;
            prod *= uniform();
        }
        return k;
    }
    // Transformed rejection with squeeze (Hormann, PTRS).
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = uniform() - 0.5;
        const double v = uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * log_mean - num::lgamma(k + 1.0))
            return static_cast<std::uint64_t>(k);
    }
}

std::size_t Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("Rng::categorical: weights must have positive sum");
    const double u = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = i;
        if (u < acc) return i;
    }
    return last_positive;
}

double Rng::truncated_normal_above(double mean, double sd, double lower) {
    const double a = (lower - mean) / sd;
    double z;
    if (a < -8.0) {
        do {
            z = normal();
        } while (z < a);
    } else if (a < 5.0) {
        const double tail = num::norm_sf(a);
        z = num::norm_sf_inverse(uniform() * tail);
    } else {
        // Robert (1995) exponential proposal.
        const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            z = a - std::log(uniform()) / alpha;
            const double r = z - alpha;
            if (uniform() <= std::exp(-0.5 * r * r)) break;
        }
    }
    if (z < a) z = a;
    return mean + sd * z;
}

}  // namespace odm
