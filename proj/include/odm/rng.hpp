#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>

namespace odm {

/// xoshiro256** generator with counter-based stream derivation.
///
/// Every stochastic task derives its own stream from (master seed, key...)
/// so results do not depend on the order in which tasks are executed.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);

    /// Independent stream for a tuple of integer keys.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Gamma with the given shape and scale (mean shape * scale).
    double gamma(double shape, double scale);
    std::uint64_t poisson(double mean);
    bool bernoulli(double p) { return uniform() < p; }
    /// Index drawn with probability proportional to `weights`.
    std::size_t categorical(std::span<const double> weights);
    /// Normal(mean, sd) conditioned on exceeding `lower`.
    double truncated_normal_above(double mean, double sd, double lower);

private:
    std::array<std::uint64_t, 4> s_{};
};

std::uint64_t splitmix64(std::uint64_t& state);
/// Stable 64-bit key for a string identifier.
std::uint64_t stream_key(std::string_view id);

}  // namespace odm
