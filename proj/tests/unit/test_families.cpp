#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "odm/error.hpp"
#include "odm/families.hpp"
#include "odm/numeric.hpp"
#include "odm/rng.hpp"
#include "test_support.hpp"

using namespace odm;
using Catch::Approx;

namespace {

FamilySpec spec(Family f) {
    FamilySpec s;
    s.family = f;
    if (f == Family::gamma) s.shape = 1.7;
    if (f == Family::logit_gaussian) s.sigma = 0.6;
    if (f == Family::power_trunc_gaussian) {
        s.power = 0.2;
        s.truncation = 50.0;
        s.sigma = 0.3;
    }
    return s;
}

// Trapezoid integral of the density over a fine grid in a transformed variable.
double total_mass(const FamilySpec& s, double f) {
    if (s.family == Family::power_trunc_gaussian) {
        // Integrate over z = y^p, dy = (1/p) z^{1/p - 1} dz.
        const double z0 = std::pow(s.truncation, s.power);
        const double hi = f + 12 * s.sigma;
        const int n = 200000;
        double acc = 0;
        for (int i = 0; i <= n; ++i) {
            const double z = z0 + (hi - z0) * i / n;
            const double y = std::pow(z, 1.0 / s.power);
            const double dens = std::exp(log_density(s, y, f)) * std::pow(z, 1.0 / s.power - 1.0) / s.power;
            acc += (i == 0 || i == n ? 0.5 : 1.0) * dens;
        }
        return acc * (hi - z0) / n;
    }
    if (s.family == Family::logit_gaussian) {
        const int n = 200000;
        double acc = 0;
        for (int i = 1; i < n; ++i) {
            const double z = f - 12 * s.sigma + 24 * s.sigma * i / n;
            const double y = num::inv_logit(z);
            acc += std::exp(log_density(s, y, f)) * y * (1 - y);
        }
        return acc * 24 * s.sigma / n;
    }
    // gamma: integrate over u = log y.
    const int n = 200000;
    double acc = 0;
    for (int i = 1; i < n; ++i) {
        const double u = f - 25 + 35.0 * i / n;
        const double y = std::exp(u);
        acc += std::exp(log_density(s, y, f)) * y;
    }
    return acc * 35.0 / n;
}

}  // namespace

TEST_CASE("binary loss at zero score") {
    const auto s = spec(Family::binary);
    CHECK(family_loss(s, 1.0, 0.0) == Approx(std::log(2.0)));
    CHECK(family_loss(s, 0.0, 0.0) == Approx(std::log(2.0)));
    Rng rng(1);
    for (int i = 0; i < 100; ++i) CHECK(sample(s, -50.0, rng) == 0.0);
}

TEST_CASE("gradients and hessians match central differences") {
    Rng rng(2024);
    for (Family fam : {Family::binary, Family::gamma, Family::logit_gaussian, Family::power_trunc_gaussian}) {
        const auto s = spec(fam);
        for (int i = 0; i < 200; ++i) {
            double y = 0, f = 0;
            switch (fam) {
                case Family::binary: y = rng.bernoulli(0.4) ? 1 : 0; f = rng.normal(0, 3); break;
                case Family::gamma: y = rng.gamma(2.0, 50.0); f = rng.normal(4, 1); break;
                case Family::logit_gaussian: y = num::inv_logit(rng.normal(0, 2)); f = rng.normal(0, 2); break;
                case Family::power_trunc_gaussian:
                    y = 50.0 * std::exp(rng.gamma(1.0, 1.5));
                    f = rng.normal(std::pow(50.0, 0.2), 0.5);
                    break;
            }
            const double h = 1e-3 * std::max(1.0, std::abs(f));
            const double fd = test::richardson_diff([&](double x) { return family_loss(s, y, x); }, f, h);
            const double g = family_gradient(s, y, f);
            CHECK(std::abs(fd - g) / std::max(std::abs(g), 1e-8) < 1e-6);
            const double fd2 = test::richardson_diff([&](double x) { return family_gradient(s, y, x); }, f, h);
            CHECK(std::abs(fd2 - family_hessian(s, y, f)) < 1e-5 * std::max(1.0, std::abs(fd2)));
        }
    }
}

TEST_CASE("continuous densities integrate to one") {
    CHECK(total_mass(spec(Family::gamma), 3.0) == Approx(1.0).margin(1e-6));
    CHECK(total_mass(spec(Family::logit_gaussian), 0.7) == Approx(1.0).margin(1e-6));
    const auto pt = spec(Family::power_trunc_gaussian);
    CHECK(total_mass(pt, std::pow(50.0, 0.2) + 0.1) == Approx(1.0).margin(1e-6));
    CHECK(total_mass(pt, std::pow(50.0, 0.2) - 0.5) == Approx(1.0).margin(1e-6));
}

TEST_CASE("loss differs from negative log density by a score-free term") {
    for (Family fam : {Family::gamma, Family::logit_gaussian, Family::power_trunc_gaussian}) {
        const auto s = spec(fam);
        const double y = fam == Family::logit_gaussian ? 0.3 : 120.0;
        const double c0 = family_loss(s, y, 1.0) + log_density(s, y, 1.0) * (fam == Family::gamma ? 2.0 / s.shape : 1.0);
        const double c1 = family_loss(s, y, 2.0) + log_density(s, y, 2.0) * (fam == Family::gamma ? 2.0 / s.shape : 1.0);
        if (fam == Family::logit_gaussian) {
            // Loss is a squared residual; it is proportional to the negative log density.
            const double a = family_loss(s, y, 1.0) - family_loss(s, y, 2.0);
            const double b = -(log_density(s, y, 1.0) - log_density(s, y, 2.0)) * 2 * s.sigma * s.sigma;
            CHECK(a == Approx(b).epsilon(1e-10));
        } else {
            CHECK(c0 == Approx(c1).epsilon(1e-10));
        }
    }
}

TEST_CASE("average log density of samples matches a histogram entropy estimate") {
    Rng rng(77);
    for (Family fam : {Family::gamma, Family::logit_gaussian, Family::power_trunc_gaussian}) {
        const auto s = spec(fam);
        const double f = fam == Family::gamma ? 2.0 : (fam == Family::logit_gaussian ? 0.4 : std::pow(50.0, 0.2) + 0.2);
        const int n = 200000;
        std::vector<double> u(n);
        double avg = 0;
        // Work on a log scale so the histogram resolves the bulk; correct with the Jacobian.
        double jac = 0;
        for (int i = 0; i < n; ++i) {
            const double y = sample(s, f, rng);
            avg += log_density(s, y, f);
            u[i] = fam == Family::logit_gaussian ? num::logit(y) : std::log(y);
            jac += fam == Family::logit_gaussian ? std::log(y * (1 - y)) : std::log(y);
        }
        avg /= n;
        jac /= n;
        const double lo = *std::min_element(u.begin(), u.end()), hi = *std::max_element(u.begin(), u.end());
        const int bins = 400;
        std::vector<double> c(bins, 0);
        for (double x : u) ++c[std::min(bins - 1, static_cast<int>((x - lo) / (hi - lo) * bins))];
        const double w = (hi - lo) / bins;
        double h_u = 0;
        for (double k : c)
            if (k > 0) h_u -= k / n * std::log(k / n / w);
        const double h_y = h_u + jac;
        CHECK(avg == Approx(-h_y).epsilon(0.05));
    }
}

TEST_CASE("support checks") {
    const auto lg = spec(Family::logit_gaussian);
    CHECK_NOTHROW(check_support(lg, 0.999999));
    CHECK_THROWS_AS(check_support(lg, 1.0), DomainError);
    CHECK_THROWS_AS(check_support(lg, 0.0), DomainError);
    CHECK_THROWS_AS(check_support(spec(Family::gamma), 0.0), DomainError);
    CHECK_THROWS_AS(check_support(spec(Family::binary), 0.5), DomainError);
    CHECK_THROWS_AS(check_support(spec(Family::power_trunc_gaussian), 10.0), DomainError);
    CHECK(clamp_percent(1.0) == 1 - kPercentClamp);
    CHECK(clamp_percent(0.0) == kPercentClamp);
    FamilySpec bad = spec(Family::gamma);
    bad.shape = -1;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("gamma shape estimation") {
    SECTION("zero dispersion caps the shape") {
        std::vector<double> y{3, 5, 7}, mu{3, 5, 7};
        const auto fit = gamma_fit_shape(y, mu);
        CHECK(fit.capped);
        CHECK(fit.shape == kGammaShapeMax);
    }
    SECTION("simulated shape 2 with varying means") {
        Rng rng(8);
        std::vector<double> y, mu;
        for (int i = 0; i < 50000; ++i) {
            const double m = std::exp(rng.normal(5, 1));
            mu.push_back(m);
            y.push_back(rng.gamma(2.0, m / 2.0));
        }
        const auto fit = gamma_fit_shape(y, mu);
        CHECK(fit.shape >= 1.9);
        CHECK(fit.shape <= 2.1);
    }
    SECTION("single observation agrees with a grid search") {
        std::vector<double> y{10.0 * std::exp(1.0)}, mu{10.0};
        const auto fit = gamma_fit_shape(y, mu);
        double best_k = 0, best = -1e300;
        for (double k = 0.01; k < 20; k += 1e-4) {
            const double v = gamma_shape_profile(k, y, mu);
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        CHECK(fit.shape == Approx(best_k).margin(2e-4));
    }
}

TEST_CASE("family spec JSON round trip") {
    const auto s = spec(Family::power_trunc_gaussian);
    const auto b = FamilySpec::from_json(s.to_json());
    CHECK(b.family == s.family);
    CHECK(b.power == s.power);
    CHECK(b.truncation == s.truncation);
    CHECK(b.sigma == s.sigma);
    CHECK_THROWS(family_from_string("lognormal"));
}
