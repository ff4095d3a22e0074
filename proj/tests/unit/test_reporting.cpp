#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "odm/error.hpp"
#include "odm/glm.hpp"
#include "odm/numeric.hpp"
#include "odm/reporting.hpp"
#include "odm/rng.hpp"

using namespace odm;
using Catch::Approx;

namespace {

// Intercept-only model with the given rate and delay probabilities.
ReportingModel flat_model(double lambda, const std::vector<double>& p) {
    ReportingModel m;
    m.d = static_cast<int>(p.size());
    m.link = HazardLink::logit;
    CovariateSchema empty;
    m.occurrence_encoder = LinearEncoder(empty, {}, true);
    m.hazard_encoder = LinearEncoder(empty, {}, true);
    m.occurrence_beta = Eigen::VectorXd::Constant(1, std::log(lambda));
    m.occurrence_cov = Eigen::MatrixXd::Zero(1, 1);
    for (double q : p_to_q(p)) m.hazard_beta.push_back(Eigen::VectorXd::Constant(1, num::logit(q)));
    return m;
}

PolicyRecord policy(int occ, std::vector<long long> counts, double exposure = 1.0) {
    PolicyRecord r;
    r.policy_id = "P" + std::to_string(occ);
    r.occurrence_year = occ;
    r.exposure = exposure;
    r.reported_counts = std::move(counts);
    return r;
}

// Intercept-only portfolio with d delays, simulated from (lambda, p).
Portfolio simulate(int n, int d, double lambda, const std::vector<double>& p, int eval, int first_year,
                   std::uint64_t seed) {
    Portfolio pf;
    pf.max_delay = d;
    pf.evaluation_year = eval;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int occ = first_year + static_cast<int>(rng.below(static_cast<std::uint64_t>(eval - first_year + 1)));
        const int tau = observed_delay_years(d, eval, occ);
        PolicyRecord r;
        r.policy_id = "P" + std::to_string(i);
        r.occurrence_year = occ;
        r.exposure = 1.0;
        r.reported_counts.assign(static_cast<std::size_t>(tau), 0);
        const auto total = rng.poisson(lambda);
        for (std::uint64_t k = 0; k < total; ++k) {
            const auto j = rng.categorical(p);
            if (static_cast<int>(j) < tau) ++r.reported_counts[j];
        }
        pf.policies.push_back(std::move(r));
    }
    pf.rebuild_index();
    return pf;
}

}  // namespace

TEST_CASE("q_to_p boundary cases") {
    CHECK(q_to_p(std::vector<double>{0, 0}) == std::vector<double>{1, 0, 0});
    CHECK(q_to_p(std::vector<double>{1}) == std::vector<double>{0, 1});
    CHECK_THROWS_AS(q_to_p(std::vector<double>{1.2}), DomainError);
}

TEST_CASE("q_to_p matches the hazard definition") {
    const auto p = q_to_p(std::vector<double>{0.2, 0.3, 0.4});
    REQUIRE(p.size() == 4);
    CHECK(p[0] == Approx(0.336).epsilon(1e-14));
    CHECK(p[1] == Approx(0.084).epsilon(1e-14));
    CHECK(p[2] == Approx(0.18).epsilon(1e-14));
    CHECK(p[3] == Approx(0.4).epsilon(1e-14));
    // q_j = p_{j+1} / sum_{k <= j+1} p_k
    double prefix = p[0];
    const std::vector<double> q{0.2, 0.3, 0.4};
    for (std::size_t j = 0; j < q.size(); ++j) {
        prefix += p[j + 1];
        CHECK(p[j + 1] / prefix == Approx(q[j]).epsilon(1e-14));
    }
}

TEST_CASE("p_to_q examples") {
    CHECK(p_to_q(std::vector<double>{1, 0, 0}) == std::vector<double>{0, 0});
    CHECK(p_to_q(std::vector<double>{0.5, 0.5}) == std::vector<double>{0.5});
    CHECK(p_to_q(std::vector<double>{0, 1}) == std::vector<double>{1});
    CHECK_THROWS_AS(p_to_q(std::vector<double>{0, 0, 1}), DomainError);
}

TEST_CASE("q/p round trip on random simplex vectors") {
    Rng rng(99);
    for (int rep = 0; rep < 300; ++rep) {
        const int d = 2 + static_cast<int>(rng.below(14));
        std::vector<double> p(static_cast<std::size_t>(d));
        double s = 0;
        for (auto& v : p) s += (v = rng.gamma(1.0, 1.0));
        for (auto& v : p) v /= s;
        const auto back = q_to_p(p_to_q(p));
        CHECK(num::compensated_sum(back) == Approx(1.0).margin(1e-15));
        for (int j = 0; j < d; ++j) CHECK(std::abs(back[j] - p[j]) < 1e-12);
    }
}

TEST_CASE("linear encoder layout") {
    CovariateSchema s;
    s.add("age", CovariateKind::numeric);
    s.add("region", CovariateKind::categorical, {"a", "b", "c"});
    LinearEncoder enc(s, {"age", "region"}, true);
    CHECK(enc.width() == 4);
    CHECK(enc.labels() == std::vector<std::string>{"(intercept)", "age", "region=b", "region=c"});
    std::vector<double> row(4);
    const std::vector<double> x{40.0, 3.0};
    enc.encode(x, row.data());
    CHECK(row == std::vector<double>{1, 40, 0, 1});
    const std::vector<double> unknown{40.0, kUnknownLevel};
    enc.encode(unknown, row.data());
    CHECK(row == std::vector<double>{1, 40, 0, 0});
    CHECK(LinearEncoder::from_json(enc.to_json()).labels() == enc.labels());
}

TEST_CASE("e_step fills hidden cells with expected counts") {
    const auto m = flat_model(2.0, {0.9, 0.1});
    Portfolio pf;
    pf.max_delay = 2;
    pf.evaluation_year = 2020;
    pf.policies = {policy(2020, {3}), policy(2019, {1, 0})};
    pf.rebuild_index();
    const Eigen::MatrixXd c = e_step(m, pf);
    CHECK(c(0, 0) == 3.0);
    CHECK(c(0, 1) == Approx(0.2).epsilon(1e-12));
    CHECK(c(1, 0) == 1.0);
    CHECK(c(1, 1) == 0.0);
}

TEST_CASE("predict_unreported examples") {
    const auto m = flat_model(1.0, {0.5, 0.3, 0.2});
    const auto one = predict_unreported(m, policy(2020, {0}));
    REQUIRE(one.by_delay.size() == 2);
    CHECK(one.by_delay.at(2) == Approx(0.3).epsilon(1e-12));
    CHECK(one.by_delay.at(3) == Approx(0.2).epsilon(1e-12));
    CHECK(one.total == Approx(0.5).epsilon(1e-12));
    const auto full = predict_unreported(m, policy(2018, {0, 0, 0}));
    CHECK(full.by_delay.empty());
    CHECK(full.total == 0.0);
}

TEST_CASE("thinning: expected cells sum to exposure times lambda") {
    const auto m = flat_model(0.37, {0.6, 0.25, 0.1, 0.05});
    const auto pred = predict_unreported(m, policy(2020, {0}, 2.5));
    double s = m.probabilities({})[0] * 2.5 * 0.37 + pred.total;
    CHECK(s == Approx(2.5 * 0.37).epsilon(1e-10));
}

TEST_CASE("closed-form occurrence and hazard MLEs") {
    // Fully observed intercept-only data: rate = S / E and q_1 = N_2 / (N_1 + N_2).
    Portfolio pf;
    pf.max_delay = 2;
    pf.evaluation_year = 2020;
    for (int i = 0; i < 10; ++i) pf.policies.push_back(policy(2010, {9, 1}, 2.0));
    for (auto& p : pf.policies) p.policy_id += std::to_string(&p - pf.policies.data());
    pf.rebuild_index();
    EMOptions opt;
    const auto r = fit_em(pf, opt);
    CHECK(r.trace.iterations == 1);
    CHECK(r.model.lambda({}) == Approx(100.0 / 20.0).epsilon(1e-9));
    CHECK(r.model.hazards({})[0] == Approx(0.1).epsilon(1e-9));
}

TEST_CASE("EM with tol = infinity runs one iteration") {
    const auto pf = simulate(5000, 3, 0.5, {0.7, 0.2, 0.1}, 2019, 2015, 5);
    EMOptions opt;
    opt.tol = std::numeric_limits<double>::infinity();
    const auto r = fit_em(pf, opt);
    CHECK(r.trace.iterations == 1);
}

TEST_CASE("EM log-likelihood is monotone and recovers parameters") {
    const std::vector<double> p{0.7, 0.2, 0.1};
    const auto pf = simulate(40000, 3, 0.5, p, 2019, 2015, 11);
    const auto r = fit_em(pf, EMOptions{});
    CHECK(r.trace.converged);
    for (std::size_t k = 1; k < r.trace.loglik.size(); ++k) CHECK(r.trace.loglik[k] >= r.trace.loglik[k - 1] - 1e-8);
    CHECK(r.model.lambda({}) == Approx(0.5).epsilon(0.02));
    const auto ph = r.model.probabilities({});
    for (int j = 0; j < 3; ++j) CHECK(ph[j] == Approx(p[j]).margin(0.01));
    CHECK(observed_loglik(r.model, pf) == Approx(r.trace.loglik.back()).epsilon(1e-12));
}

TEST_CASE("zero counts drive the intensity to the boundary") {
    Portfolio pf;
    pf.max_delay = 2;
    pf.evaluation_year = 2020;
    for (int i = 0; i < 20; ++i) {
        pf.policies.push_back(policy(2015 + i % 6, {}, 1.0));
        pf.policies.back().policy_id = "Z" + std::to_string(i);
        pf.policies.back().reported_counts.assign(static_cast<std::size_t>(observed_delay_years(2, 2020, 2015 + i % 6)), 0);
    }
    pf.rebuild_index();
    const auto r = fit_em(pf, EMOptions{});
    CHECK(r.model.lambda({}) < 1e-10);
    CHECK_FALSE(r.trace.warnings.empty());
}

TEST_CASE("reporting model JSON round trip") {
    const auto m = flat_model(0.2, {0.5, 0.3, 0.2});
    const auto back = ReportingModel::from_json(m.to_json());
    CHECK(back.lambda({}) == m.lambda({}));
    CHECK(back.probabilities({}) == m.probabilities({}));
}
