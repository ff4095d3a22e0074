#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "odm/development.hpp"
#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/premium_reserve.hpp"
#include "odm/simulation.hpp"
#include "odm/synth.hpp"

using namespace odm;
using Catch::Approx;

namespace {

// Insurance model that settles at reporting with an (almost) fixed payment of 100.
HierarchicalModel degenerate_model(double settle_score = 1e3) {
    HierarchicalModel m;
    m.config = DevelopmentConfig::defaults(DatasetMode::insurance, CovariateSchema{});
    for (const auto& l : m.config.initial) {
        FamilySpec f = l.family;
        double v = 0.0;
        switch (l.kind) {
            case LayerKind::settlement: v = settle_score; break;
            case LayerKind::payment: v = 1e3; break;
            case LayerKind::increase_paid: f.shape = 1e14; v = std::log(100.0); break;
            case LayerKind::initial_reserve: f.shape = 1e14; v = std::log(500.0); break;
            default: break;
        }
        m.initial.push_back(LayerModel::make_constant(f, v));
    }
    for (const auto& l : m.config.update) {
        FamilySpec f = l.family;
        double v = l.kind == LayerKind::settlement ? 1e3 : -1e3;
        if (f.family != Family::binary) v = f.family == Family::gamma ? std::log(100.0) : 0.0;
        m.update.push_back(LayerModel::make_constant(f, v));
    }
    m.rebuild_features();
    return m;
}

ClaimRecord open_claim(const std::string& id, double paid, double reserve) {
    ClaimRecord c;
    c.claim_id = id;
    c.policy_id = "P";
    c.occurrence_year = 2018;
    c.reporting_year = 2018;
    ClaimSnapshot s;
    s.payment_amount = paid;
    s.payment_flag = paid > 0;
    s.reserve = reserve;
    s.incurred = paid + reserve;
    c.snapshots.push_back(s);
    return c;
}

}  // namespace

TEST_CASE("degenerate model gives fixed one-year paths") {
    const auto m = degenerate_model();
    SimConfig cfg;
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto p = simulate_new_claim_with_delay(m, {}, 2015, 0, cfg, rng);
        CHECK(p.settled);
        CHECK(p.series.size() == 1);
        CHECK(p.ultimate == Approx(100.0).epsilon(1e-5));
    }
}

TEST_CASE("open claim forced to settle keeps its paid amount") {
    const auto m = degenerate_model();
    const auto c = open_claim("x", 250, 0);
    SimConfig cfg;
    cfg.n_paths = 50;
    const auto paths = simulate_future_paths(m, c, cfg);
    for (const auto& p : paths) {
        CHECK(p.settled);
        CHECK(p.series.size() == 1);
        CHECK(p.ultimate == 250.0);
        CHECK(p.future_paid == 0.0);
    }
}

TEST_CASE("settled claims cannot be simulated") {
    auto c = open_claim("s", 100, 0);
    c.snapshots[0].settlement = true;
    c.settled = true;
    CHECK_THROWS_AS(simulate_future_paths(degenerate_model(), c, SimConfig{}), DomainError);
}

TEST_CASE("paths are reproducible per seed") {
    const auto truth = truth_to_models(TruthSpec::insurance_preset());
    const auto c = open_claim("open-1", 300, 2500);
    SimConfig cfg;
    cfg.seed = 99;
    const auto a = simulate_future_paths(truth.development, c, cfg);
    const auto b = simulate_future_paths(truth.development, c, cfg);
    REQUIRE(a.size() == 200);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].ultimate == b[i].ultimate);
        CHECK(a[i].series.size() == b[i].series.size());
    }
    cfg.seed = 100;
    const auto d = simulate_future_paths(truth.development, c, cfg);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].ultimate != d[i].ultimate;
    CHECK(differs);
}

TEST_CASE("path bookkeeping") {
    const auto truth = truth_to_models(TruthSpec::insurance_preset());
    const auto c = open_claim("open-2", 100, 4000);
    SimConfig cfg;
    cfg.n_paths = 300;
    for (const auto& p : simulate_future_paths(truth.development, c, cfg)) {
        double paid = 100.0;
        int year = 2018;
        for (const auto& y : p.series) {
            CHECK(y.calendar_year == ++year);
            CHECK(y.paid >= 0.0);
            paid += y.paid;
            CHECK(y.incurred >= paid - 1e-9);
        }
        CHECK(p.future_paid == Approx(paid - 100.0).margin(1e-9));
        if (p.settled) CHECK(p.ultimate == Approx(paid).margin(1e-9));
        CHECK(static_cast<int>(p.series.size()) <= cfg.horizon_years);
    }
}

TEST_CASE("reinsurance ultimates are right-skewed") {
    const auto truth = truth_to_models(TruthSpec::reinsurance_preset());
    auto c = open_claim("re-1", 0, 900000);
    SimConfig cfg;
    const auto paths = simulate_future_paths(truth.development, c, cfg);
    std::vector<double> u;
    for (const auto& p : paths) u.push_back(p.ultimate);
    CHECK(num::quantile(u, 0.5) < num::mean(u));
}

TEST_CASE("portfolio evolution bands") {
    SECTION("no open claims gives flat zero bands") {
        SimConfig cfg;
        const auto ev = rbns_portfolio_evolution(degenerate_model(), {}, 2019, cfg, 20);
        CHECK(ev.future_paid == std::vector<double>(20, 0.0));
        for (const auto& b : ev.paid_bands) {
            CHECK(b.lower == 0.0);
            CHECK(b.upper == 0.0);
        }
    }
    SECTION("bands are ordered and cumulative") {
        const auto truth = truth_to_models(TruthSpec::insurance_preset());
        std::vector<ClaimRecord> open;
        for (int i = 0; i < 30; ++i) open.push_back(open_claim("o" + std::to_string(i), 100, 2000 + 50 * i));
        SimConfig cfg;
        const auto ev = rbns_portfolio_evolution(truth.development, open, 2018, cfg, 100);
        double prev = 0;
        for (const auto& b : ev.paid_bands) {
            CHECK(b.lower <= b.median);
            CHECK(b.median <= b.upper);
            CHECK(b.mean >= prev - 1e-9);
            prev = b.mean;
        }
        for (std::size_t r = 0; r < ev.future_paid.size(); ++r)
            CHECK(ev.future_paid[r] == Approx(ev.cum_paid[r].back()).epsilon(1e-12));
    }
}

TEST_CASE("quantile bands on known values") {
    std::vector<std::vector<double>> v;
    for (int r = 0; r < 101; ++r) v.push_back({static_cast<double>(r)});
    const auto b = quantile_bands({2020}, v, 0.9);
    CHECK(b[0].median == 50.0);
    CHECK(b[0].lower == Approx(5.0));
    CHECK(b[0].upper == Approx(95.0));
    CHECK(b[0].mean == 50.0);
}

TEST_CASE("simulation config validation") {
    SimConfig c;
    c.n_paths = 0;
    CHECK_THROWS(c.validate());
    c = SimConfig{};
    c.horizon_years = 0;
    CHECK_THROWS(c.validate());
}
