#include <catch_amalgamated.hpp>

#include <cmath>

#include "odm/claims_data.hpp"
#include "odm/error.hpp"
#include "odm/rng.hpp"
#include "test_support.hpp"

using namespace odm;
using Catch::Approx;

namespace {

ClaimRecord claim_with_payments(const std::vector<double>& pays, double reserve = 0.0) {
    ClaimRecord c;
    c.claim_id = "c";
    c.policy_id = "p";
    c.occurrence_year = 2015;
    c.reporting_year = 2015;
    double paid = 0;
    for (std::size_t k = 0; k < pays.size(); ++k) {
        ClaimSnapshot s;
        s.dev_year = static_cast<int>(k) + 1;
        s.payment_amount = pays[k];
        s.payment_flag = pays[k] != 0;
        paid += pays[k];
        s.settlement = k + 1 == pays.size();
        s.reserve = s.settlement ? 0.0 : reserve;
        s.incurred = paid + s.reserve;
        c.snapshots.push_back(s);
    }
    c.settled = true;
    return c;
}

std::vector<double> payments(const ClaimRecord& c) {
    std::vector<double> out;
    for (const auto& s : c.snapshots) out.push_back(s.payment_amount);
    return out;
}

}  // namespace

TEST_CASE("single policy without claims has zero counts") {
    auto t = test::csv("policy_id,occurrence_year,exposure\nA,2019,0.5\n");
    const Portfolio pf = ingest_policies(t, PolicyColumns{}, 3, 2019);
    REQUIRE(pf.policies.size() == 1);
    CHECK(pf.policies[0].exposure == 0.5);
    CHECK(pf.policies[0].reported_counts == std::vector<long long>{0});
}

TEST_CASE("observed delay years follow the evaluation date") {
    auto t = test::csv("policy_id,occurrence_year,exposure\nA,2015,1\nB,2016,1\nC,2016,1\n");
    const Portfolio pf = ingest_policies(t, PolicyColumns{}, 2, 2016);
    REQUIRE(pf.policies.size() == 3);
    CHECK(pf.policies[0].observed_years() == 2);
    CHECK(pf.policies[1].observed_years() == 1);
    CHECK(pf.policies[2].observed_years() == 1);
    CHECK(observed_delay_years(5, 2014, 2000) == 5);
    CHECK(observed_delay_years(5, 2014, 2013) == 2);
}

TEST_CASE("rows spanning two calendar years are rejected") {
    PolicyColumns cols;
    cols.period_start = "start";
    cols.period_end = "end";
    auto bad = test::csv("policy_id,occurrence_year,exposure,start,end\nA,2015,1,2015-07-01,2016-06-30\n");
    CHECK_THROWS_WITH(ingest_policies(bad, cols, 2, 2016), Catch::Matchers::ContainsSubstring("split by calendar year"));
    auto ok = test::csv("policy_id,occurrence_year,exposure,start,end\nA,2015,1,2015-01-01,2016-01-01\n");
    CHECK_NOTHROW(ingest_policies(ok, cols, 2, 2016));
}

TEST_CASE("invalid policy rows") {
    CHECK_THROWS_AS(ingest_policies(test::csv("policy_id,occurrence_year,exposure\nA,2015,-1\n"), PolicyColumns{}, 2, 2016),
                    ValidationError);
    CHECK_THROWS_AS(ingest_policies(test::csv("policy_id,occurrence_year,exposure\nA,2015,1\nA,2015,1\n"), PolicyColumns{},
                                    2, 2016),
                    ValidationError);
    CHECK_THROWS_AS(ingest_policies(test::csv("policy_id,exposure\nA,1\n"), PolicyColumns{}, 2, 2016), SchemaError);
    CHECK_THROWS_AS(ingest_policies(test::csv("policy_id,occurrence_year,exposure\nA,2017,1\n"), PolicyColumns{}, 2, 2016),
                    ValidationError);
}

TEST_CASE("categorical covariates are interned in order of appearance") {
    PolicyColumns cols;
    cols.covariates = {{"region", CovariateKind::categorical}, {"age", CovariateKind::numeric}};
    auto t = test::csv("policy_id,occurrence_year,exposure,region,age\nA,2015,1,north,30\nB,2015,1,south,41\nC,2016,1,north,52\n");
    const Portfolio pf = ingest_policies(t, cols, 2, 2016);
    CHECK(pf.policies[0].covariates[0] == 1.0);
    CHECK(pf.policies[1].covariates[0] == 2.0);
    CHECK(pf.policies[2].covariates[1] == 52.0);
    CHECK(pf.schema.decode(0, 2.0) == "south");
    CHECK(pf.schema.encode(0, "west") == kUnknownLevel);
    const auto round = CovariateSchema::from_json(pf.schema.to_json());
    CHECK(round.to_json() == pf.schema.to_json());
}

TEST_CASE("claims ingestion joins covariates and derives counts") {
    PolicyColumns cols;
    cols.covariates = {{"region", CovariateKind::categorical}};
    Portfolio pf = ingest_policies(
        test::csv("policy_id,occurrence_year,exposure,region\nA,2015,1,north\nB,2016,1,south\n"), cols, 2, 2016);
    auto ct = test::csv(
        "claim_id,policy_id,occurrence_year,reporting_year,dev_year,settlement,payment,reserve\n"
        "c1,A,2015,2015,1,0,100,500\n"
        "c1,A,2015,2015,2,1,450,0\n"
        "c2,A,2015,2016,1,0,0,1000\n"
        "c3,B,2016,2016,1,1,70,0\n");
    const auto claims = ingest_claims(ct, ClaimColumns{}, pf);
    REQUIRE(claims.size() == 3);
    const auto& c1 = claims[0];
    CHECK(c1.settled);
    CHECK(c1.paid_to_date() == 550.0);
    CHECK(c1.snapshots[0].incurred == 600.0);
    CHECK(c1.snapshots[1].incurred == 550.0);
    CHECK(claims[1].reporting_delay == 1);
    CHECK(claims[2].covariates[0] == 2.0);
    attach_reported_counts(pf, claims);
    CHECK(pf.policies[0].reported_counts == std::vector<long long>{1, 1});
    CHECK(pf.policies[1].reported_counts == std::vector<long long>{1});
}

TEST_CASE("claims after settlement or for unknown policies are rejected") {
    Portfolio pf = ingest_policies(test::csv("policy_id,occurrence_year,exposure\nA,2015,1\n"), PolicyColumns{}, 2, 2016);
    const std::string head = "claim_id,policy_id,occurrence_year,reporting_year,dev_year,settlement,payment,reserve\n";
    CHECK_THROWS_AS(ingest_claims(test::csv(head + "c,A,2015,2015,1,1,10,0\nc,A,2015,2015,2,0,10,0\n"), ClaimColumns{}, pf),
                    ValidationError);
    CHECK_THROWS_AS(ingest_claims(test::csv(head + "c,Z,2015,2015,1,1,10,0\n"), ClaimColumns{}, pf), ValidationError);
    CHECK_THROWS_AS(ingest_claims(test::csv(head + "c,A,2015,2014,1,1,10,0\n"), ClaimColumns{}, pf), ValidationError);
}

TEST_CASE("small payments are merged forward") {
    auto r = preprocess_developments({claim_with_payments({50, 50, 300})}, 100.0);
    CHECK(payments(r.claims[0]) == std::vector<double>{0, 0, 400});
    auto u = preprocess_developments({claim_with_payments({200, 500})}, 100.0);
    CHECK(payments(u.claims[0]) == std::vector<double>{200, 500});
}

TEST_CASE("negative payments are dropped and reported") {
    auto r = preprocess_developments({claim_with_payments({300, -80, 200})}, 100.0, true);
    CHECK(payments(r.claims[0]) == std::vector<double>{300, 0, 200});
    CHECK(r.report.negative_payments_dropped == 1);
    CHECK(r.report.negative_amount_removed == 80.0);
}

TEST_CASE("merging conserves paid totals and bookkeeping") {
    Rng rng(17);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> pays;
        const int n = 1 + static_cast<int>(rng.below(8));
        double expected = 0;
        for (int k = 0; k < n; ++k) {
            double x = rng.bernoulli(0.3) ? 0.0 : std::round(rng.normal(120, 150));
            pays.push_back(x);
            expected += std::max(x, 0.0);
        }
        auto c = claim_with_payments(pays, 1000.0);
        auto r = preprocess_developments({c}, 100.0, true);
        double total = 0;
        for (const auto& s : r.claims[0].snapshots) {
            total += s.payment_amount;
            CHECK(s.payment_amount >= 0);
            CHECK(s.reserve >= 0);
        }
        CHECK(total == expected);
        double paid = 0;
        for (const auto& s : r.claims[0].snapshots) {
            paid += s.payment_amount;
            CHECK(s.incurred == Approx(paid + s.reserve));
        }
    }
}

TEST_CASE("inflation deflates and reinflates") {
    auto c = claim_with_payments({110, 220}, 1000);
    c.reporting_year = 2015;
    InflationCurve flat(2015, {{2015, 1.0}, {2016, 1.0}});
    auto same = deflate({c}, flat);
    CHECK(payments(same[0]) == payments(c));

    InflationCurve curve(2014, {{2014, 1.0}, {2015, 1.1}, {2016, 1.21}});
    auto d = deflate({c}, curve);
    CHECK(d[0].snapshots[0].payment_amount == Approx(100.0).epsilon(1e-14));
    CHECK(d[0].snapshots[1].payment_amount == Approx(220.0 / 1.21).epsilon(1e-14));
    CHECK_THROWS_AS(curve.factor(2030), DomainError);

    Rng rng(4);
    std::map<int, double> f{{2010, 1.0}};
    for (int y = 2011; y <= 2020; ++y) f[y] = f[y - 1] * (1.0 + 0.05 * rng.uniform());
    InflationCurve random_curve(2010, f);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> pays;
        for (int k = 0; k < 4; ++k) pays.push_back(1000 * rng.uniform());
        auto x = claim_with_payments(pays, 5000 * rng.uniform());
        x.reporting_year = 2012 + static_cast<int>(rng.below(4));
        x.occurrence_year = x.reporting_year;
        auto back = reinflate(deflate({x}, random_curve), random_curve);
        for (std::size_t k = 0; k < pays.size(); ++k) {
            CHECK(test::rel_err(back[0].snapshots[k].payment_amount, x.snapshots[k].payment_amount) < 1e-12);
            CHECK(test::rel_err(back[0].snapshots[k].reserve, x.snapshots[k].reserve) < 1e-12);
        }
    }
}
