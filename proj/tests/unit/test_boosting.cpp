#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "odm/boosting.hpp"
#include "odm/features.hpp"
#include "odm/numeric.hpp"
#include "odm/rng.hpp"

using namespace odm;
using Catch::Approx;

namespace {

FeatureMatrix numeric_matrix(std::size_t cols) {
    FeatureMatrix X;
    for (std::size_t j = 0; j < cols; ++j) X.features.push_back({"x" + std::to_string(j + 1), FeatureKind::numeric, {}});
    return X;
}

double f1(double x) { return 0.8 * std::sin(2 * std::numbers::pi * x); }
double f2(double x) { return 1.2 * x * x; }

struct Additive {
    FeatureMatrix X;
    std::vector<double> y, w;
};

// logit(y) = f1(x1) + f2(x2) + noise; the logit_gaussian score is additive.
Additive additive(int n, double noise, std::uint64_t seed) {
    Additive a{numeric_matrix(2), {}, {}};
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform(), x2 = rng.uniform();
        const std::vector<double> row{x1, x2};
        a.X.add_row(row);
        a.y.push_back(num::inv_logit(f1(x1) + f2(x2) + rng.normal(0, noise)));
        a.w.push_back(1.0);
    }
    return a;
}

// Gamma target with mean exp(0.5 + f1(x1) + 0.5 x2).
Additive gamma_data(int n, std::uint64_t seed) {
    Additive a{numeric_matrix(2), {}, {}};
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double x1 = rng.uniform(), x2 = rng.uniform();
        const std::vector<double> row{x1, x2};
        a.X.add_row(row);
        const double mu = std::exp(0.5 + 2 * f1(x1) + 1.5 * f2(x2));
        a.y.push_back(rng.gamma(3.0, mu / 3.0));
        a.w.push_back(1.0);
    }
    return a;
}

FamilySpec fam(Family f) {
    FamilySpec s;
    s.family = f;
    return s;
}

}  // namespace

TEST_CASE("zero trees give the constant fit") {
    const auto d = gamma_data(500, 1);
    GbmConfig c;
    c.n_trees = 0;
    const auto e = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 1);
    CHECK(e.trees.empty());
    CHECK(e.initial == Approx(constant_fit(fam(Family::gamma), d.y, d.w)));
    CHECK(e.predict(d.X.row(0)) == e.initial);
    CHECK(variable_importance(e) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("separable binary target approaches class rates monotonically") {
    FeatureMatrix X = numeric_matrix(1);
    std::vector<double> y, w;
    for (int i = 0; i < 400; ++i) {
        const double x = i < 100 ? 0.0 : 1.0;
        X.add_row(std::vector<double>{x});
        y.push_back(x);
        w.push_back(1.0);
    }
    GbmConfig c;
    c.interaction_depth = 1;
    c.bag_fraction = 1.0;
    c.min_node_obs = 5;
    const double x1 = 1.0;
    double prev = -1;
    for (int k : {0, 1, 2, 5, 10, 20, 50, 100}) {
        c.n_trees = k;
        const auto e = fit_gbm(fam(Family::binary), X, y, w, c, 3);
        const double p = num::inv_logit(e.predict(&x1));
        CHECK(p > prev);
        CHECK(p < 1.0);
        prev = p;
    }
    CHECK(prev > 0.99);
}

TEST_CASE("full-data training loss decreases with every tree") {
    const auto d = gamma_data(800, 2);
    GbmConfig c;
    c.bag_fraction = 1.0;
    c.n_trees = 40;
    const auto e = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 5);
    std::vector<double> f(d.y.size(), e.initial);
    double prev = mean_loss(fam(Family::gamma), d.y, d.w, f);
    for (const auto& t : e.trees) {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += e.shrinkage * t.leaf(d.X.row(i)).value;
        const double l = mean_loss(fam(Family::gamma), d.y, d.w, f);
        CHECK(l <= prev + 1e-10);
        prev = l;
    }
}

TEST_CASE("trees respect depth and node size limits") {
    const auto d = gamma_data(1000, 3);
    GbmConfig c;
    c.n_trees = 30;
    c.interaction_depth = 3;
    c.min_node_obs = 25;
    const auto e = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 7);
    for (const auto& t : e.trees) {
        CHECK(t.depth() <= 3);
        for (const auto& n : t.nodes)
            if (n.feature < 0) CHECK(n.n_obs >= 25);
    }
}

TEST_CASE("same seed gives a bit-identical ensemble") {
    const auto d = gamma_data(600, 4);
    GbmConfig c;
    c.n_trees = 25;
    const auto a = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 42);
    const auto b = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 42);
    CHECK(a.to_json().dump() == b.to_json().dump());
    const auto r = GbmEnsemble::from_json(a.to_json());
    for (std::size_t i = 0; i < 50; ++i) CHECK(r.predict(d.X.row(i)) == a.predict(d.X.row(i)));
}

TEST_CASE("cross validation over a grid") {
    const auto d = gamma_data(1500, 5);
    GbmConfig small, large;
    small.n_trees = 5;
    large.n_trees = 300;
    SECTION("single config is returned with its loss") {
        const auto t = tune_gbm(fam(Family::gamma), d.X, d.y, d.w, {small}, 3, 1);
        CHECK(t.best.n_trees == 5);
        REQUIRE(t.table.size() == 1);
        CHECK(t.best_loss == t.table[0].mean_loss);
    }
    SECTION("larger model wins on signal-rich data and the selection is reproducible") {
        const auto t = tune_gbm(fam(Family::gamma), d.X, d.y, d.w, {small, large}, 3, 9);
        CHECK(t.best.n_trees == 300);
        const auto u = tune_gbm(fam(Family::gamma), d.X, d.y, d.w, {small, large}, 3, 9);
        CHECK(t.to_json().dump() == u.to_json().dump());
    }
}

TEST_CASE("gamma boosting beats the intercept on held-out data") {
    const auto tr = gamma_data(3000, 6), te = gamma_data(3000, 7);
    GbmConfig c;
    c.n_trees = 200;
    c.interaction_depth = 2;
    const auto e = fit_gbm(fam(Family::gamma), tr.X, tr.y, tr.w, c, 11);
    std::vector<double> f0(te.y.size(), e.initial), f(te.y.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = e.predict(te.X.row(i));
    const double base = mean_loss(fam(Family::gamma), te.y, te.w, f0);
    const double model = mean_loss(fam(Family::gamma), te.y, te.w, f);
    CHECK(model <= 0.7 * base);
}

TEST_CASE("folds are stratified for binary targets") {
    std::vector<double> y;
    for (int i = 0; i < 100; ++i) y.push_back(i % 10 == 0 ? 1.0 : 0.0);
    const auto folds = assign_folds(fam(Family::binary), y, 5, 3);
    std::vector<int> pos(5, 0);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] == 1.0) ++pos[static_cast<std::size_t>(folds[i])];
    for (int k : pos) CHECK(k == 2);
}

TEST_CASE("variable importance") {
    const auto d = gamma_data(1500, 8);
    GbmConfig c;
    c.n_trees = 50;
    const auto e = fit_gbm(fam(Family::gamma), d.X, d.y, d.w, c, 1);
    const auto imp = variable_importance(e);
    CHECK(imp[0] + imp[1] == Approx(1.0));
    CHECK(imp[0] > imp[1]);

    FeatureMatrix one = numeric_matrix(1);
    for (std::size_t i = 0; i < d.y.size(); ++i) one.add_row(std::vector<double>{d.X.at(i, 0)});
    const auto e1 = fit_gbm(fam(Family::gamma), one, d.y, d.w, c, 1);
    CHECK(variable_importance(e1) == std::vector<double>{1.0});
}

TEST_CASE("partial dependence") {
    SECTION("single split gives a step") {
        FeatureMatrix X = numeric_matrix(2);
        std::vector<double> y, w;
        Rng rng(2);
        for (int i = 0; i < 1000; ++i) {
            const double x = rng.uniform();
            X.add_row(std::vector<double>{x, rng.uniform()});
            y.push_back(num::inv_logit(x < 0.5 ? -1.0 : 1.0));
            w.push_back(1);
        }
        GbmConfig c;
        c.n_trees = 1;
        c.interaction_depth = 1;
        c.bag_fraction = 1.0;
        const auto e = fit_gbm(fam(Family::logit_gaussian), X, y, w, c, 1);
        REQUIRE(e.trees[0].nodes[0].feature == 0);
        CHECK(e.trees[0].nodes[0].threshold == Approx(0.5).margin(0.01));
        const std::vector<double> grid{0.1, 0.3, 0.45, 0.55, 0.7, 0.9};
        const auto pd = partial_dependence(e, "x1", grid, X);
        CHECK(pd[0] == pd[1]);
        CHECK(pd[1] == pd[2]);
        CHECK(pd[3] == pd[4]);
        CHECK(pd[3] > pd[2]);
        const auto flat = partial_dependence(e, "x2", grid, X);
        for (double v : flat) CHECK(v == flat[0]);
    }
    SECTION("additive signal is recovered up to a constant") {
        const auto d = additive(6000, 0.05, 9);
        GbmConfig c;
        c.n_trees = 600;
        c.interaction_depth = 1;
        c.shrinkage = 0.1;
        c.bag_fraction = 0.5;
        const auto e = fit_gbm(fam(Family::logit_gaussian), d.X, d.y, d.w, c, 4);
        std::vector<double> grid;
        for (double x = 0.05; x < 0.951; x += 0.05) grid.push_back(x);
        const auto pd = partial_dependence(e, "x1", grid, d.X);
        double off = 0;
        for (std::size_t k = 0; k < grid.size(); ++k) off += pd[k] - f1(grid[k]);
        off /= static_cast<double>(grid.size());
        double worst = 0;
        for (std::size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, std::abs(pd[k] - off - f1(grid[k])));
        CHECK(worst < 0.05);
    }
}

TEST_CASE("categorical features and missing values") {
    FeatureMatrix X;
    X.features.push_back({"cat", FeatureKind::categorical, {"a", "b", "c"}});
    std::vector<double> y, w;
    Rng rng(12);
    for (int i = 0; i < 900; ++i) {
        const double code = i % 10 == 0 ? 0.0 : 1.0 + static_cast<double>(i % 3);
        X.add_row(std::vector<double>{code});
        const double mean = code == 2.0 ? 0.8 : -0.5;
        y.push_back(num::inv_logit(mean + rng.normal(0, 0.1)));
        w.push_back(1);
    }
    GbmConfig c;
    c.n_trees = 100;
    c.interaction_depth = 1;
    const auto e = fit_gbm(fam(Family::logit_gaussian), X, y, w, c, 2);
    const double a = 1.0, b = 2.0, cc = 3.0, missing = 0.0;
    CHECK(e.predict(&b) == Approx(0.8).margin(0.05));
    CHECK(e.predict(&a) == Approx(-0.5).margin(0.05));
    CHECK(e.predict(&cc) == Approx(-0.5).margin(0.05));
    CHECK(std::isfinite(e.predict(&missing)));
}

TEST_CASE("invalid configs are rejected") {
    GbmConfig c;
    c.shrinkage = 0;
    CHECK_THROWS(c.validate());
    c = GbmConfig{};
    c.bag_fraction = 1.5;
    CHECK_THROWS(c.validate());
    c = GbmConfig{};
    c.interaction_depth = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("tables without columns fit the constant") {
    FeatureMatrix X;
    std::vector<double> y, w;
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        X.add_row(std::vector<double>{});
        y.push_back(rng.gamma(2.0, 10.0));
        w.push_back(1.0);
    }
    REQUIRE(X.rows() == 300);
    GbmConfig c;
    c.n_trees = 10;
    c.bag_fraction = 1.0;
    const auto e = fit_gbm(fam(Family::gamma), X, y, w, c, 1);
    CHECK(e.predict(X.row(0)) == Approx(constant_fit(fam(Family::gamma), y, w)).margin(1e-9));
}
