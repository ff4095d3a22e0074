#include "odm/layer_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"

namespace odm {

std::string to_string(Learner l) {
    switch (l) {
        case Learner::constant: return "constant";
        case Learner::glm: return "glm";
        case Learner::gbm: return "gbm";
    }
    return "constant";
}

Learner learner_from_string(const std::string& s) {
    if (s == "constant") return Learner::constant;
    if (s == "glm") return Learner::glm;
    if (s == "gbm") return Learner::gbm;
    throw ConfigError("unknown learner '" + s + "'");
}

namespace {

double weight_at(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }

struct ProfileData {
    std::vector<double> x;
    double a = 0.0;
    double jac = 0.0;  // -log p - (p-1) mean log y
    double wsum = 0.0;
};

ProfileData transform(std::span<const double> y, std::span<const double> w, double T, double p) {
    ProfileData d;
    d.x.resize(y.size());
    num::CompensatedSum ly, ws;
    for (std::size_t i = 0; i < y.size(); ++i) {
        d.x[i] = p == 1.0 ? y[i] : std::pow(y[i], p);
        if (p != 1.0) ly.add(weight_at(w, i) * std::log(y[i]));
        ws.add(weight_at(w, i));
    }
    d.wsum = ws.value();
    d.a = p == 1.0 ? T : std::pow(T, p);
    d.jac = p == 1.0 ? 0.0 : -std::log(p) - (p - 1.0) * ly.value() / d.wsum;
    return d;
}

// Mean negative log-likelihood (without the 2*pi constant) at (mu, s = log sigma).
double profile_objective(const ProfileData& d, std::span<const double> w, double mu, double s) {
    const double sigma = std::exp(s);
    const double lsf = num::log_norm_sf((d.a - mu) / sigma);
    num::CompensatedSum acc;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const double r = (d.x[i] - mu) / sigma;
        acc.add(weight_at(w, i) * 0.5 * r * r);
    }
    return s + acc.value() / d.wsum + lsf + d.jac;
}

std::array<double, 2> profile_gradient(const ProfileData& d, std::span<const double> w, double mu, double s) {
    const double sigma = std::exp(s);
    const double alpha = (d.a - mu) / sigma;
    const double hz = num::norm_hazard(alpha);
    num::CompensatedSum r1, r2;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
        const double r = (d.x[i] - mu) / sigma;
        r1.add(weight_at(w, i) * r);
        r2.add(weight_at(w, i) * r * r);
    }
    const double m1 = r1.value() / d.wsum, m2 = r2.value() / d.wsum;
    return {-m1 / sigma + hz / sigma, 1.0 - m2 + hz * alpha};
}

}  // namespace

PowerProfile profile_power_trunc(std::span<const double> y, std::span<const double> w, double T, double p) {
    if (y.empty()) throw DomainError("power profile: no observations");
    for (double v : y)
        if (!(v >= T) || !(v > 0.0)) throw DomainError("power profile: outcome below the truncation point");
    const ProfileData d = transform(y, w, T, p);
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i) mu += weight_at(w, i) * d.x[i];
    mu /= d.wsum;
    for (std::size_t i = 0; i < d.x.size(); ++i) var += weight_at(w, i) * (d.x[i] - mu) * (d.x[i] - mu);
    var /= d.wsum;
    double s = 0.5 * std::log(std::max(var, 1e-300));
    if (!std::isfinite(s)) s = std::log(1e-12 * (std::abs(mu) + 1.0));
    if (var <= 0.0) return {p, mu, 0.0, -std::numeric_limits<double>::infinity()};

    double cur = profile_objective(d, w, mu, s);
    for (int it = 0; it < 300; ++it) {
        const auto g = profile_gradient(d, w, mu, s);
        // Hessian from central differences of the analytic gradient.
        const double hm = 1e-5 * std::exp(s), hs = 1e-5;
        const auto gmp = profile_gradient(d, w, mu + hm, s), gmm = profile_gradient(d, w, mu - hm, s);
        const auto gsp = profile_gradient(d, w, mu, s + hs), gsm = profile_gradient(d, w, mu, s - hs);
        const double Hmm = (gmp[0] - gmm[0]) / (2 * hm);
        const double Hss = (gsp[1] - gsm[1]) / (2 * hs);
        const double Hms = 0.5 * ((gmp[1] - gmm[1]) / (2 * hm) + (gsp[0] - gsm[0]) / (2 * hs));
        const double det = Hmm * Hss - Hms * Hms;
        double dm, ds;
        if (Hmm > 0.0 && det > 0.0) {
            dm = -(Hss * g[0] - Hms * g[1]) / det;
            ds = -(-Hms * g[0] + Hmm * g[1]) / det;
        } else {
            const double sig = std::exp(s);
            dm = -g[0] * sig * sig;
            ds = -g[1];
        }
        // Keep log sigma steps moderate.
        const double lim = 2.0;
        if (std::abs(ds) > lim) {
            dm *= lim / std::abs(ds);
            ds = std::copysign(lim, ds);
        }
        double t = 1.0, next = profile_objective(d, w, mu + dm, s + ds);
        int halvings = 0;
        while (!(next <= cur) && halvings < 60) {
            t *= 0.5;
            next = profile_objective(d, w, mu + t * dm, s + t * ds);
            ++halvings;
        }
        if (!(next <= cur)) break;
        mu += t * dm;
        s += t * ds;
        const bool done = cur - next <= 1e-15 * (std::abs(cur) + 1.0) &&
                          std::abs(t * dm) <= 1e-11 * (std::abs(mu) + std::exp(s)) && std::abs(t * ds) <= 1e-11;
        cur = next;
        if (done) break;
    }
    if (!std::isfinite(cur)) throw ConvergenceError("power profile: objective not finite", cur);
    return {p, mu, std::exp(s), cur};
}

PowerProfile fit_power_trunc_constant(std::span<const double> y, std::span<const double> w, double T, double lo,
                                      double hi) {
    if (!(lo > 0.0) || !(hi >= lo)) throw DomainError("power search: invalid interval");
    auto f = [&](double p) { return profile_power_trunc(y, w, T, p).objective; };
    // The profile is not unimodal over wide intervals: scan a grid, then
    // refine between the neighbours of the best grid point.
    constexpr int kGrid = 40;
    std::vector<double> grid(kGrid + 1), obj(kGrid + 1);
    for (int i = 0; i <= kGrid; ++i) grid[i] = lo + (hi - lo) * i / kGrid;
    parallel_for(grid.size(), [&](std::size_t i) { obj[i] = f(grid[i]); });
    int at = 0;
    for (int i = 1; i <= kGrid; ++i)
        if (obj[i] < obj[at]) at = i;
    PowerProfile best = profile_power_trunc(y, w, T, grid[at]);
    if (hi > lo) {
        const double a = grid[std::max(0, at - 1)], b = grid[std::min(kGrid, at + 1)];
        const PowerProfile refined = profile_power_trunc(y, w, T, num::golden_section_minimize(f, a, b, 1e-7));
        if (refined.objective < best.objective) best = refined;
    }
    return best;
}

LayerModel LayerModel::make_constant(const FamilySpec& family, double value) {
    LayerModel m;
    m.family = family;
    m.learner = Learner::constant;
    m.constant = value;
    return m;
}

double LayerModel::score(const double* row) const {
    switch (learner) {
        case Learner::constant: return constant;
        case Learner::glm: return linear->predict(row);
        case Learner::gbm: return gbm->predict(row);
    }
    return constant;
}

nlohmann::json LayerModel::to_json() const {
    nlohmann::json j{{"family", family.to_json()},
                     {"learner", to_string(learner)},
                     {"training_loss", training_loss},
                     {"n_rows", n_rows},
                     {"warnings", warnings}};
    switch (learner) {
        case Learner::constant: j["constant"] = constant; break;
        case Learner::glm: j["predictor"] = linear->to_json(); break;
        case Learner::gbm: j["predictor"] = gbm->to_json(); break;
    }
    return j;
}

LayerModel LayerModel::from_json(const nlohmann::json& j) {
    LayerModel m;
    m.family = FamilySpec::from_json(j.at("family"));
    m.learner = learner_from_string(j.at("learner").get<std::string>());
    m.training_loss = j.value("training_loss", 0.0);
    m.n_rows = j.value("n_rows", std::size_t{0});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    switch (m.learner) {
        case Learner::constant: m.constant = j.at("constant").get<double>(); break;
        case Learner::glm: m.linear = LinearPredictor::from_json(j.at("predictor")); break;
        case Learner::gbm: m.gbm = GbmEnsemble::from_json(j.at("predictor")); break;
    }
    return m;
}

namespace {

std::vector<double> scores(const LayerModel& m, const FeatureMatrix& X) {
    std::vector<double> f(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) f[i] = m.score(X.row(i));
    return f;
}

void fit_predictor(LayerModel& m, const FeatureMatrix& X, std::span<const double> y, std::span<const double> w,
                   const LayerFitOptions& o) {
    switch (m.learner) {
        case Learner::constant: m.constant = constant_fit(m.family, y, w); break;
        case Learner::glm: {
            std::optional<LinearPredictor> start = m.linear;
            m.linear = LinearPredictor::fit(m.family, X, y, w, start, &m.warnings);
            break;
        }
        case Learner::gbm: {
            GbmConfig cfg = o.grid.front();
            if (o.grid.size() > 1) {
                const TuneResult t = tune_gbm(m.family, X, y, w, o.grid, o.cv_folds, o.seed);
                cfg = t.best;
            }
            m.gbm = fit_gbm(m.family, X, y, w, cfg, o.seed, &m.warnings);
            break;
        }
    }
}

void update_nuisance(LayerModel& m, const FeatureMatrix& X, std::span<const double> y, std::span<const double> w) {
    const std::vector<double> f = scores(m, X);
    switch (m.family.family) {
        case Family::binary: break;
        case Family::gamma: {
            std::vector<double> mu(f.size());
            for (std::size_t i = 0; i < f.size(); ++i) mu[i] = std::exp(f[i]);
            const GammaShapeFit g = gamma_fit_shape(y, mu, w);
            m.family.shape = g.shape;
            m.family.shape_capped = g.capped;
            if (g.capped) m.warnings.push_back("gamma shape hit the upper cap");
            break;
        }
        case Family::logit_gaussian: {
            num::CompensatedSum ss, ws;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double r = num::logit(y[i]) - f[i];
                ss.add(weight_at(w, i) * r * r);
                ws.add(weight_at(w, i));
            }
            m.family.sigma = std::sqrt(ss.value() / ws.value());
            break;
        }
        case Family::power_trunc_gaussian: {
            auto total = [&](double s) {
                FamilySpec spec = m.family;
                spec.sigma = std::exp(s);
                num::CompensatedSum a;
                for (std::size_t i = 0; i < f.size(); ++i) a.add(weight_at(w, i) * family_loss(spec, y[i], f[i]));
                return a.value();
            };
            const double s0 = std::log(m.family.sigma);
            m.family.sigma = std::exp(num::brent_minimize(total, s0 - 5.0, s0 + 5.0));
            break;
        }
    }
}

// Power chosen on the loss of the linear predictor refitted at each
// candidate; the marginal profile is biased when covariates move the mean.
double conditional_power(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                         std::span<const double> w, const LayerFitOptions& o) {
    auto objective = [&](double p) {
        try {
            const PowerProfile c = profile_power_trunc(y, w, family.truncation, p);
            LayerModel m;
            m.family = family;
            m.family.power = p;
            m.family.power_fixed = true;
            m.family.sigma = c.sigma > 0.0 ? c.sigma : 1e-12;
            m.learner = Learner::glm;
            for (int r = 0; r < std::max(1, o.sigma_rounds); ++r) {
                fit_predictor(m, X, y, w, o);
                update_nuisance(m, X, y, w);
            }
            const double v = mean_loss(m.family, y, w, scores(m, X));
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    constexpr int kGrid = 9;
    constexpr double lo = 0.02, hi = 0.92;
    std::vector<double> grid(kGrid + 1), obj(kGrid + 1);
    for (int i = 0; i <= kGrid; ++i) grid[i] = lo + (hi - lo) * i / kGrid;
    parallel_for(grid.size(), [&](std::size_t i) { obj[i] = objective(grid[i]); });
    int at = 0;
    for (int i = 1; i <= kGrid; ++i)
        if (obj[i] < obj[at]) at = i;
    const double a = at > 0 ? grid[at - 1] : 0.005, b = grid[std::min(kGrid, at + 1)];
    const double p = num::golden_section_minimize(objective, a, b, 1e-3);
    return objective(p) < obj[at] ? p : grid[at];
}

}  // namespace

LayerModel fit_layer(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                     std::span<const double> w, const LayerFitOptions& o) {
    family.validate();
    if (X.rows() != y.size() || (!w.empty() && w.size() != y.size()))
        throw DomainError("fit_layer: length mismatch");
    for (double v : y) check_support(family, v);
    LayerModel m;
    m.family = family;
    m.learner = o.learner;
    m.n_rows = y.size();
    if (y.empty()) {
        m.learner = Learner::constant;
        m.constant = 0.0;
        m.warnings.push_back("no training rows: family default");
        return m;
    }
    if (m.learner != Learner::constant && X.cols() == 0) m.learner = Learner::constant;
    if (m.learner == Learner::gbm && y.size() < static_cast<std::size_t>(2 * o.grid.front().min_node_obs)) {
        m.learner = Learner::glm;
        m.warnings.push_back("too few rows for boosting: linear learner used");
    }

    if (family.family == Family::power_trunc_gaussian) {
        PowerProfile pp;
        if (family.power_fixed)
            pp = profile_power_trunc(y, w, family.truncation, family.power);
        else if (m.learner == Learner::constant)
            pp = fit_power_trunc_constant(y, w, family.truncation);
        else
            pp = profile_power_trunc(y, w, family.truncation, conditional_power(family, X, y, w, o));
        m.family.power = pp.power;
        m.family.power_fixed = true;
        m.family.sigma = pp.sigma > 0.0 ? pp.sigma : 1e-12;
        if (m.learner == Learner::constant) {
            m.constant = pp.mu;
        } else {
            for (int r = 0; r < std::max(1, o.sigma_rounds); ++r) {
                fit_predictor(m, X, y, w, o);
                update_nuisance(m, X, y, w);
            }
        }
        m.family.power_fixed = family.power_fixed;
    } else {
        fit_predictor(m, X, y, w, o);
        update_nuisance(m, X, y, w);
    }
    m.training_loss = mean_loss(m.family, y, w, scores(m, X));
    return m;
}

}  // namespace odm
