#include "odm/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"

namespace odm {

void SimConfig::validate() const {
    if (n_paths < 1) throw ConfigError("simulation: n_paths must be >= 1");
    if (horizon_years < 1) throw ConfigError("simulation: horizon_years must be >= 1");
}

nlohmann::json SimConfig::to_json() const {
    nlohmann::json j{{"n_paths", n_paths}, {"horizon_years", horizon_years}, {"seed", seed}};
    if (!curve.empty()) j["inflation"] = curve.to_json();
    return j;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
    for (const auto& [k, v] : j.items())
        if (k != "n_paths" && k != "horizon_years" && k != "seed" && k != "inflation")
            throw ConfigError("simulation: unknown key '" + k + "'");
    SimConfig c;
    c.n_paths = j.value("n_paths", c.n_paths);
    c.horizon_years = j.value("horizon_years", c.horizon_years);
    c.seed = j.value("seed", c.seed);
    if (j.contains("inflation")) c.curve = InflationCurve::from_json(j.at("inflation"));
    c.validate();
    return c;
}

namespace {

double factor(const SimConfig& cfg, int year, bool& extrapolated) {
    if (cfg.curve.empty()) return 1.0;
    bool e = false;
    const double f = cfg.curve.factor_or_last(year, &e);
    extrapolated = extrapolated || e;
    return f;
}

// Runs update years from `s` (last completed year in calendar year `cy`).
void develop(const HierarchicalModel& model, ClaimState s, int cy, double nominal_paid, const SimConfig& cfg, Rng& rng,
             SimulatedPath& path) {
    while (!s.settled && s.dev_year < cfg.horizon_years) {
        const ClaimState n = simulate_update_year(model, s, rng);
        ++cy;
        const double f = factor(cfg, cy, path.extrapolated_inflation);
        const double inc = (n.paid - s.paid) * f;
        nominal_paid += inc;
        path.future_paid += inc;
        path.series.push_back({cy, inc, nominal_paid + n.reserve * f});
        s = n;
    }
    path.settled = s.settled;
    const double f = factor(cfg, cy, path.extrapolated_inflation);
    path.ultimate = s.settled ? nominal_paid : nominal_paid + s.reserve * f;
}

}  // namespace

SimulatedPath simulate_new_claim_with_delay(const HierarchicalModel& model, const std::vector<double>& covariates,
                                            int occurrence_year, int delay, const SimConfig& cfg, Rng& rng) {
    SimulatedPath path;
    path.origin = "new";
    path.reporting_delay = delay;
    const ClaimState s = simulate_initial_year(model, delay, covariates, rng);
    const int cy = occurrence_year + delay;
    const double f = factor(cfg, cy, path.extrapolated_inflation);
    const double paid = s.paid * f;
    path.future_paid = paid;
    path.series.push_back({cy, paid, paid + s.reserve * f});
    develop(model, s, cy, paid, cfg, rng, path);
    return path;
}

SimulatedPath simulate_new_claim(const HierarchicalModel& model, const ReportingModel& reporting,
                                 const std::vector<double>& covariates, int occurrence_year, const SimConfig& cfg,
                                 Rng& rng) {
    const std::vector<double> p = reporting.probabilities(covariates);
    const int delay = static_cast<int>(rng.categorical(p));
    return simulate_new_claim_with_delay(model, covariates, occurrence_year, delay, cfg, rng);
}

SimulatedPath simulate_open_claim(const HierarchicalModel& model, const ClaimRecord& claim, const SimConfig& cfg,
                                  Rng& rng, int path_id) {
    if (claim.snapshots.empty()) throw DomainError("claim " + claim.claim_id + " has no history");
    if (claim.settled || claim.snapshots.back().settlement)
        throw DomainError("claim " + claim.claim_id + " is settled: nothing to simulate");
    SimulatedPath path;
    path.origin = claim.claim_id;
    path.path_id = path_id;
    path.reporting_delay = claim.reporting_delay;
    const ClaimState s = state_from_history(claim, claim.snapshots.size());
    double paid = 0.0;
    for (const auto& snap : claim.snapshots)
        paid += snap.payment_amount * factor(cfg, claim.calendar_year(snap), path.extrapolated_inflation);
    develop(model, s, claim.last_calendar_year(), paid, cfg, rng, path);
    return path;
}

std::vector<SimulatedPath> simulate_future_paths(const HierarchicalModel& model, const ClaimRecord& claim,
                                                 const SimConfig& cfg) {
    cfg.validate();
    std::vector<SimulatedPath> out(static_cast<std::size_t>(cfg.n_paths));
    const std::uint64_t key = stream_key(claim.claim_id);
    parallel_for(out.size(), [&](std::size_t p) {
        Rng rng = Rng::stream(cfg.seed, {key, static_cast<std::uint64_t>(p)});
        out[p] = simulate_open_claim(model, claim, cfg, rng, static_cast<int>(p));
    });
    return out;
}

std::vector<Band> quantile_bands(const std::vector<int>& years, const std::vector<std::vector<double>>& values,
                                 double level) {
    std::vector<Band> bands;
    const double lo = 0.5 * (1.0 - level), hi = 0.5 * (1.0 + level);
    std::vector<double> col;
    for (std::size_t y = 0; y < years.size(); ++y) {
        col.clear();
        for (const auto& r : values) col.push_back(r[y]);
        Band b;
        b.calendar_year = years[y];
        if (!col.empty()) {
            std::sort(col.begin(), col.end());
            b.mean = num::mean(col);
            b.lower = num::quantile_sorted(col, lo);
            b.median = num::quantile_sorted(col, 0.5);
            b.upper = num::quantile_sorted(col, hi);
        }
        bands.push_back(b);
    }
    return bands;
}

PortfolioEvolution rbns_portfolio_evolution(const HierarchicalModel& model, const std::vector<ClaimRecord>& open,
                                            int evaluation_year, const SimConfig& cfg, int n_rep, double level) {
    cfg.validate();
    if (n_rep < 1) throw ConfigError("rbns: n_replications must be >= 1");
    PortfolioEvolution ev;
    ev.evaluation_year = evaluation_year;
    int span = 1;
    for (const auto& c : open) {
        if (c.snapshots.empty()) continue;
        span = std::max(span, c.last_calendar_year() + cfg.horizon_years - c.snapshots.back().dev_year - evaluation_year);
    }
    for (int y = 1; y <= span; ++y) ev.years.push_back(evaluation_year + y);
    const std::size_t ny = ev.years.size();
    ev.cum_paid.assign(static_cast<std::size_t>(n_rep), std::vector<double>(ny, 0.0));
    ev.incurred.assign(static_cast<std::size_t>(n_rep), std::vector<double>(ny, 0.0));
    ev.future_paid.assign(static_cast<std::size_t>(n_rep), 0.0);
    std::vector<long> unsettled(static_cast<std::size_t>(n_rep), 0);
    std::vector<std::uint64_t> keys;
    for (const auto& c : open) keys.push_back(stream_key(c.claim_id));

    parallel_for(static_cast<std::size_t>(n_rep), [&](std::size_t r) {
        std::vector<double> inc(ny, 0.0);
        auto& incurred = ev.incurred[r];
        for (std::size_t k = 0; k < open.size(); ++k) {
            Rng rng = Rng::stream(cfg.seed, {keys[k], static_cast<std::uint64_t>(r)});
            const SimulatedPath p = simulate_open_claim(model, open[k], cfg, rng, static_cast<int>(r));
            if (!p.settled) ++unsettled[r];
            // Incurred carried from the last recorded year until the path's first year.
            const ClaimState s0 = state_from_history(open[k], open[k].snapshots.size());
            double last_incurred = s0.incurred;
            std::size_t cursor = 0;
            for (const PathYear& py : p.series) {
                const long idx = std::clamp<long>(py.calendar_year - evaluation_year - 1, 0, static_cast<long>(ny) - 1);
                while (cursor < static_cast<std::size_t>(idx)) incurred[cursor++] += last_incurred;
                inc[static_cast<std::size_t>(idx)] += py.paid;
                last_incurred = py.incurred;
            }
            while (cursor < ny) incurred[cursor++] += last_incurred;
            ev.future_paid[r] += p.future_paid;
        }
        double cum = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
            cum += inc[y];
            ev.cum_paid[r][y] = cum;
        }
    });
    for (long u : unsettled) ev.unsettled_at_horizon += u;
    ev.paid_bands = quantile_bands(ev.years, ev.cum_paid, level);
    ev.incurred_bands = quantile_bands(ev.years, ev.incurred, level);
    return ev;
}

}  // namespace odm
