#include "odm/premium_reserve.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"

namespace odm {

double SeverityDistribution::total_weight() const {
    num::CompensatedSum s;
    for (double w : weights) s.add(w);
    return s.value();
}

double SeverityDistribution::mean() const {
    num::CompensatedSum s;
    for (std::size_t i = 0; i < values.size(); ++i) s.add(weights[i] * values[i]);
    return s.value() / total_weight();
}

double SeverityDistribution::variance() const {
    const double m = mean();
    num::CompensatedSum s;
    for (std::size_t i = 0; i < values.size(); ++i) s.add(weights[i] * (values[i] - m) * (values[i] - m));
    return s.value() / total_weight();
}

double SeverityDistribution::cdf(double x) const {
    num::CompensatedSum s;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] <= x) s.add(weights[i]);
    return s.value() / total_weight();
}

double SeverityDistribution::quantile(double prob) const {
    if (values.empty()) throw DomainError("severity quantile: empty distribution");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const double target = prob * total_weight();
    double cum = 0.0;
    for (std::size_t i : idx) {
        cum += weights[i];
        if (cum >= target * (1.0 - 1e-14)) return values[i];
    }
    return values[idx.back()];
}

namespace {

void check_inputs(std::span<const double> settled, const std::vector<std::vector<double>>& open) {
    if (settled.empty() && open.empty()) throw DomainError("severity: no claims");
    for (const auto& p : open)
        if (p.empty()) throw DomainError("severity: open claim without simulated paths");
}

}  // namespace

SeverityDistribution build_severity_weighted(std::span<const double> settled,
                                             const std::vector<std::vector<double>>& open) {
    check_inputs(settled, open);
    SeverityDistribution d;
    d.values.assign(settled.begin(), settled.end());
    d.weights.assign(settled.size(), 1.0);
    for (const auto& paths : open) {
        const double w = 1.0 / static_cast<double>(paths.size());
        for (double v : paths) {
            d.values.push_back(v);
            d.weights.push_back(w);
        }
    }
    return d;
}

SeverityDistribution build_severity_best_estimate(std::span<const double> settled,
                                                  const std::vector<std::vector<double>>& open) {
    check_inputs(settled, open);
    SeverityDistribution d;
    d.values.assign(settled.begin(), settled.end());
    d.weights.assign(settled.size(), 1.0);
    for (const auto& paths : open) {
        d.values.push_back(num::mean(paths));
        d.weights.push_back(1.0);
    }
    return d;
}

void XlContract::validate() const {
    if (!(deductible >= 0.0)) throw ConfigError("xl contract: deductible must be >= 0");
    if (!(limit > deductible)) throw ConfigError("xl contract: limit must exceed the deductible (D < L)");
    if (!(priority <= deductible)) throw ConfigError("xl contract: reporting priority must not exceed the deductible");
}

double xl_expected_cost(const SeverityDistribution& dist, const XlContract& c) {
    if (dist.values.empty()) throw DomainError("xl cost: empty distribution");
    num::CompensatedSum s;
    for (std::size_t i = 0; i < dist.values.size(); ++i) s.add(dist.weights[i] * c.payout(dist.values[i]));
    return s.value() / dist.total_weight();
}

double pure_premium(double lambda, const SeverityDistribution& dist, const XlContract& c, double exposure) {
    if (lambda == 0.0 || exposure == 0.0) return 0.0;
    return exposure * lambda * xl_expected_cost(dist, c);
}

double pure_premium(const ReportingModel& reporting, std::span<const double> covariates,
                    const SeverityDistribution& dist, const XlContract& c, double exposure) {
    return pure_premium(reporting.lambda(covariates), dist, c, exposure);
}

Summary Summary::of(std::vector<double> xs) {
    Summary s;
    if (xs.empty()) return s;
    std::sort(xs.begin(), xs.end());
    s.mean = num::mean(xs);
    s.sd = std::sqrt(num::variance(xs));
    s.q025 = num::quantile_sorted(xs, 0.025);
    s.median = num::quantile_sorted(xs, 0.5);
    s.q975 = num::quantile_sorted(xs, 0.975);
    return s;
}

nlohmann::json Summary::to_json() const {
    return {{"mean", mean}, {"sd", sd}, {"q025", q025}, {"median", median}, {"q975", q975}};
}

// ---------------------------------------------------------------- IBNR

IbnrResult ibnr_reserve(const ReportingModel& reporting, const HierarchicalModel& model, const Portfolio& portfolio,
                        const SimConfig& cfg, int n_rep) {
    cfg.validate();
    if (n_rep < 1) throw ConfigError("ibnr: n_replications must be >= 1");
    using Key = std::tuple<std::vector<double>, int, int>;
    std::map<Key, double> groups;
    for (const PolicyRecord& p : portfolio.policies) {
        if (!(p.exposure > 0.0)) continue;
        const UnreportedPrediction u = predict_unreported(reporting, p);
        for (const auto& [j, en] : u.by_delay) groups[{p.covariates, p.occurrence_year, j}] += en;
    }
    struct Group {
        const std::vector<double>* cov;
        int occ, j;
        double en;
        std::uint64_t key;
        double mean_severity = 0.0;
    };
    std::vector<Group> gs;
    for (const auto& [k, en] : groups) {
        std::string s = std::to_string(std::get<1>(k)) + "|" + std::to_string(std::get<2>(k));
        for (double v : std::get<0>(k)) s += "|" + num::format_double(v);
        gs.push_back({&std::get<0>(k), std::get<1>(k), std::get<2>(k), en, num::fnv1a(s)});
    }

    IbnrResult res;
    parallel_for(gs.size(), [&](std::size_t g) {
        num::CompensatedSum s;
        for (int p = 0; p < cfg.n_paths; ++p) {
            Rng rng = Rng::stream(cfg.seed, {0x1B0ULL, gs[g].key, static_cast<std::uint64_t>(p)});
            s.add(simulate_new_claim_with_delay(model, *gs[g].cov, gs[g].occ, gs[g].j - 1, cfg, rng).ultimate);
        }
        gs[g].mean_severity = s.value() / cfg.n_paths;
    });
    num::CompensatedSum expected, count;
    for (const Group& g : gs) {
        expected.add(g.en * g.mean_severity);
        count.add(g.en);
        res.expected_by_delay[g.j] += g.en * g.mean_severity;
    }
    res.expected = expected.value();
    res.expected_count = count.value();

    const int span = portfolio.max_delay + cfg.horizon_years;
    for (int y = 1; y <= span; ++y) res.years.push_back(portfolio.evaluation_year + y);
    const std::size_t ny = res.years.size();
    res.replications.assign(static_cast<std::size_t>(n_rep), 0.0);
    res.paid_by_year.assign(static_cast<std::size_t>(n_rep), std::vector<double>(ny, 0.0));
    parallel_for(static_cast<std::size_t>(n_rep), [&](std::size_t r) {
        num::CompensatedSum total;
        for (const Group& g : gs) {
            Rng rng = Rng::stream(cfg.seed, {0x1B1ULL, g.key, static_cast<std::uint64_t>(r)});
            const std::uint64_t n = rng.poisson(g.en);
            for (std::uint64_t k = 0; k < n; ++k) {
                const SimulatedPath p = simulate_new_claim_with_delay(model, *g.cov, g.occ, g.j - 1, cfg, rng);
                total.add(p.ultimate);
                for (const PathYear& py : p.series) {
                    const long idx = std::clamp<long>(py.calendar_year - portfolio.evaluation_year - 1, 0,
                                                      static_cast<long>(ny) - 1);
                    res.paid_by_year[r][static_cast<std::size_t>(idx)] += py.paid;
                }
            }
        }
        res.replications[r] = total.value();
    });
    res.distribution = Summary::of(res.replications);
    return res;
}

// ---------------------------------------------------------------- RBNS

RbnsResult rbns_reserve(const HierarchicalModel& model, const std::vector<ClaimRecord>& open, int evaluation_year,
                        const SimConfig& cfg, int n_rep) {
    RbnsResult r;
    r.evolution = rbns_portfolio_evolution(model, open, evaluation_year, cfg, n_rep);
    r.distribution = Summary::of(r.evolution.future_paid);
    return r;
}

ReserveEstimate combine_reserves(IbnrResult ibnr, RbnsResult rbns) {
    if (ibnr.replications.size() != rbns.evolution.future_paid.size())
        throw DomainError("combine_reserves: replication counts differ");
    ReserveEstimate e;
    const std::size_t n = ibnr.replications.size();
    e.total_replications.resize(n);
    for (std::size_t r = 0; r < n; ++r) e.total_replications[r] = ibnr.replications[r] + rbns.evolution.future_paid[r];
    e.total = Summary::of(e.total_replications);

    std::map<int, double> sched;
    for (std::size_t y = 0; y < ibnr.years.size(); ++y) {
        num::CompensatedSum s;
        for (std::size_t r = 0; r < n; ++r) s.add(ibnr.paid_by_year[r][y]);
        sched[ibnr.years[y]] += s.value() / static_cast<double>(n);
    }
    const auto& ev = rbns.evolution;
    for (std::size_t y = 0; y < ev.years.size(); ++y) {
        num::CompensatedSum s;
        for (std::size_t r = 0; r < n; ++r) s.add(ev.cum_paid[r][y] - (y > 0 ? ev.cum_paid[r][y - 1] : 0.0));
        sched[ev.years[y]] += s.value() / static_cast<double>(n);
    }
    e.payout_schedule.assign(sched.begin(), sched.end());
    e.ibnr = std::move(ibnr);
    e.rbns = std::move(rbns);
    return e;
}

nlohmann::json ReserveEstimate::to_json() const {
    nlohmann::json by_delay = nlohmann::json::object();
    for (const auto& [j, v] : ibnr.expected_by_delay) by_delay[std::to_string(j)] = v;
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& [y, v] : payout_schedule) sched.push_back({{"calendar_year", y}, {"mean_paid", v}});
    return {{"ibnr",
             {{"expected", ibnr.expected},
              {"expected_count", ibnr.expected_count},
              {"expected_by_delay", by_delay},
              {"simulated", ibnr.distribution.to_json()}}},
            {"rbns",
             {{"future_paid", rbns.distribution.to_json()},
              {"open_claims_unsettled_at_horizon", rbns.evolution.unsettled_at_horizon}}},
            {"total", total.to_json()},
            {"payout_schedule", sched}};
}

// ---------------------------------------------------------------- backtest

std::vector<ClaimRecord> truncate_history(const std::vector<ClaimRecord>& claims, int tau) {
    std::vector<ClaimRecord> out;
    for (const ClaimRecord& c : claims) {
        if (c.reporting_year > tau || c.snapshots.empty()) continue;
        ClaimRecord t = c;
        t.snapshots.clear();
        for (const auto& s : c.snapshots)
            if (c.calendar_year(s) <= tau) t.snapshots.push_back(s);
        t.settled = t.snapshots.back().settlement;
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<ClaimRecord> open_claims(const std::vector<ClaimRecord>& claims) {
    std::vector<ClaimRecord> out;
    for (const auto& c : claims)
        if (!c.settled && !c.snapshots.empty() && !c.snapshots.back().settlement) out.push_back(c);
    return out;
}

std::vector<BacktestRow> backtest(const HierarchicalModel& model, const std::vector<ClaimRecord>& claims,
                                  const std::vector<int>& taus, const SimConfig& cfg, int n_rep) {
    if (claims.empty()) throw DomainError("backtest: no claims");
    int first = claims.front().reporting_year, last = claims.front().last_calendar_year();
    for (const auto& c : claims) {
        first = std::min(first, c.reporting_year);
        last = std::max(last, c.last_calendar_year());
    }
    std::vector<BacktestRow> rows;
    for (int tau : taus) {
        if (tau < first || tau > last)
            throw DomainError("backtest: evaluation year " + std::to_string(tau) + " outside the data range " +
                              std::to_string(first) + "-" + std::to_string(last));
        const std::vector<ClaimRecord> open = open_claims(truncate_history(claims, tau));
        if (open.empty()) continue;
        const PortfolioEvolution ev = rbns_portfolio_evolution(model, open, tau, cfg, n_rep);
        std::map<std::string, const ClaimRecord*> full;
        for (const auto& c : claims) full[c.claim_id] = &c;
        for (std::size_t y = 0; y < ev.years.size(); ++y) {
            BacktestRow row;
            row.evaluation_year = tau;
            row.calendar_year = ev.years[y];
            row.predicted_mean = ev.paid_bands[y].mean;
            row.lower = ev.paid_bands[y].lower;
            row.upper = ev.paid_bands[y].upper;
            if (ev.years[y] <= last) {
                double realized = 0.0;
                for (const auto& c : open) {
                    const ClaimRecord& f = *full.at(c.claim_id);
                    for (const auto& s : f.snapshots) {
                        const int cy = f.calendar_year(s);
                        if (cy > tau && cy <= ev.years[y]) realized += s.payment_amount;
                    }
                }
                row.realized = realized;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace odm
