#include "odm/development.hpp"

#include <algorithm>
#include <cmath>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"

namespace odm {

std::string to_string(DatasetMode m) { return m == DatasetMode::insurance ? "insurance" : "reinsurance"; }

DatasetMode mode_from_string(const std::string& s) {
    if (s == "insurance") return DatasetMode::insurance;
    if (s == "reinsurance") return DatasetMode::reinsurance;
    throw ConfigError("unknown dataset mode '" + s + "'");
}

std::string to_string(Phase p) { return p == Phase::initial ? "initial" : "update"; }

namespace {

const std::vector<std::pair<LayerKind, std::string>>& kind_names() {
    static const std::vector<std::pair<LayerKind, std::string>> names{
        {LayerKind::settlement, "settlement"},
        {LayerKind::payment, "payment"},
        {LayerKind::increase_paid, "increase_paid"},
        {LayerKind::initial_reserve, "initial_reserve"},
        {LayerKind::excess_incurred, "excess_incurred"},
        {LayerKind::pct_paid, "pct_paid"},
        {LayerKind::change_reserve, "change_reserve"},
        {LayerKind::reserve_is_zero, "reserve_is_zero"},
        {LayerKind::change_reserve_pos, "change_reserve_pos"},
        {LayerKind::increase_reserve, "increase_reserve"},
        {LayerKind::pct_decrease_reserve, "pct_decrease_reserve"},
    };
    return names;
}

}  // namespace

std::string to_string(LayerKind k) {
    for (const auto& [kind, name] : kind_names())
        if (kind == k) return name;
    return "settlement";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kind_names())
        if (name == s) return kind;
    throw ConfigError("unknown layer '" + s + "'");
}

std::vector<LayerKind> layer_sequence(DatasetMode mode, Phase phase) {
    using K = LayerKind;
    if (phase == Phase::initial) {
        if (mode == DatasetMode::insurance) return {K::settlement, K::payment, K::increase_paid, K::initial_reserve};
        return {K::excess_incurred, K::payment, K::pct_paid};
    }
    if (mode == DatasetMode::insurance)
        return {K::settlement,     K::payment,          K::increase_paid,       K::change_reserve,
                K::change_reserve_pos, K::increase_reserve, K::pct_decrease_reserve};
    return {K::settlement,         K::payment,          K::increase_paid,       K::change_reserve,
            K::reserve_is_zero,    K::change_reserve_pos, K::increase_reserve, K::pct_decrease_reserve};
}

// ---------------------------------------------------------------- registry

namespace {

enum Term {
    t_reporting_delay,
    t_dev_year,
    t_log_paid,
    t_log_reserve,
    t_log_incurred,
    t_ratio_paid_incurred,
    t_prev_payment_flag,
    t_log_prev_payment,
    t_cur_settlement,
    t_cur_payment,
    t_cur_change_reserve,
    t_log_increase_paid,
    t_log_excess_incurred,
    t_log_reserve_after_payment,
    t_count
};

bool is_history(int t) { return t >= t_dev_year && t <= t_log_prev_payment; }

// Layer whose outcome a current-year term reads.
LayerKind term_source(int t) {
    switch (t) {
        case t_cur_settlement: return LayerKind::settlement;
        case t_cur_payment: return LayerKind::payment;
        case t_cur_change_reserve: return LayerKind::change_reserve;
        case t_log_increase_paid: return LayerKind::increase_paid;
        case t_log_excess_incurred: return LayerKind::excess_incurred;
        default: return LayerKind::increase_paid;  // reserve after payment
    }
}

int term_index(const std::string& name) {
    const auto& t = registry_terms();
    auto it = std::find(t.begin(), t.end(), name);
    return it == t.end() ? -1 : static_cast<int>(it - t.begin());
}

bool is_binary_kind(LayerKind k) {
    switch (k) {
        case LayerKind::settlement:
        case LayerKind::payment:
        case LayerKind::change_reserve:
        case LayerKind::reserve_is_zero:
        case LayerKind::change_reserve_pos: return true;
        default: return false;
    }
}

bool is_pct_kind(LayerKind k) { return k == LayerKind::pct_paid || k == LayerKind::pct_decrease_reserve; }

FamilySpec default_family(LayerKind k, DatasetMode mode, double floor) {
    FamilySpec f;
    if (is_binary_kind(k)) {
        f.family = Family::binary;
    } else if (is_pct_kind(k)) {
        f.family = Family::logit_gaussian;
    } else if (mode == DatasetMode::insurance) {
        f.family = Family::gamma;
    } else {
        f.family = Family::power_trunc_gaussian;
        f.truncation = floor;
        f.power = k == LayerKind::excess_incurred ? 0.117 : k == LayerKind::increase_paid ? 0.155 : 0.105;
    }
    return f;
}

}  // namespace

const std::vector<std::string>& registry_terms() {
    static const std::vector<std::string> t{"reporting_delay",   "dev_year",           "log_paid",
                                            "log_reserve",       "log_incurred",       "ratio_paid_incurred",
                                            "prev_payment_flag", "log_prev_payment",   "cur_settlement",
                                            "cur_payment",       "cur_change_reserve", "log_increase_paid",
                                            "log_excess_incurred", "log_reserve_after_payment"};
    return t;
}

nlohmann::json LayerSpec::to_json() const {
    return {{"layer", to_string(kind)}, {"family", family.to_json()}, {"covariates", covariates}};
}

LayerSpec LayerSpec::from_json(const nlohmann::json& j, Phase phase) {
    for (const auto& [k, v] : j.items())
        if (k != "layer" && k != "family" && k != "covariates") throw ConfigError("layer: unknown key '" + k + "'");
    LayerSpec s;
    s.phase = phase;
    s.kind = layer_kind_from_string(j.at("layer").get<std::string>());
    s.family = FamilySpec::from_json(j.at("family"));
    s.covariates = j.value("covariates", std::vector<std::string>{});
    return s;
}

DevelopmentConfig DevelopmentConfig::defaults(DatasetMode mode, const CovariateSchema& schema) {
    DevelopmentConfig c;
    c.mode = mode;
    std::vector<std::string> stat;
    for (const auto& cov : schema.covariates) stat.push_back(cov.name);
    stat.push_back("reporting_delay");
    const std::vector<std::string> hist{"dev_year", "log_paid", "log_reserve", "prev_payment_flag"};
    auto with = [&](std::vector<std::string> base, std::initializer_list<const char*> extra) {
        for (const char* e : extra) base.emplace_back(e);
        return base;
    };
    std::vector<std::string> sh = stat;
    sh.insert(sh.end(), hist.begin(), hist.end());

    using K = LayerKind;
    auto covs_initial = [&](K k) -> std::vector<std::string> {
        switch (k) {
            case K::payment:
                return mode == DatasetMode::insurance ? with(stat, {"cur_settlement"}) : with(stat, {"log_excess_incurred"});
            case K::increase_paid: return with(stat, {"cur_settlement"});
            case K::initial_reserve: return with(stat, {"cur_payment", "log_increase_paid"});
            case K::pct_paid: return with(stat, {"log_excess_incurred"});
            default: return stat;
        }
    };
    auto covs_update = [&](K k) -> std::vector<std::string> {
        switch (k) {
            case K::settlement: return sh;
            case K::payment:
            case K::increase_paid: return with(sh, {"cur_settlement"});
            case K::change_reserve: return with(sh, {"cur_payment", "log_increase_paid"});
            default: return with(sh, {"cur_payment", "log_reserve_after_payment"});
        }
    };
    for (K k : layer_sequence(mode, Phase::initial))
        c.initial.push_back({k, Phase::initial, default_family(k, mode, c.min_amount), covs_initial(k)});
    for (K k : layer_sequence(mode, Phase::update))
        c.update.push_back({k, Phase::update, default_family(k, mode, c.min_amount), covs_update(k)});
    return c;
}

void DevelopmentConfig::validate(const CovariateSchema& schema) const {
    if (!(priority >= 0.0)) throw ConfigError("development: priority must be >= 0");
    if (!(min_amount >= 0.0)) throw ConfigError("development: min_amount must be >= 0");
    for (Phase ph : {Phase::initial, Phase::update}) {
        const auto& layers = ph == Phase::initial ? initial : update;
        const auto seq = layer_sequence(mode, ph);
        if (layers.size() != seq.size())
            throw ConfigError("development: " + to_string(mode) + " mode needs " + std::to_string(seq.size()) + " " +
                              to_string(ph) + " layers");
        for (std::size_t k = 0; k < seq.size(); ++k) {
            const LayerSpec& l = layers[k];
            if (l.kind != seq[k])
                throw ConfigError("development: " + to_string(ph) + " layer " + std::to_string(k + 1) + " must be " +
                                  to_string(seq[k]));
            const Family f = l.family.family;
            const bool ok = is_binary_kind(l.kind)  ? f == Family::binary
                            : is_pct_kind(l.kind)   ? f == Family::logit_gaussian
                                                    : (f == Family::gamma || f == Family::power_trunc_gaussian);
            if (!ok) throw ConfigError("development: family " + to_string(f) + " not allowed for " + l.name());
            try {
                l.family.validate();
            } catch (const DomainError& e) {
                throw ConfigError(l.name() + ": " + e.what());
            }
            for (const std::string& c : l.covariates) {
                if (schema.index(c) >= 0) continue;
                const int t = term_index(c);
                if (t < 0) throw ConfigError(l.name() + ": unknown covariate '" + c + "'");
                if (ph == Phase::initial && (is_history(t) || t == t_cur_change_reserve || t == t_log_reserve_after_payment))
                    throw ConfigError(l.name() + ": '" + c + "' is not available in the reporting year");
                if (t >= t_cur_settlement) {
                    const LayerKind src = term_source(t);
                    bool earlier = false;
                    for (std::size_t q = 0; q < k; ++q) earlier = earlier || seq[q] == src;
                    if (!earlier)
                        throw ConfigError(l.name() + ": covariate '" + c + "' references layer " + to_string(src) +
                                          " which is not evaluated before it");
                }
            }
        }
    }
}

nlohmann::json DevelopmentConfig::to_json() const {
    nlohmann::json ini = nlohmann::json::array(), upd = nlohmann::json::array();
    for (const auto& l : initial) ini.push_back(l.to_json());
    for (const auto& l : update) upd.push_back(l.to_json());
    return {{"mode", to_string(mode)}, {"priority", priority}, {"min_amount", min_amount},
            {"initial", ini},          {"update", upd}};
}

DevelopmentConfig DevelopmentConfig::from_json(const nlohmann::json& j) {
    for (const auto& [k, v] : j.items())
        if (k != "mode" && k != "priority" && k != "min_amount" && k != "initial" && k != "update")
            throw ConfigError("development: unknown key '" + k + "'");
    DevelopmentConfig c;
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.priority = j.value("priority", c.priority);
    c.min_amount = j.value("min_amount", c.min_amount);
    for (const auto& l : j.at("initial")) c.initial.push_back(LayerSpec::from_json(l, Phase::initial));
    for (const auto& l : j.at("update")) c.update.push_back(LayerSpec::from_json(l, Phase::update));
    return c;
}

// ---------------------------------------------------------------- state machine

bool layer_applies(LayerKind kind, Phase phase, DatasetMode mode, const ClaimState& /*prior*/, const YearOutcomes& o) {
    using K = LayerKind;
    if (phase == Phase::initial) {
        switch (kind) {
            case K::settlement: return mode == DatasetMode::insurance;
            case K::payment:
            case K::excess_incurred: return true;
            case K::increase_paid:
            case K::pct_paid: return o.payment;
            case K::initial_reserve: return !o.settlement;
            default: return false;
        }
    }
    switch (kind) {
        case K::settlement:
        case K::payment: return true;
        case K::increase_paid: return o.payment;
        case K::change_reserve: return !o.settlement;
        case K::reserve_is_zero:
            return mode == DatasetMode::reinsurance && o.change_reserve && o.reserve_after_payment > 0.0;
        case K::change_reserve_pos: return o.change_reserve && !o.reserve_is_zero && o.reserve_after_payment > 0.0;
        case K::increase_reserve: return o.change_reserve && !o.reserve_is_zero && o.change_reserve_pos;
        case K::pct_decrease_reserve: return o.change_reserve && !o.reserve_is_zero && !o.change_reserve_pos;
        default: return false;
    }
}

double outcome_value(LayerKind kind, const YearOutcomes& o) {
    using K = LayerKind;
    switch (kind) {
        case K::settlement: return o.settlement ? 1.0 : 0.0;
        case K::payment: return o.payment ? 1.0 : 0.0;
        case K::increase_paid: return o.increase_paid;
        case K::initial_reserve: return o.initial_reserve;
        case K::excess_incurred: return o.excess_incurred;
        case K::pct_paid: return o.pct_paid;
        case K::change_reserve: return o.change_reserve ? 1.0 : 0.0;
        case K::reserve_is_zero: return o.reserve_is_zero ? 1.0 : 0.0;
        case K::change_reserve_pos: return o.change_reserve_pos ? 1.0 : 0.0;
        case K::increase_reserve: return o.increase_reserve;
        case K::pct_decrease_reserve: return o.pct_decrease_reserve;
    }
    return 0.0;
}

void set_outcome(LayerKind kind, YearOutcomes& o, double v) {
    using K = LayerKind;
    switch (kind) {
        case K::settlement: o.settlement = v > 0.5; break;
        case K::payment: o.payment = v > 0.5; break;
        case K::increase_paid: o.increase_paid = v; break;
        case K::initial_reserve: o.initial_reserve = v; break;
        case K::excess_incurred: o.excess_incurred = v; break;
        case K::pct_paid: o.pct_paid = v; break;
        case K::change_reserve: o.change_reserve = v > 0.5; break;
        case K::reserve_is_zero: o.reserve_is_zero = v > 0.5; break;
        case K::change_reserve_pos: o.change_reserve_pos = v > 0.5; break;
        case K::increase_reserve: o.increase_reserve = v; break;
        case K::pct_decrease_reserve: o.pct_decrease_reserve = v; break;
    }
}

namespace {

// Recomputes the derived quantities after a layer outcome is set.
void refresh_derived(const ClaimState& prior, YearOutcomes& o) {
    const double amount = o.payment ? o.increase_paid : 0.0;
    o.reserve_after_payment = std::max(0.0, prior.reserve - amount);
    if (o.change_reserve && !(o.reserve_after_payment > 0.0)) {
        // A zero reserve can only move up.
        o.reserve_is_zero = false;
        o.change_reserve_pos = true;
    }
}

}  // namespace

ClaimState initial_state(const YearOutcomes& o, DatasetMode mode, double priority, int reporting_delay,
                         std::vector<double> covariates) {
    ClaimState s;
    s.dev_year = 1;
    s.reporting_delay = reporting_delay;
    s.covariates = std::move(covariates);
    if (mode == DatasetMode::insurance) {
        s.paid = o.payment ? o.increase_paid : 0.0;
        s.settled = o.settlement;
        s.reserve = o.settlement ? 0.0 : std::max(0.0, o.initial_reserve);
    } else {
        const double incurred = priority + o.excess_incurred;
        s.paid = o.payment ? incurred * o.pct_paid : 0.0;
        s.reserve = std::max(0.0, incurred - s.paid);
        s.settled = false;
    }
    s.incurred = s.paid + s.reserve;
    s.prev_payment = s.paid;
    s.prev_payment_flag = o.payment;
    return s;
}

ClaimState transition(const ClaimState& s, const YearOutcomes& o, DatasetMode /*mode*/) {
    if (s.settled) throw DomainError("transition: claim already settled");
    ClaimState n = s;
    const double amount = o.payment ? std::max(0.0, o.increase_paid) : 0.0;
    n.paid = s.paid + amount;
    const double rap = std::max(0.0, s.reserve - amount);
    if (o.settlement) {
        n.reserve = 0.0;
        n.settled = true;
    } else if (!o.change_reserve) {
        n.reserve = rap;
    } else if (o.reserve_is_zero) {
        n.reserve = 0.0;
    } else if (o.change_reserve_pos || !(rap > 0.0)) {
        n.reserve = rap + std::max(0.0, o.increase_reserve);
    } else {
        n.reserve = std::max(0.0, rap * (1.0 - o.pct_decrease_reserve));
    }
    n.incurred = n.paid + n.reserve;
    n.dev_year = s.dev_year + 1;
    n.prev_payment = amount;
    n.prev_payment_flag = o.payment;
    return n;
}

YearOutcomes observed_initial_outcomes(const ClaimSnapshot& s, DatasetMode mode, double priority) {
    YearOutcomes o;
    o.payment = s.payment_flag && s.payment_amount > 0.0;
    o.increase_paid = o.payment ? s.payment_amount : 0.0;
    if (mode == DatasetMode::insurance) {
        o.settlement = s.settlement;
        o.initial_reserve = s.settlement ? 0.0 : s.reserve;
    } else {
        o.excess_incurred = s.incurred - priority;
        o.pct_paid = (o.payment && s.incurred > 0.0) ? clamp_percent(s.payment_amount / s.incurred) : 0.0;
    }
    return o;
}

YearOutcomes observed_update_outcomes(const ClaimState& prior, const ClaimSnapshot& s, DatasetMode mode) {
    YearOutcomes o;
    o.settlement = s.settlement;
    o.payment = s.payment_flag && s.payment_amount > 0.0;
    o.increase_paid = o.payment ? s.payment_amount : 0.0;
    refresh_derived(prior, o);
    if (o.settlement) return o;
    const double rap = o.reserve_after_payment;
    const double R = std::max(0.0, s.reserve);
    const double eps = 1e-9 * std::max(1.0, rap);
    o.change_reserve = std::abs(R - rap) > eps;
    if (!o.change_reserve) return o;
    if (!(rap > 0.0)) {
        o.change_reserve_pos = true;
        o.increase_reserve = R;
        return o;
    }
    if (mode == DatasetMode::reinsurance && R <= eps) {
        o.reserve_is_zero = true;
        return o;
    }
    o.change_reserve_pos = R > rap;
    if (o.change_reserve_pos)
        o.increase_reserve = R - rap;
    else
        o.pct_decrease_reserve = clamp_percent(1.0 - R / rap);
    return o;
}

ClaimState state_from_history(const ClaimRecord& c, std::size_t n) {
    if (n == 0 || n > c.snapshots.size()) throw DomainError("state_from_history: bad year count for " + c.claim_id);
    ClaimState s;
    num::CompensatedSum paid;
    for (std::size_t k = 0; k < n; ++k) paid.add(c.snapshots[k].payment_amount);
    const ClaimSnapshot& last = c.snapshots[n - 1];
    s.paid = paid.value();
    s.reserve = last.settlement ? 0.0 : std::max(0.0, last.reserve);
    s.incurred = s.paid + s.reserve;
    s.settled = last.settlement;
    s.dev_year = last.dev_year;
    s.prev_payment = last.payment_amount;
    s.prev_payment_flag = last.payment_flag && last.payment_amount > 0.0;
    s.reporting_delay = c.reporting_delay;
    s.covariates = c.covariates;
    return s;
}

// ---------------------------------------------------------------- features

LayerFeatures::LayerFeatures(const LayerSpec& spec, const CovariateSchema& schema) {
    for (const std::string& name : spec.covariates) {
        const int pi = schema.index(name);
        Ref r;
        FeatureInfo fi;
        fi.name = name;
        if (pi >= 0) {
            r.policy = static_cast<std::size_t>(pi);
            const auto& cov = schema.covariates[r.policy];
            if (cov.kind == CovariateKind::categorical) {
                fi.kind = FeatureKind::categorical;
                fi.levels = cov.levels;
            }
        } else {
            r.term = term_index(name);
            if (r.term < 0) throw ConfigError(spec.name() + ": unknown covariate '" + name + "'");
        }
        refs_.push_back(r);
        info_.push_back(std::move(fi));
    }
}

void LayerFeatures::fill(const ClaimState& p, const YearOutcomes& o, double* out) const {
    for (std::size_t k = 0; k < refs_.size(); ++k) {
        const Ref& r = refs_[k];
        double v = 0.0;
        switch (r.term) {
            case -1: v = r.policy < p.covariates.size() ? p.covariates[r.policy] : kUnknownLevel; break;
            case t_reporting_delay: v = p.reporting_delay; break;
            case t_dev_year: v = p.dev_year + 1; break;
            case t_log_paid: v = std::log1p(p.paid); break;
            case t_log_reserve: v = std::log1p(p.reserve); break;
            case t_log_incurred: v = std::log1p(p.incurred); break;
            case t_ratio_paid_incurred: v = p.incurred > 0.0 ? p.paid / p.incurred : 0.0; break;
            case t_prev_payment_flag: v = p.prev_payment_flag ? 1.0 : 0.0; break;
            case t_log_prev_payment: v = std::log1p(p.prev_payment); break;
            case t_cur_settlement: v = o.settlement ? 1.0 : 0.0; break;
            case t_cur_payment: v = o.payment ? 1.0 : 0.0; break;
            case t_cur_change_reserve: v = o.change_reserve ? 1.0 : 0.0; break;
            case t_log_increase_paid: v = std::log1p(o.payment ? o.increase_paid : 0.0); break;
            case t_log_excess_incurred: v = std::log1p(std::max(0.0, o.excess_incurred)); break;
            case t_log_reserve_after_payment: v = std::log1p(o.reserve_after_payment); break;
            default: break;
        }
        out[k] = v;
    }
}

// ---------------------------------------------------------------- training tables

namespace {

// Whether a recorded outcome lies inside the layer family's support.
bool usable(const FamilySpec& f, double y) {
    switch (f.family) {
        case Family::binary: return y == 0.0 || y == 1.0;
        case Family::gamma: return y > 0.0 && std::isfinite(y);
        case Family::logit_gaussian: return y > 0.0 && y < 1.0;
        case Family::power_trunc_gaussian: return y >= f.truncation && y > 0.0 && std::isfinite(y);
    }
    return false;
}

// Visits every (layer, row) of a claim in chronological order.
template <typename Visit>
void visit_claim(const ClaimRecord& c, const DevelopmentConfig& cfg, Visit&& visit) {
    if (c.snapshots.empty()) return;
    ClaimState prior;
    prior.dev_year = 0;
    prior.reporting_delay = c.reporting_delay;
    prior.covariates = c.covariates;
    const YearOutcomes o0 = observed_initial_outcomes(c.snapshots[0], cfg.mode, cfg.priority);
    for (std::size_t k = 0; k < cfg.initial.size(); ++k)
        if (layer_applies(cfg.initial[k].kind, Phase::initial, cfg.mode, prior, o0))
            visit(Phase::initial, k, prior, o0, 1);
    for (std::size_t j = 1; j < c.snapshots.size(); ++j) {
        const ClaimState s = state_from_history(c, j);
        if (s.settled) break;
        const YearOutcomes o = observed_update_outcomes(s, c.snapshots[j], cfg.mode);
        for (std::size_t k = 0; k < cfg.update.size(); ++k)
            if (layer_applies(cfg.update[k].kind, Phase::update, cfg.mode, s, o))
                visit(Phase::update, k, s, o, static_cast<int>(j) + 1);
    }
}

}  // namespace

TrainingTables assemble_training_records(const std::vector<ClaimRecord>& claims, const DevelopmentConfig& cfg,
                                         const CovariateSchema& schema) {
    cfg.validate(schema);
    TrainingTables t;
    std::vector<LayerFeatures> fi, fu;
    for (const auto& l : cfg.initial) fi.emplace_back(l, schema);
    for (const auto& l : cfg.update) fu.emplace_back(l, schema);
    t.initial.resize(cfg.initial.size());
    t.update.resize(cfg.update.size());
    for (std::size_t k = 0; k < fi.size(); ++k) t.initial[k].X.features = fi[k].info();
    for (std::size_t k = 0; k < fu.size(); ++k) t.update[k].X.features = fu[k].info();

    std::vector<double> row;
    for (const ClaimRecord& c : claims) {
        visit_claim(c, cfg, [&](Phase ph, std::size_t k, const ClaimState& prior, const YearOutcomes& o, int dev) {
            const LayerSpec& spec = ph == Phase::initial ? cfg.initial[k] : cfg.update[k];
            LayerTable& tab = ph == Phase::initial ? t.initial[k] : t.update[k];
            const double y = outcome_value(spec.kind, o);
            if (!usable(spec.family, y)) {
                ++t.dropped[spec.name()];
                return;
            }
            const auto& lf = ph == Phase::initial ? fi[k] : fu[k];
            row.assign(lf.info().size(), 0.0);
            lf.fill(prior, o, row.data());
            tab.X.add_row(row);
            tab.y.push_back(y);
            tab.claim_ids.push_back(c.claim_id);
            tab.dev_years.push_back(dev);
        });
    }
    for (const auto& [name, n] : t.dropped)
        t.warnings.push_back(name + ": " + std::to_string(n) + " rows outside the family support dropped");
    return t;
}

// ---------------------------------------------------------------- model

const LayerFeatures& HierarchicalModel::features(Phase p, std::size_t k) const {
    return p == Phase::initial ? initial_features_.at(k) : update_features_.at(k);
}

void HierarchicalModel::rebuild_features() {
    initial_features_.clear();
    update_features_.clear();
    for (const auto& l : config.initial) initial_features_.emplace_back(l, schema);
    for (const auto& l : config.update) update_features_.emplace_back(l, schema);
}

nlohmann::json HierarchicalModel::to_json() const {
    nlohmann::json ini = nlohmann::json::array(), upd = nlohmann::json::array();
    for (const auto& m : initial) ini.push_back(m.to_json());
    for (const auto& m : update) upd.push_back(m.to_json());
    return {{"format", "odm-development"}, {"version", 1},       {"config", config.to_json()},
            {"schema", schema.to_json()},   {"initial", ini},     {"update", upd},
            {"warnings", warnings}};
}

HierarchicalModel HierarchicalModel::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "odm-development" || j.value("version", 0) != 1)
        throw SchemaError("development bundle: unsupported format or version");
    HierarchicalModel m;
    m.config = DevelopmentConfig::from_json(j.at("config"));
    m.schema = CovariateSchema::from_json(j.at("schema"));
    for (const auto& l : j.at("initial")) m.initial.push_back(LayerModel::from_json(l));
    for (const auto& l : j.at("update")) m.update.push_back(LayerModel::from_json(l));
    m.warnings = j.value("warnings", std::vector<std::string>{});
    if (m.initial.size() != m.config.initial.size() || m.update.size() != m.config.update.size())
        throw SchemaError("development bundle: layer count does not match its config");
    m.config.validate(m.schema);
    m.rebuild_features();
    return m;
}

HierarchicalModel fit_hierarchical(const TrainingTables& tables, const DevelopmentConfig& cfg,
                                   const CovariateSchema& schema, const DevelopmentFitOptions& opt) {
    cfg.validate(schema);
    if (tables.initial.size() != cfg.initial.size() || tables.update.size() != cfg.update.size())
        throw DomainError("fit_hierarchical: tables do not match the layer config");
    HierarchicalModel m;
    m.config = cfg;
    m.schema = schema;
    m.initial.resize(cfg.initial.size());
    m.update.resize(cfg.update.size());
    const std::size_t ni = cfg.initial.size();
    parallel_for(ni + cfg.update.size(), [&](std::size_t task) {
        const bool ini = task < ni;
        const std::size_t k = ini ? task : task - ni;
        const LayerSpec& spec = ini ? cfg.initial[k] : cfg.update[k];
        const LayerTable& tab = ini ? tables.initial[k] : tables.update[k];
        LayerFitOptions o;
        o.learner = opt.learner;
        auto g = opt.layer_grids.find(spec.name());
        o.grid = g != opt.layer_grids.end() ? g->second : opt.grid;
        o.cv_folds = opt.cv_folds;
        o.seed = Rng::stream(opt.seed, {ini ? 0ULL : 1ULL, static_cast<std::uint64_t>(k)})();
        std::vector<std::string> notes;
        if (tab.y.size() < opt.min_rows) {
            o.learner = Learner::constant;
            notes.push_back(spec.name() + ": " + std::to_string(tab.y.size()) + " rows below the minimum of " +
                            std::to_string(opt.min_rows) + ", constant model used");
        }
        LayerModel lm = fit_layer(spec.family, tab.X, tab.y, {}, o);
        lm.warnings.insert(lm.warnings.begin(), notes.begin(), notes.end());
        (ini ? m.initial[k] : m.update[k]) = std::move(lm);
    });
    for (const auto* v : {&m.initial, &m.update})
        for (std::size_t k = 0; k < v->size(); ++k)
            for (const auto& w : (*v)[k].warnings)
                m.warnings.push_back((v == &m.initial ? cfg.initial[k].name() : cfg.update[k].name()) + ": " + w);
    m.rebuild_features();
    return m;
}

LoglikBreakdown layer_loglik(const HierarchicalModel& m, const TrainingTables& tables) {
    LoglikBreakdown b;
    num::CompensatedSum total;
    for (Phase ph : {Phase::initial, Phase::update}) {
        const auto& tabs = ph == Phase::initial ? tables.initial : tables.update;
        const auto& models = ph == Phase::initial ? m.initial : m.update;
        const auto& specs = ph == Phase::initial ? m.config.initial : m.config.update;
        for (std::size_t k = 0; k < tabs.size(); ++k) {
            num::CompensatedSum s;
            for (std::size_t i = 0; i < tabs[k].y.size(); ++i) s.add(models[k].log_density(tabs[k].X.row(i), tabs[k].y[i]));
            b.per_layer[specs[k].name()] = s.value();
            total.add(s.value());
        }
    }
    b.total = total.value();
    return b;
}

double joint_loglik(const HierarchicalModel& m, const std::vector<ClaimRecord>& claims) {
    num::CompensatedSum total;
    std::vector<double> row;
    for (const ClaimRecord& c : claims) {
        visit_claim(c, m.config, [&](Phase ph, std::size_t k, const ClaimState& prior, const YearOutcomes& o, int) {
            const LayerSpec& spec = ph == Phase::initial ? m.config.initial[k] : m.config.update[k];
            const double y = outcome_value(spec.kind, o);
            if (!usable(spec.family, y)) return;
            const auto& lf = m.features(ph, k);
            row.assign(lf.info().size(), 0.0);
            lf.fill(prior, o, row.data());
            const LayerModel& lm = ph == Phase::initial ? m.initial[k] : m.update[k];
            total.add(lm.log_density(row.data(), y));
        });
    }
    return total.value();
}

// ---------------------------------------------------------------- simulation

namespace {

void sample_phase(const HierarchicalModel& m, Phase ph, const ClaimState& prior, YearOutcomes& o, Rng& rng) {
    const auto& specs = ph == Phase::initial ? m.config.initial : m.config.update;
    const auto& models = ph == Phase::initial ? m.initial : m.update;
    double row[64];
    std::vector<double> big;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (!layer_applies(specs[k].kind, ph, m.config.mode, prior, o)) continue;
        const auto& lf = m.features(ph, k);
        double* r = row;
        if (lf.info().size() > 64) {
            big.resize(lf.info().size());
            r = big.data();
        }
        lf.fill(prior, o, r);
        double v = models[k].sample(r, rng);
        if (models[k].family.family == Family::logit_gaussian) v = clamp_percent(v);
        set_outcome(specs[k].kind, o, v);
        if (ph == Phase::update) refresh_derived(prior, o);
    }
}

}  // namespace

ClaimState simulate_initial_year(const HierarchicalModel& m, int reporting_delay, const std::vector<double>& covariates,
                                 Rng& rng, YearOutcomes* out) {
    ClaimState prior;
    prior.dev_year = 0;
    prior.reporting_delay = reporting_delay;
    prior.covariates = covariates;
    YearOutcomes o;
    sample_phase(m, Phase::initial, prior, o, rng);
    if (out) *out = o;
    return initial_state(o, m.config.mode, m.config.priority, reporting_delay, covariates);
}

ClaimState simulate_update_year(const HierarchicalModel& m, const ClaimState& s, Rng& rng, YearOutcomes* out) {
    YearOutcomes o;
    refresh_derived(s, o);
    sample_phase(m, Phase::update, s, o, rng);
    if (out) *out = o;
    return transition(s, o, m.config.mode);
}

}  // namespace odm
