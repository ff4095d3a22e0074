#include "odm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "odm/csv.hpp"
#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"
#include "odm/rng.hpp"

namespace odm {

// ---------------------------------------------------------------- serialization

nlohmann::json LinearTruth::to_json() const { return {{"intercept", intercept}, {"coefficients", coefficients}}; }

LinearTruth LinearTruth::from_json(const nlohmann::json& j) {
    LinearTruth t;
    t.intercept = j.value("intercept", 0.0);
    t.coefficients = j.value("coefficients", std::map<std::string, double>{});
    return t;
}

nlohmann::json CovariateGenerator::to_json() const {
    nlohmann::json j{{"name", name}, {"kind", kind == CovariateKind::numeric ? "numeric" : "categorical"}};
    if (kind == CovariateKind::categorical) {
        j["levels"] = levels;
        j["probabilities"] = probabilities;
    } else {
        j["mean"] = mean;
        j["sd"] = sd;
    }
    return j;
}

CovariateGenerator CovariateGenerator::from_json(const nlohmann::json& j) {
    CovariateGenerator g;
    g.name = j.at("name").get<std::string>();
    const std::string kind = j.value("kind", "categorical");
    if (kind != "numeric" && kind != "categorical") throw ConfigError("covariate kind must be numeric or categorical");
    g.kind = kind == "numeric" ? CovariateKind::numeric : CovariateKind::categorical;
    g.levels = j.value("levels", std::vector<std::string>{});
    g.probabilities = j.value("probabilities", std::vector<double>{});
    g.mean = j.value("mean", 0.0);
    g.sd = j.value("sd", 1.0);
    return g;
}

nlohmann::json TruthLayer::to_json() const {
    return {{"layer", to_string(kind)}, {"family", family.to_json()}, {"eta", eta.to_json()}};
}

TruthLayer TruthLayer::from_json(const nlohmann::json& j, DatasetMode, Phase, std::size_t) {
    TruthLayer l;
    l.kind = layer_kind_from_string(j.at("layer").get<std::string>());
    l.family = FamilySpec::from_json(j.at("family"));
    l.eta = LinearTruth::from_json(j.at("eta"));
    return l;
}

CovariateSchema TruthSpec::schema() const {
    CovariateSchema s;
    for (const auto& g : covariates) s.add(g.name, g.kind, g.kind == CovariateKind::categorical ? g.levels : std::vector<std::string>{});
    return s;
}

nlohmann::json TruthSpec::to_json() const {
    nlohmann::json covs = nlohmann::json::array(), hz = nlohmann::json::array(), ini = nlohmann::json::array(),
                   upd = nlohmann::json::array();
    for (const auto& c : covariates) covs.push_back(c.to_json());
    for (const auto& h : hazards) hz.push_back(h.to_json());
    for (const auto& l : initial) ini.push_back(l.to_json());
    for (const auto& l : update) upd.push_back(l.to_json());
    return {{"mode", to_string(mode)},
            {"max_delay", max_delay},
            {"first_year", first_year},
            {"n_years", n_years},
            {"evaluation_year", evaluation_year},
            {"n_policies", n_policies},
            {"exposure_low", exposure_low},
            {"exposure_high", exposure_high},
            {"covariates", covs},
            {"occurrence", occurrence.to_json()},
            {"link", to_string(link)},
            {"hazards", hz},
            {"priority", priority},
            {"min_amount", min_amount},
            {"initial", ini},
            {"update", upd},
            {"horizon_years", horizon_years},
            {"seed", seed}};
}

TruthSpec TruthSpec::from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "mode",       "max_delay", "first_year", "n_years",  "evaluation_year", "n_policies",
        "exposure_low", "exposure_high", "covariates", "occurrence", "link", "hazards",
        "priority",   "min_amount", "initial",   "update",     "horizon_years", "seed"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("truth: unknown key '" + k + "'");
    TruthSpec s;
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.max_delay = j.value("max_delay", s.max_delay);
    s.first_year = j.value("first_year", s.first_year);
    s.n_years = j.value("n_years", s.n_years);
    s.evaluation_year = j.value("evaluation_year", s.evaluation_year);
    s.n_policies = j.value("n_policies", s.n_policies);
    s.exposure_low = j.value("exposure_low", s.exposure_low);
    s.exposure_high = j.value("exposure_high", s.exposure_high);
    for (const auto& c : j.value("covariates", nlohmann::json::array())) s.covariates.push_back(CovariateGenerator::from_json(c));
    s.occurrence = LinearTruth::from_json(j.at("occurrence"));
    s.link = hazard_link_from_string(j.value("link", std::string("logit")));
    for (const auto& h : j.value("hazards", nlohmann::json::array())) s.hazards.push_back(LinearTruth::from_json(h));
    s.priority = j.value("priority", s.priority);
    s.min_amount = j.value("min_amount", s.min_amount);
    std::size_t k = 0;
    for (const auto& l : j.at("initial")) s.initial.push_back(TruthLayer::from_json(l, s.mode, Phase::initial, k++));
    k = 0;
    for (const auto& l : j.at("update")) s.update.push_back(TruthLayer::from_json(l, s.mode, Phase::update, k++));
    s.horizon_years = j.value("horizon_years", s.horizon_years);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

// ---------------------------------------------------------------- presets

namespace {

TruthLayer layer(LayerKind k, FamilySpec f, double intercept, std::map<std::string, double> coefs = {}) {
    f.power_fixed = f.family == Family::power_trunc_gaussian;
    return {k, f, {intercept, std::move(coefs)}};
}

FamilySpec binary() { return FamilySpec{}; }

FamilySpec gamma_family(double shape) {
    FamilySpec f;
    f.family = Family::gamma;
    f.shape = shape;
    return f;
}

FamilySpec pct_family(double sigma) {
    FamilySpec f;
    f.family = Family::logit_gaussian;
    f.sigma = sigma;
    return f;
}

FamilySpec power_family(double p, double T, double sigma) {
    FamilySpec f;
    f.family = Family::power_trunc_gaussian;
    f.power = p;
    f.truncation = T;
    f.sigma = sigma;
    return f;
}

}  // namespace

TruthSpec TruthSpec::insurance_preset() {
    using K = LayerKind;
    TruthSpec s;
    s.mode = DatasetMode::insurance;
    s.max_delay = 3;
    s.first_year = 2010;
    s.n_years = 10;
    s.evaluation_year = 2019;
    s.n_policies = 5000;
    s.exposure_low = 0.5;
    s.exposure_high = 1.0;
    s.covariates = {{"region", CovariateKind::categorical, {"north", "south", "east"}, {0.5, 0.3, 0.2}},
                    {"fleet", CovariateKind::categorical, {"no", "yes"}, {0.8, 0.2}}};
    s.occurrence = {std::log(0.13), {{"region=south", 0.2}, {"region=east", -0.3}, {"fleet=yes", 0.25}}};
    s.link = HazardLink::logit;
    s.hazards = {{-2.2, {{"fleet=yes", 0.3}}}, {-3.0, {}}};
    s.initial = {layer(K::settlement, binary(), -1.0, {{"region=east", 0.3}}),
                 layer(K::payment, binary(), 0.0, {{"cur_settlement", 1.5}}),
                 layer(K::increase_paid, gamma_family(0.9), std::log(800.0), {{"cur_settlement", 0.5}}),
                 layer(K::initial_reserve, gamma_family(0.8), std::log(3000.0), {{"cur_payment", -0.3}})};
    s.update = {layer(K::settlement, binary(), -0.62, {{"prev_payment_flag", 0.2}}),
                layer(K::payment, binary(), 0.0, {{"cur_settlement", 1.0}}),
                layer(K::increase_paid, gamma_family(0.9), std::log(1000.0), {{"cur_settlement", 0.3}}),
                layer(K::change_reserve, binary(), -0.5),
                layer(K::change_reserve_pos, binary(), 0.2),
                layer(K::increase_reserve, gamma_family(0.8), std::log(1500.0)),
                layer(K::pct_decrease_reserve, pct_family(0.8), -1.0)};
    s.seed = 20240101;
    return s;
}

TruthSpec TruthSpec::reinsurance_preset() {
    using K = LayerKind;
    TruthSpec s;
    s.mode = DatasetMode::reinsurance;
    s.max_delay = 5;
    s.first_year = 2000;
    s.n_years = 15;
    s.evaluation_year = 2014;
    s.n_policies = 100;
    s.exposure_low = 2.0e5;
    s.exposure_high = 3.0e5;
    s.covariates = {{"portfolio", CovariateKind::categorical, {"A", "B"}, {0.5, 0.5}}};
    s.occurrence = {std::log(2.5e-5), {{"portfolio=B", std::log(3.3 / 2.5)}}};
    s.link = HazardLink::cloglog;
    s.hazards = {{-1.6, {}}, {-1.9, {}}, {-2.3, {}}, {-2.8, {}}};
    s.priority = 750000.0;
    s.min_amount = 100.0;
    s.initial = {layer(K::excess_incurred, power_family(0.117, 100.0, 0.6), 4.8, {{"reporting_delay", -0.05}}),
                 layer(K::payment, binary(), -0.5, {{"reporting_delay", 0.2}}),
                 layer(K::pct_paid, pct_family(1.0), -1.5)};
    s.update = {layer(K::settlement, binary(), 1.2, {{"log_reserve", -0.2}}),
                layer(K::payment, binary(), -0.2, {{"cur_settlement", 2.5}}),
                layer(K::increase_paid, power_family(0.155, 100.0, 0.5), -8.6,
                      {{"log_reserve", 1.1}, {"cur_settlement", 1.9}}),
                layer(K::change_reserve, binary(), -0.3),
                layer(K::reserve_is_zero, binary(), -2.5, {{"cur_payment", 0.3}}),
                layer(K::change_reserve_pos, binary(), 0.0),
                layer(K::increase_reserve, power_family(0.105, 100.0, 0.5), 3.3),
                layer(K::pct_decrease_reserve, pct_family(0.9), -1.2)};
    s.seed = 20240202;
    return s;
}

namespace {

DevelopmentConfig truth_config(const TruthSpec& s) {
    DevelopmentConfig c;
    c.mode = s.mode;
    c.priority = s.priority;
    c.min_amount = s.min_amount;
    auto covs = [](const LinearTruth& t) {
        std::vector<std::string> out;
        for (const auto& [k, v] : t.coefficients) {
            const std::string base = k.substr(0, k.find('='));
            if (std::find(out.begin(), out.end(), base) == out.end()) out.push_back(base);
        }
        return out;
    };
    for (const auto& l : s.initial) c.initial.push_back({l.kind, Phase::initial, l.family, covs(l.eta)});
    for (const auto& l : s.update) c.update.push_back({l.kind, Phase::update, l.family, covs(l.eta)});
    return c;
}

}  // namespace

void TruthSpec::validate() const {
    if (max_delay < 1) throw ConfigError("truth: max_delay must be >= 1");
    if (static_cast<int>(hazards.size()) != max_delay - 1) throw ConfigError("truth: need max_delay - 1 hazards");
    if (n_years < 1 || first_year + n_years - 1 > evaluation_year)
        throw ConfigError("truth: occurrence years must end by the evaluation year");
    if (n_policies < 0) throw ConfigError("truth: n_policies must be >= 0");
    if (!(exposure_low >= 0.0) || !(exposure_high >= exposure_low)) throw ConfigError("truth: bad exposure range");
    if (horizon_years < 1) throw ConfigError("truth: horizon_years must be >= 1");
    for (const auto& g : covariates) {
        if (g.kind == CovariateKind::categorical &&
            (g.levels.empty() || g.levels.size() != g.probabilities.size()))
            throw ConfigError("truth: covariate '" + g.name + "' needs one probability per level");
    }
    const CovariateSchema sc = schema();
    auto check_keys = [&](const LinearTruth& t, const std::string& what) {
        for (const auto& [k, v] : t.coefficients) {
            const auto eq = k.find('=');
            const std::string base = k.substr(0, eq);
            const int i = sc.index(base);
            if (i < 0) {
                if (what == "occurrence" || what == "hazard")
                    throw ConfigError("truth " + what + ": unknown covariate '" + k + "'");
                continue;  // development terms are checked by the layer config
            }
            const auto& info = sc.covariates[static_cast<std::size_t>(i)];
            if ((info.kind == CovariateKind::categorical) != (eq != std::string::npos))
                throw ConfigError("truth " + what + ": '" + k + "' must be 'name=level' for categorical covariates only");
            if (eq != std::string::npos &&
                std::find(info.levels.begin(), info.levels.end(), k.substr(eq + 1)) == info.levels.end())
                throw ConfigError("truth " + what + ": unknown level in '" + k + "'");
        }
    };
    check_keys(occurrence, "occurrence");
    for (const auto& h : hazards) check_keys(h, "hazard");
    for (const auto& l : initial) check_keys(l.eta, "layer");
    for (const auto& l : update) check_keys(l.eta, "layer");
    truth_config(*this).validate(sc);
}

// ---------------------------------------------------------------- generator

namespace {

// Term codes of the generator's own predictor evaluation.
enum class G {
    policy_numeric,
    policy_level,
    reporting_delay,
    dev_year,
    log_paid,
    log_reserve,
    log_incurred,
    ratio,
    prev_flag,
    log_prev_payment,
    cur_settlement,
    cur_payment,
    cur_change,
    log_inc_paid,
    log_excess,
    log_rap
};

struct CompiledTerm {
    G kind;
    std::size_t index = 0;
    int level = 0;
    double coef = 0.0;
};

struct Compiled {
    double intercept = 0.0;
    std::vector<CompiledTerm> terms;
};

Compiled compile(const LinearTruth& t, const CovariateSchema& sc) {
    static const std::map<std::string, G> named{
        {"reporting_delay", G::reporting_delay}, {"dev_year", G::dev_year},
        {"log_paid", G::log_paid},               {"log_reserve", G::log_reserve},
        {"log_incurred", G::log_incurred},       {"ratio_paid_incurred", G::ratio},
        {"prev_payment_flag", G::prev_flag},     {"log_prev_payment", G::log_prev_payment},
        {"cur_settlement", G::cur_settlement},   {"cur_payment", G::cur_payment},
        {"cur_change_reserve", G::cur_change},   {"log_increase_paid", G::log_inc_paid},
        {"log_excess_incurred", G::log_excess},  {"log_reserve_after_payment", G::log_rap}};
    Compiled c;
    c.intercept = t.intercept;
    for (const auto& [k, v] : t.coefficients) {
        const auto eq = k.find('=');
        const std::string base = k.substr(0, eq);
        const int i = sc.index(base);
        CompiledTerm term;
        term.coef = v;
        if (i >= 0) {
            term.index = static_cast<std::size_t>(i);
            if (eq == std::string::npos) {
                term.kind = G::policy_numeric;
            } else {
                const auto& lv = sc.covariates[term.index].levels;
                term.kind = G::policy_level;
                term.level = static_cast<int>(std::find(lv.begin(), lv.end(), k.substr(eq + 1)) - lv.begin()) + 1;
            }
        } else {
            term.kind = named.at(base);
        }
        c.terms.push_back(term);
    }
    return c;
}

struct GenClaim {
    std::vector<double> cov;
    int delay = 0;
    // State after the last completed year.
    double paid = 0.0, reserve = 0.0;
    bool settled = false;
    int year = 0;
    double prev_payment = 0.0;
    bool prev_flag = false;
    // Current-year outcomes.
    bool c_settle = false, c_pay = false, c_change = false;
    double c_inc = 0.0, c_excess = 0.0, c_rap = 0.0;
};

double eval(const Compiled& c, const GenClaim& s) {
    double eta = c.intercept;
    for (const auto& t : c.terms) {
        double v = 0.0;
        switch (t.kind) {
            case G::policy_numeric: v = s.cov[t.index]; break;
            case G::policy_level: v = static_cast<int>(s.cov[t.index]) == t.level ? 1.0 : 0.0; break;
            case G::reporting_delay: v = s.delay; break;
            case G::dev_year: v = s.year + 1; break;
            case G::log_paid: v = std::log1p(s.paid); break;
            case G::log_reserve: v = std::log1p(s.reserve); break;
            case G::log_incurred: v = std::log1p(s.paid + s.reserve); break;
            case G::ratio: v = s.paid + s.reserve > 0.0 ? s.paid / (s.paid + s.reserve) : 0.0; break;
            case G::prev_flag: v = s.prev_flag ? 1.0 : 0.0; break;
            case G::log_prev_payment: v = std::log1p(s.prev_payment); break;
            case G::cur_settlement: v = s.c_settle ? 1.0 : 0.0; break;
            case G::cur_payment: v = s.c_pay ? 1.0 : 0.0; break;
            case G::cur_change: v = s.c_change ? 1.0 : 0.0; break;
            case G::log_inc_paid: v = std::log1p(s.c_inc); break;
            case G::log_excess: v = std::log1p(s.c_excess); break;
            case G::log_rap: v = std::log1p(s.c_rap); break;
        }
        eta += t.coef * v;
    }
    return eta;
}

double draw(const FamilySpec& f, double eta, Rng& rng) {
    switch (f.family) {
        case Family::binary: return rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
        case Family::gamma: return rng.gamma(f.shape, std::exp(eta) / f.shape);
        case Family::logit_gaussian: {
            const double z = eta + f.sigma * rng.normal();
            return std::clamp(1.0 / (1.0 + std::exp(-z)), 1e-6, 1.0 - 1e-6);
        }
        case Family::power_trunc_gaussian: {
            const double lower = std::pow(f.truncation, f.power);
            const double x = rng.truncated_normal_above(eta, f.sigma, lower);
            return std::max(std::pow(x, 1.0 / f.power), f.truncation);
        }
    }
    return 0.0;
}

struct Process {
    DatasetMode mode;
    double priority;
    int horizon;
    std::map<LayerKind, std::pair<FamilySpec, Compiled>> initial, update;

    Process(const TruthSpec& s, const CovariateSchema& sc) : mode(s.mode), priority(s.priority), horizon(s.horizon_years) {
        for (const auto& l : s.initial) initial[l.kind] = {l.family, compile(l.eta, sc)};
        for (const auto& l : s.update) update[l.kind] = {l.family, compile(l.eta, sc)};
    }

    double sample_initial(LayerKind k, const GenClaim& c, Rng& rng) const {
        const auto& [f, e] = initial.at(k);
        return draw(f, eval(e, c), rng);
    }
    double sample_update(LayerKind k, const GenClaim& c, Rng& rng) const {
        const auto& [f, e] = update.at(k);
        return draw(f, eval(e, c), rng);
    }

    // Full development; returns the yearly records.
    std::vector<ClaimSnapshot> develop(GenClaim c, Rng& rng) const {
        std::vector<ClaimSnapshot> out;
        using K = LayerKind;
        ClaimSnapshot s0;
        s0.dev_year = 1;
        if (mode == DatasetMode::insurance) {
            c.c_settle = sample_initial(K::settlement, c, rng) > 0.5;
            c.c_pay = sample_initial(K::payment, c, rng) > 0.5;
            c.c_inc = c.c_pay ? sample_initial(K::increase_paid, c, rng) : 0.0;
            c.paid = c.c_inc;
            c.reserve = c.c_settle ? 0.0 : sample_initial(K::initial_reserve, c, rng);
            c.settled = c.c_settle;
        } else {
            c.c_excess = sample_initial(K::excess_incurred, c, rng);
            const double incurred = priority + c.c_excess;
            c.c_pay = sample_initial(K::payment, c, rng) > 0.5;
            const double pct = c.c_pay ? sample_initial(K::pct_paid, c, rng) : 0.0;
            c.paid = c.c_pay ? incurred * pct : 0.0;
            c.c_inc = c.paid;
            c.reserve = incurred - c.paid;
            c.settled = false;
        }
        s0.settlement = c.settled;
        s0.payment_flag = c.c_pay;
        s0.payment_amount = c.paid;
        s0.reserve = c.reserve;
        s0.incurred = c.paid + c.reserve;
        out.push_back(s0);
        c.year = 1;
        c.prev_payment = c.paid;
        c.prev_flag = c.c_pay;

        while (!c.settled && c.year < horizon) {
            GenClaim& g = c;
            g.c_settle = g.c_pay = g.c_change = false;
            g.c_inc = g.c_rap = 0.0;
            g.c_settle = sample_update(K::settlement, g, rng) > 0.5;
            g.c_pay = sample_update(K::payment, g, rng) > 0.5;
            g.c_inc = g.c_pay ? sample_update(K::increase_paid, g, rng) : 0.0;
            g.c_rap = std::max(0.0, g.reserve - g.c_inc);
            double reserve = g.c_rap;
            if (g.c_settle) {
                reserve = 0.0;
            } else {
                g.c_change = sample_update(K::change_reserve, g, rng) > 0.5;
                if (g.c_change) {
                    bool zero = false, up = true;
                    if (g.c_rap > 0.0) {
                        if (mode == DatasetMode::reinsurance) zero = sample_update(K::reserve_is_zero, g, rng) > 0.5;
                        if (!zero) up = sample_update(K::change_reserve_pos, g, rng) > 0.5;
                    }
                    if (zero)
                        reserve = 0.0;
                    else if (up)
                        reserve = g.c_rap + sample_update(K::increase_reserve, g, rng);
                    else
                        reserve = g.c_rap * (1.0 - sample_update(K::pct_decrease_reserve, g, rng));
                }
            }
            g.paid += g.c_inc;
            g.reserve = reserve;
            g.settled = g.c_settle;
            ++g.year;
            g.prev_payment = g.c_inc;
            g.prev_flag = g.c_pay;
            ClaimSnapshot s;
            s.dev_year = g.year;
            s.settlement = g.settled;
            s.payment_flag = g.c_pay;
            s.payment_amount = g.c_inc;
            s.reserve = g.reserve;
            s.incurred = g.paid + g.reserve;
            out.push_back(s);
        }
        return out;
    }
};

double linear_eta(const LinearTruth& t, const CovariateSchema& sc, const std::vector<double>& cov) {
    GenClaim c;
    c.cov = cov;
    return eval(compile(t, sc), c);
}

std::vector<double> draw_covariates(const TruthSpec& s, Rng& rng) {
    std::vector<double> cov;
    for (const auto& g : s.covariates) {
        if (g.kind == CovariateKind::categorical)
            cov.push_back(static_cast<double>(rng.categorical(g.probabilities) + 1));
        else
            cov.push_back(rng.normal(g.mean, g.sd));
    }
    return cov;
}

}  // namespace

double truth_lambda(const TruthSpec& s, const std::vector<double>& cov) {
    return std::exp(linear_eta(s.occurrence, s.schema(), cov));
}

std::vector<double> truth_probabilities(const TruthSpec& s, const std::vector<double>& cov) {
    const CovariateSchema sc = s.schema();
    std::vector<double> q;
    for (const auto& h : s.hazards) {
        const double eta = linear_eta(h, sc, cov);
        q.push_back(s.link == HazardLink::logit ? 1.0 / (1.0 + std::exp(-eta)) : -std::expm1(-std::exp(eta)));
    }
    return q_to_p(q);
}

SynthData generate_portfolio(const TruthSpec& spec) {
    spec.validate();
    SynthData out;
    out.spec = spec;
    const CovariateSchema sc = spec.schema();
    const Process proc(spec, sc);
    struct PolicyOut {
        std::vector<PolicyRecord> records;
        std::vector<ClaimRecord> observed, full;
        std::vector<LedgerClaim> ledger;
    };
    std::vector<PolicyOut> per(static_cast<std::size_t>(spec.n_policies));
    parallel_for(per.size(), [&](std::size_t i) {
        Rng crng = Rng::stream(spec.seed, {1ULL, i});
        const std::vector<double> cov = draw_covariates(spec, crng);
        const double lambda = truth_lambda(spec, cov);
        const std::vector<double> p = truth_probabilities(spec, cov);
        char buf[32];
        std::snprintf(buf, sizeof buf, "P%06zu", i);
        const std::string pid = buf;
        PolicyOut& po = per[i];
        for (int t = 0; t < spec.n_years; ++t) {
            const int occ = spec.first_year + t;
            Rng rng = Rng::stream(spec.seed, {2ULL, i, static_cast<std::uint64_t>(t)});
            PolicyRecord rec;
            rec.policy_id = pid;
            rec.occurrence_year = occ;
            rec.exposure = spec.exposure_low == spec.exposure_high
                               ? spec.exposure_low
                               : spec.exposure_low + (spec.exposure_high - spec.exposure_low) * rng.uniform();
            rec.covariates = cov;
            const int tau_i = observed_delay_years(spec.max_delay, spec.evaluation_year, occ);
            rec.reported_counts.assign(static_cast<std::size_t>(tau_i), 0);
            const std::uint64_t n = rng.poisson(rec.exposure * lambda);
            for (std::uint64_t k = 0; k < n; ++k) {
                const int delay = static_cast<int>(rng.categorical(p));
                Rng drng = Rng::stream(spec.seed, {3ULL, i, static_cast<std::uint64_t>(t), k});
                GenClaim g;
                g.cov = cov;
                g.delay = delay;
                ClaimRecord c;
                std::snprintf(buf, sizeof buf, "-%d-%llu", occ, static_cast<unsigned long long>(k));
                c.claim_id = "C" + pid.substr(1) + buf;
                c.policy_id = pid;
                c.occurrence_year = occ;
                c.reporting_delay = delay;
                c.reporting_year = occ + delay;
                c.covariates = cov;
                c.snapshots = proc.develop(g, drng);
                c.settled = c.snapshots.back().settlement;

                LedgerClaim lc;
                lc.claim_id = c.claim_id;
                lc.policy_id = pid;
                lc.occurrence_year = occ;
                lc.reporting_year = c.reporting_year;
                lc.reported = c.reporting_year <= spec.evaluation_year;
                num::CompensatedSum paid, future;
                for (const auto& s : c.snapshots) {
                    paid.add(s.payment_amount);
                    if (c.calendar_year(s) > spec.evaluation_year) future.add(s.payment_amount);
                }
                lc.settled_by_horizon = c.settled;
                lc.ultimate = c.settled ? paid.value() : paid.value() + c.snapshots.back().reserve;
                lc.future_paid = future.value();
                po.ledger.push_back(lc);
                if (!lc.reported) continue;
                ++rec.reported_counts[static_cast<std::size_t>(delay)];
                ClaimRecord obs = c;
                obs.snapshots.clear();
                for (const auto& s : c.snapshots)
                    if (c.calendar_year(s) <= spec.evaluation_year) obs.snapshots.push_back(s);
                obs.settled = obs.snapshots.back().settlement;
                po.observed.push_back(std::move(obs));
                po.full.push_back(std::move(c));
            }
            po.records.push_back(std::move(rec));
        }
    });

    out.portfolio.schema = sc;
    out.portfolio.max_delay = spec.max_delay;
    out.portfolio.evaluation_year = spec.evaluation_year;
    TruthLedger& L = out.ledger;
    for (auto& po : per) {
        for (auto& r : po.records) out.portfolio.policies.push_back(std::move(r));
        for (auto& c : po.observed) out.claims.push_back(std::move(c));
        for (auto& c : po.full) out.full_claims.push_back(std::move(c));
        for (auto& l : po.ledger) L.claims.push_back(std::move(l));
    }
    out.portfolio.rebuild_index();
    num::CompensatedSum rbns, ibnr;
    for (const auto& l : L.claims) {
        if (l.reported) {
            rbns.add(l.future_paid);
        } else {
            ibnr.add(l.ultimate);
            ++L.unreported;
            ++L.unreported_by_delay[l.reporting_year - l.occurrence_year + 1];
        }
    }
    for (const auto& c : out.full_claims)
        for (const auto& s : c.snapshots) {
            const int cy = c.calendar_year(s);
            if (cy > spec.evaluation_year) L.rbns_paid_by_year[cy] += s.payment_amount;
        }
    L.rbns_future_paid = rbns.value();
    L.ibnr_cost = ibnr.value();
    return out;
}

std::vector<double> truth_ground_up_severities(const TruthSpec& spec, const std::vector<double>& cov, int n_paths,
                                               std::uint64_t seed) {
    const CovariateSchema sc = spec.schema();
    const Process proc(spec, sc);
    const std::vector<double> p = truth_probabilities(spec, cov);
    std::vector<double> out(static_cast<std::size_t>(std::max(0, n_paths)));
    parallel_for(out.size(), [&](std::size_t k) {
        Rng rng = Rng::stream(seed, {4ULL, k});
        GenClaim g;
        g.cov = cov;
        g.delay = static_cast<int>(rng.categorical(p));
        const auto snaps = proc.develop(g, rng);
        double paid = 0.0;
        for (const auto& s : snaps) paid += s.payment_amount;
        out[k] = snaps.back().settlement ? paid : paid + snaps.back().reserve;
    });
    return out;
}

nlohmann::json TruthLedger::to_json() const {
    nlohmann::json cl = nlohmann::json::array();
    for (const auto& c : claims)
        cl.push_back({{"claim_id", c.claim_id},
                      {"policy_id", c.policy_id},
                      {"occurrence_year", c.occurrence_year},
                      {"reporting_year", c.reporting_year},
                      {"reported", c.reported},
                      {"ultimate", c.ultimate},
                      {"future_paid", c.future_paid},
                      {"settled_by_horizon", c.settled_by_horizon}});
    nlohmann::json ud = nlohmann::json::object(), by_year = nlohmann::json::object();
    for (const auto& [j, n] : unreported_by_delay) ud[std::to_string(j)] = n;
    for (const auto& [y, v] : rbns_paid_by_year) by_year[std::to_string(y)] = v;
    return {{"unreported", unreported},
            {"unreported_by_delay", ud},
            {"rbns_future_paid", rbns_future_paid},
            {"rbns_paid_by_year", by_year},
            {"ibnr_cost", ibnr_cost},
            {"claims", cl}};
}

// ---------------------------------------------------------------- truth as models

TruthModels truth_to_models(const TruthSpec& spec) {
    spec.validate();
    const CovariateSchema sc = spec.schema();
    TruthModels tm;
    ReportingModel& r = tm.reporting;
    r.d = spec.max_delay;
    r.link = spec.link;
    r.structure = HazardStructure::per_delay;
    auto names = [](std::initializer_list<const LinearTruth*> ts) {
        std::vector<std::string> out;
        for (const auto* t : ts)
            for (const auto& [k, v] : t->coefficients) {
                const std::string base = k.substr(0, k.find('='));
                if (std::find(out.begin(), out.end(), base) == out.end()) out.push_back(base);
            }
        return out;
    };
    auto beta = [](const LinearEncoder& enc, const LinearTruth& t) {
        const auto labels = enc.labels();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
        b[0] = t.intercept;
        for (std::size_t k = 1; k < labels.size(); ++k) {
            auto it = t.coefficients.find(labels[k]);
            if (it != t.coefficients.end()) b[static_cast<Eigen::Index>(k)] = it->second;
        }
        return b;
    };
    r.occurrence_encoder = LinearEncoder(sc, names({&spec.occurrence}), true);
    r.occurrence_beta = beta(r.occurrence_encoder, spec.occurrence);
    r.occurrence_cov = Eigen::MatrixXd::Zero(r.occurrence_beta.size(), r.occurrence_beta.size());
    std::vector<std::string> hz_names;
    {
        std::vector<const LinearTruth*> hp;
        for (const auto& h : spec.hazards) hp.push_back(&h);
        for (const auto* h : hp)
            for (const auto& n : names({h}))
                if (std::find(hz_names.begin(), hz_names.end(), n) == hz_names.end()) hz_names.push_back(n);
    }
    r.hazard_encoder = LinearEncoder(sc, hz_names, true);
    for (const auto& h : spec.hazards) r.hazard_beta.push_back(beta(r.hazard_encoder, h));

    HierarchicalModel& m = tm.development;
    m.config = truth_config(spec);
    m.schema = sc;
    m.rebuild_features();
    for (Phase ph : {Phase::initial, Phase::update}) {
        const auto& layers = ph == Phase::initial ? spec.initial : spec.update;
        auto& models = ph == Phase::initial ? m.initial : m.update;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            LayerModel lm;
            lm.family = layers[k].family;
            lm.learner = Learner::glm;
            lm.linear = LinearPredictor::from_coefficients(m.features(ph, k).info(), layers[k].eta.intercept,
                                                           layers[k].eta.coefficients);
            models.push_back(std::move(lm));
        }
    }
    return tm;
}

// ---------------------------------------------------------------- oracle

nlohmann::json OracleReport::to_json() const {
    return {{"parameter_errors", parameter_errors},
            {"max_abs_parameter_error", max_abs_parameter_error},
            {"coverage_hits", coverage_hits},
            {"coverage_total", coverage_total},
            {"coverage_rate", coverage_rate},
            {"premium_relative_bias", premium_relative_bias}};
}

OracleReport oracle_report(const std::map<std::string, double>& truth, const std::map<std::string, double>& fitted,
                           const std::vector<IntervalPrediction>& intervals,
                           const std::map<std::string, double>& realized, double premium_estimate,
                           double premium_truth) {
    if (fitted.empty() && intervals.empty() && premium_truth == 0.0)
        throw DomainError("oracle report: no predictions to compare");
    OracleReport rep;
    for (const auto& [k, v] : fitted) {
        auto it = truth.find(k);
        if (it == truth.end()) throw DomainError("oracle report: parameter '" + k + "' has no true value");
        const double e = v - it->second;
        rep.parameter_errors[k] = e;
        rep.max_abs_parameter_error = std::max(rep.max_abs_parameter_error, std::abs(e));
    }
    for (const auto& iv : intervals) {
        auto it = realized.find(iv.id);
        if (it == realized.end()) throw DomainError("oracle report: no realized value for '" + iv.id + "'");
        ++rep.coverage_total;
        if (it->second >= iv.lower && it->second <= iv.upper) ++rep.coverage_hits;
    }
    if (rep.coverage_total > 0)
        rep.coverage_rate = static_cast<double>(rep.coverage_hits) / static_cast<double>(rep.coverage_total);
    if (premium_truth != 0.0) rep.premium_relative_bias = premium_estimate / premium_truth - 1.0;
    return rep;
}

// ---------------------------------------------------------------- files

void write_synth_files(const SynthData& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const CovariateSchema& sc = data.portfolio.schema;
    {
        std::ofstream f(dir + "/policies.csv");
        if (!f) throw Error("cannot write " + dir + "/policies.csv");
        CsvWriter w(f);
        std::vector<std::string> head{"policy_id", "occurrence_year", "exposure"};
        for (const auto& c : sc.covariates) head.push_back(c.name);
        for (int j = 1; j <= data.portfolio.max_delay; ++j) head.push_back("count_" + std::to_string(j));
        w.row(head);
        for (const auto& p : data.portfolio.policies) {
            std::vector<std::string> r{p.policy_id, std::to_string(p.occurrence_year), num::format_double(p.exposure)};
            for (std::size_t k = 0; k < sc.size(); ++k)
                r.push_back(sc.covariates[k].kind == CovariateKind::categorical ? sc.decode(k, p.covariates[k])
                                                                                 : num::format_double(p.covariates[k]));
            for (int j = 0; j < data.portfolio.max_delay; ++j)
                r.push_back(j < p.observed_years() ? std::to_string(p.reported_counts[static_cast<std::size_t>(j)]) : "");
            w.row(r);
        }
    }
    {
        std::ofstream f(dir + "/claims.csv");
        if (!f) throw Error("cannot write " + dir + "/claims.csv");
        CsvWriter w(f);
        w.row({"claim_id", "policy_id", "occurrence_year", "reporting_year", "dev_year", "settlement", "payment",
               "reserve", "incurred"});
        for (const auto& c : data.claims)
            for (const auto& s : c.snapshots)
                w.row({c.claim_id, c.policy_id, std::to_string(c.occurrence_year), std::to_string(c.reporting_year),
                       std::to_string(s.dev_year), s.settlement ? "1" : "0", num::format_double(s.payment_amount),
                       num::format_double(s.reserve), num::format_double(s.incurred)});
    }
    {
        std::ofstream f(dir + "/truth.json");
        if (!f) throw Error("cannot write " + dir + "/truth.json");
        f << nlohmann::json{{"spec", data.spec.to_json()}, {"ledger", data.ledger.to_json()}}.dump(1) << '\n';
    }
}

}  // namespace odm
