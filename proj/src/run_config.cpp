#include "odm/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "odm/error.hpp"
#include "odm/numeric.hpp"

namespace odm {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
}

template <class T>
T field(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + where + "." + key + "' has the wrong type");
    }
}

// Nested parsers report the field path on their own errors.
template <class F>
auto section(const std::string& where, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (in '" + where + "')");
    } catch (const Error& e) {
        throw ConfigError("config: " + where + ": " + e.what());
    } catch (const json::exception& e) {
        throw ConfigError("config: " + where + ": " + e.what());
    }
}

double limit_from(const json& j, const std::string& where) {
    if (!j.contains("limit") || j.at("limit").is_null()) return std::numeric_limits<double>::infinity();
    if (j.at("limit").is_string() && j.at("limit").get<std::string>() == "inf")
        return std::numeric_limits<double>::infinity();
    return field<double>(j, "limit", 0.0, where);
}

CovariateKind kind_from(const std::string& s, const std::string& where) {
    if (s == "numeric") return CovariateKind::numeric;
    if (s == "categorical") return CovariateKind::categorical;
    throw ConfigError("config: '" + where + "' kind must be numeric or categorical");
}

DataConfig parse_data(const json& j) {
    check_keys(j, {"policies", "claims", "max_delay", "evaluation_year", "delimiter", "covariates", "policy_columns",
                   "claim_columns", "min_change", "drop_negative", "inflation"},
               "data");
    DataConfig d;
    d.policies = field<std::string>(j, "policies", "", "data");
    d.claims = field<std::string>(j, "claims", "", "data");
    d.max_delay = field<int>(j, "max_delay", d.max_delay, "data");
    d.evaluation_year = field<int>(j, "evaluation_year", 0, "data");
    const std::string delim = field<std::string>(j, "delimiter", ",", "data");
    if (delim.size() != 1) throw ConfigError("config: 'data.delimiter' must be one character");
    d.delimiter = delim[0];
    for (const auto& c : j.value("covariates", json::array())) {
        check_keys(c, {"name", "kind"}, "data.covariates");
        d.policy_columns.covariates.emplace_back(field<std::string>(c, "name", "", "data.covariates"),
                                                 kind_from(field<std::string>(c, "kind", "categorical",
                                                                              "data.covariates"),
                                                           "data.covariates"));
    }
    if (j.contains("policy_columns")) {
        const json& p = j.at("policy_columns");
        check_keys(p, {"policy_id", "occurrence_year", "exposure", "period_start", "period_end", "count_prefix"},
                   "data.policy_columns");
        auto& pc = d.policy_columns;
        pc.policy_id = field(p, "policy_id", pc.policy_id, "data.policy_columns");
        pc.occurrence_year = field(p, "occurrence_year", pc.occurrence_year, "data.policy_columns");
        pc.exposure = field(p, "exposure", pc.exposure, "data.policy_columns");
        pc.period_start = field(p, "period_start", pc.period_start, "data.policy_columns");
        pc.period_end = field(p, "period_end", pc.period_end, "data.policy_columns");
        pc.count_prefix = field(p, "count_prefix", pc.count_prefix, "data.policy_columns");
    }
    if (j.contains("claim_columns")) {
        const json& c = j.at("claim_columns");
        check_keys(c, {"claim_id", "policy_id", "occurrence_year", "reporting_year", "dev_year", "settlement",
                       "payment", "reserve", "incurred"},
                   "data.claim_columns");
        auto& cc = d.claim_columns;
        const std::string w = "data.claim_columns";
        cc.claim_id = field(c, "claim_id", cc.claim_id, w);
        cc.policy_id = field(c, "policy_id", cc.policy_id, w);
        cc.occurrence_year = field(c, "occurrence_year", cc.occurrence_year, w);
        cc.reporting_year = field(c, "reporting_year", cc.reporting_year, w);
        cc.dev_year = field(c, "dev_year", cc.dev_year, w);
        cc.settlement = field(c, "settlement", cc.settlement, w);
        cc.payment = field(c, "payment", cc.payment, w);
        cc.reserve = field(c, "reserve", cc.reserve, w);
        cc.incurred = field(c, "incurred", cc.incurred, w);
    }
    d.min_change = field<double>(j, "min_change", d.min_change, "data");
    d.drop_negative = field<bool>(j, "drop_negative", d.drop_negative, "data");
    if (j.contains("inflation")) d.inflation = section("data.inflation", [&] { return InflationCurve::from_json(j.at("inflation")); });
    return d;
}

json data_json(const DataConfig& d) {
    json covs = json::array();
    for (const auto& [n, k] : d.policy_columns.covariates)
        covs.push_back({{"name", n}, {"kind", k == CovariateKind::numeric ? "numeric" : "categorical"}});
    const auto& pc = d.policy_columns;
    const auto& cc = d.claim_columns;
    json j{{"policies", d.policies},
           {"claims", d.claims},
           {"max_delay", d.max_delay},
           {"evaluation_year", d.evaluation_year},
           {"delimiter", std::string(1, d.delimiter)},
           {"covariates", covs},
           {"policy_columns",
            {{"policy_id", pc.policy_id},
             {"occurrence_year", pc.occurrence_year},
             {"exposure", pc.exposure},
             {"period_start", pc.period_start},
             {"period_end", pc.period_end},
             {"count_prefix", pc.count_prefix}}},
           {"claim_columns",
            {{"claim_id", cc.claim_id},
             {"policy_id", cc.policy_id},
             {"occurrence_year", cc.occurrence_year},
             {"reporting_year", cc.reporting_year},
             {"dev_year", cc.dev_year},
             {"settlement", cc.settlement},
             {"payment", cc.payment},
             {"reserve", cc.reserve},
             {"incurred", cc.incurred}}},
           {"min_change", d.min_change},
           {"drop_negative", d.drop_negative}};
    if (!d.inflation.empty()) j["inflation"] = d.inflation.to_json();
    return j;
}

EMOptions parse_occurrence(const json& j, DatasetMode mode) {
    check_keys(j, {"link", "structure", "occurrence_covariates", "hazard_covariates", "tol", "coef_tol", "max_iter"},
               "occurrence");
    EMOptions o;
    o.link = mode == DatasetMode::reinsurance ? HazardLink::cloglog : HazardLink::logit;
    if (j.contains("link")) o.link = section("occurrence.link", [&] { return hazard_link_from_string(j.at("link").get<std::string>()); });
    if (j.contains("structure"))
        o.structure = section("occurrence.structure",
                              [&] { return hazard_structure_from_string(j.at("structure").get<std::string>()); });
    o.occurrence_covariates = field(j, "occurrence_covariates", o.occurrence_covariates, "occurrence");
    o.hazard_covariates = field(j, "hazard_covariates", o.hazard_covariates, "occurrence");
    o.tol = field(j, "tol", o.tol, "occurrence");
    o.coef_tol = field(j, "coef_tol", o.coef_tol, "occurrence");
    o.max_iter = field(j, "max_iter", o.max_iter, "occurrence");
    return o;
}

json occurrence_json(const EMOptions& o) {
    return {{"link", to_string(o.link)},
            {"structure", to_string(o.structure)},
            {"occurrence_covariates", o.occurrence_covariates},
            {"hazard_covariates", o.hazard_covariates},
            {"tol", o.tol},
            {"coef_tol", o.coef_tol},
            {"max_iter", o.max_iter}};
}

DevelopmentFitOptions parse_fit(const json& j, std::uint64_t seed) {
    check_keys(j, {"learner", "grid", "layer_grids", "cv_folds", "seed", "min_rows"}, "fit");
    DevelopmentFitOptions f;
    f.seed = seed;
    if (j.contains("learner")) f.learner = section("fit.learner", [&] { return learner_from_string(j.at("learner").get<std::string>()); });
    if (j.contains("grid")) {
        f.grid.clear();
        for (const auto& g : j.at("grid")) f.grid.push_back(section("fit.grid", [&] { return GbmConfig::from_json(g); }));
        if (f.grid.empty()) throw ConfigError("config: 'fit.grid' must not be empty");
    }
    if (j.contains("layer_grids")) {
        for (const auto& [name, grid] : j.at("layer_grids").items()) {
            auto& out = f.layer_grids[name];
            for (const auto& g : grid) out.push_back(section("fit.layer_grids." + name, [&] { return GbmConfig::from_json(g); }));
            if (out.empty()) throw ConfigError("config: 'fit.layer_grids." + name + "' must not be empty");
        }
    }
    f.cv_folds = field(j, "cv_folds", f.cv_folds, "fit");
    f.seed = field(j, "seed", f.seed, "fit");
    f.min_rows = field(j, "min_rows", f.min_rows, "fit");
    if (f.cv_folds < 2) throw ConfigError("config: 'fit.cv_folds' must be >= 2");
    return f;
}

json fit_json(const DevelopmentFitOptions& f) {
    json grid = json::array(), lg = json::object();
    for (const auto& g : f.grid) grid.push_back(g.to_json());
    for (const auto& [name, gs] : f.layer_grids) {
        json a = json::array();
        for (const auto& g : gs) a.push_back(g.to_json());
        lg[name] = a;
    }
    return {{"learner", to_string(f.learner)}, {"grid", grid},     {"layer_grids", lg},
            {"cv_folds", f.cv_folds},          {"seed", f.seed},   {"min_rows", f.min_rows}};
}

json limit_json(double limit) { return std::isfinite(limit) ? json(limit) : json("inf"); }

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
    check_keys(j, {"schema_version", "mode", "output", "threads", "seed", "data", "occurrence", "development", "fit",
                   "simulation", "pricing", "reserve", "backtest", "synth"},
               "");
    RunConfig c;
    c.base_dir_ = base_dir;
    if (!j.contains("schema_version")) throw ConfigError("config: missing 'schema_version'");
    c.schema_version = field<int>(j, "schema_version", 0, "");
    if (c.schema_version != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema_version " + std::to_string(c.schema_version));
    c.mode = section("mode", [&] { return mode_from_string(field<std::string>(j, "mode", "insurance", "")); });
    c.output = field<std::string>(j, "output", c.output, "");
    c.threads = field<unsigned>(j, "threads", 0, "");
    const auto seed = field<std::uint64_t>(j, "seed", 1, "");
    if (j.contains("data")) c.data = parse_data(j.at("data"));
    c.occurrence = parse_occurrence(j.value("occurrence", json::object()), c.mode);
    if (j.contains("development"))
        c.development = section("development", [&] { return DevelopmentConfig::from_json(j.at("development")); });
    c.fit = parse_fit(j.value("fit", json::object()), seed);
    c.simulation.seed = seed;
    if (j.contains("simulation")) {
        json s = j.at("simulation");
        if (!s.contains("seed")) s["seed"] = seed;
        c.simulation = section("simulation", [&] { return SimConfig::from_json(s); });
    }
    if (j.contains("pricing")) {
        const json& p = j.at("pricing");
        check_keys(p, {"deductible", "limit", "priority", "portfolio", "method", "n_paths", "ground_up_paths", "exposure",
                       "seed"},
                   "pricing");
        c.pricing.deductible = field(p, "deductible", 0.0, "pricing");
        c.pricing.limit = limit_from(p, "pricing");
        c.pricing.priority = field(p, "priority", 0.0, "pricing");
        c.pricing.portfolio = field<std::string>(p, "portfolio", "", "pricing");
        c.pricing.method = field<std::string>(p, "method", c.pricing.method, "pricing");
        c.pricing.n_paths = field(p, "n_paths", c.pricing.n_paths, "pricing");
        c.pricing.ground_up_paths = field(p, "ground_up_paths", c.pricing.ground_up_paths, "pricing");
        c.pricing.exposure = field(p, "exposure", c.pricing.exposure, "pricing");
        c.pricing.seed = field(p, "seed", seed, "pricing");
    } else {
        c.pricing.seed = seed;
    }
    c.reserve.seed = seed;
    if (j.contains("reserve")) {
        const json& r = j.at("reserve");
        check_keys(r, {"evaluation_year", "n_replications", "level", "seed"}, "reserve");
        if (r.contains("evaluation_year") && !r.at("evaluation_year").is_null())
            c.reserve.evaluation_year = field<int>(r, "evaluation_year", 0, "reserve");
        c.reserve.n_replications = field(r, "n_replications", c.reserve.n_replications, "reserve");
        c.reserve.level = field(r, "level", c.reserve.level, "reserve");
        c.reserve.seed = field(r, "seed", seed, "reserve");
    }
    c.backtest.seed = seed;
    if (j.contains("backtest")) {
        const json& b = j.at("backtest");
        check_keys(b, {"evaluation_years", "n_replications", "seed"}, "backtest");
        c.backtest.evaluation_years = field(b, "evaluation_years", c.backtest.evaluation_years, "backtest");
        c.backtest.n_replications = field(b, "n_replications", c.backtest.n_replications, "backtest");
        c.backtest.seed = field(b, "seed", seed, "backtest");
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s, {"preset", "truth", "seed", "n_policies"}, "synth");
        TruthSpec t = section("synth", [&] {
            if (s.contains("truth")) return TruthSpec::from_json(s.at("truth"));
            const std::string preset = field<std::string>(s, "preset", "", "synth");
            if (preset == "insurance") return TruthSpec::insurance_preset();
            if (preset == "reinsurance") return TruthSpec::reinsurance_preset();
            throw ConfigError("config: 'synth' needs 'truth' or a preset (insurance, reinsurance)");
        });
        t.seed = field<std::uint64_t>(s, "seed", t.seed, "synth");
        t.n_policies = field<long>(s, "n_policies", t.n_policies, "synth");
        c.synth = t;
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    return from_json(j, dir.empty() ? "." : dir.string());
}

json RunConfig::to_json() const {
    json j{{"schema_version", schema_version},
           {"mode", to_string(mode)},
           {"output", output},
           {"threads", threads},
           {"data", data_json(data)},
           {"occurrence", occurrence_json(occurrence)},
           {"fit", fit_json(fit)},
           {"simulation", simulation.to_json()},
           {"pricing",
            {{"deductible", pricing.deductible},
             {"limit", limit_json(pricing.limit)},
             {"priority", pricing.priority},
             {"portfolio", pricing.portfolio},
             {"method", pricing.method},
             {"n_paths", pricing.n_paths},
             {"ground_up_paths", pricing.ground_up_paths},
             {"exposure", pricing.exposure},
             {"seed", pricing.seed}}},
           {"reserve",
            {{"evaluation_year", reserve.evaluation_year ? json(*reserve.evaluation_year) : json(nullptr)},
             {"n_replications", reserve.n_replications},
             {"level", reserve.level},
             {"seed", reserve.seed}}},
           {"backtest",
            {{"evaluation_years", backtest.evaluation_years},
             {"n_replications", backtest.n_replications},
             {"seed", backtest.seed}}}};
    if (development) j["development"] = development->to_json();
    if (synth) j["synth"] = {{"truth", synth->to_json()}};
    return j;
}

void RunConfig::validate() const {
    if (data.max_delay < 1) throw ConfigError("config: 'data.max_delay' must be >= 1");
    if (reserve.n_replications < 1) throw ConfigError("config: 'reserve.n_replications' must be >= 1");
    if (!(reserve.level > 0.0 && reserve.level < 1.0)) throw ConfigError("config: 'reserve.level' must be in (0, 1)");
    if (backtest.n_replications < 1) throw ConfigError("config: 'backtest.n_replications' must be >= 1");
    if (pricing.n_paths < 1) throw ConfigError("config: 'pricing.n_paths' must be >= 1");
    if (pricing.ground_up_paths < 0) throw ConfigError("config: 'pricing.ground_up_paths' must be >= 0");
    if (!(pricing.exposure >= 0.0)) throw ConfigError("config: 'pricing.exposure' must be >= 0");
    if (pricing.method != "weighted" && pricing.method != "best_estimate" && pricing.method != "ground_up")
        throw ConfigError("config: 'pricing.method' must be weighted, best_estimate or ground_up");
    if (pricing.method == "ground_up" && pricing.ground_up_paths < 1)
        throw ConfigError("config: 'pricing.ground_up_paths' must be >= 1 for the ground_up method");
    if (!pricing.portfolio.empty() && pricing.portfolio.find('=') == std::string::npos)
        throw ConfigError("config: 'pricing.portfolio' must be 'name=level'");
    if (!(pricing.deductible >= 0.0 && pricing.deductible < pricing.limit))
        throw ConfigError("config: pricing requires 0 <= deductible < limit");
    if (pricing.priority > pricing.deductible) throw ConfigError("config: pricing requires priority <= deductible");
    simulation.validate();
    const CovariateSchema schema = declared_schema();
    for (const auto& n : occurrence.occurrence_covariates)
        if (schema.index(n) < 0) throw ConfigError("config: 'occurrence.occurrence_covariates' names unknown covariate '" + n + "'");
    for (const auto& n : occurrence.hazard_covariates)
        if (schema.index(n) < 0) throw ConfigError("config: 'occurrence.hazard_covariates' names unknown covariate '" + n + "'");
    if (development) {
        if (development->mode != mode) throw ConfigError("config: 'development.mode' differs from 'mode'");
        development->validate(schema);
    }
    if (synth && synth->mode != mode) throw ConfigError("config: synthetic truth mode differs from 'mode'");
}

std::string RunConfig::hash() const {
    char buf[17];
    // Output location and thread count do not change any result.
    json j = to_json();
    j.erase("output");
    j.erase("threads");
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(num::fnv1a(j.dump())));
    return buf;
}

std::string RunConfig::resolve(const std::string& path) const {
    std::string p = path;
    const std::string token = "{out}";
    for (auto at = p.find(token); at != std::string::npos; at = p.find(token, at + output.size()))
        p.replace(at, token.size(), output);
    if (p.empty() || std::filesystem::path(p).is_absolute() || path.rfind(token, 0) == 0) return p;
    return (std::filesystem::path(base_dir_) / p).lexically_normal().string();
}

CovariateSchema RunConfig::declared_schema() const {
    CovariateSchema s;
    for (const auto& [n, k] : data.policy_columns.covariates) s.add(n, k);
    return s;
}

}  // namespace odm
