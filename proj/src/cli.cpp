#include "odm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "odm/csv.hpp"
#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"
#include "odm/premium_reserve.hpp"
#include "odm/run_config.hpp"
#include "odm/synth.hpp"

namespace odm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Context {
    RunConfig cfg;
    std::string subcommand;
    std::vector<std::string> artifacts;

    std::string out(const std::string& name) const { return (fs::path(cfg.output) / name).string(); }

    json stamp() const {
        return {{"tool_version", kToolVersion}, {"config_hash", cfg.hash()}, {"subcommand", subcommand}};
    }

    void write_json(const std::string& name, json body) {
        body["manifest"] = stamp();
        std::ofstream f(out(name));
        if (!f) throw Error("cannot write " + out(name));
        f << body.dump(1) << '\n';
        artifacts.push_back(name);
    }

    std::ofstream open_csv(const std::string& name) {
        std::ofstream f(out(name));
        if (!f) throw Error("cannot write " + out(name));
        artifacts.push_back(name);
        return f;
    }

    // One manifest per output directory, one entry per subcommand.
    void write_manifest() const {
        const std::string path = out("manifest.json");
        json m = json::object();
        if (std::ifstream in(path); in) {
            try {
                m = json::parse(in);
            } catch (const json::exception&) {
                m = json::object();
            }
        }
        m["tool_version"] = kToolVersion;
        m["runs"][subcommand] = {{"config_hash", cfg.hash()}, {"artifacts", artifacts}};
        std::ofstream f(path);
        if (!f) throw Error("cannot write " + path);
        f << m.dump(1) << '\n';
    }
};

std::string fmt(double x) { return num::format_double(x); }

// ---------------------------------------------------------------- inputs

void require_path(const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config: 'data.") + what + "' is required for this subcommand");
}

Portfolio load_portfolio(const RunConfig& c, int evaluation_year) {
    require_path(c.data.policies, "policies");
    if (c.data.evaluation_year == 0) throw ConfigError("config: 'data.evaluation_year' is required");
    return ingest_policies(c.resolve(c.data.policies), c.data.policy_columns, c.data.max_delay, evaluation_year,
                           c.data.delimiter);
}

struct Inputs {
    Portfolio portfolio;
    std::vector<ClaimRecord> claims;
    json preprocessing = json::object();
};

Inputs load_inputs(const RunConfig& c, int evaluation_year, bool need_claims) {
    Inputs in;
    in.portfolio = load_portfolio(c, evaluation_year);
    const bool counts_present = [&] {
        for (const auto& p : in.portfolio.policies)
            if (!p.reported_counts.empty()) return true;
        return in.portfolio.policies.empty();
    }();
    if (need_claims || !counts_present) {
        require_path(c.data.claims, "claims");
        in.claims = ingest_claims(c.resolve(c.data.claims), c.data.claim_columns, in.portfolio, c.data.delimiter);
        in.claims = truncate_history(in.claims, evaluation_year);
        if (!counts_present) attach_reported_counts(in.portfolio, in.claims);
        if (c.data.min_change > 0.0) {
            PreprocessResult r = preprocess_developments(std::move(in.claims), c.data.min_change, c.data.drop_negative);
            in.claims = std::move(r.claims);
            in.preprocessing = r.report.to_json();
        }
        if (!c.data.inflation.empty()) in.claims = deflate(std::move(in.claims), c.data.inflation);
    }
    return in;
}

SimConfig sim_config(const RunConfig& c) {
    SimConfig s = c.simulation;
    if (s.curve.empty()) s.curve = c.data.inflation;
    return s;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path + " (run the fitting subcommand first)");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

ReportingModel load_reporting(const Context& ctx) {
    return ReportingModel::from_json(read_json(ctx.out("occurrence_model.json")).at("model"));
}

HierarchicalModel load_development(const Context& ctx) {
    return HierarchicalModel::from_json(read_json(ctx.out("development_model.json")).at("model"));
}

void check_schema(const CovariateSchema& data, const CovariateSchema& model) {
    if (data.to_json() != model.to_json())
        throw SchemaError("the data's covariate schema differs from the fitted model's schema");
}

// ---------------------------------------------------------------- subcommands

void run_synth(Context& ctx) {
    if (!ctx.cfg.synth) throw ConfigError("config: 'synth' section is required for the synth subcommand");
    const SynthData d = generate_portfolio(*ctx.cfg.synth);
    write_synth_files(d, ctx.cfg.output);
    ctx.artifacts.insert(ctx.artifacts.end(), {"policies.csv", "claims.csv", "truth.json"});
    std::cout << "synth: " << d.portfolio.policies.size() << " policy-years, " << d.claims.size()
              << " reported claims, " << d.ledger.unreported << " unreported\n";
}

void run_fit_occurrence(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const Inputs in = load_inputs(c, c.data.evaluation_year, false);
    const EMResult r = fit_em(in.portfolio, c.occurrence);
    ctx.write_json("occurrence_model.json", {{"model", r.model.to_json()}, {"trace", r.trace.to_json()}});
    ctx.write_json("em_trace.json", r.trace.to_json());
    std::ofstream f = ctx.open_csv("unreported_counts.csv");
    CsvWriter w(f);
    std::vector<std::string> head{"policy_id", "occurrence_year"};
    for (int j = 1; j <= in.portfolio.max_delay; ++j) head.push_back("delay_" + std::to_string(j));
    head.push_back("total");
    w.row(head);
    for (const auto& p : in.portfolio.policies) {
        const UnreportedPrediction u = predict_unreported(r.model, p);
        std::vector<std::string> row{p.policy_id, std::to_string(p.occurrence_year)};
        for (int j = 1; j <= in.portfolio.max_delay; ++j) {
            auto it = u.by_delay.find(j);
            row.push_back(fmt(it == u.by_delay.end() ? 0.0 : it->second));
        }
        row.push_back(fmt(u.total));
        w.row(row);
    }
    std::cout << "fit-occurrence: " << r.trace.iterations << " EM iterations, "
              << (r.trace.converged ? "converged" : "not converged") << '\n';
}

struct DevelopmentFit {
    DevelopmentConfig config;
    TrainingTables tables;
    HierarchicalModel model;
};

DevelopmentFit fit_development(const RunConfig& c, const Inputs& in) {
    DevelopmentFit f;
    f.config = c.development ? *c.development : DevelopmentConfig::defaults(c.mode, in.portfolio.schema);
    f.config.validate(in.portfolio.schema);
    f.tables = assemble_training_records(in.claims, f.config, in.portfolio.schema);
    f.model = fit_hierarchical(f.tables, f.config, in.portfolio.schema, c.fit);
    return f;
}

void run_fit_development(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const Inputs in = load_inputs(c, c.data.evaluation_year, true);
    const DevelopmentFit fit = fit_development(c, in);
    const DevelopmentConfig& dc = fit.config;
    const TrainingTables& tables = fit.tables;
    const HierarchicalModel& m = fit.model;
    const LoglikBreakdown ll = layer_loglik(m, tables);
    ctx.write_json("development_model.json", {{"model", m.to_json()},
                                              {"preprocessing", in.preprocessing},
                                              {"training_warnings", tables.warnings},
                                              {"loglik", ll.total}});
    std::ofstream f = ctx.open_csv("diagnostics.csv");
    CsvWriter w(f);
    w.row({"layer", "family", "learner", "n_rows", "dropped_rows", "loglik", "training_loss"});
    for (Phase ph : {Phase::initial, Phase::update}) {
        const auto& specs = ph == Phase::initial ? dc.initial : dc.update;
        const auto& models = ph == Phase::initial ? m.initial : m.update;
        for (std::size_t k = 0; k < specs.size(); ++k) {
            const std::string name = specs[k].name();
            auto dr = tables.dropped.find(name);
            auto li = ll.per_layer.find(name);
            w.row({name, to_string(models[k].family.family), to_string(models[k].learner),
                   std::to_string(models[k].n_rows), std::to_string(dr == tables.dropped.end() ? 0 : dr->second),
                   fmt(li == ll.per_layer.end() ? 0.0 : li->second), fmt(models[k].training_loss)});
        }
    }
    std::cout << "fit-development: " << in.claims.size() << " claims, log-likelihood " << fmt(ll.total) << '\n';
}

void write_bands(std::ofstream& f, const PortfolioEvolution& ev) {
    CsvWriter w(f);
    w.row({"calendar_year", "paid_mean", "paid_lower", "paid_median", "paid_upper", "incurred_mean", "incurred_lower",
           "incurred_median", "incurred_upper"});
    for (std::size_t y = 0; y < ev.years.size(); ++y) {
        const Band& p = ev.paid_bands[y];
        const Band& i = ev.incurred_bands[y];
        w.row({std::to_string(ev.years[y]), fmt(p.mean), fmt(p.lower), fmt(p.median), fmt(p.upper), fmt(i.mean),
               fmt(i.lower), fmt(i.median), fmt(i.upper)});
    }
}

void run_simulate(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const HierarchicalModel m = load_development(ctx);
    const Inputs in = load_inputs(c, c.data.evaluation_year, true);
    check_schema(in.portfolio.schema, m.schema);
    const SimConfig sc = sim_config(c);
    const std::vector<ClaimRecord> open = open_claims(in.claims);
    {
        std::ofstream f = ctx.open_csv("paths.csv");
        CsvWriter w(f);
        w.row({"claim_id", "path_id", "calendar_year", "paid", "incurred"});
        for (const auto& claim : open)
            for (const SimulatedPath& p : simulate_future_paths(m, claim, sc))
                for (const PathYear& y : p.series)
                    w.row({claim.claim_id, std::to_string(p.path_id), std::to_string(y.calendar_year), fmt(y.paid),
                           fmt(y.incurred)});
    }
    const PortfolioEvolution ev =
        rbns_portfolio_evolution(m, open, c.data.evaluation_year, sc, c.reserve.n_replications, c.reserve.level);
    std::ofstream f = ctx.open_csv("bands.csv");
    write_bands(f, ev);
    std::cout << "simulate: " << open.size() << " open claims, " << sc.n_paths << " paths each\n";
}

bool selected(const CovariateSchema& schema, const std::vector<double>& cov, const std::string& portfolio) {
    if (portfolio.empty()) return true;
    const auto eq = portfolio.find('=');
    const std::size_t i = schema.require(portfolio.substr(0, eq));
    const std::string level = portfolio.substr(eq + 1);
    if (schema.covariates[i].kind == CovariateKind::numeric) return cov[i] == parse_real(level, "pricing.portfolio");
    return schema.decode(i, cov[i]) == level;
}

void run_price(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const PricingConfig& pc = c.pricing;
    const XlContract contract{pc.deductible, pc.limit, pc.priority};
    contract.validate();
    const ReportingModel rep = load_reporting(ctx);
    const HierarchicalModel m = load_development(ctx);
    const Inputs in = load_inputs(c, c.data.evaluation_year, true);
    check_schema(in.portfolio.schema, m.schema);
    if (!pc.portfolio.empty()) {
        const std::string name = pc.portfolio.substr(0, pc.portfolio.find('='));
        if (in.portfolio.schema.index(name) < 0) throw ConfigError("config: 'pricing.portfolio' names unknown covariate '" + name + "'");
    }

    // Exposure-weighted intensity of the selected policies.
    num::CompensatedSum el, e;
    std::vector<std::vector<double>> covs;
    for (const auto& p : in.portfolio.policies) {
        if (!selected(in.portfolio.schema, p.covariates, pc.portfolio)) continue;
        el.add(p.exposure * rep.lambda(p.covariates));
        e.add(p.exposure);
    }
    if (!(e.value() > 0.0)) throw DomainError("price: no exposure in the selected portfolio");
    const double lambda = el.value() / e.value();

    SimConfig sc = sim_config(c);
    sc.n_paths = pc.n_paths;
    sc.seed = pc.seed;
    std::vector<double> settled;
    std::vector<std::vector<double>> paths;
    for (const auto& claim : in.claims) {
        if (!selected(in.portfolio.schema, claim.covariates, pc.portfolio)) continue;
        covs.push_back(claim.covariates);
        if (claim.settled) {
            double paid = 0.0;
            for (const auto& s : claim.snapshots)
                paid += s.payment_amount * (sc.curve.empty() ? 1.0 : sc.curve.factor_or_last(claim.calendar_year(s)));
            settled.push_back(paid);
            continue;
        }
        std::vector<double> u;
        for (const SimulatedPath& p : simulate_future_paths(m, claim, sc)) u.push_back(p.ultimate);
        paths.push_back(std::move(u));
    }
    if (covs.empty()) throw DomainError("price: no claims in the selected portfolio");

    auto method_json = [&](const SeverityDistribution& d) {
        const double cost = xl_expected_cost(d, contract);
        return json{{"mean_severity", d.mean()},
                    {"sd_severity", std::sqrt(d.variance())},
                    {"xl_expected_cost", cost},
                    {"premium", pure_premium(lambda, d, contract, pc.exposure)}};
    };
    const SeverityDistribution weighted = build_severity_weighted(settled, paths);
    json methods{{"weighted", method_json(weighted)},
                 {"best_estimate", method_json(build_severity_best_estimate(settled, paths))}};
    if (pc.ground_up_paths > 0) {
        std::vector<double> gu(static_cast<std::size_t>(pc.ground_up_paths));
        const int year = c.data.evaluation_year + 1;
        parallel_for(gu.size(), [&](std::size_t k) {
            Rng rng = Rng::stream(pc.seed, {0x6D0ULL, k});
            gu[k] = simulate_new_claim(m, rep, covs[k % covs.size()], year, sc, rng).ultimate;
        });
        methods["ground_up"] = method_json(SeverityDistribution{gu, std::vector<double>(gu.size(), 1.0)});
    }
    ctx.write_json("price.json",
                   {{"contract",
                     {{"deductible", contract.deductible},
                      {"limit", std::isfinite(contract.limit) ? json(contract.limit) : json("inf")},
                      {"priority", contract.priority}}},
                    {"portfolio", pc.portfolio},
                    {"lambda", lambda},
                    {"exposure", pc.exposure},
                    {"n_settled", settled.size()},
                    {"n_open", paths.size()},
                    {"method", pc.method},
                    {"premium", methods.at(pc.method).at("premium")},
                    {"methods", methods}});
    std::ofstream f = ctx.open_csv("severity.csv");
    CsvWriter w(f);
    w.row({"value", "weight"});
    for (std::size_t i = 0; i < weighted.values.size(); ++i) w.row({fmt(weighted.values[i]), fmt(weighted.weights[i])});
    std::cout << "price: premium " << fmt(methods.at(pc.method).at("premium").get<double>()) << " (" << pc.method
              << ")\n";
}

void run_reserve(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const int tau = c.reserve.evaluation_year.value_or(c.data.evaluation_year);
    if (tau > c.data.evaluation_year) throw ConfigError("config: reserve evaluation year is after the data's evaluation year");
    const ReportingModel rep = load_reporting(ctx);
    Inputs in = load_inputs(c, tau, true);
    // Without a saved development model, fit one on the data known at the reserve date.
    const bool saved = fs::exists(ctx.out("development_model.json"));
    const HierarchicalModel m = saved ? load_development(ctx) : fit_development(c, in).model;
    check_schema(in.portfolio.schema, m.schema);
    SimConfig sc = sim_config(c);
    sc.seed = c.reserve.seed;
    IbnrResult ibnr = ibnr_reserve(rep, m, in.portfolio, sc, c.reserve.n_replications);
    RbnsResult rbns = rbns_reserve(m, open_claims(in.claims), tau, sc, c.reserve.n_replications);
    const ReserveEstimate est = combine_reserves(std::move(ibnr), std::move(rbns));
    json body = est.to_json();
    body["evaluation_year"] = tau;
    body["development_model"] = saved ? "development_model.json" : "fitted in-process";
    ctx.write_json("reserve.json", body);
    {
        std::ofstream f = ctx.open_csv("reserve_bands.csv");
        write_bands(f, est.rbns.evolution);
    }
    std::ofstream f = ctx.open_csv("payout.csv");
    CsvWriter w(f);
    w.row({"calendar_year", "mean_paid"});
    for (const auto& [y, v] : est.payout_schedule) w.row({std::to_string(y), fmt(v)});
    std::cout << "reserve: total mean " << fmt(est.total.mean) << " [" << fmt(est.total.q025) << ", "
              << fmt(est.total.q975) << "]\n";
}

void run_backtest(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const HierarchicalModel m = load_development(ctx);
    const Inputs in = load_inputs(c, c.data.evaluation_year, true);
    check_schema(in.portfolio.schema, m.schema);
    std::vector<int> years = c.backtest.evaluation_years;
    if (years.empty()) years.push_back(c.data.evaluation_year);
    SimConfig sc = sim_config(c);
    sc.seed = c.backtest.seed;
    const auto rows = backtest(m, in.claims, years, sc, c.backtest.n_replications);
    std::ofstream f = ctx.open_csv("backtest.csv");
    CsvWriter w(f);
    w.row({"evaluation_year", "calendar_year", "predicted_mean", "lower", "upper", "realized"});
    for (const auto& r : rows)
        w.row({std::to_string(r.evaluation_year), std::to_string(r.calendar_year), fmt(r.predicted_mean), fmt(r.lower),
               fmt(r.upper), std::isnan(r.realized) ? "" : fmt(r.realized)});
    std::cout << "backtest: " << rows.size() << " rows\n";
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Individual claims reserving and pricing"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;

    auto common = [&](CLI::App* s) {
        s->add_option("-c,--config", config_path, "Run configuration (JSON)")->required();
        s->add_option("-o,--out", out_dir, "Output directory");
        s->add_option("--threads", threads, "Worker thread cap (0 = all cores)");
    };
    struct Sub {
        const char* name;
        const char* help;
        void (*run)(Context&);
    };
    const std::vector<Sub> subs{{"synth", "Generate a synthetic portfolio with known truth", run_synth},
                                {"fit-occurrence", "Fit claim frequency and reporting delays", run_fit_occurrence},
                                {"fit-development", "Fit the hierarchical development model", run_fit_development},
                                {"simulate", "Simulate future paths of open claims", run_simulate},
                                {"price", "Price an excess-of-loss layer", run_price},
                                {"reserve", "IBNR and RBNS reserves", run_reserve},
                                {"backtest", "Backtest with a moving evaluation date", run_backtest}};
    std::map<std::string, CLI::App*> apps;
    for (const auto& s : subs) {
        CLI::App* a = app.add_subcommand(s.name, s.help);
        common(a);
        a->add_option("--seed", seed, "Seed override");
        apps[s.name] = a;
    }
    std::optional<double> deductible, limit, priority;
    std::optional<std::string> portfolio;
    std::optional<int> n_paths, eval_date, n_rep;
    auto* price = apps["price"];
    price->add_option("--deductible", deductible);
    price->add_option("--limit", limit);
    price->add_option("--priority", priority);
    price->add_option("--portfolio", portfolio, "name=level");
    price->add_option("--n-paths", n_paths);
    auto* reserve = apps["reserve"];
    reserve->add_option("--eval-date", eval_date, "Evaluation year");
    reserve->add_option("--n-replications", n_rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    Context ctx;
    for (const auto& s : subs) {
        if (!apps[s.name]->parsed()) continue;
        ctx.subcommand = s.name;
        try {
            if (!fs::exists(config_path)) throw ConfigError("config: file '" + config_path + "' does not exist");
            json j;
            {
                std::ifstream in(config_path);
                try {
                    j = json::parse(in);
                } catch (const json::exception& e) {
                    throw ConfigError("config: '" + config_path + "' is not valid JSON: " + e.what());
                }
            }
            // Flags override config fields before validation.
            if (!out_dir.empty()) j["output"] = out_dir;
            if (threads > 0) j["threads"] = threads;
            if (seed) {
                const std::string n = s.name;
                if (n == "synth") j["synth"]["seed"] = *seed;
                else if (n == "price") j["pricing"]["seed"] = *seed;
                else if (n == "reserve") j["reserve"]["seed"] = *seed;
                else if (n == "backtest") j["backtest"]["seed"] = *seed;
                else if (n == "fit-development") j["fit"]["seed"] = *seed;
                else if (n == "simulate") j["simulation"]["seed"] = *seed;
                else j["seed"] = *seed;
            }
            if (deductible) j["pricing"]["deductible"] = *deductible;
            if (limit) j["pricing"]["limit"] = *limit;
            if (priority) j["pricing"]["priority"] = *priority;
            if (portfolio) j["pricing"]["portfolio"] = *portfolio;
            if (n_paths) j["pricing"]["n_paths"] = *n_paths;
            if (eval_date) j["reserve"]["evaluation_year"] = *eval_date;
            if (n_rep) j["reserve"]["n_replications"] = *n_rep;
            const fs::path dir = fs::path(config_path).parent_path();
            ctx.cfg = RunConfig::from_json(j, dir.empty() ? "." : dir.string());
            thread_cap() = ctx.cfg.threads;
            fs::create_directories(ctx.cfg.output);
            s.run(ctx);
            ctx.write_manifest();
        } catch (const ConfigError& e) {
            std::cerr << "odm " << s.name << ": " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "odm " << s.name << ": " << e.what() << '\n';
            return 1;
        }
    }
    return 0;
}

}  // namespace odm
