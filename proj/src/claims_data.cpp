#include "odm/claims_data.hpp"

#include <algorithm>
#include <cmath>

#include "odm/error.hpp"

namespace odm {

// ---------------------------------------------------------------- schema

int CovariateSchema::index(std::string_view name) const {
    for (std::size_t i = 0; i < covariates.size(); ++i)
        if (covariates[i].name == name) return static_cast<int>(i);
    return -1;
}

std::size_t CovariateSchema::require(std::string_view name) const {
    const int i = index(name);
    if (i < 0) throw ConfigError("unknown covariate '" + std::string(name) + "'");
    return static_cast<std::size_t>(i);
}

void CovariateSchema::add(std::string name, CovariateKind kind, std::vector<std::string> levels) {
    if (index(name) >= 0) throw ConfigError("duplicate covariate '" + name + "'");
    covariates.push_back({std::move(name), kind, std::move(levels)});
}

double CovariateSchema::intern(std::size_t i, std::string_view raw) {
    CovariateInfo& c = covariates.at(i);
    if (c.kind == CovariateKind::numeric) return parse_real(raw, "covariate " + c.name);
    for (std::size_t k = 0; k < c.levels.size(); ++k)
        if (c.levels[k] == raw) return static_cast<double>(k + 1);
    c.levels.emplace_back(raw);
    return static_cast<double>(c.levels.size());
}

double CovariateSchema::encode(std::size_t i, std::string_view raw) const {
    const CovariateInfo& c = covariates.at(i);
    if (c.kind == CovariateKind::numeric) return parse_real(raw, "covariate " + c.name);
    for (std::size_t k = 0; k < c.levels.size(); ++k)
        if (c.levels[k] == raw) return static_cast<double>(k + 1);
    return kUnknownLevel;
}

std::string CovariateSchema::decode(std::size_t i, double code) const {
    const CovariateInfo& c = covariates.at(i);
    if (c.kind == CovariateKind::numeric) return std::to_string(code);
    const auto k = static_cast<std::size_t>(code);
    if (k == 0 || k > c.levels.size()) return "<unknown>";
    return c.levels[k - 1];
}

nlohmann::json CovariateSchema::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : covariates) {
        nlohmann::json j{{"name", c.name}, {"type", c.kind == CovariateKind::numeric ? "numeric" : "categorical"}};
        if (c.kind == CovariateKind::categorical) j["levels"] = c.levels;
        arr.push_back(j);
    }
    return arr;
}

CovariateSchema CovariateSchema::from_json(const nlohmann::json& j) {
    CovariateSchema s;
    for (const auto& c : j) {
        const std::string type = c.at("type").get<std::string>();
        if (type == "numeric")
            s.add(c.at("name").get<std::string>(), CovariateKind::numeric);
        else if (type == "categorical")
            s.add(c.at("name").get<std::string>(), CovariateKind::categorical,
                  c.value("levels", std::vector<std::string>{}));
        else
            throw SchemaError("covariate type must be numeric or categorical, got '" + type + "'");
    }
    return s;
}

// ---------------------------------------------------------------- policies

int observed_delay_years(int max_delay, int evaluation_year, int occurrence_year) {
    return std::clamp(evaluation_year - occurrence_year + 1, 0, max_delay);
}

long Portfolio::find(std::string_view policy_id, int occurrence_year) const {
    auto it = index_.find({std::string(policy_id), occurrence_year});
    return it == index_.end() ? -1 : it->second;
}

void Portfolio::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < policies.size(); ++i) {
        auto [it, fresh] = index_.emplace(std::make_pair(policies[i].policy_id, policies[i].occurrence_year),
                                          static_cast<long>(i));
        if (!fresh)
            throw ValidationError("duplicate policy-year " + policies[i].policy_id + "/" +
                                  std::to_string(policies[i].occurrence_year));
    }
}

namespace {

int year_of(std::string_view date, std::string_view context) {
    if (date.size() < 4) throw ValidationError(std::string(context) + ": bad date '" + std::string(date) + "'");
    return static_cast<int>(parse_integer(date.substr(0, 4), context));
}

bool is_new_year(std::string_view date) { return date.size() >= 10 && date.substr(4, 6) == "-01-01"; }

}  // namespace

Portfolio ingest_policies(const CsvTable& table, const PolicyColumns& cols, int max_delay, int evaluation_year) {
    if (max_delay < 1) throw ConfigError("max_delay must be >= 1");
    Portfolio pf;
    pf.max_delay = max_delay;
    pf.evaluation_year = evaluation_year;
    const std::size_t c_id = table.require(cols.policy_id, "policies");
    const std::size_t c_occ = table.require(cols.occurrence_year, "policies");
    const std::size_t c_exp = table.require(cols.exposure, "policies");
    int c_start = -1, c_end = -1;
    if (!cols.period_start.empty()) c_start = static_cast<int>(table.require(cols.period_start, "policies"));
    if (!cols.period_end.empty()) c_end = static_cast<int>(table.require(cols.period_end, "policies"));
    std::vector<int> c_count;
    for (int j = 1; j <= max_delay; ++j) c_count.push_back(table.column(cols.count_prefix + std::to_string(j)));
    const bool has_counts = c_count.front() >= 0;
    std::vector<std::size_t> c_cov;
    for (const auto& [name, kind] : cols.covariates) {
        c_cov.push_back(table.require(name, "policies"));
        pf.schema.add(name, kind);
    }

    pf.policies.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = "policies row " + std::to_string(r + 1);
        PolicyRecord p;
        p.policy_id = row[c_id];
        p.occurrence_year = static_cast<int>(parse_integer(row[c_occ], ctx));
        p.exposure = parse_real(row[c_exp], ctx);
        if (p.exposure < 0) throw ValidationError(ctx + ": negative exposure");
        if (c_start >= 0 && c_end >= 0) {
            const int y0 = year_of(row[c_start], ctx);
            const int y1 = year_of(row[c_end], ctx);
            if (y1 > y0 && !(y1 == y0 + 1 && is_new_year(row[c_end])))
                throw ValidationError(ctx + ": split by calendar year required");
        }
        if (p.occurrence_year > evaluation_year)
            throw ValidationError(ctx + ": occurrence year after evaluation year");
        for (std::size_t k = 0; k < c_cov.size(); ++k) p.covariates.push_back(pf.schema.intern(k, row[c_cov[k]]));
        const int tau_i = observed_delay_years(max_delay, evaluation_year, p.occurrence_year);
        p.reported_counts.assign(static_cast<std::size_t>(tau_i), 0);
        if (has_counts) {
            for (int j = 0; j < tau_i; ++j) {
                if (c_count[static_cast<std::size_t>(j)] < 0)
                    throw SchemaError("policies: missing column '" + cols.count_prefix + std::to_string(j + 1) + "'");
                const long long n = parse_integer(row[static_cast<std::size_t>(c_count[static_cast<std::size_t>(j)])], ctx);
                if (n < 0) throw ValidationError(ctx + ": negative claim count");
                p.reported_counts[static_cast<std::size_t>(j)] = n;
            }
        }
        pf.policies.push_back(std::move(p));
    }
    pf.rebuild_index();
    return pf;
}

Portfolio ingest_policies(const std::string& path, const PolicyColumns& columns, int max_delay,
                          int evaluation_year, char delimiter) {
    return ingest_policies(read_csv(path, delimiter), columns, max_delay, evaluation_year);
}

// ---------------------------------------------------------------- claims

double ClaimRecord::paid_to_date() const {
    double paid = 0.0;
    for (const auto& s : snapshots) paid += s.payment_amount;
    return paid;
}

void validate_claim(const ClaimRecord& c) {
    const std::string ctx = "claim " + c.claim_id;
    if (c.snapshots.empty()) throw ValidationError(ctx + ": no development records");
    if (c.reporting_year < c.occurrence_year) throw ValidationError(ctx + ": reported before occurrence");
    if (c.reporting_delay != c.reporting_year - c.occurrence_year)
        throw ValidationError(ctx + ": reporting delay inconsistent with years");
    for (std::size_t k = 0; k < c.snapshots.size(); ++k) {
        const auto& s = c.snapshots[k];
        if (s.dev_year != static_cast<int>(k) + 1)
            throw ValidationError(ctx + ": development years must be consecutive from 1");
        if (s.settlement && k + 1 != c.snapshots.size())
            throw ValidationError(ctx + ": records after settlement");
        if (!std::isfinite(s.payment_amount) || !std::isfinite(s.reserve) || !std::isfinite(s.incurred))
            throw ValidationError(ctx + ": non-finite amount");
    }
    if (c.settled != c.snapshots.back().settlement) throw ValidationError(ctx + ": settled flag mismatch");
}

void normalize_bookkeeping(ClaimRecord& c) {
    double paid = 0.0;
    for (auto& s : c.snapshots) {
        paid += s.payment_amount;
        s.payment_flag = s.payment_amount != 0.0;
        if (s.settlement) s.reserve = 0.0;
        s.incurred = paid + s.reserve;
    }
}

std::vector<ClaimRecord> ingest_claims(const CsvTable& table, const ClaimColumns& cols, const Portfolio& pf) {
    const std::size_t c_claim = table.require(cols.claim_id, "claims");
    const std::size_t c_pol = table.require(cols.policy_id, "claims");
    const std::size_t c_occ = table.require(cols.occurrence_year, "claims");
    const std::size_t c_rep = table.require(cols.reporting_year, "claims");
    const std::size_t c_dev = table.require(cols.dev_year, "claims");
    const std::size_t c_set = table.require(cols.settlement, "claims");
    const std::size_t c_pay = table.require(cols.payment, "claims");
    const int c_res = cols.reserve.empty() ? -1 : table.column(cols.reserve);
    const int c_inc = cols.incurred.empty() ? -1 : table.column(cols.incurred);
    if (c_res < 0 && c_inc < 0) throw SchemaError("claims: need a reserve or an incurred column");

    std::map<std::string, std::size_t> by_id;
    std::vector<ClaimRecord> claims;
    std::vector<std::vector<std::pair<ClaimSnapshot, double>>> raw;  // snapshot + incurred input
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = "claims row " + std::to_string(r + 1);
        auto it = by_id.find(row[c_claim]);
        if (it == by_id.end()) {
            ClaimRecord c;
            c.claim_id = row[c_claim];
            c.policy_id = row[c_pol];
            c.occurrence_year = static_cast<int>(parse_integer(row[c_occ], ctx));
            c.reporting_year = static_cast<int>(parse_integer(row[c_rep], ctx));
            c.reporting_delay = c.reporting_year - c.occurrence_year;
            if (c.reporting_delay < 0) throw ValidationError(ctx + ": reported before occurrence");
            const long p = pf.find(c.policy_id, c.occurrence_year);
            if (p < 0)
                throw ValidationError(ctx + ": no policy-year " + c.policy_id + "/" + std::to_string(c.occurrence_year));
            c.covariates = pf.policies[static_cast<std::size_t>(p)].covariates;
            it = by_id.emplace(c.claim_id, claims.size()).first;
            claims.push_back(std::move(c));
            raw.emplace_back();
        }
        ClaimSnapshot s;
        s.dev_year = static_cast<int>(parse_integer(row[c_dev], ctx));
        s.settlement = parse_flag(row[c_set], ctx);
        s.payment_amount = parse_real(row[c_pay], ctx);
        double incurred_in = std::nan("");
        if (c_res >= 0) s.reserve = parse_real(row[static_cast<std::size_t>(c_res)], ctx);
        if (c_inc >= 0) incurred_in = parse_real(row[static_cast<std::size_t>(c_inc)], ctx);
        raw[it->second].emplace_back(s, incurred_in);
    }

    for (std::size_t k = 0; k < claims.size(); ++k) {
        auto& rows = raw[k];
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a.first.dev_year < b.first.dev_year; });
        double paid = 0.0;
        for (auto& [s, inc] : rows) {
            paid += s.payment_amount;
            if (c_res < 0) s.reserve = std::max(0.0, inc - paid);
            claims[k].snapshots.push_back(s);
        }
        claims[k].settled = claims[k].snapshots.back().settlement;
        normalize_bookkeeping(claims[k]);
        validate_claim(claims[k]);
    }
    return claims;
}

std::vector<ClaimRecord> ingest_claims(const std::string& path, const ClaimColumns& columns, const Portfolio& pf,
                                       char delimiter) {
    return ingest_claims(read_csv(path, delimiter), columns, pf);
}

void attach_reported_counts(Portfolio& pf, const std::vector<ClaimRecord>& claims) {
    for (auto& p : pf.policies) std::fill(p.reported_counts.begin(), p.reported_counts.end(), 0);
    for (const auto& c : claims) {
        const long i = pf.find(c.policy_id, c.occurrence_year);
        if (i < 0) throw ValidationError("claim " + c.claim_id + ": unknown policy-year");
        if (c.reporting_delay >= pf.max_delay)
            throw ValidationError("claim " + c.claim_id + ": reporting delay exceeds the maximal delay");
        auto& p = pf.policies[static_cast<std::size_t>(i)];
        const auto j = static_cast<std::size_t>(c.reporting_delay);
        if (j >= p.reported_counts.size())
            throw ValidationError("claim " + c.claim_id + ": reported after the evaluation year");
        ++p.reported_counts[j];
    }
}

// ---------------------------------------------------------------- preprocessing

nlohmann::json PreprocessReport::to_json() const {
    return {{"negative_payments_dropped", negative_payments_dropped},
            {"negative_amount_removed", negative_amount_removed},
            {"payments_merged", payments_merged},
            {"trailing_payments_merged_back", trailing_payments_merged_back},
            {"incurred_changes_merged", incurred_changes_merged},
            {"reserves_clamped", reserves_clamped},
            {"warnings", warnings}};
}

PreprocessResult preprocess_developments(std::vector<ClaimRecord> claims, double min_change, bool drop_negative) {
    PreprocessReport rep;
    for (auto& c : claims) {
        auto& snaps = c.snapshots;
        const std::size_t n = snaps.size();
        std::vector<double> level(n);
        for (std::size_t k = 0; k < n; ++k) level[k] = snaps[k].incurred;

        std::vector<double> pay(n);
        for (std::size_t k = 0; k < n; ++k) {
            pay[k] = snaps[k].payment_amount;
            if (drop_negative && pay[k] < 0) {
                ++rep.negative_payments_dropped;
                rep.negative_amount_removed += -pay[k];
                pay[k] = 0.0;
            }
        }

        double pending = 0.0;
        long last_large = -1;
        for (std::size_t k = 0; k < n; ++k) {
            if (pay[k] <= 0.0) continue;
            if (pay[k] >= min_change) {
                pay[k] += pending;
                pending = 0.0;
                last_large = static_cast<long>(k);
            } else {
                pending += pay[k];
                pay[k] = 0.0;
                ++rep.payments_merged;
            }
        }
        if (pending > 0.0) {
            if (last_large >= 0) {
                pay[static_cast<std::size_t>(last_large)] += pending;
                ++rep.trailing_payments_merged_back;
            } else {
                pay[n - 1] += pending;
                rep.warnings.push_back("claim " + c.claim_id + ": total paid below min_change kept in final record");
            }
        }

        double paid = 0.0;
        double held = level[0];
        for (std::size_t k = 0; k < n; ++k) {
            auto& s = snaps[k];
            paid += pay[k];
            s.payment_amount = pay[k];
            s.payment_flag = pay[k] != 0.0;
            if (k > 0 && !s.settlement) {
                if (std::abs(level[k] - held) >= min_change) {
                    held = level[k];
                } else if (level[k] != held) {
                    ++rep.incurred_changes_merged;
                }
            }
            if (s.settlement) {
                s.reserve = 0.0;
            } else {
                s.reserve = held - paid;
                if (s.reserve < 0.0) {
                    ++rep.reserves_clamped;
                    s.reserve = 0.0;
                }
            }
            s.incurred = paid + s.reserve;
            held = s.incurred;
        }
    }
    return {std::move(claims), std::move(rep)};
}

// ---------------------------------------------------------------- inflation

InflationCurve::InflationCurve(int base_year, std::map<int, double> factors)
    : base_year_(base_year), factors_(std::move(factors)) {
    for (const auto& [y, f] : factors_)
        if (!(f > 0.0) || !std::isfinite(f))
            throw ValidationError("inflation factor for " + std::to_string(y) + " must be positive");
    auto it = factors_.find(base_year_);
    if (it == factors_.end() || it->second != 1.0)
        throw ValidationError("inflation curve must have factor 1 at the base year");
}

double InflationCurve::factor(int year) const {
    auto it = factors_.find(year);
    if (it == factors_.end()) throw DomainError("inflation curve has no factor for year " + std::to_string(year));
    return it->second;
}

double InflationCurve::factor_or_last(int year, bool* extrapolated) const {
    if (factors_.empty()) return 1.0;
    auto it = factors_.find(year);
    if (it != factors_.end()) {
        if (extrapolated) *extrapolated = false;
        return it->second;
    }
    if (extrapolated) *extrapolated = true;
    if (year > factors_.rbegin()->first) return factors_.rbegin()->second;
    if (year < factors_.begin()->first) return factors_.begin()->second;
    // Interior gap: nearest earlier year.
    auto lo = factors_.lower_bound(year);
    return std::prev(lo)->second;
}

nlohmann::json InflationCurve::to_json() const {
    nlohmann::json f = nlohmann::json::object();
    for (const auto& [y, v] : factors_) f[std::to_string(y)] = v;
    return {{"base_year", base_year_}, {"factors", f}};
}

InflationCurve InflationCurve::from_json(const nlohmann::json& j) {
    std::map<int, double> f;
    for (const auto& [k, v] : j.at("factors").items()) f[std::stoi(k)] = v.get<double>();
    return InflationCurve(j.at("base_year").get<int>(), std::move(f));
}

namespace {

std::vector<ClaimRecord> rescale(std::vector<ClaimRecord> claims, const InflationCurve& curve, bool divide) {
    for (auto& c : claims) {
        for (auto& s : c.snapshots) {
            const double f = curve.factor(c.calendar_year(s));
            if (divide) {
                s.payment_amount /= f;
                s.reserve /= f;
            } else {
                s.payment_amount *= f;
                s.reserve *= f;
            }
        }
        normalize_bookkeeping(c);
    }
    return claims;
}

}  // namespace

std::vector<ClaimRecord> deflate(std::vector<ClaimRecord> claims, const InflationCurve& curve) {
    return rescale(std::move(claims), curve, true);
}

std::vector<ClaimRecord> reinflate(std::vector<ClaimRecord> claims, const InflationCurve& curve) {
    return rescale(std::move(claims), curve, false);
}

}  // namespace odm
