#include "odm/reporting.hpp"

#include <cmath>
#include <limits>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"

namespace odm {

// ---------------------------------------------------------------- hazards

std::vector<double> q_to_p(std::span<const double> q) {
    for (double v : q)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("q_to_p: hazard outside [0,1]");
    const std::size_t d = q.size() + 1;
    std::vector<double> p(d);
    // survival[j] = prod_{k >= j} (1 - q_k), zero-based over q.
    double surv = 1.0;
    for (std::size_t j = d; j-- > 1;) {
        p[j] = q[j - 1] * surv;
        surv *= 1.0 - q[j - 1];
    }
    p[0] = surv;
    return p;
}

std::vector<double> p_to_q(std::span<const double> p) {
    if (p.empty()) throw DomainError("p_to_q: empty probability vector");
    for (double v : p)
        if (!(v >= 0.0)) throw DomainError("p_to_q: negative probability");
    std::vector<double> q(p.size() - 1);
    num::CompensatedSum prefix;
    prefix.add(p[0]);
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
        prefix.add(p[j + 1]);
        const double s = prefix.value();
        if (!(s > 0.0)) throw DomainError("p_to_q: undefined hazard, zero prefix sum at delay " + std::to_string(j + 2));
        q[j] = std::min(1.0, p[j + 1] / s);
    }
    return q;
}

std::string to_string(HazardLink link) { return link == HazardLink::logit ? "logit" : "cloglog"; }

HazardLink hazard_link_from_string(const std::string& s) {
    if (s == "logit") return HazardLink::logit;
    if (s == "cloglog") return HazardLink::cloglog;
    throw ConfigError("hazard link must be 'logit' or 'cloglog', got '" + s + "'");
}

std::string to_string(HazardStructure s) { return s == HazardStructure::per_delay ? "per_delay" : "pooled"; }

HazardStructure hazard_structure_from_string(const std::string& s) {
    if (s == "per_delay") return HazardStructure::per_delay;
    if (s == "pooled") return HazardStructure::pooled;
    throw ConfigError("hazard structure must be 'per_delay' or 'pooled', got '" + s + "'");
}

// ---------------------------------------------------------------- encoder

LinearEncoder::LinearEncoder(const CovariateSchema& schema, const std::vector<std::string>& names, bool intercept)
    : intercept_(intercept), names_(names) {
    for (const auto& name : names) {
        const std::size_t i = schema.require(name);
        const auto& info = schema.covariates[i];
        if (info.kind == CovariateKind::numeric) {
            terms_.push_back({i, 0, name});
        } else {
            for (std::size_t lv = 2; lv <= info.n_levels(); ++lv)
                terms_.push_back({i, static_cast<int>(lv), name + "=" + info.levels[lv - 1]});
        }
    }
}

void LinearEncoder::encode(std::span<const double> cov, double* out) const {
    std::size_t c = 0;
    if (intercept_) out[c++] = 1.0;
    for (const auto& t : terms_) {
        const double v = cov[t.covariate];
        out[c++] = t.level == 0 ? v : (static_cast<int>(v) == t.level ? 1.0 : 0.0);
    }
}

std::vector<std::string> LinearEncoder::labels() const {
    std::vector<std::string> out;
    if (intercept_) out.emplace_back("(intercept)");
    for (const auto& t : terms_) out.push_back(t.label);
    return out;
}

nlohmann::json LinearEncoder::to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : terms_) terms.push_back({{"covariate", t.covariate}, {"level", t.level}, {"label", t.label}});
    return {{"intercept", intercept_}, {"covariates", names_}, {"terms", terms}};
}

LinearEncoder LinearEncoder::from_json(const nlohmann::json& j) {
    LinearEncoder e;
    e.intercept_ = j.at("intercept").get<bool>();
    e.names_ = j.at("covariates").get<std::vector<std::string>>();
    for (const auto& t : j.at("terms"))
        e.terms_.push_back({t.at("covariate").get<std::size_t>(), t.at("level").get<int>(),
                            t.at("label").get<std::string>()});
    return e;
}

// ---------------------------------------------------------------- model

namespace {

GlmFamily glm_family(HazardLink link) {
    return link == HazardLink::logit ? GlmFamily::binomial_logit : GlmFamily::binomial_cloglog;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double ReportingModel::lambda(std::span<const double> cov) const {
    std::vector<double> row(occurrence_encoder.width());
    occurrence_encoder.encode(cov, row.data());
    double eta = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) eta += row[c] * occurrence_beta[static_cast<Eigen::Index>(c)];
    return std::exp(std::min(eta, 700.0));
}

std::vector<double> ReportingModel::hazards(std::span<const double> cov) const {
    std::vector<double> q(static_cast<std::size_t>(d - 1));
    std::vector<double> row(hazard_encoder.width());
    hazard_encoder.encode(cov, row.data());
    const GlmFamily fam = glm_family(link);
    for (int k = 0; k + 1 < d; ++k) {
        double eta = 0.0;
        if (structure == HazardStructure::per_delay) {
            const auto& b = hazard_beta[static_cast<std::size_t>(k)];
            for (std::size_t c = 0; c < row.size(); ++c) eta += row[c] * b[static_cast<Eigen::Index>(c)];
        } else {
            const auto& b = hazard_beta[0];
            eta = b[k];
            for (std::size_t c = 0; c < row.size(); ++c) eta += row[c] * b[d - 1 + static_cast<Eigen::Index>(c)];
        }
        q[static_cast<std::size_t>(k)] = binomial_mean(fam, eta);
    }
    return q;
}

std::vector<double> ReportingModel::probabilities(std::span<const double> cov) const {
    if (d == 1) return {1.0};
    return q_to_p(hazards(cov));
}

Eigen::VectorXd ReportingModel::coefficients() const {
    Eigen::Index n = occurrence_beta.size();
    for (const auto& b : hazard_beta) n += b.size();
    Eigen::VectorXd all(n);
    Eigen::Index at = 0;
    all.segment(at, occurrence_beta.size()) = occurrence_beta;
    at += occurrence_beta.size();
    for (const auto& b : hazard_beta) {
        all.segment(at, b.size()) = b;
        at += b.size();
    }
    return all;
}

nlohmann::json ReportingModel::to_json() const {
    nlohmann::json hz = nlohmann::json::array();
    for (const auto& b : hazard_beta) hz.push_back(vec_json(b));
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index r = 0; r < occurrence_cov.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(occurrence_cov.cols()));
        for (Eigen::Index c = 0; c < occurrence_cov.cols(); ++c) row[static_cast<std::size_t>(c)] = occurrence_cov(r, c);
        cov.push_back(row);
    }
    return {{"max_delay", d},
            {"link", to_string(link)},
            {"structure", to_string(structure)},
            {"occurrence_encoder", occurrence_encoder.to_json()},
            {"hazard_encoder", hazard_encoder.to_json()},
            {"occurrence_labels", occurrence_encoder.labels()},
            {"occurrence_beta", vec_json(occurrence_beta)},
            {"occurrence_covariance", cov},
            {"hazard_beta", hz}};
}

ReportingModel ReportingModel::from_json(const nlohmann::json& j) {
    ReportingModel m;
    m.d = j.at("max_delay").get<int>();
    m.link = hazard_link_from_string(j.at("link").get<std::string>());
    m.structure = hazard_structure_from_string(j.at("structure").get<std::string>());
    m.occurrence_encoder = LinearEncoder::from_json(j.at("occurrence_encoder"));
    m.hazard_encoder = LinearEncoder::from_json(j.at("hazard_encoder"));
    m.occurrence_beta = json_vec(j.at("occurrence_beta"));
    const auto& cov = j.at("occurrence_covariance");
    const auto k = static_cast<Eigen::Index>(cov.size());
    m.occurrence_cov = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index r = 0; r < k; ++r)
        for (Eigen::Index c = 0; c < k; ++c)
            m.occurrence_cov(r, c) = cov[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    for (const auto& b : j.at("hazard_beta")) m.hazard_beta.push_back(json_vec(b));
    return m;
}

// ---------------------------------------------------------------- EM steps

Eigen::MatrixXd e_step(const ReportingModel& model, const Portfolio& pf) {
    const auto n = static_cast<Eigen::Index>(pf.policies.size());
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(n, model.d);
    parallel_for(pf.policies.size(), [&](std::size_t i) {
        const auto& p = pf.policies[i];
        if (p.exposure <= 0.0) return;
        const auto r = static_cast<Eigen::Index>(i);
        const int tau = p.observed_years();
        for (int j = 0; j < tau; ++j) N(r, j) = static_cast<double>(p.reported_counts[static_cast<std::size_t>(j)]);
        if (tau >= model.d) return;
        const double mu = p.exposure * model.lambda(p.covariates);
        const auto prob = model.probabilities(p.covariates);
        for (int j = tau; j < model.d; ++j) N(r, j) = mu * prob[static_cast<std::size_t>(j)];
    });
    return N;
}

GlmFit m_step_occurrence(const Eigen::MatrixXd& N, const Portfolio& pf, const LinearEncoder& enc,
                         const std::optional<Eigen::VectorXd>& start) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pf.policies.size(); ++i)
        if (pf.policies[i].exposure > 0.0) rows.push_back(i);
    GlmProblem prob;
    prob.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(enc.width()));
    prob.y.resize(prob.X.rows());
    prob.offset.resize(prob.X.rows());
    std::vector<double> buf(enc.width());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& p = pf.policies[rows[r]];
        enc.encode(p.covariates, buf.data());
        for (std::size_t c = 0; c < buf.size(); ++c)
            prob.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buf[c];
        prob.y[static_cast<Eigen::Index>(r)] = N.row(static_cast<Eigen::Index>(rows[r])).sum();
        prob.offset[static_cast<Eigen::Index>(r)] = std::log(p.exposure);
    }
    return fit_glm(GlmFamily::poisson_log, prob, {}, start);
}

std::vector<GlmFit> m_step_reporting(const Eigen::MatrixXd& N, const Portfolio& pf, const LinearEncoder& enc,
                                     HazardLink link, HazardStructure structure,
                                     const std::vector<Eigen::VectorXd>& start) {
    const int d = static_cast<int>(N.cols());
    std::vector<GlmFit> fits;
    if (d < 2) return fits;
    const GlmFamily fam = glm_family(link);
    std::vector<double> buf(enc.width());
    const auto n = static_cast<Eigen::Index>(pf.policies.size());

    // Cumulative trials per policy: sum_{j <= k+1} N_ij.
    Eigen::MatrixXd cum(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) {
            acc += N(i, j);
            cum(i, j) = acc;
        }
    }

    if (structure == HazardStructure::per_delay) {
        fits.resize(static_cast<std::size_t>(d - 1));
        parallel_for(static_cast<std::size_t>(d - 1), [&](std::size_t k) {
            std::vector<Eigen::Index> rows;
            for (Eigen::Index i = 0; i < n; ++i)
                if (pf.policies[static_cast<std::size_t>(i)].exposure > 0.0 && cum(i, static_cast<Eigen::Index>(k) + 1) > 0.0)
                    rows.push_back(i);
            GlmProblem prob;
            prob.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(enc.width()));
            prob.y.resize(prob.X.rows());
            prob.weights.resize(prob.X.rows());
            std::vector<double> row(enc.width());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                enc.encode(pf.policies[static_cast<std::size_t>(rows[r])].covariates, row.data());
                for (std::size_t c = 0; c < row.size(); ++c)
                    prob.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
                prob.y[static_cast<Eigen::Index>(r)] = N(rows[r], static_cast<Eigen::Index>(k) + 1);
                prob.weights[static_cast<Eigen::Index>(r)] = cum(rows[r], static_cast<Eigen::Index>(k) + 1);
            }
            std::optional<Eigen::VectorXd> s;
            if (k < start.size()) s = start[k];
            if (rows.empty()) {
                GlmFit f;
                f.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(enc.width()));
                if (enc.intercept()) f.beta[0] = -40.0;
                f.covariance = Eigen::MatrixXd::Zero(f.beta.size(), f.beta.size());
                f.boundary = true;
                f.warnings.push_back("hazard " + std::to_string(k + 1) + ": empty stratum, coefficients pinned");
                fits[k] = std::move(f);
                return;
            }
            fits[k] = fit_glm(fam, prob, {}, s);
        });
        return fits;
    }

    // Pooled: one row per (policy, hazard index).
    const auto w = static_cast<Eigen::Index>(enc.width());
    std::vector<std::pair<Eigen::Index, int>> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (pf.policies[static_cast<std::size_t>(i)].exposure <= 0.0) continue;
        for (int k = 0; k + 1 < d; ++k)
            if (cum(i, k + 1) > 0.0) rows.emplace_back(i, k);
    }
    GlmProblem prob;
    prob.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), d - 1 + w);
    prob.y.resize(prob.X.rows());
    prob.weights.resize(prob.X.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto [i, k] = rows[r];
        const auto rr = static_cast<Eigen::Index>(r);
        prob.X(rr, k) = 1.0;
        enc.encode(pf.policies[static_cast<std::size_t>(i)].covariates, buf.data());
        for (Eigen::Index c = 0; c < w; ++c) prob.X(rr, d - 1 + c) = buf[static_cast<std::size_t>(c)];
        prob.y[rr] = N(i, k + 1);
        prob.weights[rr] = cum(i, k + 1);
    }
    std::optional<Eigen::VectorXd> s;
    if (!start.empty()) s = start[0];
    fits.push_back(fit_glm(fam, prob, {}, s));
    return fits;
}

double observed_loglik(const ReportingModel& model, const Portfolio& pf) {
    std::vector<double> part(pf.policies.size(), 0.0);
    parallel_for(pf.policies.size(), [&](std::size_t i) {
        const auto& p = pf.policies[i];
        if (p.exposure <= 0.0) return;
        const double mu = p.exposure * model.lambda(p.covariates);
        const auto prob = model.probabilities(p.covariates);
        double s = 0.0;
        for (int j = 0; j < p.observed_years(); ++j) {
            const double n = static_cast<double>(p.reported_counts[static_cast<std::size_t>(j)]);
            const double m = mu * prob[static_cast<std::size_t>(j)];
            if (n > 0.0) {
                if (m <= 0.0) {
                    s = -std::numeric_limits<double>::infinity();
                    break;
                }
                s += n * std::log(m) - num::lgamma(n + 1.0);
            }
            s -= m;
        }
        part[i] = s;
    });
    return num::compensated_sum(part);
}

// ---------------------------------------------------------------- EM driver

EMResult fit_em(const Portfolio& pf, const EMOptions& opt) {
    const int d = pf.max_delay;
    if (d < 1) throw ConfigError("fit_em: max_delay must be >= 1");
    EMResult res;
    ReportingModel& m = res.model;
    m.d = d;
    m.link = opt.link;
    m.structure = opt.structure;
    m.occurrence_encoder = LinearEncoder(pf.schema, opt.occurrence_covariates, true);
    m.hazard_encoder = LinearEncoder(pf.schema, opt.hazard_covariates, opt.structure == HazardStructure::per_delay);

    // Initial delay profile: empirical rates among policies observing each delay.
    std::vector<double> num(static_cast<std::size_t>(d), 0.0), den(static_cast<std::size_t>(d), 0.0);
    double total_reported = 0.0;
    bool hidden = false;
    for (const auto& p : pf.policies) {
        if (p.exposure <= 0.0) continue;
        if (p.observed_years() < d) hidden = true;
        for (int j = 0; j < p.observed_years(); ++j) {
            num[static_cast<std::size_t>(j)] += static_cast<double>(p.reported_counts[static_cast<std::size_t>(j)]);
            den[static_cast<std::size_t>(j)] += p.exposure;
            total_reported += static_cast<double>(p.reported_counts[static_cast<std::size_t>(j)]);
        }
    }
    const bool no_claims = total_reported <= 0.0;
    std::vector<double> p0(static_cast<std::size_t>(d));
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        p0[jj] = std::max(den[jj] > 0 ? num[jj] / den[jj] : 0.0, 1e-12);
        sum += p0[jj];
    }
    for (double& v : p0) v /= sum;

    Eigen::MatrixXd observed = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pf.policies.size()), d);
    for (std::size_t i = 0; i < pf.policies.size(); ++i)
        for (int j = 0; j < pf.policies[i].observed_years(); ++j)
            observed(static_cast<Eigen::Index>(i), j) =
                static_cast<double>(pf.policies[i].reported_counts[static_cast<std::size_t>(j)]);
    GlmFit occ0 = m_step_occurrence(observed, pf, m.occurrence_encoder);
    m.occurrence_beta = occ0.beta;
    m.occurrence_cov = occ0.covariance;
    if (d > 1) {
        auto q0 = p_to_q(p0);
        const GlmFamily fam = glm_family(opt.link);
        const auto w = static_cast<Eigen::Index>(m.hazard_encoder.width());
        if (opt.structure == HazardStructure::per_delay) {
            for (int k = 0; k + 1 < d; ++k) {
                Eigen::VectorXd b = Eigen::VectorXd::Zero(w);
                b[0] = binomial_link(fam, std::clamp(q0[static_cast<std::size_t>(k)], 1e-6, 1 - 1e-6));
                m.hazard_beta.push_back(b);
            }
        } else {
            Eigen::VectorXd b = Eigen::VectorXd::Zero(d - 1 + w);
            for (int k = 0; k + 1 < d; ++k)
                b[k] = binomial_link(fam, std::clamp(q0[static_cast<std::size_t>(k)], 1e-6, 1 - 1e-6));
            m.hazard_beta.push_back(b);
        }
    }

    double ll = observed_loglik(m, pf);
    res.trace.loglik.push_back(ll);
    res.trace.max_delta.push_back(0.0);
    if (no_claims) {
        // Intensity at the boundary; the delay profile is not identified.
        for (const auto& w : occ0.warnings) res.trace.warnings.push_back("occurrence: " + w);
        res.trace.warnings.push_back("no reported claims: occurrence intensity at the zero boundary");
        res.trace.iterations = 1;
        res.trace.converged = true;
        return res;
    }
    ReportingModel best = m;
    double best_ll = ll;

    for (int it = 1; it <= opt.max_iter; ++it) {
        const Eigen::MatrixXd N = e_step(m, pf);
        ReportingModel next = m;
        GlmFit occ = m_step_occurrence(N, pf, m.occurrence_encoder, m.occurrence_beta);
        next.occurrence_beta = occ.beta;
        next.occurrence_cov = occ.covariance;
        for (const auto& w : occ.warnings) res.trace.warnings.push_back("iteration " + std::to_string(it) + ": occurrence: " + w);
        auto hz = m_step_reporting(N, pf, m.hazard_encoder, opt.link, opt.structure, m.hazard_beta);
        for (std::size_t k = 0; k < hz.size(); ++k) {
            next.hazard_beta[k] = hz[k].beta;
            for (const auto& w : hz[k].warnings)
                res.trace.warnings.push_back("iteration " + std::to_string(it) + ": hazard: " + w);
        }
        const double ll_new = observed_loglik(next, pf);
        const double delta = (next.coefficients() - m.coefficients()).cwiseAbs().maxCoeff();
        res.trace.loglik.push_back(ll_new);
        res.trace.max_delta.push_back(delta);
        res.trace.iterations = it;
        const double rel = std::abs(ll_new - ll) / std::max(std::abs(ll), 1e-300);
        m = std::move(next);
        if (ll_new >= best_ll) {
            best_ll = ll_new;
            best = m;
        }
        ll = ll_new;
        if (!hidden || (rel < opt.tol && (delta < opt.coef_tol || !std::isfinite(opt.tol)))) {
            res.trace.converged = true;
            break;
        }
    }
    if (!res.trace.converged) {
        res.trace.warnings.push_back("EM reached max_iter without converging; returning best iterate");
        m = best;
    }
    return res;
}

nlohmann::json EMTrace::to_json() const {
    return {{"loglik", loglik}, {"max_delta", max_delta}, {"iterations", iterations},
            {"converged", converged}, {"warnings", warnings}};
}

UnreportedPrediction predict_unreported(const ReportingModel& model, const PolicyRecord& p) {
    UnreportedPrediction out;
    if (p.observed_years() >= model.d || p.exposure <= 0.0) return out;
    const double mu = p.exposure * model.lambda(p.covariates);
    const auto prob = model.probabilities(p.covariates);
    num::CompensatedSum s;
    for (int j = p.observed_years(); j < model.d; ++j) {
        const double v = mu * prob[static_cast<std::size_t>(j)];
        out.by_delay[j + 1] = v;
        s.add(v);
    }
    out.total = s.value();
    return out;
}

}  // namespace odm
