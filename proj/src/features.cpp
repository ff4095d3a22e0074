#include "odm/features.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "odm/error.hpp"
#include "odm/numeric.hpp"

namespace odm {

nlohmann::json FeatureInfo::to_json() const {
    nlohmann::json j{{"name", name}, {"type", kind == FeatureKind::numeric ? "numeric" : "categorical"}};
    if (kind == FeatureKind::categorical) j["levels"] = levels;
    return j;
}

FeatureInfo FeatureInfo::from_json(const nlohmann::json& j) {
    FeatureInfo f;
    f.name = j.at("name").get<std::string>();
    f.kind = j.at("type").get<std::string>() == "numeric" ? FeatureKind::numeric : FeatureKind::categorical;
    f.levels = j.value("levels", std::vector<std::string>{});
    return f;
}

void FeatureMatrix::add_row(std::span<const double> r) {
    if (r.size() != features.size()) throw DomainError("FeatureMatrix: row width mismatch");
    values.insert(values.end(), r.begin(), r.end());
    ++n_rows_;
}

int FeatureMatrix::index(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return static_cast<int>(i);
    return -1;
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
    FeatureMatrix out;
    out.features = features;
    out.values.reserve(rows.size() * features.size());
    for (std::size_t r : rows) out.values.insert(out.values.end(), row(r), row(r) + features.size());
    out.n_rows_ = rows.size();
    return out;
}

namespace {

double weight_at(std::span<const double> w, std::size_t i) { return w.empty() ? 1.0 : w[i]; }

double initial_guess(const FamilySpec& s, std::span<const double> y, std::span<const double> w) {
    num::CompensatedSum sy, sw;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double wi = weight_at(w, i);
        double v = y[i];
        if (s.family == Family::logit_gaussian) v = num::logit(y[i]);
        if (s.family == Family::power_trunc_gaussian && s.power != 1.0) v = std::pow(y[i], s.power);
        sy.add(wi * v);
        sw.add(wi);
    }
    const double m = sw.value() > 0 ? sy.value() / sw.value() : 0.0;
    switch (s.family) {
        case Family::binary: return num::logit(std::clamp(m, 1e-6, 1 - 1e-6));
        case Family::gamma: return std::log(std::max(m, 1e-300));
        default: return m;
    }
}

}  // namespace

double mean_loss(const FamilySpec& s, std::span<const double> y, std::span<const double> w,
                 std::span<const double> f) {
    num::CompensatedSum acc, sw;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double wi = weight_at(w, i);
        acc.add(wi * family_loss(s, y[i], f[i]));
        sw.add(wi);
    }
    return sw.value() > 0 ? acc.value() / sw.value() : 0.0;
}

double constant_fit(const FamilySpec& s, std::span<const double> y, std::span<const double> w) {
    if (y.empty()) throw DomainError("constant_fit: no observations");
    double c = initial_guess(s, y, w);
    if (s.family != Family::power_trunc_gaussian) return c;  // closed form for the other families
    auto total = [&](double v) {
        num::CompensatedSum a;
        for (std::size_t i = 0; i < y.size(); ++i) a.add(weight_at(w, i) * family_loss(s, y[i], v));
        return a.value();
    };
    double cur = total(c);
    for (int it = 0; it < 200; ++it) {
        double g = 0.0, h = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double wi = weight_at(w, i);
            g += wi * family_gradient(s, y[i], c);
            h += wi * family_hessian(s, y[i], c);
        }
        if (!(h > 0.0)) break;
        double step = -g / h;
        double next = total(c + step);
        int halvings = 0;
        while (!(next <= cur) && halvings < 50) {
            step *= 0.5;
            next = total(c + step);
            ++halvings;
        }
        if (!(next <= cur)) break;
        c += step;
        const bool done = std::abs(cur - next) <= 1e-14 * (std::abs(cur) + 1.0) || std::abs(step) < 1e-14;
        cur = next;
        if (done) break;
    }
    return c;
}

// ---------------------------------------------------------------- linear

std::vector<LinearPredictor::Term> LinearPredictor::make_terms(const FeatureMatrix& X) {
    std::vector<Term> terms;
    const std::size_t n = X.rows();
    for (std::size_t j = 0; j < X.cols(); ++j) {
        const auto& f = X.features[j];
        if (f.kind == FeatureKind::numeric) {
            num::CompensatedSum s, s2;
            std::size_t m = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = X.at(i, j);
                if (std::isnan(v)) continue;
                s.add(v);
                ++m;
            }
            const double mean = m ? s.value() / static_cast<double>(m) : 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = X.at(i, j);
                if (!std::isnan(v)) s2.add((v - mean) * (v - mean));
            }
            const double sd = m > 1 ? std::sqrt(s2.value() / static_cast<double>(m)) : 0.0;
            if (sd > 0.0) terms.push_back({j, 0, mean, sd, f.name});
        } else {
            for (std::size_t lv = 2; lv <= f.levels.size(); ++lv) {
                bool present = false;
                for (std::size_t i = 0; i < n && !present; ++i) present = X.at(i, j) == static_cast<double>(lv);
                if (present) terms.push_back({j, static_cast<int>(lv), 0.0, 1.0, f.name + "=" + f.levels[lv - 1]});
            }
        }
    }
    return terms;
}

double LinearPredictor::term_value(const Term& t, const double* row) const {
    const double v = row[t.feature];
    if (t.level == 0) return std::isnan(v) ? 0.0 : (v - t.center) / t.scale;
    return v == static_cast<double>(t.level) ? 1.0 : 0.0;
}

double LinearPredictor::predict(const double* row) const {
    double f = beta_.empty() ? 0.0 : beta_[0];
    for (std::size_t k = 0; k < terms_.size(); ++k) f += beta_[k + 1] * term_value(terms_[k], row);
    return f;
}

LinearPredictor LinearPredictor::fit(const FamilySpec& s, const FeatureMatrix& X, std::span<const double> y,
                                     std::span<const double> w, const std::optional<LinearPredictor>& start,
                                     std::vector<std::string>* warnings) {
    const std::size_t n = X.rows();
    if (n == 0) throw DomainError("LinearPredictor::fit: no rows");
    LinearPredictor lp;
    lp.terms_ = make_terms(X);
    const std::size_t p = lp.terms_.size() + 1;
    lp.beta_.assign(p, 0.0);
    lp.beta_[0] = constant_fit(s, y, w);
    if (start && start->terms_.size() == lp.terms_.size()) lp.beta_ = start->beta_;

    Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i) {
        Z(static_cast<Eigen::Index>(i), 0) = 1.0;
        for (std::size_t k = 0; k < lp.terms_.size(); ++k)
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) = lp.term_value(lp.terms_[k], X.row(i));
    }
    Eigen::VectorXd beta = Eigen::Map<Eigen::VectorXd>(lp.beta_.data(), static_cast<Eigen::Index>(p));
    Eigen::VectorXd wv(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) wv[static_cast<Eigen::Index>(i)] = weight_at(w, i);

    auto objective = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd f = Z * b;
        num::CompensatedSum a;
        for (std::size_t i = 0; i < n; ++i) a.add(wv[static_cast<Eigen::Index>(i)] * family_loss(s, y[i], f[static_cast<Eigen::Index>(i)]));
        return a.value();
    };
    double cur = objective(beta);
    bool converged = false;
    Eigen::VectorXd g(n), h(n);
    for (int it = 0; it < 200; ++it) {
        const Eigen::VectorXd f = Z * beta;
        for (std::size_t i = 0; i < n; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            g[ii] = wv[ii] * family_gradient(s, y[i], f[ii]);
            h[ii] = wv[ii] * family_hessian(s, y[i], f[ii]);
        }
        const Eigen::VectorXd grad = Z.transpose() * g;
        Eigen::MatrixXd H = Z.transpose() * h.asDiagonal() * Z;
        H.diagonal().array() += 1e-10 * std::max(1.0, H.diagonal().maxCoeff());
        Eigen::VectorXd step = -H.ldlt().solve(grad);
        if (!step.allFinite()) break;
        double next = objective(beta + step);
        int halvings = 0;
        while (!(next <= cur) && halvings < 50) {
            step *= 0.5;
            next = objective(beta + step);
            ++halvings;
        }
        if (!(next <= cur)) {
            converged = true;
            break;
        }
        beta += step;
        const bool done = std::abs(cur - next) <= 1e-13 * (std::abs(cur) + 1.0) || step.cwiseAbs().maxCoeff() < 1e-12;
        cur = next;
        if (done) {
            converged = true;
            break;
        }
    }
    if (!converged && warnings) warnings->push_back("linear fit reached the iteration limit");
    for (std::size_t k = 0; k < p; ++k) lp.beta_[k] = beta[static_cast<Eigen::Index>(k)];
    return lp;
}

LinearPredictor LinearPredictor::from_coefficients(const std::vector<FeatureInfo>& features, double intercept,
                                                   const std::map<std::string, double>& coefficients) {
    LinearPredictor lp;
    lp.beta_.push_back(intercept);
    std::size_t used = 0;
    for (std::size_t j = 0; j < features.size(); ++j) {
        const auto& f = features[j];
        if (f.kind == FeatureKind::numeric) {
            auto it = coefficients.find(f.name);
            if (it == coefficients.end()) continue;
            lp.terms_.push_back({j, 0, 0.0, 1.0, f.name});
            lp.beta_.push_back(it->second);
            ++used;
        } else {
            for (std::size_t lv = 2; lv <= f.levels.size(); ++lv) {
                const std::string label = f.name + "=" + f.levels[lv - 1];
                auto it = coefficients.find(label);
                if (it == coefficients.end()) continue;
                lp.terms_.push_back({j, static_cast<int>(lv), 0.0, 1.0, label});
                lp.beta_.push_back(it->second);
                ++used;
            }
        }
    }
    if (used != coefficients.size()) throw ConfigError("linear predictor: coefficient for unknown feature term");
    return lp;
}

double LinearPredictor::raw_intercept() const {
    double b0 = beta_.empty() ? 0.0 : beta_[0];
    for (std::size_t k = 0; k < terms_.size(); ++k)
        if (terms_[k].level == 0) b0 -= beta_[k + 1] * terms_[k].center / terms_[k].scale;
    return b0;
}

std::map<std::string, double> LinearPredictor::raw_coefficients() const {
    std::map<std::string, double> out;
    for (std::size_t k = 0; k < terms_.size(); ++k)
        out[terms_[k].label] = terms_[k].level == 0 ? beta_[k + 1] / terms_[k].scale : beta_[k + 1];
    return out;
}

nlohmann::json LinearPredictor::to_json() const {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : terms_)
        terms.push_back({{"feature", t.feature}, {"level", t.level}, {"center", t.center}, {"scale", t.scale},
                         {"label", t.label}});
    return {{"terms", terms}, {"beta", beta_}};
}

LinearPredictor LinearPredictor::from_json(const nlohmann::json& j) {
    LinearPredictor lp;
    for (const auto& t : j.at("terms"))
        lp.terms_.push_back({t.at("feature").get<std::size_t>(), t.at("level").get<int>(), t.at("center").get<double>(),
                             t.at("scale").get<double>(), t.at("label").get<std::string>()});
    lp.beta_ = j.at("beta").get<std::vector<double>>();
    if (lp.beta_.size() != lp.terms_.size() + 1) throw SchemaError("linear predictor: coefficient count mismatch");
    return lp;
}

}  // namespace odm
