#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/families.hpp"

namespace odm {

enum class FeatureKind { numeric, categorical };

struct FeatureInfo {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    /// Level names for categorical features; codes are 1..levels.size(),
    /// 0 or NaN is missing.
    std::vector<std::string> levels;

    nlohmann::json to_json() const;
    static FeatureInfo from_json(const nlohmann::json& j);
};

/// Dense row-major feature table. NaN marks a missing value.
struct FeatureMatrix {
    std::vector<FeatureInfo> features;
    std::vector<double> values;

    std::size_t cols() const { return features.size(); }
    std::size_t rows() const { return n_rows_; }
    const double* row(std::size_t i) const { return values.data() + i * features.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * features.size() + j]; }
    void add_row(std::span<const double> r);
    int index(const std::string& name) const;
    /// Rows selected by index, same features.
    FeatureMatrix subset(std::span<const std::size_t> rows) const;

private:
    // Kept separately so tables without columns still count rows.
    std::size_t n_rows_ = 0;
};

inline bool is_missing(const FeatureInfo& f, double v) {
    return std::isnan(v) || (f.kind == FeatureKind::categorical && v <= 0.0);
}

struct ConstantPredictor {
    double value = 0.0;
};

/// Weighted minimizer of the family loss over a constant score.
double constant_fit(const FamilySpec& spec, std::span<const double> y, std::span<const double> w);

/// Mean weighted family loss of the scores f.
double mean_loss(const FamilySpec& spec, std::span<const double> y, std::span<const double> w,
                 std::span<const double> f);

/// Linear score over numeric features (standardized internally) and
/// categorical indicators against the first level.
class LinearPredictor {
public:
    struct Term {
        std::size_t feature = 0;
        int level = 0;  // 0: numeric
        double center = 0.0;
        double scale = 1.0;
        std::string label;
    };

    LinearPredictor() = default;

    /// Newton fit on the family loss with step-halving.
    static LinearPredictor fit(const FamilySpec& spec, const FeatureMatrix& X, std::span<const double> y,
                               std::span<const double> w, const std::optional<LinearPredictor>& start = std::nullopt,
                               std::vector<std::string>* warnings = nullptr);

    /// Builds a predictor from raw-scale coefficients keyed by feature name
    /// (numeric) or "name=level" (categorical). Unlisted terms are zero.
    static LinearPredictor from_coefficients(const std::vector<FeatureInfo>& features, double intercept,
                                             const std::map<std::string, double>& coefficients);

    double predict(const double* row) const;
    /// Intercept and coefficients on the raw feature scale.
    double raw_intercept() const;
    std::map<std::string, double> raw_coefficients() const;

    const std::vector<Term>& terms() const { return terms_; }
    const std::vector<double>& beta() const { return beta_; }

    nlohmann::json to_json() const;
    static LinearPredictor from_json(const nlohmann::json& j);

private:
    static std::vector<Term> make_terms(const FeatureMatrix& X);
    double term_value(const Term& t, const double* row) const;

    std::vector<Term> terms_;
    std::vector<double> beta_;  // beta_[0] is the intercept
};

}  // namespace odm
