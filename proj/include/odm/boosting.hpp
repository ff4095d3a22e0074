#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "odm/features.hpp"

namespace odm {

struct GbmConfig {
    int n_trees = 100;
    int interaction_depth = 2;
    double shrinkage = 0.1;
    int min_node_obs = 10;
    double bag_fraction = 0.5;
    int cv_folds = 5;

    void validate() const;
    nlohmann::json to_json() const;
    static GbmConfig from_json(const nlohmann::json& j);
};

struct TreeNode {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;
    /// Categorical splits: per level code, 1 = left, 0 = right, -1 = unseen
    /// in training (follows the missing direction).
    std::vector<std::int8_t> category_side;
    bool missing_left = false;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double gain = 0.0;
    int n_obs = 0;
    int depth = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    /// Leaf reached by a feature row.
    const TreeNode& leaf(const double* row) const;
    int depth() const;
};

struct GbmEnsemble {
    FamilySpec family;
    std::vector<FeatureInfo> features;
    double initial = 0.0;
    double shrinkage = 1.0;
    std::vector<Tree> trees;
    GbmConfig config;

    /// initial + shrinkage * sum of leaf values.
    double predict(const double* row) const;
    nlohmann::json to_json() const;
    static GbmEnsemble from_json(const nlohmann::json& j);
};

GbmEnsemble fit_gbm(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                    std::span<const double> w, const GbmConfig& config, std::uint64_t seed,
                    std::vector<std::string>* warnings = nullptr);

struct CvRow {
    GbmConfig config;
    double mean_loss = 0.0;
    std::vector<double> fold_losses;
};

struct TuneResult {
    GbmConfig best;
    double best_loss = 0.0;
    std::vector<CvRow> table;

    nlohmann::json to_json() const;
};

/// K-fold cross validation over a grid; binary targets use stratified folds.
TuneResult tune_gbm(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                    std::span<const double> w, const std::vector<GbmConfig>& grid, int folds, std::uint64_t seed);

/// Deterministic fold labels; stratified by class for binary targets.
std::vector<int> assign_folds(const FamilySpec& family, std::span<const double> y, int folds, std::uint64_t seed);

/// Split-gain importance per feature, normalized to sum 1 (all zero when unused).
std::vector<double> variable_importance(const GbmEnsemble& ensemble);

/// Mean link-scale prediction over `background` with the feature forced to each grid value.
std::vector<double> partial_dependence(const GbmEnsemble& ensemble, const std::string& feature,
                                       std::span<const double> grid, const FeatureMatrix& background);

}  // namespace odm
