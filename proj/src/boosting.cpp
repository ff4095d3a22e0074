#include "odm/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odm/error.hpp"
#include "odm/numeric.hpp"
#include "odm/parallel.hpp"
#include "odm/rng.hpp"

namespace odm {

void GbmConfig::validate() const {
    if (n_trees < 0) throw ConfigError("gbm: n_trees must be >= 0");
    if (interaction_depth < 1) throw ConfigError("gbm: interaction_depth must be >= 1");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("gbm: shrinkage must be in (0,1]");
    if (min_node_obs < 1) throw ConfigError("gbm: min_node_obs must be >= 1");
    if (!(bag_fraction > 0.0 && bag_fraction <= 1.0)) throw ConfigError("gbm: bag_fraction must be in (0,1]");
    if (cv_folds < 2) throw ConfigError("gbm: cv_folds must be >= 2");
}

nlohmann::json GbmConfig::to_json() const {
    return {{"n_trees", n_trees},           {"interaction_depth", interaction_depth},
            {"shrinkage", shrinkage},       {"min_node_obs", min_node_obs},
            {"bag_fraction", bag_fraction}, {"cv_folds", cv_folds}};
}

GbmConfig GbmConfig::from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"n_trees",      "interaction_depth", "shrinkage",
                                                "min_node_obs", "bag_fraction",      "cv_folds"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("gbm: unknown key '" + k + "'");
    GbmConfig c;
    c.n_trees = j.value("n_trees", c.n_trees);
    c.interaction_depth = j.value("interaction_depth", c.interaction_depth);
    c.shrinkage = j.value("shrinkage", c.shrinkage);
    c.min_node_obs = j.value("min_node_obs", c.min_node_obs);
    c.bag_fraction = j.value("bag_fraction", c.bag_fraction);
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.validate();
    return c;
}

// ---------------------------------------------------------------- trees

const TreeNode& Tree::leaf(const double* row) const {
    const TreeNode* n = &nodes[0];
    while (n->feature >= 0) {
        const double v = row[n->feature];
        bool go_left;
        if (std::isnan(v)) {
            go_left = n->missing_left;
        } else if (n->category_side.empty()) {
            go_left = v <= n->threshold;
        } else {
            const auto code = static_cast<long>(v);
            if (code <= 0 || code >= static_cast<long>(n->category_side.size()) ||
                n->category_side[static_cast<std::size_t>(code)] < 0)
                go_left = n->missing_left;
            else
                go_left = n->category_side[static_cast<std::size_t>(code)] == 1;
        }
        n = &nodes[static_cast<std::size_t>(go_left ? n->left : n->right)];
    }
    return *n;
}

int Tree::depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

double GbmEnsemble::predict(const double* row) const {
    double f = 0.0;
    for (const auto& t : trees) f += t.leaf(row).value;
    return initial + shrinkage * f;
}

nlohmann::json GbmEnsemble::to_json() const {
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : features) feats.push_back(f.to_json());
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : trees) {
        nlohmann::json ns = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            nlohmann::json j{{"feature", n.feature}, {"value", n.value}, {"n", n.n_obs}, {"depth", n.depth}};
            if (n.feature >= 0) {
                j["left"] = n.left;
                j["right"] = n.right;
                j["missing_left"] = n.missing_left;
                j["gain"] = n.gain;
                if (n.category_side.empty())
                    j["threshold"] = n.threshold;
                else
                    j["category_side"] = n.category_side;
            }
            ns.push_back(j);
        }
        ts.push_back(ns);
    }
    return {{"format", "odm-gbm"}, {"version", 1},          {"family", family.to_json()},
            {"features", feats},   {"initial", initial},    {"shrinkage", shrinkage},
            {"config", config.to_json()}, {"trees", ts}};
}

GbmEnsemble GbmEnsemble::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "odm-gbm" || j.value("version", 0) != 1)
        throw SchemaError("gbm ensemble: unsupported format or version");
    GbmEnsemble e;
    e.family = FamilySpec::from_json(j.at("family"));
    for (const auto& f : j.at("features")) e.features.push_back(FeatureInfo::from_json(f));
    e.initial = j.at("initial").get<double>();
    e.shrinkage = j.at("shrinkage").get<double>();
    e.config = GbmConfig::from_json(j.at("config"));
    for (const auto& ts : j.at("trees")) {
        Tree t;
        for (const auto& nj : ts) {
            TreeNode n;
            n.feature = nj.at("feature").get<int>();
            n.value = nj.at("value").get<double>();
            n.n_obs = nj.at("n").get<int>();
            n.depth = nj.at("depth").get<int>();
            if (n.feature >= 0) {
                n.left = nj.at("left").get<int>();
                n.right = nj.at("right").get<int>();
                n.missing_left = nj.at("missing_left").get<bool>();
                n.gain = nj.at("gain").get<double>();
                if (nj.contains("category_side"))
                    n.category_side = nj.at("category_side").get<std::vector<std::int8_t>>();
                else
                    n.threshold = nj.at("threshold").get<double>();
            }
            t.nodes.push_back(std::move(n));
        }
        e.trees.push_back(std::move(t));
    }
    return e;
}

// ---------------------------------------------------------------- fitting

namespace {

constexpr std::uint16_t kMissingBin = 0xFFFF;
constexpr int kMaxBins = 255;

struct BinnedData {
    std::size_t n = 0, p = 0;
    std::vector<std::vector<double>> cuts;  // numeric features
    std::vector<int> n_bins;
    std::vector<std::uint16_t> bins;  // row-major
};

BinnedData bin_features(const FeatureMatrix& X) {
    BinnedData b;
    b.n = X.rows();
    b.p = X.cols();
    b.cuts.resize(b.p);
    b.n_bins.resize(b.p);
    b.bins.resize(b.n * b.p);
    for (std::size_t j = 0; j < b.p; ++j) {
        const auto& f = X.features[j];
        if (f.kind == FeatureKind::categorical) {
            b.n_bins[j] = static_cast<int>(f.levels.size()) + 1;
            for (std::size_t i = 0; i < b.n; ++i) {
                const double v = X.at(i, j);
                const bool miss = is_missing(f, v) || v > static_cast<double>(f.levels.size());
                b.bins[i * b.p + j] = miss ? kMissingBin : static_cast<std::uint16_t>(v);
            }
            continue;
        }
        std::vector<double> vals;
        vals.reserve(b.n);
        for (std::size_t i = 0; i < b.n; ++i)
            if (!std::isnan(X.at(i, j))) vals.push_back(X.at(i, j));
        std::sort(vals.begin(), vals.end());
        std::vector<double> uniq = vals;
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        auto& cuts = b.cuts[j];
        if (uniq.size() <= static_cast<std::size_t>(kMaxBins)) {
            for (std::size_t k = 0; k + 1 < uniq.size(); ++k) cuts.push_back(0.5 * (uniq[k] + uniq[k + 1]));
        } else {
            for (int k = 1; k < kMaxBins; ++k) {
                const double q = num::quantile_sorted(vals, static_cast<double>(k) / kMaxBins);
                // Cut between distinct values so thresholds are never tied with data.
                auto it = std::upper_bound(uniq.begin(), uniq.end(), q);
                if (it == uniq.end() || it == uniq.begin()) continue;
                const double c = 0.5 * (*(it - 1) + *it);
                if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
            }
        }
        b.n_bins[j] = static_cast<int>(cuts.size()) + 1;
        for (std::size_t i = 0; i < b.n; ++i) {
            const double v = X.at(i, j);
            b.bins[i * b.p + j] = std::isnan(v) ? kMissingBin
                                                : static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
        }
    }
    return b;
}

struct Stats {
    double g = 0.0, h = 0.0, w = 0.0;
    long c = 0;
    void add(const Stats& o) {
        g += o.g;
        h += o.h;
        w += o.w;
        c += o.c;
    }
    Stats minus(const Stats& o) const { return {g - o.g, h - o.h, w - o.w, c - o.c}; }
};

double score(const Stats& s) { return s.h > 0.0 ? s.g * s.g / s.h : 0.0; }

struct Candidate {
    double gain = 0.0;
    int feature = -1;
    int bin = -1;                        // numeric: left iff bin <= this
    std::vector<std::int8_t> cat_side;   // categorical
    bool missing_left = false;
};

struct Builder {
    const BinnedData& B;
    const FeatureMatrix& X;
    const std::vector<double>& G;
    const std::vector<double>& H;
    const std::vector<double>& W;
    int min_obs;

    // Routes missing rows to the heavier side and scores the split.
    bool evaluate(const Stats& total, Stats left, Stats right, const Stats& miss, bool& missing_left, double& gain) const {
        missing_left = left.w >= right.w;
        if (missing_left)
            left.add(miss);
        else
            right.add(miss);
        if (left.c < min_obs || right.c < min_obs) return false;
        if (!(left.h > 0.0) || !(right.h > 0.0)) return false;
        gain = score(left) + score(right) - score(total);
        return true;
    }

    Candidate best_split(const std::vector<std::uint32_t>& rows, const Stats& total) const {
        Candidate best;
        for (std::size_t j = 0; j < B.p; ++j) {
            const int nb = B.n_bins[j];
            std::vector<Stats> hist(static_cast<std::size_t>(nb));
            Stats miss;
            for (std::uint32_t r : rows) {
                const std::uint16_t bin = B.bins[r * B.p + j];
                Stats s{G[r], H[r], W[r], 1};
                if (bin == kMissingBin)
                    miss.add(s);
                else
                    hist[bin].add(s);
            }
            const Stats present = total.minus(miss);
            if (X.features[j].kind == FeatureKind::numeric) {
                Stats left;
                for (int b = 0; b + 1 < nb; ++b) {
                    left.add(hist[static_cast<std::size_t>(b)]);
                    if (hist[static_cast<std::size_t>(b)].c == 0) continue;
                    bool ml;
                    double gain;
                    if (!evaluate(total, left, present.minus(left), miss, ml, gain)) continue;
                    if (gain > best.gain) {
                        best.gain = gain;
                        best.feature = static_cast<int>(j);
                        best.bin = b;
                        best.cat_side.clear();
                        best.missing_left = ml;
                    }
                }
                continue;
            }
            std::vector<int> levels;
            for (int b = 1; b < nb; ++b)
                if (hist[static_cast<std::size_t>(b)].c > 0) levels.push_back(b);
            const auto m = levels.size();
            if (m < 2) continue;
            auto consider = [&](const std::vector<int>& left_levels) {
                Stats left;
                for (int lv : left_levels) left.add(hist[static_cast<std::size_t>(lv)]);
                bool ml;
                double gain;
                if (!evaluate(total, left, present.minus(left), miss, ml, gain)) return;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<int>(j);
                    best.bin = -1;
                    best.cat_side.assign(static_cast<std::size_t>(nb), -1);
                    for (int lv : levels) best.cat_side[static_cast<std::size_t>(lv)] = 0;
                    for (int lv : left_levels) best.cat_side[static_cast<std::size_t>(lv)] = 1;
                    best.missing_left = ml;
                }
            };
            std::vector<int> left_levels;
            if (m <= 8) {
                // The last present level stays right so complements are not revisited.
                for (unsigned mask = 1; mask < (1U << (m - 1)); ++mask) {
                    left_levels.clear();
                    for (std::size_t k = 0; k + 1 < m; ++k)
                        if (mask & (1U << k)) left_levels.push_back(levels[k]);
                    consider(left_levels);
                }
            } else {
                std::vector<int> order = levels;
                std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                    const auto& sa = hist[static_cast<std::size_t>(a)];
                    const auto& sb = hist[static_cast<std::size_t>(b)];
                    return sa.g / sa.h < sb.g / sb.h;
                });
                for (std::size_t k = 0; k + 1 < m; ++k) {
                    left_levels.push_back(order[k]);
                    consider(left_levels);
                }
            }
        }
        return best;
    }
};

}  // namespace

GbmEnsemble fit_gbm(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                    std::span<const double> w, const GbmConfig& cfg, std::uint64_t seed,
                    std::vector<std::string>* warnings) {
    cfg.validate();
    const std::size_t n = X.rows();
    if (y.size() != n || (!w.empty() && w.size() != n)) throw DomainError("fit_gbm: length mismatch");
    for (double v : y) check_support(family, v);
    GbmEnsemble e;
    e.family = family;
    e.features = X.features;
    e.shrinkage = cfg.shrinkage;
    e.config = cfg;
    e.initial = constant_fit(family, y, w);
    if (cfg.n_trees == 0) return e;
    if (n < static_cast<std::size_t>(2 * cfg.min_node_obs))
        throw DomainError("fit_gbm: need at least 2 * min_node_obs rows");
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
        if (warnings) warnings->push_back("constant target: ensemble has no trees");
        return e;
    }

    const BinnedData B = bin_features(X);
    std::vector<double> f(n, e.initial), G(n), Hs(n), W(n);
    for (std::size_t i = 0; i < n; ++i) W[i] = w.empty() ? 1.0 : w[i];
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0U);
    const auto n_bag = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.bag_fraction * static_cast<double>(n))));
    Builder builder{B, X, G, Hs, W, cfg.min_node_obs};

    for (int t = 0; t < cfg.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            G[i] = W[i] * family_gradient(family, y[i], f[i]);
            Hs[i] = W[i] * family_hessian(family, y[i], f[i]);
        }
        std::vector<std::uint32_t> bag;
        if (n_bag >= n) {
            bag = all;
        } else {
            Rng rng = Rng::stream(seed, {static_cast<std::uint64_t>(t)});
            std::vector<std::uint32_t> idx = all;
            for (std::size_t k = 0; k < n_bag; ++k) {
                const std::size_t r = k + rng.below(n - k);
                std::swap(idx[k], idx[r]);
            }
            bag.assign(idx.begin(), idx.begin() + static_cast<long>(n_bag));
            std::sort(bag.begin(), bag.end());
        }

        Tree tree;
        std::vector<std::vector<std::uint32_t>> node_rows;
        tree.nodes.emplace_back();
        node_rows.push_back(std::move(bag));
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            const auto& rows = node_rows[k];
            Stats total;
            for (std::uint32_t r : rows) total.add({G[r], Hs[r], W[r], 1});
            tree.nodes[k].n_obs = static_cast<int>(total.c);
            tree.nodes[k].value = total.h > 0.0 ? -total.g / total.h : 0.0;
            if (tree.nodes[k].depth >= cfg.interaction_depth) continue;
            const Candidate c = builder.best_split(rows, total);
            if (c.feature < 0 || !(c.gain > 1e-12)) continue;
            std::vector<std::uint32_t> lrows, rrows;
            for (std::uint32_t r : rows) {
                const std::uint16_t bin = B.bins[r * B.p + static_cast<std::size_t>(c.feature)];
                bool left;
                if (bin == kMissingBin)
                    left = c.missing_left;
                else if (c.cat_side.empty())
                    left = bin <= c.bin;
                else
                    left = c.cat_side[bin] == 1;
                (left ? lrows : rrows).push_back(r);
            }
            TreeNode& node = tree.nodes[k];
            node.feature = c.feature;
            node.gain = c.gain;
            node.missing_left = c.missing_left;
            if (c.cat_side.empty())
                node.threshold = B.cuts[static_cast<std::size_t>(c.feature)][static_cast<std::size_t>(c.bin)];
            else
                node.category_side = c.cat_side;
            const int depth = node.depth + 1;
            node.left = static_cast<int>(tree.nodes.size());
            node.right = node.left + 1;
            TreeNode l, r;
            l.depth = r.depth = depth;
            tree.nodes.push_back(l);
            tree.nodes.push_back(r);
            node_rows.push_back(std::move(lrows));
            node_rows.push_back(std::move(rrows));
        }
        for (std::size_t i = 0; i < n; ++i) f[i] += cfg.shrinkage * tree.leaf(X.row(i)).value;
        e.trees.push_back(std::move(tree));
    }
    return e;
}

// ---------------------------------------------------------------- tuning

std::vector<int> assign_folds(const FamilySpec& family, std::span<const double> y, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross validation needs at least 2 folds");
    std::vector<int> fold(y.size(), 0);
    auto deal = [&](std::vector<std::size_t> idx, std::uint64_t salt) {
        Rng rng = Rng::stream(seed, {0xF01DULL, salt});
        for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
        for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    };
    if (family.family == Family::binary) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0.5 ? pos : neg).push_back(i);
        for (const auto* cls : {&pos, &neg})
            if (!cls->empty() && cls->size() < static_cast<std::size_t>(folds))
                throw DomainError("stratified folds impossible: a class has fewer members than folds");
        deal(pos, 1);
        deal(neg, 0);
    } else {
        std::vector<std::size_t> idx(y.size());
        std::iota(idx.begin(), idx.end(), 0);
        deal(idx, 2);
    }
    return fold;
}

nlohmann::json TuneResult::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table) rows.push_back({{"config", r.config.to_json()}, {"mean_loss", r.mean_loss}, {"fold_losses", r.fold_losses}});
    return {{"best", best.to_json()}, {"best_loss", best_loss}, {"table", rows}};
}

TuneResult tune_gbm(const FamilySpec& family, const FeatureMatrix& X, std::span<const double> y,
                    std::span<const double> w, const std::vector<GbmConfig>& grid, int folds, std::uint64_t seed) {
    if (grid.empty()) throw ConfigError("tune_gbm: empty grid");
    const std::vector<int> fold = assign_folds(family, y, folds, seed);
    const std::size_t nk = static_cast<std::size_t>(folds);
    std::vector<double> losses(grid.size() * nk);
    parallel_for(grid.size() * nk, [&](std::size_t task) {
        const std::size_t g = task / nk;
        const int k = static_cast<int>(task % nk);
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < y.size(); ++i) (fold[i] == k ? te : tr).push_back(i);
        auto pick = [&](const std::vector<std::size_t>& idx, std::span<const double> v) {
            std::vector<double> out;
            if (v.empty()) return out;
            for (std::size_t i : idx) out.push_back(v[i]);
            return out;
        };
        const FeatureMatrix Xtr = X.subset(tr);
        const auto ytr = pick(tr, y), wtr = pick(tr, w), yte = pick(te, y), wte = pick(te, w);
        const GbmEnsemble e = fit_gbm(family, Xtr, ytr, wtr, grid[g], Rng::stream(seed, {g, static_cast<std::uint64_t>(k)})());
        std::vector<double> f(te.size());
        for (std::size_t r = 0; r < te.size(); ++r) f[r] = e.predict(X.row(te[r]));
        losses[task] = mean_loss(family, yte, wte, f);
    });

    TuneResult res;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CvRow row;
        row.config = grid[g];
        row.fold_losses.assign(losses.begin() + static_cast<long>(g * nk), losses.begin() + static_cast<long>((g + 1) * nk));
        row.mean_loss = num::mean(row.fold_losses);
        res.table.push_back(row);
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < res.table.size(); ++g) {
        const auto& a = res.table[g];
        const auto& b = res.table[best];
        const double tol = 1e-12 * std::max(std::abs(a.mean_loss), std::abs(b.mean_loss));
        if (a.mean_loss < b.mean_loss - tol) {
            best = g;
        } else if (std::abs(a.mean_loss - b.mean_loss) <= tol) {
            if (a.config.n_trees < b.config.n_trees ||
                (a.config.n_trees == b.config.n_trees && a.config.interaction_depth < b.config.interaction_depth))
                best = g;
        }
    }
    res.best = res.table[best].config;
    res.best_loss = res.table[best].mean_loss;
    return res;
}

// ---------------------------------------------------------------- diagnostics

std::vector<double> variable_importance(const GbmEnsemble& e) {
    std::vector<double> imp(e.features.size(), 0.0);
    for (const auto& t : e.trees)
        for (const auto& n : t.nodes)
            if (n.feature >= 0) imp[static_cast<std::size_t>(n.feature)] += 0.5 * n.gain;
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

std::vector<double> partial_dependence(const GbmEnsemble& e, const std::string& feature, std::span<const double> grid,
                                       const FeatureMatrix& background) {
    int j = -1;
    for (std::size_t k = 0; k < e.features.size(); ++k)
        if (e.features[k].name == feature) j = static_cast<int>(k);
    if (j < 0) throw DomainError("partial_dependence: unknown feature '" + feature + "'");
    if (background.rows() == 0) throw DomainError("partial_dependence: empty background");
    std::vector<double> out;
    std::vector<double> row(background.cols());
    for (double g : grid) {
        num::CompensatedSum s;
        for (std::size_t i = 0; i < background.rows(); ++i) {
            std::copy(background.row(i), background.row(i) + background.cols(), row.begin());
            row[static_cast<std::size_t>(j)] = g;
            s.add(e.predict(row.data()));
        }
        out.push_back(s.value() / static_cast<double>(background.rows()));
    }
    return out;
}

}  // namespace odm
