// forest.hpp - random forest regressor for fish length (CART, SSE splits).
//
// Trees are grown greedily: at each node a random subset of columns is
// searched over every midpoint between sorted unique values, and the split
// with the largest sum-of-squared-error reduction wins, ties going to the
// lowest feature index and then the lowest threshold. Per-tree seeds are
// derived with stable_hash so training is reproducible and independent of
// any parallel scheduling.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fishboard/common.hpp"

namespace fishboard {

struct ForestParams {
    int n_trees = 200;
    int max_depth = 16;
    int min_leaf = 5;
    int features_per_split = 3;
    bool bootstrap = true;
    std::uint64_t seed = 1;

    void validate(int n_features) const {
        if (n_trees < 1) throw ConfigError("n_trees must be >= 1");
        if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
        if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
        if (features_per_split < 1 || features_per_split > n_features)
            throw ConfigError("features_per_split out of range");
    }
};

// Flat node array; leaves have feature == -1 and carry the prediction.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(const std::vector<double>& x) const {
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

struct ForestModel {
    ForestParams params;
    int n_features = 0;
    std::vector<RegressionTree> trees;
};

using FeatureMatrix = std::vector<std::vector<double>>;

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();
};

namespace detail {

// Two-pass SSE of a candidate split, accumulated in row order. This is the
// same arithmetic an exhaustive split search performs, so scores of tied
// candidates are bitwise comparable to a brute-force oracle.
inline double canonical_split_sse(const FeatureMatrix& X, const std::vector<double>& y,
                                  const std::vector<std::uint32_t>& idx, int col,
                                  double threshold) {
    double sum_l = 0.0, sum_r = 0.0;
    std::size_t n_l = 0, n_r = 0;
    for (std::uint32_t i : idx) {
        if (X[i][static_cast<std::size_t>(col)] < threshold) {
            sum_l += y[i];
            ++n_l;
        } else {
            sum_r += y[i];
            ++n_r;
        }
    }
    const double mean_l = sum_l / static_cast<double>(n_l);
    const double mean_r = sum_r / static_cast<double>(n_r);
    double sse = 0.0;
    for (std::uint32_t i : idx) {
        const double d = X[i][static_cast<std::size_t>(col)] < threshold ? y[i] - mean_l
                                                                         : y[i] - mean_r;
        sse += d * d;
    }
    return sse;
}

// Best split over the given columns by SSE reduction over every midpoint
// between sorted unique values. A fast prefix-sum pass shortlists candidates;
// the survivors are re-scored with canonical_split_sse so that the final
// winner (and its tie-break: lowest feature index, then lowest threshold)
// matches an exhaustive search exactly.
inline SplitChoice best_split(const FeatureMatrix& X, const std::vector<double>& y,
                              const std::vector<std::uint32_t>& idx,
                              const std::vector<int>& columns, int min_leaf) {
    const std::size_t n = idx.size();
    double total = 0.0;
    for (std::uint32_t i : idx) total += y[i];

    struct FastCandidate {
        int col;
        double threshold;
        double score;
    };
    std::vector<FastCandidate> candidates;
    double best_fast = -std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> order(idx);
    for (const int col : columns) {
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = X[a][static_cast<std::size_t>(col)];
            const double vb = X[b][static_cast<std::size_t>(col)];
            return va < vb || (va == vb && a < b);
        });
        double left_sum = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_sum += y[order[i]];
            const double v0 = X[order[i]][static_cast<std::size_t>(col)];
            const double v1 = X[order[i + 1]][static_cast<std::size_t>(col)];
            if (v0 == v1) continue;
            const std::size_t n_left = i + 1, n_right = n - n_left;
            if (n_left < static_cast<std::size_t>(min_leaf) ||
                n_right < static_cast<std::size_t>(min_leaf))
                continue;
            const double right_sum = total - left_sum;
            const double score = left_sum * left_sum / static_cast<double>(n_left) +
                                 right_sum * right_sum / static_cast<double>(n_right);
            candidates.push_back({col, 0.5 * (v0 + v1), score});
            best_fast = std::max(best_fast, score);
        }
    }

    SplitChoice best;
    if (candidates.empty()) return best;
    const double margin = 1e-9 * (std::abs(best_fast) + 1.0);
    double best_sse = std::numeric_limits<double>::infinity();
    for (const FastCandidate& c : candidates) {
        if (c.score < best_fast - margin) continue;
        const double sse = canonical_split_sse(X, y, idx, c.col, c.threshold);
        if (sse < best_sse) {
            best_sse = sse;
            best = {true, c.col, c.threshold, c.score};
        }
    }
    return best;
}

inline void grow(RegressionTree& tree, const FeatureMatrix& X, const std::vector<double>& y,
                 std::vector<std::uint32_t>& idx, int depth, const ForestParams& params,
                 int n_features, Rng& rng, int node_index) {
    const std::size_t n = idx.size();
    double sum = 0.0;
    for (std::uint32_t i : idx) sum += y[i];
    const double mean = sum / static_cast<double>(n);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
    node.value = mean;

    bool constant = true;
    for (std::uint32_t i : idx)
        if (y[i] != y[idx[0]]) { constant = false; break; }
    if (constant || depth >= params.max_depth || n < 2 * static_cast<std::size_t>(params.min_leaf))
        return;

    // column subset, drawn then sorted so ties resolve to the lowest index
    std::vector<int> columns(static_cast<std::size_t>(n_features));
    std::iota(columns.begin(), columns.end(), 0);
    for (int i = 0; i < params.features_per_split; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n_features - i)));
        std::swap(columns[static_cast<std::size_t>(i)], columns[j]);
    }
    columns.resize(static_cast<std::size_t>(params.features_per_split));
    std::sort(columns.begin(), columns.end());

    const SplitChoice split = best_split(X, y, idx, columns, params.min_leaf);
    if (!split.found) return;

    std::vector<std::uint32_t> left_idx, right_idx;
    for (std::uint32_t i : idx) {
        if (X[i][static_cast<std::size_t>(split.feature)] < split.threshold)
            left_idx.push_back(i);
        else
            right_idx.push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();

    const int left_node = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int right_node = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    {
        TreeNode& n2 = tree.nodes[static_cast<std::size_t>(node_index)];
        n2.feature = split.feature;
        n2.threshold = split.threshold;
        n2.left = left_node;
        n2.right = right_node;
    }
    grow(tree, X, y, left_idx, depth + 1, params, n_features, rng, left_node);
    grow(tree, X, y, right_idx, depth + 1, params, n_features, rng, right_node);
}

}  // namespace detail

inline RegressionTree fit_tree(const FeatureMatrix& X, const std::vector<double>& y,
                               const ForestParams& params, std::uint64_t seed) {
    if (X.empty()) throw DataError("fit_tree: empty data");
    if (X.size() != y.size()) throw DataError("fit_tree: row/target count mismatch");
    const int n_features = static_cast<int>(X[0].size());
    params.validate(n_features);
    RegressionTree tree;
    tree.nodes.emplace_back();
    Rng rng(stable_hash(seed, 0x7EEE5ull));
    std::vector<std::uint32_t> idx(X.size());
    std::iota(idx.begin(), idx.end(), 0);
    detail::grow(tree, X, y, idx, 0, params, n_features, rng, 0);
    return tree;
}

// Each tree trains on its own bootstrap resample under a derived seed, so
// the model is bit-identical whether trees are grown serially or in parallel.
inline ForestModel fit_forest(const FeatureMatrix& X, const std::vector<double>& y,
                              const ForestParams& params, int threads = 1) {
    if (X.empty()) throw DataError("fit_forest: empty data");
    if (X.size() != y.size()) throw DataError("fit_forest: row/target count mismatch");
    const int n_features = static_cast<int>(X[0].size());
    params.validate(n_features);

    ForestModel model;
    model.params = params;
    model.n_features = n_features;
    model.trees.resize(static_cast<std::size_t>(params.n_trees));
    parallel_for(static_cast<std::size_t>(params.n_trees), threads, [&](std::size_t t) {
        const std::uint64_t tree_seed = stable_hash(params.seed, static_cast<std::uint64_t>(t));
        if (params.bootstrap) {
            Rng rng(stable_hash(tree_seed, 0xB005ull));
            FeatureMatrix Xb;
            std::vector<double> yb;
            Xb.reserve(X.size());
            yb.reserve(y.size());
            for (std::size_t i = 0; i < X.size(); ++i) {
                const std::size_t j = static_cast<std::size_t>(rng.uniform_int(X.size()));
                Xb.push_back(X[j]);
                yb.push_back(y[j]);
            }
            model.trees[t] = fit_tree(Xb, yb, params, tree_seed);
        } else {
            model.trees[t] = fit_tree(X, y, params, tree_seed);
        }
    });
    return model;
}

// Mean of per-tree predictions, summed in tree order so results do not
// depend on prediction-time parallelism.
inline double predict_forest(const ForestModel& model, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != model.n_features)
        throw DataError("predict_forest: feature dimension mismatch");
    double sum = 0.0;
    for (const RegressionTree& t : model.trees) sum += t.predict(x);
    return sum / static_cast<double>(model.trees.size());
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvReport {
    std::vector<double> fold_mae;
    std::vector<double> fold_r2;
    double pooled_mae = 0.0;
    double pooled_r2 = 0.0;
    std::vector<double> held_out_predictions;  // aligned with the input rows
};

inline CvReport kfold_cv(const FeatureMatrix& X, const std::vector<double>& y, int k,
                         const ForestParams& params, std::uint64_t seed) {
    const std::size_t n = X.size();
    if (k < 2) throw ConfigError("kfold_cv: k must be >= 2");
    if (n < static_cast<std::size_t>(k)) throw DataError("kfold_cv: more folds than rows");
    if (X.size() != y.size()) throw DataError("kfold_cv: row/target count mismatch");

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(stable_hash(seed, 0xF01D5ull));
    rng.shuffle(order);

    // first (n mod k) folds take the extra row
    std::vector<std::vector<std::uint32_t>> folds(static_cast<std::size_t>(k));
    const std::size_t base = n / static_cast<std::size_t>(k);
    const std::size_t extra = n % static_cast<std::size_t>(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
        const std::size_t sz = base + (f < extra ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + sz));
        pos += sz;
    }

    CvReport report;
    report.held_out_predictions.assign(n, 0.0);
    auto metrics = [](const std::vector<double>& pred, const std::vector<double>& truth,
                      double& mae, double& r2) {
        double abs_sum = 0.0, mean = 0.0;
        for (double t : truth) mean += t;
        mean /= static_cast<double>(truth.size());
        double sse = 0.0, sst = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            abs_sum += std::abs(pred[i] - truth[i]);
            sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
            sst += (truth[i] - mean) * (truth[i] - mean);
        }
        mae = abs_sum / static_cast<double>(truth.size());
        r2 = sst > 0.0 ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
    };

    std::vector<double> all_pred, all_truth;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FeatureMatrix Xtr;
        std::vector<double> ytr;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            for (std::uint32_t i : folds[g]) {
                Xtr.push_back(X[i]);
                ytr.push_back(y[i]);
            }
        }
        ForestParams fold_params = params;
        fold_params.seed = stable_hash(params.seed, 0xCFull, static_cast<std::uint64_t>(f));
        const ForestModel model = fit_forest(Xtr, ytr, fold_params);
        std::vector<double> pred, truth;
        for (std::uint32_t i : folds[f]) {
            const double p = predict_forest(model, X[i]);
            report.held_out_predictions[i] = p;
            pred.push_back(p);
            truth.push_back(y[i]);
        }
        double mae = 0.0, r2 = 0.0;
        metrics(pred, truth, mae, r2);
        report.fold_mae.push_back(mae);
        report.fold_r2.push_back(r2);
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_truth.insert(all_truth.end(), truth.begin(), truth.end());
    }
    metrics(all_pred, all_truth, report.pooled_mae, report.pooled_r2);
    return report;
}

// ---------------------------------------------------------------------------
// Versioned JSON model files

inline nlohmann::json forest_params_to_json(const ForestParams& p) {
    return {{"n_trees", p.n_trees},
            {"max_depth", p.max_depth},
            {"min_leaf", p.min_leaf},
            {"features_per_split", p.features_per_split},
            {"bootstrap", p.bootstrap},
            {"seed", p.seed}};
}

inline ForestParams forest_params_from_json(const nlohmann::json& j) {
    ForestParams p;
    p.n_trees = j.value("n_trees", p.n_trees);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.min_leaf = j.value("min_leaf", p.min_leaf);
    p.features_per_split = j.value("features_per_split", p.features_per_split);
    p.bootstrap = j.value("bootstrap", p.bootstrap);
    p.seed = j.value("seed", p.seed);
    return p;
}

inline nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const RegressionTree& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : t.nodes) {
            if (n.feature < 0)
                nodes.push_back({{"p", n.value}});
            else
                nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
        }
        trees.push_back(std::move(nodes));
    }
    return {{"format", "length-forest/1"},
            {"n_features", model.n_features},
            {"params", forest_params_to_json(model.params)},
            {"trees", std::move(trees)}};
}

inline ForestModel forest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "length-forest/1")
        throw DataError("unsupported forest model format");
    ForestModel model;
    model.n_features = j.at("n_features").get<int>();
    model.params = forest_params_from_json(j.at("params"));
    for (const nlohmann::json& tj : j.at("trees")) {
        RegressionTree tree;
        for (const nlohmann::json& nj : tj) {
            TreeNode n;
            if (nj.contains("p")) {
                n.value = nj.at("p").get<double>();
            } else {
                n.feature = nj.at("f").get<int>();
                n.threshold = nj.at("t").get<double>();
                n.left = nj.at("l").get<int>();
                n.right = nj.at("r").get<int>();
            }
            tree.nodes.push_back(n);
        }
        if (tree.nodes.empty()) throw DataError("forest model tree with no nodes");
        model.trees.push_back(std::move(tree));
    }
    if (model.trees.empty()) throw DataError("forest model with no trees");
    return model;
}

}  // namespace fishboard
