#pragma once

// CART-style regression trees, one per output, split by greedy reduction of
// the sum of squared errors.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace idcdr::tree {

struct TreeOptions {
    std::size_t max_depth = 6;
    std::size_t min_leaf = 5;
};

struct Node {
    bool leaf = true;
    std::size_t dim = 0;
    double threshold = 0.0;  // go left when x[dim] <= threshold
    std::size_t left = 0, right = 0;
    double value = 0.0;      // mean of the training targets in this node
    std::size_t count = 0;
};

struct Split {
    std::size_t dim = 0;
    double threshold = 0.0;
    double gain = 0.0;  // reduction in sum of squared errors
    bool found = false;
};

// Best single split of the rows `idx` of X for targets y. Thresholds are
// midpoints between consecutive distinct values; ties keep the lowest
// dimension, then the lowest threshold.
inline Split best_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::span<const std::size_t> idx,
                        std::size_t min_leaf) {
    Split best;
    const std::size_t n = idx.size();
    if (n < 2 * std::max<std::size_t>(min_leaf, 1)) return best;
    double total = 0.0, total_sq = 0.0;
    for (std::size_t i : idx) {
        total += y(static_cast<Eigen::Index>(i));
        total_sq += y(static_cast<Eigen::Index>(i)) * y(static_cast<Eigen::Index>(i));
    }
    const double sse_parent = total_sq - total * total / static_cast<double>(n);
    std::vector<std::size_t> order(idx.begin(), idx.end());
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return X(static_cast<Eigen::Index>(a), d) < X(static_cast<Eigen::Index>(b), d);
        });
        double left = 0.0, left_sq = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double v = y(static_cast<Eigen::Index>(order[k]));
            left += v;
            left_sq += v * v;
            const double xa = X(static_cast<Eigen::Index>(order[k]), d);
            const double xb = X(static_cast<Eigen::Index>(order[k + 1]), d);
            const std::size_t nl = k + 1, nr = n - nl;
            if (xa == xb || nl < min_leaf || nr < min_leaf) continue;
            const double right = total - left, right_sq = total_sq - left_sq;
            const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                               (right_sq - right * right / static_cast<double>(nr));
            const double gain = sse_parent - sse;
            if (gain > best.gain + 1e-12 * std::max(1.0, sse_parent)) {
                best = {static_cast<std::size_t>(d), 0.5 * (xa + xb), gain, true};
            }
        }
    }
    return best;
}

class RegressionTree {
public:
    static RegressionTree fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TreeOptions& opt = {}) {
        if (X.rows() != y.size()) throw InputError("fit_tree: number of inputs and outputs differ");
        if (y.size() < 1) throw InputError("fit_tree: at least one sample required");
        if (opt.min_leaf < 1) throw InputError("fit_tree: min_leaf must be >= 1");
        RegressionTree t;
        t.dim_ = static_cast<std::size_t>(X.cols());
        std::vector<std::size_t> idx(static_cast<std::size_t>(y.size()));
        std::iota(idx.begin(), idx.end(), 0);
        t.grow(X, y, idx, 0, opt);
        return t;
    }

    double predict(std::span<const double> x) const {
        if (x.size() != dim_) throw InputError("predict_tree: input dimension mismatch");
        std::size_t n = 0;
        while (!nodes_[n].leaf) n = x[nodes_[n].dim] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
        return nodes_[n].value;
    }

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t dim() const noexcept { return dim_; }

    std::size_t depth() const {
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        std::size_t d = 0;
        while (!stack.empty()) {
            auto [n, k] = stack.back();
            stack.pop_back();
            d = std::max(d, k);
            if (!nodes_[n].leaf) {
                stack.push_back({nodes_[n].left, k + 1});
                stack.push_back({nodes_[n].right, k + 1});
            }
        }
        return d;
    }

private:
    std::vector<Node> nodes_;
    std::size_t dim_ = 0;

    std::size_t grow(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::size_t>& idx,
                     std::size_t depth, const TreeOptions& opt) {
        const std::size_t id = nodes_.size();
        nodes_.emplace_back();
        double sum = 0.0;
        for (std::size_t i : idx) sum += y(static_cast<Eigen::Index>(i));
        nodes_[id].value = sum / static_cast<double>(idx.size());
        nodes_[id].count = idx.size();
        if (depth >= opt.max_depth) return id;
        const Split s = best_split(X, y, idx, opt.min_leaf);
        if (!s.found) return id;
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx)
            (X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s.dim)) <= s.threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        nodes_[id].leaf = false;
        nodes_[id].dim = s.dim;
        nodes_[id].threshold = s.threshold;
        const std::size_t l = grow(X, y, left, depth + 1, opt);
        const std::size_t r = grow(X, y, right, depth + 1, opt);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }
};

// One tree per output column of Y.
struct TreeModel {
    std::vector<RegressionTree> trees;

    std::vector<double> predict(std::span<const double> x) const {
        std::vector<double> out;
        out.reserve(trees.size());
        for (const auto& t : trees) out.push_back(t.predict(x));
        return out;
    }
};

inline TreeModel fit_tree(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TreeOptions& opt = {}) {
    if (X.rows() != Y.rows()) throw InputError("fit_tree: number of inputs and outputs differ");
    TreeModel m;
    for (Eigen::Index j = 0; j < Y.cols(); ++j) m.trees.push_back(RegressionTree::fit(X, Y.col(j), opt));
    return m;
}

inline std::vector<double> predict_tree(const TreeModel& m, std::span<const double> x) { return m.predict(x); }

} // namespace idcdr::tree
