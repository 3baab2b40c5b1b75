#pragma once

// Gradient-boosted regression trees (second-order, exact greedy splits).
//
// One tree learner serves two objectives: squared error for the EQI
// regressor and softmax cross-entropy for the tier classifier. Split search
// scans per-feature presorted row lists that are stably partitioned as the
// tree grows, so each depth level costs O(features * rows).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caps/errors.hpp"
#include "caps/rng.hpp"

namespace caps::gbt {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }

  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(data.data() + idx[i] * cols, cols, out.data.data() + i * cols);
    return out;
  }
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (already scaled by the learning rate)
  double cover = 0.0;  // hessian sum
  double gain = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  int depth() const { return depth_from(0); }

private:
  int depth_from(int i) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    return n.is_leaf() ? 0 : 1 + std::max(depth_from(n.left), depth_from(n.right));
  }
};

struct TreeParams {
  int max_depth = 3;
  double learning_rate = 0.1;
  int n_estimators = 100;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double reg_lambda = 1.0;
  double min_child_weight = 1.0;
  double min_split_gain = 0.0;
};

inline void validate(const TreeParams& p) {
  if (p.max_depth < 1) throw ValidationError("max_depth", "must be >= 1");
  if (!(p.learning_rate > 0.0)) throw ValidationError("learning_rate", "must be > 0");
  if (p.n_estimators < 1) throw ValidationError("n_estimators", "must be >= 1");
  if (!(p.subsample > 0.0 && p.subsample <= 1.0)) throw ValidationError("subsample", "out of (0,1]");
  if (!(p.colsample_bytree > 0.0 && p.colsample_bytree <= 1.0)) throw ValidationError("colsample_bytree", "out of (0,1]");
  if (!(p.reg_lambda >= 0.0)) throw ValidationError("reg_lambda", "must be >= 0");
  if (!(p.min_child_weight >= 0.0)) throw ValidationError("min_child_weight", "must be >= 0");
}

namespace detail {

// Row order of each column, ascending by value (stable by row index).
inline std::vector<std::vector<std::uint32_t>> presort(const Matrix& x) {
  std::vector<std::vector<std::uint32_t>> order(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    auto& o = order[f];
    o.resize(x.rows);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return order;
}

class TreeBuilder {
public:
  TreeBuilder(const Matrix& x, const std::vector<std::vector<std::uint32_t>>& presorted, const TreeParams& params)
      : x_(x), presorted_(presorted), params_(params), goes_left_(x.rows, 0) {}

  Tree build(std::span<const double> grad, std::span<const double> hess, std::span<const std::size_t> rows,
             std::span<const std::size_t> features, std::vector<double>& gain_importance) {
    grad_ = grad;
    hess_ = hess;
    features_ = features;
    importance_ = &gain_importance;
    m_ = rows.size();

    std::vector<char> in_sample(x_.rows, 0);
    for (auto r : rows) in_sample[r] = 1;
    lists_.assign(features.size() * m_, 0);
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      std::uint32_t* out = lists_.data() + fi * m_;
      for (auto r : presorted_[features[fi]])
        if (in_sample[r]) *out++ = r;
    }
    scratch_.resize(m_);

    double g = 0.0, h = 0.0;
    for (auto r : rows) {
      g += grad[r];
      h += hess[r];
    }
    tree_ = Tree{};
    grow(0, 0, m_, g, h);
    return std::move(tree_);
  }

private:
  double leaf_value(double g, double h) const { return -g / (h + params_.reg_lambda) * params_.learning_rate; }

  double score(double g, double h) const { return g * g / (h + params_.reg_lambda); }

  int grow(int depth, std::size_t begin, std::size_t end, double g, double h) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{});
    tree_.nodes.back().value = leaf_value(g, h);
    tree_.nodes.back().cover = h;
    if (depth >= params_.max_depth || end - begin < 2) return index;

    struct Best {
      double gain = 0.0;
      std::size_t feature_slot = 0;
      double threshold = 0.0;
      std::size_t left_count = 0;
      double gl = 0.0, hl = 0.0;
      bool found = false;
    } best;

    const double parent = score(g, h);
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      const std::size_t f = features_[fi];
      const std::uint32_t* list = lists_.data() + fi * m_;
      double gl = 0.0, hl = 0.0;
      for (std::size_t p = begin; p + 1 < end; ++p) {
        const auto r = list[p];
        gl += grad_[r];
        hl += hess_[r];
        const double here = x_(r, f);
        const double next = x_(list[p + 1], f);
        if (!(next > here)) continue;
        const double hr = h - hl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        const double gain = 0.5 * (score(gl, hl) + score(g - gl, hr) - parent);
        if (gain > best.gain) {
          double threshold = here + (next - here) / 2.0;
          if (!(here < threshold)) threshold = next;
          best = {gain, fi, threshold, p + 1 - begin, gl, hl, true};
        }
      }
    }
    if (!best.found || best.gain <= std::max(params_.min_split_gain, 1e-12)) return index;

    const std::size_t f = features_[best.feature_slot];
    for (std::size_t p = begin; p < end; ++p) {
      const auto r = lists_[best.feature_slot * m_ + p];
      goes_left_[r] = x_(r, f) < best.threshold;
    }
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      std::uint32_t* list = lists_.data() + fi * m_;
      std::size_t l = begin, s = 0;
      for (std::size_t p = begin; p < end; ++p) {
        if (goes_left_[list[p]])
          list[l++] = list[p];
        else
          scratch_[s++] = list[p];
      }
      std::copy_n(scratch_.begin(), s, list + l);
    }
    (*importance_)[f] += best.gain;

    const std::size_t mid = begin + best.left_count;
    const int left = grow(depth + 1, begin, mid, best.gl, best.hl);
    const int right = grow(depth + 1, mid, end, g - best.gl, h - best.hl);
    auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<int>(f);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    node.gain = best.gain;
    return index;
  }

  const Matrix& x_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  const TreeParams& params_;
  std::span<const double> grad_, hess_;
  std::span<const std::size_t> features_;
  std::vector<double>* importance_ = nullptr;
  std::size_t m_ = 0;
  std::vector<std::uint32_t> lists_;
  std::vector<std::uint32_t> scratch_;
  std::vector<char> goes_left_;
  Tree tree_;
};

inline std::size_t sample_count(double fraction, std::size_t n) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Regression

struct RegressionEnsemble {
  double base_score = 0.0;
  std::vector<Tree> trees;
  std::size_t n_features = 0;
  std::vector<double> gain_importance;

  double predict(std::span<const double> x) const {
    double s = base_score;
    for (const auto& t : trees) s += t.predict(x);
    return s;
  }
};

/// Squared-error boosting. The initial prediction is the label mean; each
/// round draws its row subsample, then its column subsample, from `seed`.
inline RegressionEnsemble fit_regression(const Matrix& x, std::span<const double> y, const TreeParams& params,
                                         std::uint64_t seed) {
  validate(params);
  if (x.rows == 0 || x.rows != y.size()) throw InsufficientDataError("regression needs matching, nonempty X and y");
  RegressionEnsemble model;
  model.n_features = x.cols;
  model.gain_importance.assign(x.cols, 0.0);
  model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  const auto presorted = detail::presort(x);
  detail::TreeBuilder builder(x, presorted, params);
  Rng rng(seed);
  std::vector<double> pred(x.rows, model.base_score), grad(x.rows), hess(x.rows, 1.0);
  const auto n_rows = detail::sample_count(params.subsample, x.rows);
  const auto n_cols = detail::sample_count(params.colsample_bytree, x.cols);
  for (int t = 0; t < params.n_estimators; ++t) {
    for (std::size_t i = 0; i < x.rows; ++i) grad[i] = pred[i] - y[i];
    const auto rows = rng.sample_indices(x.rows, n_rows);
    const auto cols = rng.sample_indices(x.cols, n_cols);
    model.trees.push_back(builder.build(grad, hess, rows, cols, model.gain_importance));
    const auto& tree = model.trees.back();
    for (std::size_t i = 0; i < x.rows; ++i) pred[i] += tree.predict(x.row(i));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Multiclass (softmax cross-entropy, one tree per class per round)

struct MulticlassEnsemble {
  int n_classes = 0;
  std::vector<Tree> trees;  // round-major: trees[round * n_classes + k]
  std::size_t n_features = 0;
  std::vector<double> gain_importance;

  std::vector<double> margins(std::span<const double> x) const {
    std::vector<double> m(static_cast<std::size_t>(n_classes), 0.0);
    for (std::size_t t = 0; t < trees.size(); ++t) m[t % static_cast<std::size_t>(n_classes)] += trees[t].predict(x);
    return m;
  }

  int predict(std::span<const double> x) const {
    const auto m = margins(x);
    return static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
  }
};

inline void softmax_inplace(std::span<double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& e : v) total += (e = std::exp(e - top));
  for (double& e : v) e /= total;
}

inline MulticlassEnsemble fit_multiclass(const Matrix& x, std::span<const int> labels, int n_classes,
                                         const TreeParams& params, std::uint64_t seed) {
  validate(params);
  if (x.rows == 0 || x.rows != labels.size()) throw InsufficientDataError("classifier needs matching, nonempty X and y");
  if (n_classes < 2) throw DegenerateLabelsError("classifier needs at least 2 classes");
  for (int l : labels)
    if (l < 0 || l >= n_classes) throw ValidationError("label", "out of [0," + std::to_string(n_classes) + ")");

  MulticlassEnsemble model;
  model.n_classes = n_classes;
  model.n_features = x.cols;
  model.gain_importance.assign(x.cols, 0.0);

  const auto presorted = detail::presort(x);
  detail::TreeBuilder builder(x, presorted, params);
  Rng rng(seed);
  const auto K = static_cast<std::size_t>(n_classes);
  std::vector<double> margin(x.rows * K, 0.0), prob(x.rows * K), grad(x.rows), hess(x.rows);
  const auto n_rows = detail::sample_count(params.subsample, x.rows);
  const auto n_cols = detail::sample_count(params.colsample_bytree, x.cols);
  for (int round = 0; round < params.n_estimators; ++round) {
    std::copy(margin.begin(), margin.end(), prob.begin());
    for (std::size_t i = 0; i < x.rows; ++i) softmax_inplace(std::span<double>(prob.data() + i * K, K));
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < x.rows; ++i) {
        const double p = prob[i * K + k];
        grad[i] = p - (labels[i] == static_cast<int>(k) ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
      const auto rows = rng.sample_indices(x.rows, n_rows);
      const auto cols = rng.sample_indices(x.cols, n_cols);
      model.trees.push_back(builder.build(grad, hess, rows, cols, model.gain_importance));
      const auto& tree = model.trees.back();
      for (std::size_t i = 0; i < x.rows; ++i) margin[i * K + k] += tree.predict(x.row(i));
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json& j, const Tree& t) {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, value, cover, gain;
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    cover.push_back(n.cover);
    gain.push_back(n.gain);
  }
  j = {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
       {"value", value},     {"cover", cover},         {"gain", gain}};
}

inline void from_json(const nlohmann::json& j, Tree& t) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto cover = j.at("cover").get<std::vector<double>>();
  const auto gain = j.at("gain").get<std::vector<double>>();
  const auto n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || cover.size() != n ||
      gain.size() != n || n == 0)
    throw FormatError("tree", "inconsistent node arrays");
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i], cover[i], gain[i]};
    if (!t.nodes[i].is_leaf() && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                                  left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n)))
      throw FormatError("tree", "child index out of range at node " + std::to_string(i));
  }
}

inline void to_json(nlohmann::json& j, const RegressionEnsemble& m) {
  j = {{"base_score", m.base_score}, {"n_features", m.n_features}, {"gain_importance", m.gain_importance},
       {"trees", m.trees}};
}

inline void from_json(const nlohmann::json& j, RegressionEnsemble& m) {
  m.base_score = j.at("base_score").get<double>();
  m.n_features = j.at("n_features").get<std::size_t>();
  m.gain_importance = j.at("gain_importance").get<std::vector<double>>();
  m.trees = j.at("trees").get<std::vector<Tree>>();
  for (const auto& t : m.trees)
    for (const auto& n : t.nodes)
      if (n.feature >= static_cast<int>(m.n_features)) throw FormatError("tree", "feature index out of range");
}

inline void to_json(nlohmann::json& j, const TreeParams& p) {
  j = {{"max_depth", p.max_depth},
       {"learning_rate", p.learning_rate},
       {"n_estimators", p.n_estimators},
       {"subsample", p.subsample},
       {"column_subsample", p.colsample_bytree},
       {"reg_lambda", p.reg_lambda},
       {"min_child_weight", p.min_child_weight},
       {"min_split_gain", p.min_split_gain}};
}

inline void from_json(const nlohmann::json& j, TreeParams& p) {
  p.max_depth = j.at("max_depth").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.n_estimators = j.at("n_estimators").get<int>();
  p.subsample = j.at("subsample").get<double>();
  p.colsample_bytree = j.at("column_subsample").get<double>();
  p.reg_lambda = j.value("reg_lambda", 1.0);
  p.min_child_weight = j.value("min_child_weight", 1.0);
  p.min_split_gain = j.value("min_split_gain", 0.0);
}

}  // namespace caps::gbt
