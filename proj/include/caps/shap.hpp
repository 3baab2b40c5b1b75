#pragma once

// Exact interventional Shapley values for tree ensembles.
//
// For a foreground row x and one background row b, the game is
// v(S) = f(x_S, b_rest). Walking a tree with both rows at once, every leaf
// reached by some hybrid is reached exactly when the features in A take x's
// side and the features in B take b's side; Shapley values of that indicator
// game have a closed form. Averaging over the background set gives
// phi with base + sum(phi) = f(x), base = mean f(b).

#include <cmath>
#include <span>
#include <vector>

#include "caps/errors.hpp"
#include "caps/gbt.hpp"

namespace caps::shap {

struct ShapValues {
  double base_value = 0.0;
  std::vector<double> phi;
  double prediction = 0.0;
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

class Walker {
public:
  Walker(const gbt::Tree& tree, std::span<const double> x, std::span<const double> b, std::span<double> phi,
         double scale)
      : tree_(tree), x_(x), b_(b), phi_(phi), scale_(scale), side_(x.size(), 0) {}

  void run() { visit(0); }

private:
  void visit(int index) {
    const auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
      leaf(node.value);
      return;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    const int x_child = x_[f] < node.threshold ? node.left : node.right;
    const int b_child = b_[f] < node.threshold ? node.left : node.right;
    if (side_[f] == 1) return visit(x_child);
    if (side_[f] == 2) return visit(b_child);
    if (x_child == b_child) return visit(x_child);

    side_[f] = 1;
    in_a_.push_back(f);
    visit(x_child);
    in_a_.pop_back();
    side_[f] = 2;
    in_b_.push_back(f);
    visit(b_child);
    in_b_.pop_back();
    side_[f] = 0;
  }

  void leaf(double value) {
    const int a = static_cast<int>(in_a_.size());
    const int c = static_cast<int>(in_b_.size());
    if (a == 0 && c == 0) return;
    const double v = value * scale_;
    if (a > 0) {
      const double share = v / (static_cast<double>(a) * binomial(a + c, a));
      for (auto f : in_a_) phi_[f] += share;
    }
    if (c > 0) {
      const double share = v / (static_cast<double>(c) * binomial(a + c, c));
      for (auto f : in_b_) phi_[f] -= share;
    }
  }

  const gbt::Tree& tree_;
  std::span<const double> x_, b_;
  std::span<double> phi_;
  double scale_;
  std::vector<unsigned char> side_;  // 0 unset, 1 follows x, 2 follows b
  std::vector<std::size_t> in_a_, in_b_;
};

}  // namespace detail

inline ShapValues tree_shap(const gbt::RegressionEnsemble& model, std::span<const double> x,
                            const gbt::Matrix& background) {
  if (background.rows == 0) throw InsufficientDataError("explanation needs a nonempty background set");
  if (x.size() != model.n_features || background.cols != model.n_features)
    throw SchemaMismatchError("explanation input has " + std::to_string(x.size()) + " features, model expects " +
                              std::to_string(model.n_features));
  ShapValues out;
  out.phi.assign(x.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(background.rows);
  double base = 0.0;
  for (std::size_t r = 0; r < background.rows; ++r) {
    const auto b = background.row(r);
    base += model.predict(b);
    for (const auto& tree : model.trees) detail::Walker(tree, x, b, out.phi, scale).run();
  }
  out.base_value = base * scale;
  out.prediction = model.predict(x);
  return out;
}

}  // namespace caps::shap
