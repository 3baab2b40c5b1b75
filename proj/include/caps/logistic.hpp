#pragma once

// Multinomial logistic regression, fitted by damped Newton iterations.
// Objective: sum_i cross_entropy_i + (l2 / 2) * ||coef||^2; intercepts carry
// only a tiny ridge so the softmax redundancy does not make the Hessian
// singular.

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "caps/errors.hpp"

namespace caps::logistic {

inline constexpr double kTolerance = 1e-6;
inline constexpr int kMaxIterations = 1000;
inline constexpr double kInterceptRidge = 1e-8;

/// Column z-scoring with population statistics; constant columns map to 0.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw InsufficientDataError("cannot standardize an empty matrix");
    Standardizer s;
    s.mean = x.colwise().mean();
    s.std = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    return s;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = x.rowwise() - mean;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (std(j) > 0.0)
        z.col(j) /= std(j);
      else
        z.col(j).setZero();
    }
    return z;
  }
};

struct Model {
  int n_classes = 0;
  Eigen::MatrixXd coef;  // n_classes x n_features
  Eigen::VectorXd intercept;
  double l2 = 0.0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd probabilities(const Eigen::VectorXd& x) const {
    Eigen::VectorXd m = coef * x + intercept;
    m.array() -= m.maxCoeff();
    m = m.array().exp();
    return m / m.sum();
  }

  int predict(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd m = coef * x + intercept;
    Eigen::Index best = 0;
    m.maxCoeff(&best);
    return static_cast<int>(best);
  }
};

namespace detail {

inline double objective(const Eigen::MatrixXd& x, std::span<const int> y, const Eigen::MatrixXd& w,
                        const Eigen::VectorXd& b, double l2) {
  const Eigen::MatrixXd margins = (x * w.transpose()).rowwise() + b.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double top = margins.row(i).maxCoeff();
    const double lse = top + std::log((margins.row(i).array() - top).exp().sum());
    loss += lse - margins(i, y[static_cast<std::size_t>(i)]);
  }
  return loss + 0.5 * l2 * w.squaredNorm() + 0.5 * kInterceptRidge * b.squaredNorm();
}

}  // namespace detail

/// Labels must lie in [0, n_classes) and every class must appear.
inline Model fit(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes, double l2) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != y.size()) throw InsufficientDataError("logistic fit needs matching X and y");
  if (n_classes < 2) throw DegenerateLabelsError("logistic fit needs at least 2 classes");
  if (!(l2 >= 0.0)) throw ValidationError("logistic_l2", "must be >= 0");
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (int label : y) {
    if (label < 0 || label >= n_classes) throw ValidationError("label", "out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int k = 0; k < n_classes; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw DegenerateLabelsError("class " + std::to_string(k) + " has no training rows");

  const Eigen::Index K = n_classes;
  const Eigen::Index p = d + 1;  // per-class block: coefficients then intercept
  Model m;
  m.n_classes = n_classes;
  m.l2 = l2;
  m.coef = Eigen::MatrixXd::Zero(K, d);
  m.intercept = Eigen::VectorXd::Zero(K);

  Eigen::MatrixXd xt(n, p);
  xt.leftCols(d) = x;
  xt.col(d).setOnes();

  double current = detail::objective(x, y, m.coef, m.intercept, l2);
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    m.iterations = iter;
    Eigen::MatrixXd prob = (x * m.coef.transpose()).rowwise() + m.intercept.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      prob.row(i).array() -= prob.row(i).maxCoeff();
      prob.row(i) = prob.row(i).array().exp();
      prob.row(i) /= prob.row(i).sum();
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(K * p);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(K * p, K * p);
    for (Eigen::Index k = 0; k < K; ++k) {
      Eigen::VectorXd r = prob.col(k);
      for (Eigen::Index i = 0; i < n; ++i)
        if (y[static_cast<std::size_t>(i)] == k) r(i) -= 1.0;
      grad.segment(k * p, p) = xt.transpose() * r;
      grad.segment(k * p, d) += l2 * m.coef.row(k).transpose();
      grad(k * p + d) += kInterceptRidge * m.intercept(k);
      for (Eigen::Index l = k; l < K; ++l) {
        Eigen::VectorXd s = -prob.col(k).cwiseProduct(prob.col(l));
        if (l == k) s += prob.col(k);
        const Eigen::MatrixXd block = xt.transpose() * s.asDiagonal() * xt;
        hess.block(k * p, l * p, p, p) = block;
        if (l != k) hess.block(l * p, k * p, p, p) = block.transpose();
      }
      for (Eigen::Index j = 0; j < d; ++j) hess(k * p + j, k * p + j) += l2;
      hess(k * p + d, k * p + d) += kInterceptRidge;
    }

    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::MatrixXd w_new;
    Eigen::VectorXd b_new;
    double next = current;
    for (int halving = 0; halving < 40; ++halving) {
      w_new = m.coef;
      b_new = m.intercept;
      for (Eigen::Index k = 0; k < K; ++k) {
        w_new.row(k) -= t * step.segment(k * p, d).transpose();
        b_new(k) -= t * step(k * p + d);
      }
      next = detail::objective(x, y, w_new, b_new, l2);
      if (next <= current) break;
      t /= 2.0;
    }
    const double change = t * step.cwiseAbs().maxCoeff();
    if (next <= current) {
      m.coef = w_new;
      m.intercept = b_new;
      current = next;
    }
    if (change < kTolerance || !(next <= current)) {
      m.converged = change < kTolerance;
      break;
    }
  }
  return m;
}

}  // namespace caps::logistic
