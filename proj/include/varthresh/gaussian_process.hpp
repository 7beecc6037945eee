// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-process regression on the unit box: Matern-5/2 kernel with one length scale
// per input, constant mean estimated by generalised least squares, and a noise variance
// estimated with the other hyperparameters by maximising the marginal likelihood.

#pragma once
#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "varthresh/error.hpp"
#include "varthresh/nelder_mead.hpp"
#include "varthresh/random.hpp"

namespace varthresh {

struct GpPrediction {
  double mean = 0.0;
  double sd = 0.0;  // of the latent function, noise excluded
};

class GaussianProcess {
 public:
  // x: one row per observation, coordinates in [0, 1]. y: observed values.
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::uint64_t seed, int restarts = 3) {
    if (x.rows() != y.size() || x.rows() < 2) throw NumericError("Gaussian process needs at least 2 observations");
    x_ = x;
    const double mu = y.mean();
    const double sd = std::sqrt((y.array() - mu).square().sum() / static_cast<double>(y.size()));
    y_shift_ = mu;
    y_scale_ = sd > 0.0 ? sd : 1.0;
    ys_ = (y.array() - y_shift_) / y_scale_;
    const auto d = static_cast<std::size_t>(x.cols());

    auto objective = [&](const std::vector<double>& h) { return neg_log_marginal(h); };
    Rng rng = make_rng(seed, 7);
    std::vector<double> best;
    double best_val = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(restarts, 1); ++r) {
      std::vector<double> h(d + 2);
      for (std::size_t j = 0; j < d; ++j) h[j] = r == 0 ? std::log(0.3) : std::log(0.05) + uniform01(rng) * std::log(20.0);
      h[d] = r == 0 ? 0.0 : -1.0 + 2.0 * uniform01(rng);
      h[d + 1] = r == 0 ? std::log(1e-2) : std::log(1e-4) + uniform01(rng) * std::log(1e3);
      std::vector<double> step(d + 2, 0.5);
      const auto res = nelder_mead(objective, h, step, {1e-4, 0.0, 400 * static_cast<int>(d + 2)});
      if (res.value < best_val) {
        best_val = res.value;
        best = res.x;
      }
    }
    if (!std::isfinite(best_val)) throw NumericError("Gaussian process hyperparameter fit failed");
    set_hyper(best);
  }

  [[nodiscard]] GpPrediction predict(const Eigen::VectorXd& x) const {
    const auto n = x_.rows();
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = signal_ * matern52(x, x_.row(i).transpose());
    const double m = mean_ + k.dot(alpha_);
    const Eigen::VectorXd v = chol_.matrixL().solve(k);
    const double var = std::max(signal_ - v.squaredNorm(), 1e-12 * signal_);
    return {y_shift_ + y_scale_ * m, y_scale_ * std::sqrt(var)};
  }

  [[nodiscard]] const std::vector<double>& length_scales() const noexcept { return ell_; }
  [[nodiscard]] double noise_variance() const noexcept { return noise_ * y_scale_ * y_scale_; }

 private:
  [[nodiscard]] double matern52(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double r2 = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      const double t = (a(j) - b(j)) / ell_[static_cast<std::size_t>(j)];
      r2 += t * t;
    }
    const double r = std::sqrt(5.0 * r2);
    return (1.0 + r + r * r / 3.0) * std::exp(-r);
  }

  // Hyperparameters h = (log l_1..l_d, log signal variance, log noise variance); false if
  // outside the box or numerically singular.
  bool set_hyper(const std::vector<double>& h) {
    const auto d = static_cast<std::size_t>(x_.cols());
    ell_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (h[j] < std::log(0.01) || h[j] > std::log(20.0)) return false;
      ell_[j] = std::exp(h[j]);
    }
    if (h[d] < -8.0 || h[d] > 5.0) return false;
    if (h[d + 1] < std::log(1e-8) || h[d + 1] > std::log(2.0)) return false;
    signal_ = std::exp(h[d]);
    noise_ = std::exp(h[d + 1]);
    const auto n = x_.rows();
    Eigen::MatrixXd kmat(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v = signal_ * matern52(x_.row(i).transpose(), x_.row(j).transpose());
        kmat(i, j) = v;
        kmat(j, i) = v;
      }
      kmat(i, i) += noise_ + 1e-10;
    }
    chol_.compute(kmat);
    if (chol_.info() != Eigen::Success) return false;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd ki1 = chol_.solve(ones);
    const Eigen::VectorXd kiy = chol_.solve(ys_);
    mean_ = ones.dot(kiy) / ones.dot(ki1);
    alpha_ = chol_.solve(ys_ - mean_ * ones);
    return true;
  }

  double neg_log_marginal(const std::vector<double>& h) {
    if (!set_hyper(h)) return std::numeric_limits<double>::infinity();
    const Eigen::VectorXd r = ys_.array() - mean_;
    double logdet = 0.0;
    const Eigen::MatrixXd l = chol_.matrixL();
    for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += std::log(l(i, i));
    return 0.5 * r.dot(alpha_) + logdet;
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd ys_;
  double y_shift_ = 0.0;
  double y_scale_ = 1.0;
  std::vector<double> ell_;
  double signal_ = 1.0;
  double noise_ = 1e-2;
  double mean_ = 0.0;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
};

[[nodiscard]] inline double expected_improvement(const GpPrediction& p, double best) noexcept {
  if (!(p.sd > 0.0)) return std::max(best - p.mean, 0.0);
  const double z = (best - p.mean) / p.sd;
  const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
  return (best - p.mean) * cdf + p.sd * pdf;
}

}  // namespace varthresh
