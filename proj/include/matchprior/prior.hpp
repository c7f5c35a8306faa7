#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "matchprior/model.hpp"

namespace matchprior {

class PriorSpec {
 public:
  using LogDensity = std::function<double(const Eigen::VectorXd&)>;
  using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using Hessian = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  PriorSpec(std::string label, LogDensity log_pi, Gradient grad = {}, Hessian hess = {});

  const std::string& label() const { return label_; }
  double log_pi(const Eigen::VectorXd& theta) const { return log_pi_(theta); }
  bool has_analytic_derivatives() const { return static_cast<bool>(grad_) && static_cast<bool>(hess_); }

  // d log pi and d^2 log pi; analytic when supplied, otherwise central differences.
  Eigen::VectorXd grad_log(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hess_log(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd grad_log_fd(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd hess_log_fd(const Eigen::VectorXd& theta) const;

  // pi_r / pi and pi_rs / pi.
  Eigen::VectorXd ratio1(const Eigen::VectorXd& theta) const { return grad_log(theta); }
  Eigen::MatrixXd ratio2(const Eigen::VectorXd& theta) const;

  // c * pi: same ratios, shifted log density.
  PriorSpec scaled(double c) const;

  // For location-scale priors of the form sigma^-k: the power k. Such
  // priors are relatively invariant under the affine group, which the
  // conditional coverage code exploits.
  std::optional<double> scale_power() const { return scale_power_; }
  void set_scale_power(double k) { scale_power_ = k; }

 private:
  std::string label_;
  LogDensity log_pi_;
  Gradient grad_;
  Hessian hess_;
  std::optional<double> scale_power_;
};

// Location-scale: "flat", "inv-sigma", "inv-sigma2", "exp-mu-inv-sigma".
// Gamma: "flat", "inv-rate".
PriorSpec make_prior(std::string_view key, const ModelFamily& family);

// pi(mu, sigma) = d(mu) sigma^-k for a location-scale family, given log d and
// its first two derivatives.
PriorSpec location_scale_prior(const ModelFamily& family, std::string label, double k,
                               std::function<double(double)> log_d, std::function<double(double)> dlog_d,
                               std::function<double(double)> d2log_d);

}  // namespace matchprior
