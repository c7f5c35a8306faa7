#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/finite_diff.hpp"
#include "matchprior/jet.hpp"
#include "matchprior/rng.hpp"
#include "matchprior/tensor.hpp"

namespace matchprior {

// theta = (psi, phi): the interest parameter always sits in coordinate 0.
class ParameterPoint {
 public:
  ParameterPoint(Eigen::VectorXd theta);  // NOLINT: implicit on purpose
  ParameterPoint(std::initializer_list<double> theta);

  const Eigen::VectorXd& theta() const { return theta_; }
  operator const Eigen::VectorXd&() const { return theta_; }  // NOLINT
  std::size_t dim() const { return static_cast<std::size_t>(theta_.size()); }
  std::size_t q() const { return dim() - 1; }
  double psi() const { return theta_[0]; }
  Eigen::VectorXd phi() const { return theta_.tail(theta_.size() - 1); }
  double operator[](std::size_t k) const { return theta_[static_cast<Eigen::Index>(k)]; }

 private:
  Eigen::VectorXd theta_;
};

class Sample {
 public:
  explicit Sample(std::vector<double> y);
  Sample(std::initializer_list<double> y) : Sample(std::vector<double>(y)) {}

  std::size_t n() const { return y_.size(); }
  std::span<const double> y() const { return y_; }
  const std::vector<double>& values() const { return y_; }
  double operator[](std::size_t i) const { return y_[i]; }

 private:
  std::vector<double> y_;
};

struct DerivTensors {
  int order = 0;
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Tensor3 third;
  Tensor4 fourth;
};

DerivTensors derivs_from_jet(const Jet& jet, int order);

// Per-observation expectations at theta, the raw material of the lambda
// arrays (everything here is multiplied by n for an i.i.d. sample).
struct ObservationMoments {
  Eigen::VectorXd l_r;
  Eigen::MatrixXd l_rs;
  Tensor3 l_rst;
  Tensor4 l_rstu;
  Eigen::MatrixXd l_r_s;
  Tensor3 l_rs_t;  // E[l_rs l_t]
  Tensor3 l_r_s_t;
};

class LocationScaleModel;

class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  virtual std::string key() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::string> parameter_names() const = 0;
  virtual std::string interest_role() const = 0;
  virtual bool in_domain(const Eigen::VectorXd& theta) const = 0;
  virtual std::vector<bool> positive_coordinates() const = 0;

  virtual double loglik_unchecked(const Eigen::VectorXd& theta, std::span<const double> y) const = 0;
  // Default: Richardson-extrapolated central differences of the log-likelihood.
  virtual DerivTensors derivs_unchecked(const Eigen::VectorXd& theta, std::span<const double> y, int order) const;
  virtual bool analytic_derivatives() const { return false; }

  virtual double quantile(const Eigen::VectorXd& theta, double u) const = 0;
  // Moment-based start first, then a robust (median-type) start.
  virtual std::vector<Eigen::VectorXd> starts(std::span<const double> y) const = 0;
  // Extra starting values for nuisance coordinate `slot` of a constrained fit.
  virtual std::vector<double> nuisance_candidates(std::size_t slot, std::span<const double> y) const;

  // Nodes (y, weight) integrating against the density of one observation.
  // Families without one cannot provide analytic lambda arrays.
  virtual std::vector<std::pair<double, double>> expectation_rule(const Eigen::VectorXd& theta) const;
  virtual bool has_expectation_rule() const { return false; }
  virtual ObservationMoments observation_moments(const Eigen::VectorXd& theta) const;

  virtual const LocationScaleModel* location_scale() const { return nullptr; }

  // Checked entry points.
  void require_domain(const Eigen::VectorXd& theta) const;
  double loglik(const ParameterPoint& theta, const Sample& sample) const;
  DerivTensors loglik_derivs(const ParameterPoint& theta, const Sample& sample, int order) const;
  Sample sample(const ParameterPoint& theta, std::size_t n, Stream& stream) const;
};

using FamilyPtr = std::shared_ptr<const ModelFamily>;

// Location-scale structure f(y; mu, sigma) = g((y - mu) / sigma) / sigma with h = log g.
class LocationScaleModel {
 public:
  virtual ~LocationScaleModel() = default;
  virtual std::string kernel_name() const = 0;
  virtual double h(double z) const = 0;
  // h and its first four derivatives.
  virtual void h_derivs(double z, double* out) const = 0;
  virtual bool heavy_tailed() const = 0;
  virtual bool scale_interest() const = 0;
  std::size_t mu_slot() const { return scale_interest() ? 1 : 0; }
  std::size_t sigma_slot() const { return scale_interest() ? 0 : 1; }
  // Parameter vector in slot order from physical (mu, sigma).
  Eigen::VectorXd theta_of(double mu, double sigma) const;
  // sum_i h(u + v a_i)
  virtual double sum_h(double u, double v, std::span<const double> a) const = 0;
};

// User-supplied family: only the log-likelihood and a sampler are required;
// derivatives come from finite differences.
struct CustomFamilySpec {
  std::string key;
  std::vector<std::string> names;
  std::string role = "custom";
  std::vector<bool> positive;
  std::function<double(const Eigen::VectorXd&, std::span<const double>)> loglik;
  std::function<double(const Eigen::VectorXd&, double)> quantile;
  std::function<std::vector<Eigen::VectorXd>(std::span<const double>)> starts;
};

FamilyPtr make_custom_family(CustomFamilySpec spec);

// Registry: "normal-ls", "cauchy-ls", "gumbel-ls" (suffix ":loc" or ":scale"),
// "gamma" (suffix ":shape" or ":rate").
FamilyPtr make_family(std::string_view key);
std::vector<std::string> family_keys();

// Compares each analytic derivative order with central differences of the
// order below it; returns the largest relative discrepancy.
double derivative_check(const ModelFamily& family, const ParameterPoint& theta, const Sample& sample);

}  // namespace matchprior
