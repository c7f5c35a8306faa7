#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/bayes.hpp"
#include "matchprior/lambda.hpp"
#include "matchprior/likelihood.hpp"
#include "matchprior/model.hpp"
#include "matchprior/prior.hpp"
#include "matchprior/quadrature.hpp"
#include "matchprior/rng.hpp"

namespace matchprior {

// Standardized residuals a_i = (y_i - mu_hat) / sigma_hat.
struct Configuration {
  std::vector<double> a;
  double mu_hat = 0.0;
  double sigma_hat = 1.0;
  // sum h'(a_i) and n + sum a_i h'(a_i); both vanish at an exact MLE.
  double score_location = 0.0;
  double score_scale = 0.0;

  std::size_t n() const { return a.size(); }
};

const LocationScaleModel& require_location_scale(const ModelFamily& family);

// Polishes the fit with Newton steps if needed; throws FitQualityError when
// the score equations fail by more than `tolerance`.
Configuration configuration(const ModelFamily& family, const Sample& sample, const FitResult& fit,
                            double tolerance = 1e-8);
// From given residuals (e.g. read from a file); they must already satisfy
// the score equations.
Configuration configuration_from(const ModelFamily& family, std::vector<double> a, double tolerance = 1e-8);
// Sample at (mu, sigma) = (0, 1), fit, standardize.
Configuration simulate_configuration(const ModelFamily& family, std::size_t n, Stream& stream);

struct ConditionalOptions {
  int nodes = 0;  // per axis; 0 picks 160 for heavy-tailed kernels, 96 otherwise
  int per_panel = 16;
  double width = 12.0;  // half-width in conditional standard deviations
  bool self_check = false;
  double self_check_tolerance = 1e-5;
  double edge_tolerance = 1e-10;
  int max_expansions = 4;
};

// Density of the pivotals given the configuration, in
// (t, w) = ((mu_hat - mu) / sigma_hat, log(sigma_hat / sigma)).
// With u = (mu_hat - mu) / sigma and v = sigma_hat / sigma, t = u / v and
// w = log v; t keeps heavy-tailed kernels from spreading mass along rays.
// The t marginal has polynomial tails, so the rule runs over s with
// t = t0 + c sinh(s), which makes both tails exponential.
class ConditionalGrid {
 public:
  ConditionalGrid(const ModelFamily& family, Configuration config, const ConditionalOptions& opt = {});

  const Configuration& config() const { return config_; }
  const CompositeRule& s_rule() const { return *s_; }
  const CompositeRule& w_rule() const { return *w_; }
  double t_of_s(double s) const { return t0_ + c_ * std::sinh(s); }
  double s_of_t(double t) const { return std::asinh((t - t0_) / c_); }
  double t_node(std::size_t i) const { return t_of_s(s_->node(i)); }
  // normalized density at node (i, j) in (s, w)
  double node_density(std::size_t i, std::size_t j) const { return f_[i * w_->size() + j]; }
  double node_weight(std::size_t i, std::size_t j) const { return s_->weight(i) * w_->weight(j); }
  Eigen::Vector2d mode() const { return mode_; }
  Eigen::Matrix2d covariance() const { return cov_; }
  double log_normalizer() const { return log_norm_; }
  const std::vector<std::string>& trace() const { return trace_; }

  double log_density_tw(double t, double w) const;
  double density_tw(double t, double w) const;
  // In (u, v): density_tw(u / v, log v) / v^2; zero for v <= 0.
  double density(double u, double v) const;

  // Sum over nodes of weight * density * fn(t, w).
  template <typename F>
  double expect(F&& fn) const {
    double s = 0.0;
    for (std::size_t i = 0; i < s_->size(); ++i)
      for (std::size_t j = 0; j < w_->size(); ++j) {
        const double f = f_[i * w_->size() + j];
        if (f == 0.0) continue;
        s += s_->weight(i) * w_->weight(j) * f * fn(t_node(i), w_->node(j));
      }
    return s;
  }

  // Mass of {t >= cut} on row w_j, and of {w >= cut} on column s_i.
  double row_tail(std::size_t j, double t_cut) const;
  double column_tail(std::size_t i, double w_cut) const;
  double row_mass(std::size_t j) const { return row_tail(j, -std::numeric_limits<double>::infinity()); }
  double column_mass(std::size_t i) const { return column_tail(i, -std::numeric_limits<double>::infinity()); }

  // Dataset y_i = mu + sigma e^w (t + a_i).
  std::vector<double> dataset(double t, double w, double mu = 0.0, double sigma = 1.0) const;

 private:
  void tabulate(double width, int panels);

  const LocationScaleModel* ls_;
  Configuration config_;
  ConditionalOptions opt_;
  std::shared_ptr<CompositeRule> s_, w_;
  double t0_ = 0.0, c_ = 1.0;
  std::vector<double> f_;
  Eigen::Vector2d mode_;
  Eigen::Matrix2d cov_;
  double log_norm_ = 0.0;
  double edge_ = 0.0;
  std::vector<std::string> trace_;
};

struct ConditionalContext {
  std::shared_ptr<const ConditionalGrid> grid;
  FamilyPtr family;
  double B = 0.0, C = 0.0, D = 0.0, E = 0.0;
  // Conditional arrays at (mu, sigma) = (0, 1) in the family's slot order.
  LambdaArrays lambda_ring;
  double eta_ring = 0.0;
  // Largest conditional Bartlett defect |lambda_rs + lambda_{r,s}| and |E L_r|.
  double bartlett_defect = 0.0;

  // Arrays at any theta: lambda arrays of total order k scale as sigma^-k and
  // do not depend on mu, which also gives the slash arrays exactly.
  LambdaArrays at(const Eigen::VectorXd& theta) const;
};

// B, C, D only (second derivatives).
ConditionalContext bcd_constants(FamilyPtr family, const Configuration& config, const ConditionalOptions& opt = {});
// B, C, D plus the full lambda-ring arrays up to fourth order.
ConditionalContext conditional_context(FamilyPtr family, const Configuration& config,
                                       const ConditionalOptions& opt = {});

struct ConditionalResidual {
  double residual = 0.0;  // LHS - RHS by direct contraction
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_closed = 0.0;  // location-scale closed forms
  double rhs_closed = 0.0;
};

ConditionalResidual conditional_matching_residual(const ConditionalContext& ctx, const PriorSpec& prior,
                                                  const Eigen::VectorXd& theta);

double mu_ring_F(const ConditionalContext& ctx);
double sigma2_ring_F(const ConditionalContext& ctx);

enum class CoveragePath { automatic, generic, equivariant };

struct ConditionalCoverageOptions {
  CoveragePath path = CoveragePath::automatic;
  double failure_budget = 1e-3;  // posterior failures allowed, as a share of conditional mass
  QuadratureOptions posterior;  // for the per-dataset posteriors
  // quadrature_oracle or laplace_expansion; the latter needs no proper
  // posterior, which exp(mu)/sigma under heavy tails does not give
  PosteriorMethod method = PosteriorMethod::quadrature_oracle;
  double skip_mass = 1e-13;  // rows or columns below this share of mass are ignored
};

struct ConditionalCoverage {
  double coverage = 0.0;
  double failed_mass = 0.0;
  std::size_t posteriors = 0;  // posterior evaluations used
  CoveragePath path = CoveragePath::generic;
};

// pr{psi <= psi_l | A = a} at (mu, sigma) = (0, 1), psi_l the posterior
// 1 - alpha quantile. The generic path inverts the quantile along each
// row (mu interest, in t) or column (sigma interest, in w) of the grid;
// the equivariant path needs a prior sigma^-k and one posterior.
ConditionalCoverage conditional_coverage(const ConditionalGrid& grid, const ModelFamily& family,
                                         const PriorSpec& prior, double alpha,
                                         const ConditionalCoverageOptions& opt = {});

// Rejection sampler over (t, w) with a bivariate Student envelope centred at the mode.
class ConditionalSampler {
 public:
  explicit ConditionalSampler(std::shared_ptr<const ConditionalGrid> grid, double df = 4.0);
  Eigen::Vector2d draw(Stream& stream);
  double acceptance_rate() const { return proposals_ ? double(accepted_) / double(proposals_) : 0.0; }
  // Proposals whose density ratio exceeded the envelope bound.
  std::size_t envelope_violations() const { return violations_; }

 private:
  double log_envelope(const Eigen::Vector2d& x) const;
  std::shared_ptr<const ConditionalGrid> grid_;
  double df_;
  Eigen::Vector2d mean_;
  Eigen::Matrix2d chol_;
  Eigen::Matrix2d prec_;
  double log_bound_ = 0.0;
  std::size_t proposals_ = 0, accepted_ = 0, violations_ = 0;
};

}  // namespace matchprior
