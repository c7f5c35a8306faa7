#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/lambda.hpp"
#include "matchprior/likelihood.hpp"
#include "matchprior/prior.hpp"

namespace matchprior {

enum class PosteriorMethod { laplace_expansion, quadrature_oracle, conjugate };
std::string to_string(PosteriorMethod m);

struct PosteriorSummary {
  double mu_B = 0.0;
  double a_B = 0.0;
  double sigma2_B = 0.0;
  PosteriorMethod method = PosteriorMethod::laplace_expansion;
  // alpha -> alpha-quantile of psi, for the alphas requested
  std::map<double, double> quantiles;

  // Oracle extras (quadrature only).
  double mean_psi = 0.0;
  double var_psi = 0.0;
  double failed_weight = 0.0;  // posterior mass at nodes where R could not be evaluated
  std::vector<std::string> trace;

  // Posterior probability that psi lies below `alpha`-quantile equals alpha.
  double quantile(double alpha) const;
  double cdf(double psi) const;

  std::function<double(double)> quantile_fn;
  std::function<double(double)> cdf_fn;
};

// B(psi) + M(psi) - M(psi_hat): the log of the Laplace marginal posterior
// density of psi, up to a constant.
double laplace_log_posterior(const Profile& profile, const PriorSpec& prior, double psi,
                             const Eigen::VectorXd* warm = nullptr);
double laplace_log_posterior(const ModelFamily& family, const Sample& sample, const PriorSpec& prior, double psi);
// B(psi) alone, given a constrained fit at psi.
double laplace_B(const Profile& profile, const PriorSpec& prior, const ProfilePoint& point);

double mu_B(const HatArrays& hat);
double a_B(const HatArrays& hat);
double sigma2_B(const HatArrays& hat);

struct QuadratureOptions {
  int nodes = 120;  // per axis
  int per_panel = 12;
  double width = 15.0;  // box half-width near the centre, in standard deviations (axes are sinh-stretched)
  bool self_check = false;  // rerun with doubled nodes and compare
  double self_check_tolerance = 1e-6;
  bool signed_root_moments = true;  // posterior mean and variance of R
  double edge_tolerance = 1e-8;  // largest posterior mass allowed in an outermost panel
  int max_expansions = 4;
};

// Tensor-product Gauss-Legendre integration of exp{L(theta)} pi(theta),
// positive coordinates on the log scale. mu_B and sigma2_B hold the
// posterior mean and variance of R(psi); a_B = E[R^2] - 1.
PosteriorSummary quadrature_posterior(const Profile& profile, const PriorSpec& prior,
                                      const std::vector<double>& alphas, const QuadratureOptions& opt = {});

// Solves R(psi) = mu_B + z * sigma_B with Phi(z) = alpha. The result is the
// posterior 1 - alpha quantile, since R decreases in psi.
double refined_quantile(const Profile& profile, double mu_B, double alpha, double sigma_B = 1.0,
                        double tolerance = 1e-9);

// Laplace-expansion summary: mu_B, a_B, sigma2_B from the observed arrays
// at the MLE; quantile(p) from refined_quantile with alpha = 1 - p.
PosteriorSummary laplace_posterior(const Profile& profile, const PriorSpec& prior, const std::vector<double>& alphas);

// Closed-form marginal posterior for the normal location-scale family under
// pi = sigma^-k: Student t for mu, scaled inverse chi for sigma.
// mu_B, a_B and sigma2_B come from the observed arrays as in laplace_posterior.
PosteriorSummary conjugate_normal_posterior(const Profile& profile, const PriorSpec& prior,
                                            const std::vector<double>& alphas);
bool conjugate_available(const ModelFamily& family, const PriorSpec& prior);

}  // namespace matchprior
