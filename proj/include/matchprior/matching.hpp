#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/lambda.hpp"
#include "matchprior/model.hpp"
#include "matchprior/prior.hpp"

namespace matchprior {

double mu_F(const LambdaArrays& arrays);
double a_F(const LambdaArrays& arrays);

// theta -> derived lambda arrays at sample size n.
using LambdaField = std::function<LambdaArrays(const Eigen::VectorXd&)>;
LambdaField analytic_field(const ModelFamily& family, double n);

// theta -> expected information lambda_rs (negative definite). The cheap
// field behind the residual evaluators.
using InformationField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
InformationField analytic_information(const ModelFamily& family, double n);
// Common-random-number Monte Carlo estimate: the same uniforms at every
// theta, so differences across a stencil are smooth.
InformationField monte_carlo_information(const ModelFamily& family, std::size_t n, std::size_t reps,
                                         const Stream& stream);

// Needs the third-order tensor as well.
struct CumulantPair {
  Eigen::MatrixXd lambda_rs;
  Tensor3 lambda_rst;
};
using CumulantField = std::function<CumulantPair(const Eigen::VectorXd&)>;
CumulantField analytic_cumulants(const ModelFamily& family, double n);

// 1 + a_F + 2 eta mu_{F/r} lambda^{r1} - mu_F^2, with mu_{F/r} from
// five-point differences of mu_F over the field.
double sigma2_F(const LambdaArrays& arrays, const LambdaField& field, const ModelFamily& family,
                const Eigen::VectorXd& theta);

// eta pi_r / pi lambda^{r1} + d(eta lambda^{r1}) / d theta^r
double welch_peers_residual(const InformationField& field, const PriorSpec& prior, const ModelFamily& family,
                            const Eigen::VectorXd& theta);

struct SecondOrderResult {
  double residual = 0.0;  // divided by pi(theta)
  double wp_residual = 0.0;
  bool precondition_warning = false;  // the prior fails the first-order condition here
};

SecondOrderResult second_order_residual(const CumulantField& field, const PriorSpec& prior, const ModelFamily& family,
                                        const Eigen::VectorXd& theta, double wp_tolerance = 1e-5);

// f(theta) from log-likelihood derivatives (order >= 3) of one dataset.
// Without a prior the third term is dropped.
double eval_f_theta(const DerivTensors& derivs, const PriorSpec* prior, const Eigen::VectorXd& theta);

struct MatchingReport {
  Eigen::VectorXd theta;
  double wp_residual = 0.0;
  double so_residual = 0.0;
  double mu_F = 0.0;
  double a_F = 0.0;
  double sigma2_F = 0.0;
  bool precondition_warning = false;
  bool passes = false;  // residuals within tolerance for the requested order
  std::size_t grid_index = 0;
};

struct MatchingOptions {
  int order = 2;  // 1: Welch-Peers only; 2: also the second-order condition
  double n = 10.0;
  double tolerance = 1e-5;
  bool moments = true;  // mu_F, a_F, sigma2_F
};

MatchingReport matching_report(const ModelFamily& family, const PriorSpec& prior, const Eigen::VectorXd& theta,
                               const MatchingOptions& opt);

// Values per axis; empty axes fall back to a three-point default around the
// reference point (x / 2, x, 2x for positive coordinates, x - 1, x, x + 1
// otherwise).
std::vector<Eigen::VectorXd> theta_grid(const ModelFamily& family, const Eigen::VectorXd& reference,
                                        std::vector<std::vector<double>> axes = {});

std::vector<MatchingReport> matching_grid(const ModelFamily& family, const PriorSpec& prior,
                                          const std::vector<Eigen::VectorXd>& grid, const MatchingOptions& opt);

}  // namespace matchprior
