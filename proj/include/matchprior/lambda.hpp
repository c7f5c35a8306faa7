#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/model.hpp"
#include "matchprior/prior.hpp"
#include "matchprior/rng.hpp"
#include "matchprior/tensor.hpp"

namespace matchprior {

enum class Provenance { analytic, monte_carlo, conditional };
std::string to_string(Provenance p);

// Expected log-likelihood derivative arrays at one parameter point.
// Slash arrays: lambda_rs_slash_t(r,s,t) = d lambda_rs / d theta^t,
// lambda_rst_slash_u(r,s,t,u) = d lambda_rst / d theta^u and
// lambda_rs_slash_tu(r,s,t,u) = d^2 lambda_rs / d theta^t d theta^u.
struct LambdaArrays {
  Provenance provenance = Provenance::analytic;
  std::size_t mc_reps = 0;
  double n = 0.0;

  Eigen::MatrixXd lambda_rs;
  Tensor3 lambda_rst;
  Tensor4 lambda_rstu;
  Eigen::MatrixXd lambda_r_s;
  Tensor3 lambda_rs_t;  // E[L_rs L_t]
  Tensor3 lambda_r_s_t;
  Tensor3 lambda_rs_slash_t;
  Tensor4 lambda_rst_slash_u;
  Tensor4 lambda_rs_slash_tu;

  // Filled by derive().
  Eigen::MatrixXd lambda_up;
  Eigen::MatrixXd tau_up;
  Eigen::MatrixXd nu_up;
  double eta = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(lambda_rs.rows()); }
  bool derived() const { return lambda_up.size() > 0; }
};

// Fills lambda^{rs}, tau^{rs}, nu^{rs} and eta. nu^{r1} is set to zero
// exactly. Throws SingularityError when lambda_rs or its nuisance block is
// singular, or lambda^{11} is not negative.
LambdaArrays derive(LambdaArrays arrays);

Tensor3 slash_via_identity(const Tensor3& lambda_rst, const Tensor3& lambda_rs_t);

// n times the per-observation expectations, with slash arrays from the
// identity route (first order) and five-point differences of the
// lambda_rst and lambda_{rs/t} fields (second order).
LambdaArrays analytic_lambda(const ModelFamily& family, const Eigen::VectorXd& theta, double n);

struct MonteCarloLambda {
  LambdaArrays arrays;
  LambdaArrays se;  // entrywise jackknife standard errors of the raw arrays
  // lambda_{rs/t} from common-random-number differences in theta, with SEs.
  Tensor3 rs_slash_t_fd;
  Tensor3 rs_slash_t_fd_se;
  Eigen::VectorXd mean_score;
  Eigen::VectorXd mean_score_se;
  std::size_t blocks = 0;
  std::size_t dim = 0;
  double n = 0.0;
  Eigen::MatrixXd block_sums;  // blocks x record length
  std::vector<std::size_t> block_sizes;

  // Jackknife SE of any statistic of the raw arrays (the statistic is applied
  // to leave-one-block-out estimates).
  double jackknife_se(const std::function<double(const LambdaArrays&)>& stat) const;
  // Raw (underived) arrays from a mean replicate record.
  LambdaArrays arrays_from_record(const Eigen::VectorXd& record) const;
};

MonteCarloLambda monte_carlo_lambda(const ModelFamily& family, const Eigen::VectorXd& theta, std::size_t n,
                                    std::size_t reps, const Stream& stream, std::size_t blocks = 50);

struct IdentityReport {
  double second_order = 0.0;  // max |lambda_rs + lambda_{r,s}| / n
  double third_order = 0.0;   // max |lambda_rst + 3 mixed + lambda_{r,s,t}| / n
  double tolerance = 0.0;
  // Monte Carlo only: largest |residual| / SE.
  double max_z = 0.0;
  bool flagged = false;
};

IdentityReport check_identities(const LambdaArrays& arrays, double tolerance = 1e-10);
IdentityReport check_identities(const MonteCarloLambda& mc, double z_limit = 4.0);

// Observed analogues at a parameter point (normally the MLE).
struct HatArrays {
  Eigen::VectorXd theta;
  Eigen::MatrixXd L_rs;
  Tensor3 L_rst;
  Tensor4 L_rstu;
  Eigen::MatrixXd L_up;
  Eigen::MatrixXd T_up;
  Eigen::MatrixXd V_up;
  double H = 0.0;
  bool has_prior = false;
  Eigen::VectorXd Pi_r;
  Eigen::MatrixXd Pi_rs;
};

HatArrays hat_arrays(const DerivTensors& derivs, const Eigen::VectorXd& theta, const PriorSpec* prior);
HatArrays hat_arrays(const ModelFamily& family, const Sample& sample, const Eigen::VectorXd& theta,
                     const PriorSpec* prior);

}  // namespace matchprior
