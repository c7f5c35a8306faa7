#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "matchprior/lambda.hpp"
#include "matchprior/model.hpp"

namespace matchprior {

struct FitResult {
  Eigen::VectorXd theta_hat;
  double loglik_at_hat = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  // Two starting points reached maxima differing by more than 1e-4 in L.
  bool multimodal = false;
};

struct ProfilePoint {
  double psi = 0.0;
  Eigen::VectorXd phi_tilde;
  double M = 0.0;
  double W = 0.0;
  double R = 0.0;

  Eigen::VectorXd theta() const;
};

struct FitOptions {
  int max_iterations = 200;
  int max_halvings = 30;
  double tolerance = 1e-8;  // on the score norm, relative to max(1, |L|)
};

FitResult fit_mle(const ModelFamily& family, const Sample& sample, std::optional<Eigen::VectorXd> start = {},
                  const FitOptions& opt = {});

// Maximizes L over the nuisance block at fixed psi. `warm` is an optional
// nuisance starting value (e.g. the solution at a neighbouring psi).
ProfilePoint fit_constrained(const ModelFamily& family, const Sample& sample, double psi, const FitResult& mle,
                             const Eigen::VectorXd* warm = nullptr, const FitOptions& opt = {});

// fit_constrained plus W and R.
ProfilePoint signed_root(const ModelFamily& family, const Sample& sample, double psi, const FitResult& mle,
                         const Eigen::VectorXd* warm = nullptr);

// The MLE plus repeated profile evaluations for one dataset.
class Profile {
 public:
  Profile(const ModelFamily& family, Sample sample);
  Profile(const ModelFamily& family, Sample sample, FitResult mle);

  const ModelFamily& family() const { return *family_; }
  const Sample& sample() const { return sample_; }
  const FitResult& mle() const { return mle_; }
  double psi_hat() const { return mle_.theta_hat[0]; }

  ProfilePoint at(double psi, const Eigen::VectorXd* warm = nullptr) const;
  double R(double psi) const { return at(psi).R; }

 private:
  const ModelFamily* family_;
  Sample sample_;
  FitResult mle_;
};

struct ProfileCurvature {
  double M11 = 0.0;
  double M111 = 0.0;
  double H = 0.0;
  double M11_fd = 0.0;  // five-point second difference of the computed profile
  double cross_check = 0.0;  // |M11 - M11_fd| / |M11|
};

// Closed forms at the MLE, cross-checked against differences of M(psi).
ProfileCurvature profile_curvature(const Profile& profile, double tolerance = 1e-4);

// Z - (1/6) H^3 L_rst L^{r1} L^{s1} L^{t1} Z^2 with Z = H (psi_hat - psi).
double r_expansion(const HatArrays& hat, double psi);

}  // namespace matchprior
