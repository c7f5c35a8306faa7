#include "matchprior/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "matchprior/contract.hpp"
#include "matchprior/error.hpp"

namespace matchprior {

Eigen::VectorXd ProfilePoint::theta() const {
  Eigen::VectorXd t(phi_tilde.size() + 1);
  t[0] = psi;
  t.tail(phi_tilde.size()) = phi_tilde;
  return t;
}

namespace {

struct NewtonOutcome {
  Eigen::VectorXd theta;
  double L = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  double gnorm = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> trajectory;
};

double tol_of(const FitOptions& opt, double L) { return opt.tolerance * std::max(1.0, std::abs(L)); }

// Ascent direction from the Hessian block: Newton when -H is positive
// definite, otherwise Newton on the eigenvalue-modified (|lambda|) matrix.
Eigen::VectorXd ascent_direction(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  const Eigen::MatrixXd negH = -H;
  Eigen::LLT<Eigen::MatrixXd> llt(negH);
  if (llt.info() == Eigen::Success) return llt.solve(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(negH);
  Eigen::VectorXd lam = es.eigenvalues().cwiseAbs();
  const double floor = std::max(1e-8 * lam.maxCoeff(), 1e-300);
  lam = lam.cwiseMax(floor);
  return es.eigenvectors() * (es.eigenvectors().transpose() * g).cwiseQuotient(lam);
}

NewtonOutcome newton(const ModelFamily& f, std::span<const double> y, Eigen::VectorXd theta,
                     const std::vector<Eigen::Index>& free, const FitOptions& opt) {
  NewtonOutcome out;
  out.theta = theta;
  if (!f.in_domain(theta)) return out;
  double L = f.loglik_unchecked(theta, y);
  if (!std::isfinite(L)) return out;
  out.trajectory.push_back(theta);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const DerivTensors D = f.derivs_unchecked(theta, y, 2);
    const Eigen::VectorXd g = D.grad(free);
    const Eigen::MatrixXd H = D.hess(free, free);
    out.iterations = it;
    out.gnorm = g.norm();
    out.theta = theta;
    out.L = L;
    if (!g.allFinite() || !H.allFinite()) return out;
    if (out.gnorm <= tol_of(opt, L)) {
      out.converged = true;
      return out;
    }
    const Eigen::VectorXd step = ascent_direction(H, g);
    double alpha = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k, alpha *= 0.5) {
      Eigen::VectorXd cand = theta;
      cand(free) += alpha * step;
      if (!f.in_domain(cand)) continue;
      const double Lc = f.loglik_unchecked(cand, y);
      if (!std::isfinite(Lc)) continue;
      bool ok = Lc > L;
      if (!ok && Lc >= L - 1e-12 * std::max(1.0, std::abs(L))) {
        // flat to round-off: accept if the score shrinks
        ok = f.derivs_unchecked(cand, y, 1).grad(free).norm() < out.gnorm;
      }
      if (ok) {
        theta = cand;
        L = Lc;
        accepted = true;
        break;
      }
    }
    out.trajectory.push_back(theta);
    if (!accepted) break;
  }
  out.theta = theta;
  out.L = L;
  const DerivTensors D = f.derivs_unchecked(theta, y, 1);
  out.gnorm = D.grad(free).norm();
  out.converged = out.gnorm <= tol_of(opt, L);
  return out;
}

bool negative_definite(const Eigen::MatrixXd& H) {
  Eigen::LLT<Eigen::MatrixXd> llt(-H);
  return llt.info() == Eigen::Success;
}

// Golden-section search for a single nuisance coordinate.
Eigen::VectorXd golden_section(const ModelFamily& f, std::span<const double> y, Eigen::VectorXd theta, Eigen::Index k,
                               bool positive) {
  const double x0 = theta[k];
  double a, b;
  if (positive) {
    a = std::log(x0) - 6.0;
    b = std::log(x0) + 6.0;
  } else {
    const double s = std::max(1.0, std::abs(x0));
    a = x0 - 20.0 * s;
    b = x0 + 20.0 * s;
  }
  auto value = [&](double x) {
    Eigen::VectorXd t = theta;
    t[k] = positive ? std::exp(x) : x;
    if (!f.in_domain(t)) return -std::numeric_limits<double>::infinity();
    const double L = f.loglik_unchecked(t, y);
    return std::isfinite(L) ? L : -std::numeric_limits<double>::infinity();
  };
  // coarse scan picks the bracket, golden section refines it
  const int grid = 200;
  int best = 0;
  double bestv = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double v = value(a + (b - a) * i / grid);
    if (v > bestv) {
      bestv = v;
      best = i;
    }
  }
  double lo = a + (b - a) * std::max(best - 1, 0) / grid;
  double hi = a + (b - a) * std::min(best + 1, grid) / grid;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - ratio * (hi - lo), d = lo + ratio * (hi - lo);
  double fc = value(c), fd = value(d);
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    if (fc > fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = value(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = value(d);
    }
  }
  const double x = 0.5 * (lo + hi);
  theta[k] = positive ? std::exp(x) : x;
  return theta;
}

}  // namespace

FitResult fit_mle(const ModelFamily& family, const Sample& sample, std::optional<Eigen::VectorXd> start,
                  const FitOptions& opt) {
  const std::size_t d = family.dim();
  if (sample.n() < d + 1) {
    std::ostringstream os;
    os << family.key() << ": need at least " << d + 1 << " observations, got " << sample.n();
    throw DomainError(os.str());
  }
  std::vector<Eigen::VectorXd> starts;
  if (start) {
    family.require_domain(*start);
    starts.push_back(*start);
  }
  for (auto& s : family.starts(sample.y())) starts.push_back(s);
  std::vector<Eigen::Index> free(d);
  for (std::size_t k = 0; k < d; ++k) free[k] = static_cast<Eigen::Index>(k);

  std::vector<NewtonOutcome> runs;
  for (const auto& s : starts) runs.push_back(newton(family, sample.y(), s, free, opt));
  const NewtonOutcome* best = nullptr;
  for (const auto& r : runs)
    if (r.converged && (!best || r.L > best->L)) best = &r;
  if (!best) {
    const NewtonOutcome& first = runs.front();
    std::ostringstream os;
    os << family.key() << ": maximum likelihood did not converge after " << first.iterations
       << " iterations (score norm " << first.gnorm << ")";
    throw ConvergenceError(os.str(), first.trajectory);
  }
  FitResult fit;
  fit.theta_hat = best->theta;
  fit.loglik_at_hat = best->L;
  fit.converged = true;
  fit.iterations = best->iterations;
  fit.gradient_norm = best->gnorm;
  for (const auto& r : runs)
    if (r.converged && best->L - r.L > 1e-4) fit.multimodal = true;
  const DerivTensors D = family.derivs_unchecked(fit.theta_hat, sample.y(), 2);
  if (!negative_definite(D.hess)) {
    std::ostringstream os;
    os << family.key() << ": stationary point (" << fit.theta_hat.transpose() << ") is not a maximum";
    throw SaddleError(os.str());
  }
  return fit;
}

ProfilePoint fit_constrained(const ModelFamily& family, const Sample& sample, double psi, const FitResult& mle,
                             const Eigen::VectorXd* warm, const FitOptions& opt) {
  const auto d = static_cast<Eigen::Index>(family.dim());
  const Eigen::Index q = d - 1;
  const auto y = sample.y();
  const auto pos = family.positive_coordinates();
  std::vector<Eigen::Index> free;
  for (Eigen::Index k = 1; k < d; ++k) free.push_back(k);

  auto with_phi = [&](const Eigen::VectorXd& phi) {
    Eigen::VectorXd t(d);
    t[0] = psi;
    t.tail(q) = phi;
    return t;
  };
  auto value = [&](const Eigen::VectorXd& t) {
    if (!family.in_domain(t)) return -std::numeric_limits<double>::infinity();
    const double L = family.loglik_unchecked(t, y);
    return std::isfinite(L) ? L : -std::numeric_limits<double>::infinity();
  };
  if (!family.in_domain(with_phi(mle.theta_hat.tail(q)))) {
    std::ostringstream os;
    os << family.key() << ": psi = " << psi << " is outside the parameter domain";
    throw DomainError(os.str());
  }

  // sentinel candidates: the warm start, phi-hat, and family-supplied values
  std::vector<Eigen::VectorXd> cands;
  if (warm) cands.push_back(with_phi(*warm));
  cands.push_back(with_phi(mle.theta_hat.tail(q)));
  for (Eigen::Index k = 1; k < d; ++k)
    for (double v : family.nuisance_candidates(static_cast<std::size_t>(k), y)) {
      Eigen::VectorXd t = with_phi(mle.theta_hat.tail(q));
      t[k] = v;
      cands.push_back(t);
    }

  NewtonOutcome best = newton(family, y, cands.front(), free, opt);
  std::vector<char> tried(cands.size(), 0);
  tried[0] = 1;
  if (!best.converged && cands.size() > 1) {
    NewtonOutcome alt = newton(family, y, cands[1], free, opt);
    tried[1] = 1;
    if (alt.converged || alt.L > best.L) best = alt;
  }
  // restart from any sentinel that beats the current optimum
  for (int round = 0; round < 4; ++round) {
    int pick = -1;
    double pickv = best.converged ? best.L : -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (tried[c]) continue;
      const double v = value(cands[c]);
      if (v > pickv + 1e-12 * std::max(1.0, std::abs(pickv))) {
        pickv = v;
        pick = static_cast<int>(c);
      }
    }
    if (pick < 0) break;
    tried[static_cast<std::size_t>(pick)] = 1;
    NewtonOutcome alt = newton(family, y, cands[static_cast<std::size_t>(pick)], free, opt);
    if (alt.converged && (!best.converged || alt.L > best.L)) best = alt;
  }
  if (!best.converged && q == 1) {
    const Eigen::VectorXd start = golden_section(family, y, best.theta, 1, pos[1]);
    NewtonOutcome alt = newton(family, y, start, free, opt);
    if (alt.converged || alt.L > best.L) best = alt;
  }
  for (Eigen::Index k = 1; k < d; ++k) {
    if (!pos[static_cast<std::size_t>(k)]) continue;
    const double ref = std::abs(mle.theta_hat[k]);
    if (best.theta[k] < 1e-8 * ref) {
      std::ostringstream os;
      os << family.key() << ": constrained maximum at psi = " << psi << " runs to the boundary (coordinate " << k
         << " -> 0)";
      throw BoundaryError(os.str());
    }
  }
  if (!best.converged) {
    std::ostringstream os;
    os << family.key() << ": constrained fit at psi = " << psi << " did not converge (score norm " << best.gnorm << ")";
    throw ConvergenceError(os.str(), best.trajectory);
  }
  ProfilePoint p;
  p.psi = psi;
  p.phi_tilde = best.theta.tail(q);
  p.M = best.L;
  return p;
}

ProfilePoint signed_root(const ModelFamily& family, const Sample& sample, double psi, const FitResult& mle,
                         const Eigen::VectorXd* warm) {
  ProfilePoint p = fit_constrained(family, sample, psi, mle, warm);
  double W = 2.0 * (mle.loglik_at_hat - p.M);
  if (W < 0) {
    if (W >= -1e-10) {
      W = 0.0;
    } else {
      std::ostringstream os;
      os << family.key() << ": W(" << psi << ") = " << W << " < 0; the profile exceeds the reported maximum";
      throw InconsistencyError(os.str());
    }
  }
  p.W = W;
  const double psi_hat = mle.theta_hat[0];
  p.R = (W == 0.0) ? 0.0 : std::copysign(std::sqrt(W), psi_hat - psi);
  return p;
}

Profile::Profile(const ModelFamily& family, Sample sample)
    : family_(&family), sample_(std::move(sample)), mle_(fit_mle(family, sample_)) {}

Profile::Profile(const ModelFamily& family, Sample sample, FitResult mle)
    : family_(&family), sample_(std::move(sample)), mle_(std::move(mle)) {}

ProfilePoint Profile::at(double psi, const Eigen::VectorXd* warm) const {
  return signed_root(*family_, sample_, psi, mle_, warm);
}

ProfileCurvature profile_curvature(const Profile& profile, double tolerance) {
  const HatArrays hat = hat_arrays(profile.family(), profile.sample(), profile.mle().theta_hat, nullptr);
  ProfileCurvature c;
  const double l11 = hat.L_up(0, 0);
  const Eigen::VectorXd l1 = hat.L_up.col(0);
  c.M11 = 1.0 / l11;
  c.M111 = contract(hat.L_rst, l1, l1, l1) / (l11 * l11 * l11);
  c.H = std::sqrt(-c.M11);
  const double h = 0.05 / c.H;
  const Eigen::VectorXd phi_hat = profile.mle().theta_hat.tail(profile.mle().theta_hat.size() - 1);
  Eigen::VectorXd x(1);
  x[0] = profile.psi_hat();
  c.M11_fd = five_point_second([&](const Eigen::VectorXd& p) { return profile.at(p[0], &phi_hat).M; }, x, 0, h);
  c.cross_check = std::abs(c.M11 - c.M11_fd) / std::abs(c.M11);
  if (c.cross_check > tolerance) {
    std::ostringstream os;
    os << "profile curvature cross-check failed: closed form " << c.M11 << " vs differences " << c.M11_fd;
    throw InconsistencyError(os.str());
  }
  return c;
}

double r_expansion(const HatArrays& hat, double psi) {
  const Eigen::VectorXd l1 = hat.L_up.col(0);
  const double Z = hat.H * (hat.theta[0] - psi);
  const double k = contract(hat.L_rst, l1, l1, l1);
  return Z - hat.H * hat.H * hat.H * k * Z * Z / 6.0;
}

}  // namespace matchprior
