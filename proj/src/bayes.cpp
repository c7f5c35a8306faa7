#include "matchprior/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/roots.hpp>

#include "matchprior/contract.hpp"
#include "matchprior/error.hpp"
#include "matchprior/quadrature.hpp"

namespace matchprior {

std::string to_string(PosteriorMethod m) {
  switch (m) {
    case PosteriorMethod::laplace_expansion: return "laplace-expansion";
    case PosteriorMethod::quadrature_oracle: return "quadrature-oracle";
    case PosteriorMethod::conjugate: return "conjugate";
  }
  return "unknown";
}

double PosteriorSummary::quantile(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  if (auto it = quantiles.find(alpha); it != quantiles.end()) return it->second;
  if (!quantile_fn) throw MissingArrayError("posterior summary has no quantile function");
  return quantile_fn(alpha);
}

double PosteriorSummary::cdf(double psi) const {
  if (!cdf_fn) throw MissingArrayError("posterior summary has no distribution function");
  return cdf_fn(psi);
}

namespace {

double log_det_nuisance(const DerivTensors& D, const std::string& where) {
  const Eigen::Index q = D.hess.rows() - 1;
  if (q == 0) return 0.0;
  const Eigen::MatrixXd block = -D.hess.bottomRightCorner(q, q);
  Eigen::LLT<Eigen::MatrixXd> llt(block);
  if (llt.info() != Eigen::Success) throw CurvatureError("nuisance information is not positive definite at " + where);
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

}  // namespace

double laplace_B(const Profile& profile, const PriorSpec& prior, const ProfilePoint& point) {
  const auto& f = profile.family();
  const Eigen::VectorXd theta_hat = profile.mle().theta_hat;
  const Eigen::VectorXd theta = point.theta();
  const double ld_hat = log_det_nuisance(f.loglik_derivs(theta_hat, profile.sample(), 2), "the MLE");
  std::ostringstream where;
  where << "psi = " << point.psi;
  const double ld = log_det_nuisance(f.loglik_derivs(theta, profile.sample(), 2), where.str());
  return -0.5 * (ld - ld_hat) + prior.log_pi(theta) - prior.log_pi(theta_hat);
}

double laplace_log_posterior(const Profile& profile, const PriorSpec& prior, double psi, const Eigen::VectorXd* warm) {
  const ProfilePoint p = profile.at(psi, warm);
  return laplace_B(profile, prior, p) + p.M - profile.mle().loglik_at_hat;
}

double laplace_log_posterior(const ModelFamily& family, const Sample& sample, const PriorSpec& prior, double psi) {
  return laplace_log_posterior(Profile(family, sample), prior, psi);
}

double mu_B(const HatArrays& hat) {
  if (!hat.has_prior) throw MissingArrayError("mu_B needs prior derivatives in the hat arrays");
  const Eigen::VectorXd l1 = hat.L_up.col(0);
  const double H = hat.H;
  return -0.5 * H * contract(hat.L_rst, l1, hat.L_up) - H * H * H * contract(hat.L_rst, l1, l1, l1) / 6.0 +
         H * hat.Pi_r.dot(l1);
}

double a_B(const HatArrays& hat) {
  if (!hat.has_prior) throw MissingArrayError("a_B needs prior derivatives in the hat arrays");
  const Eigen::MatrixXd& L = hat.L_up;
  const Eigen::MatrixXd& V = hat.V_up;
  const auto d = static_cast<Eigen::Index>(hat.L_rst.dim());
  double a = 0.25 * (contract(hat.L_rstu, L, L) - contract(hat.L_rstu, V, V));
  a -= 0.25 * (contract(hat.L_rst, hat.L_rst, L, L, L) - contract(hat.L_rst, hat.L_rst, V, V, V));
  a -= (contract_cross(hat.L_rst, hat.L_rst, L, L, L) - contract_cross(hat.L_rst, hat.L_rst, V, V, V)) / 6.0;
  // (L^{rs} L^{tu} - V^{rs} V^{tu}) L_rst Pi_u
  Eigen::VectorXd wl = Eigen::VectorXd::Zero(d), wv = Eigen::VectorXd::Zero(d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index s = 0; s < d; ++s)
      for (Eigen::Index t = 0; t < d; ++t) {
        wl[t] += hat.L_rst(r, s, t) * L(r, s);
        wv[t] += hat.L_rst(r, s, t) * V(r, s);
      }
  a += wl.dot(L * hat.Pi_r) - wv.dot(V * hat.Pi_r);
  a -= ((L - V).cwiseProduct(hat.Pi_rs)).sum();
  return a;
}

double sigma2_B(const HatArrays& hat) {
  const double m = mu_B(hat);
  return 1.0 + a_B(hat) - m * m;
}

namespace {

// One pass of the tensor-product rule at a fixed box width and panel count.
// Every axis is standardized around its centre and then mapped through
// z = sinh(s), so polynomial tails decay exponentially in s.
struct Grid {
  std::shared_ptr<CompositeRule> rule;  // psi axis in s
  double c0 = 0.0, sd0 = 1.0;  // transformed psi = c0 + sd0 sinh(s)
  std::vector<double> marginal;  // unnormalized marginal density in s
  std::vector<double> psi;
  std::vector<double> R;
  std::vector<char> R_ok;
  double Z = 0.0;
  double edge_psi = 0.0;
  double edge_inner = 0.0;
  bool positive_psi = false;
};

// Axis extents: the psi axis and the nuisance axes grow separately.
struct Box {
  double s_psi = 0.0;
  int panels_psi = 0;
  double s_inner = 0.0;
  int panels_inner = 0;
};

Grid integrate(const Profile& profile, const PriorSpec& prior, const Box& box, int per_panel) {
  const ModelFamily& f = profile.family();
  const auto y = profile.sample().y();
  const Eigen::VectorXd& theta_hat = profile.mle().theta_hat;
  const auto d = static_cast<Eigen::Index>(theta_hat.size());
  const Eigen::Index q = d - 1;
  if (q > 2) throw DomainError("quadrature posterior supports at most three parameters");
  const auto pos = f.positive_coordinates();

  auto to_x = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd x = t;
    for (Eigen::Index k = 0; k < d; ++k)
      if (pos[static_cast<std::size_t>(k)]) x[k] = std::log(t[k]);
    return x;
  };
  auto from_x = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd t = x;
    for (Eigen::Index k = 0; k < d; ++k)
      if (pos[static_cast<std::size_t>(k)]) t[k] = std::exp(x[k]);
    return t;
  };
  // Hessian of L in the transformed coordinates.
  auto hess_x = [&](const Eigen::VectorXd& t) {
    const DerivTensors D = f.derivs_unchecked(t, y, 2);
    Eigen::VectorXd J = Eigen::VectorXd::Ones(d);
    for (Eigen::Index k = 0; k < d; ++k)
      if (pos[static_cast<std::size_t>(k)]) J[k] = t[k];
    Eigen::MatrixXd H = J.asDiagonal() * D.hess * J.asDiagonal();
    for (Eigen::Index k = 0; k < d; ++k)
      if (pos[static_cast<std::size_t>(k)]) H(k, k) += D.grad[k] * t[k];
    return H;
  };

  const Eigen::VectorXd c = to_x(theta_hat);
  const Eigen::MatrixXd cov = (-hess_x(theta_hat)).inverse();
  const double sd0 = std::sqrt(cov(0, 0));

  Grid g;
  g.positive_psi = pos[0];
  g.c0 = c[0];
  g.sd0 = sd0;
  g.rule = std::make_shared<CompositeRule>(-box.s_psi, box.s_psi, box.panels_psi, per_panel);
  const CompositeRule& rule = *g.rule;
  const std::size_t K = rule.size();
  std::vector<double> x0s(K);
  for (std::size_t k = 0; k < K; ++k) x0s[k] = c[0] + sd0 * std::sinh(rule.node(k));
  const CompositeRule inner(-box.s_inner, box.s_inner, box.panels_inner, per_panel);
  const std::size_t J1 = inner.size();
  std::size_t Jn = 1;
  for (Eigen::Index k = 0; k < q; ++k) Jn *= J1;

  std::vector<Eigen::VectorXd> centers(K);
  std::vector<Eigen::MatrixXd> chols(K);
  g.psi.resize(K);
  g.R.assign(K, 0.0);
  g.R_ok.assign(K, 0);

  const Eigen::MatrixXd cov_pp = q > 0 ? cov.bottomRightCorner(q, q) : Eigen::MatrixXd();
  const Eigen::VectorXd cov_p0 = q > 0 ? cov.col(0).tail(q) : Eigen::VectorXd();
  // Gaussian conditional from the joint curvature at the MLE
  const Eigen::MatrixXd cond_cov = q > 0 ? Eigen::MatrixXd(cov_pp - cov_p0 * cov_p0.transpose() / cov(0, 0))
                                         : Eigen::MatrixXd();
  auto fallback = [&](std::size_t k) {
    centers[k] = c.tail(q) + cov_p0 * ((x0s[k] - c[0]) / cov(0, 0));
    chols[k] = cond_cov.llt().matrixL();
  };

  // Sweep outward from the node nearest psi_hat so each constrained fit is
  // warm-started from its neighbour.
  const auto mid = static_cast<std::size_t>(
      std::lower_bound(rule.nodes().begin(), rule.nodes().end(), 0.0) - rule.nodes().begin());
  auto visit = [&](std::size_t k, Eigen::VectorXd& warm) {
    const double psi = pos[0] ? std::exp(x0s[k]) : x0s[k];
    g.psi[k] = psi;
    if (!std::isfinite(psi) || psi == 0.0) {
      g.R_ok[k] = 0;
      if (q > 0) fallback(k);
      return;
    }
    if (q == 0) {
      g.R_ok[k] = 1;
      return;
    }
    try {
      const ProfilePoint p = profile.at(psi, &warm);
      warm = p.phi_tilde;
      g.R[k] = p.R;
      g.R_ok[k] = 1;
      const Eigen::VectorXd t = p.theta();
      const Eigen::MatrixXd Hx = hess_x(t).bottomRightCorner(q, q);
      Eigen::LLT<Eigen::MatrixXd> llt(-Hx);
      if (llt.info() != Eigen::Success) {
        fallback(k);
        return;
      }
      centers[k] = to_x(t).tail(q);
      // Local curvature alone can be far too narrow where the conditional
      // posterior has several modes; adding the MLE-based spread keeps the
      // box wide enough for both.
      const Eigen::MatrixXd local = llt.solve(Eigen::MatrixXd::Identity(q, q));
      chols[k] = (local + cond_cov).llt().matrixL();
    } catch (const Error&) {
      fallback(k);
    }
  };
  {
    Eigen::VectorXd warm = theta_hat.tail(q);
    for (std::size_t k = std::min(mid, K - 1) + 1; k-- > 0;) visit(k, warm);
    warm = theta_hat.tail(q);
    for (std::size_t k = std::min(mid, K - 1) + 1; k < K; ++k) visit(k, warm);
  }

  // log posterior on the sheared grid
  std::vector<double> lp(K * Jn, -std::numeric_limits<double>::infinity());
  std::vector<double> jac(K, 1.0);
  std::vector<double> sinh_inner(J1), log_cosh_inner(J1);
  for (std::size_t i = 0; i < J1; ++i) {
    sinh_inner[i] = std::sinh(inner.node(i));
    log_cosh_inner[i] = std::log(std::cosh(inner.node(i)));
  }
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    jac[k] = sd0 * std::cosh(rule.node(k));
    if (q > 0) jac[k] *= chols[k].diagonal().prod();
    Eigen::VectorXd x(d), tvec(q);
    x[0] = x0s[k];
    for (std::size_t j = 0; j < Jn; ++j) {
      std::size_t rem = j;
      double log_jac = 0.0;
      for (Eigen::Index a = 0; a < q; ++a) {
        tvec[a] = sinh_inner[rem % J1];
        log_jac += log_cosh_inner[rem % J1];
        rem /= J1;
      }
      if (q > 0) x.tail(q) = centers[k] + chols[k] * tvec;
      const Eigen::VectorXd theta = from_x(x);
      if (!theta.allFinite() || !f.in_domain(theta)) continue;
      double v = f.loglik_unchecked(theta, y) + prior.log_pi(theta) + log_jac;
      for (Eigen::Index a = 0; a < d; ++a)
        if (pos[static_cast<std::size_t>(a)]) v += x[a];
      if (!std::isfinite(v)) continue;
      lp[k * Jn + j] = v;
      top = std::max(top, v);
    }
  }
  if (!std::isfinite(top)) throw QuadratureError("posterior is not finite anywhere on the grid");

  const auto per = static_cast<std::size_t>(per_panel);
  g.marginal.assign(K, 0.0);
  double inner_edge = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double m = 0.0, e = 0.0;
    for (std::size_t j = 0; j < Jn; ++j) {
      const double v = lp[k * Jn + j];
      if (!std::isfinite(v)) continue;
      double w = 1.0;
      bool edge = false;
      std::size_t rem = j;
      for (Eigen::Index a = 0; a < q; ++a) {
        const std::size_t i = rem % J1;
        rem /= J1;
        w *= inner.weight(i);
        edge = edge || i < per || i >= J1 - per;
      }
      const double contrib = w * std::exp(v - top);
      m += contrib;
      if (edge) e += contrib;
    }
    if (m == 0.0) continue;
    g.marginal[k] = jac[k] * m;
    inner_edge += rule.weight(k) * jac[k] * e;
  }
  double Z = 0.0, edge = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    Z += rule.weight(k) * g.marginal[k];
    if (k < per || k >= K - per) edge += rule.weight(k) * g.marginal[k];
  }
  g.Z = Z;
  g.edge_psi = edge / Z;
  g.edge_inner = inner_edge / Z;
  return g;
}

// CDF and quantiles of the transformed psi from the panel interpolants.
struct Marginal {
  std::shared_ptr<CompositeRule> rule;
  std::vector<double> density;  // normalized, in s
  std::vector<double> cum;  // CDF at panel_lo(p)
  bool positive = false;
  double c0 = 0.0, sd0 = 1.0;

  double cdf_x(double x) const {
    const double s = std::asinh((x - c0) / sd0);
    if (s <= rule->lo()) return 0.0;
    if (s >= rule->hi()) return 1.0;
    const int p = rule->panel_of(s);
    const auto per = static_cast<std::size_t>(rule->per_panel());
    std::span<const double> f(density.data() + static_cast<std::size_t>(p) * per, per);
    return std::clamp(cum[static_cast<std::size_t>(p)] + rule->partial_integral(p, f, s), 0.0, 1.0);
  }
  double cdf(double psi) const {
    if (positive) return psi <= 0 ? 0.0 : cdf_x(std::log(psi));
    return cdf_x(psi);
  }
  double quantile(double alpha) const {
    const int P = rule->panels();
    int p = 0;
    while (p + 1 < P && cum[static_cast<std::size_t>(p + 1)] < alpha) ++p;
    const auto per = static_cast<std::size_t>(rule->per_panel());
    std::span<const double> f(density.data() + static_cast<std::size_t>(p) * per, per);
    auto fn = [&](double x) { return cum[static_cast<std::size_t>(p)] + rule->partial_integral(p, f, x) - alpha; };
    double a = rule->panel_lo(p), b = rule->panel_hi(p);
    double fa = fn(a), fb = fn(b);
    double x;
    if (fa >= 0) {
      x = a;
    } else if (fb <= 0) {
      x = b;
    } else {
      boost::uintmax_t iters = 200;
      auto r = boost::math::tools::toms748_solve(fn, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(50), iters);
      x = 0.5 * (r.first + r.second);
    }
    x = c0 + sd0 * std::sinh(x);
    return positive ? std::exp(x) : x;
  }
};

Marginal make_marginal(const Grid& g) {
  Marginal m;
  m.rule = g.rule;
  m.positive = g.positive_psi;
  m.c0 = g.c0;
  m.sd0 = g.sd0;
  m.density.resize(g.marginal.size());
  for (std::size_t k = 0; k < g.marginal.size(); ++k) m.density[k] = g.marginal[k] / g.Z;
  const int P = g.rule->panels();
  const auto per = static_cast<std::size_t>(g.rule->per_panel());
  m.cum.assign(static_cast<std::size_t>(P) + 1, 0.0);
  for (int p = 0; p < P; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t k = static_cast<std::size_t>(p) * per + i;
      s += g.rule->weight(k) * m.density[k];
    }
    m.cum[static_cast<std::size_t>(p) + 1] = m.cum[static_cast<std::size_t>(p)] + s;
  }
  return m;
}

struct Moments {
  double mean_R = 0.0, var_R = 0.0, mean_psi = 0.0, var_psi = 0.0, failed = 0.0;
};

Moments moments(const Grid& g) {
  Moments m;
  double ok = 0.0, r1 = 0.0, r2 = 0.0, p1 = 0.0, p2 = 0.0;
  for (std::size_t k = 0; k < g.marginal.size(); ++k) {
    const double w = g.rule->weight(k) * g.marginal[k] / g.Z;
    p1 += w * g.psi[k];
    p2 += w * g.psi[k] * g.psi[k];
    if (!g.R_ok[k]) {
      m.failed += w;
      continue;
    }
    ok += w;
    r1 += w * g.R[k];
    r2 += w * g.R[k] * g.R[k];
  }
  m.mean_R = r1 / ok;
  m.var_R = r2 / ok - m.mean_R * m.mean_R;
  m.mean_psi = p1;
  m.var_psi = p2 - p1 * p1;
  return m;
}

}  // namespace

PosteriorSummary quadrature_posterior(const Profile& profile, const PriorSpec& prior, const std::vector<double>& alphas,
                                      const QuadratureOptions& opt) {
  if (opt.nodes % opt.per_panel != 0) throw ConfigError("node count must be a multiple of the panel size");
  // the s range asinh(width) matches the requested width near the centre;
  // an axis whose outer panels hold too much mass grows by half in range
  // and node count
  Box box;
  box.s_psi = box.s_inner = std::asinh(opt.width);
  box.panels_psi = box.panels_inner = opt.nodes / opt.per_panel;
  auto grow = [](double& s, int& panels) {
    s *= 1.5;
    panels = static_cast<int>(std::ceil(panels * 1.5));
  };
  std::vector<std::string> trace;
  Grid g;
  for (int attempt = 0;; ++attempt) {
    g = integrate(profile, prior, box, opt.per_panel);
    std::ostringstream os;
    os << "psi axis s <= " << box.s_psi << " (" << box.panels_psi * opt.per_panel << " nodes), nuisance s <= "
       << box.s_inner << " (" << box.panels_inner * opt.per_panel << " nodes): edge mass psi " << g.edge_psi
       << ", nuisance " << g.edge_inner;
    trace.push_back(os.str());
    const bool psi_ok = g.edge_psi <= opt.edge_tolerance, inner_ok = g.edge_inner <= opt.edge_tolerance;
    if (psi_ok && inner_ok) break;
    if (attempt == opt.max_expansions)
      throw QuadratureError("posterior mass reaches the edge of the integration box", trace);
    if (!psi_ok) grow(box.s_psi, box.panels_psi);
    if (!inner_ok) grow(box.s_inner, box.panels_inner);
  }

  auto marginal = std::make_shared<Marginal>(make_marginal(g));
  const Moments mom = moments(g);

  PosteriorSummary s;
  s.method = PosteriorMethod::quadrature_oracle;
  s.mu_B = mom.mean_R;
  s.sigma2_B = mom.var_R;
  s.a_B = mom.var_R + mom.mean_R * mom.mean_R - 1.0;
  s.mean_psi = mom.mean_psi;
  s.var_psi = mom.var_psi;
  s.failed_weight = mom.failed;
  for (double a : alphas) s.quantiles[a] = marginal->quantile(a);
  s.quantile_fn = [marginal](double a) { return marginal->quantile(a); };
  s.cdf_fn = [marginal](double psi) { return marginal->cdf(psi); };
  if (opt.signed_root_moments && mom.failed > 1e-6) {
    std::ostringstream os;
    os << "signed root failed at nodes carrying posterior mass " << mom.failed;
    throw QuadratureError(os.str(), trace);
  }

  if (opt.self_check) {
    Box doubled = box;
    doubled.panels_psi *= 2;
    doubled.panels_inner *= 2;
    const Grid g2 = integrate(profile, prior, doubled, opt.per_panel);
    const Marginal m2 = make_marginal(g2);
    const Moments mom2 = moments(g2);
    const double scale = std::sqrt(mom.var_psi);
    double worst = 0.0;
    for (double a : alphas) {
      const double q1 = s.quantiles[a], q2 = m2.quantile(a);
      worst = std::max(worst, std::abs(q1 - q2) / std::max(std::abs(q1), scale));
    }
    if (opt.signed_root_moments) {
      worst = std::max(worst, std::abs(mom.mean_R - mom2.mean_R) / std::max(1.0, std::abs(mom.mean_R)));
      worst = std::max(worst, std::abs(mom.var_R - mom2.var_R) / std::max(1.0, mom.var_R));
    }
    std::ostringstream os;
    os << "doubled nodes: relative change " << worst;
    trace.push_back(os.str());
    if (worst > opt.self_check_tolerance) throw QuadratureError("node-doubling check failed", trace);
  }
  s.trace = std::move(trace);
  return s;
}

double refined_quantile(const Profile& profile, double mu_B, double alpha, double sigma_B, double tolerance) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const double target = mu_B + normal_quantile(alpha) * sigma_B;
  const double psi_hat = profile.psi_hat();
  if (target == 0.0) return psi_hat;
  const bool positive = profile.family().positive_coordinates()[0];
  const DerivTensors D = profile.family().loglik_derivs(profile.mle().theta_hat, profile.sample(), 2);
  const double l11 = D.hess.inverse()(0, 0);
  const double H = 1.0 / std::sqrt(-l11);

  const Eigen::Index q = profile.mle().theta_hat.size() - 1;
  Eigen::VectorXd warm = profile.mle().theta_hat.tail(q);
  auto to_psi = [&](double x) { return positive ? std::exp(x) : x; };
  auto fn = [&](double x) {
    const ProfilePoint p = profile.at(to_psi(x), &warm);
    warm = p.phi_tilde;
    return p.R - target;
  };
  const double x_hat = positive ? std::log(psi_hat) : psi_hat;
  const double sd = positive ? 1.0 / (H * psi_hat) : 1.0 / H;
  const double guess = x_hat - target * sd;

  // R - target decreases in x; walk away from the guess until the sign flips.
  double a = guess, fa = fn(a);
  if (fa == 0.0) return to_psi(a);
  const double dir = fa > 0 ? 1.0 : -1.0;
  double b = a, fb = fa, step = 0.25 * sd;
  for (int k = 0; k < 60; ++k) {
    b = a + dir * step;
    fb = fn(b);
    if ((fb > 0) != (fa > 0) || fb == 0.0) break;
    a = b;
    fa = fb;
    step *= 2.0;
  }
  if ((fb > 0) == (fa > 0) && fb != 0.0) {
    std::ostringstream os;
    os << "could not bracket R(psi) = " << target;
    throw BracketError(os.str());
  }
  if (fb == 0.0) return to_psi(b);
  if (a > b) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  boost::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(fn, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(52), iters);
  // take whichever end of the final bracket is closer to the target
  double x = r.first;
  double fx = fn(r.first);
  const double f2 = fn(r.second);
  if (std::abs(f2) < std::abs(fx)) {
    x = r.second;
    fx = f2;
  }
  if (std::abs(fx) > tolerance) {
    std::ostringstream os;
    os << "refined quantile residual " << fx << " exceeds " << tolerance;
    throw ConvergenceError(os.str(), {});
  }
  return to_psi(x);
}

namespace {

void fill_from_hat(PosteriorSummary& s, const Profile& profile, const PriorSpec& prior) {
  const HatArrays hat = hat_arrays(profile.family(), profile.sample(), profile.mle().theta_hat, &prior);
  s.mu_B = mu_B(hat);
  s.a_B = a_B(hat);
  s.sigma2_B = 1.0 + s.a_B - s.mu_B * s.mu_B;
}

}  // namespace

PosteriorSummary laplace_posterior(const Profile& profile, const PriorSpec& prior, const std::vector<double>& alphas) {
  PosteriorSummary s;
  s.method = PosteriorMethod::laplace_expansion;
  fill_from_hat(s, profile, prior);
  auto shared = std::make_shared<Profile>(profile);
  const double m = s.mu_B;
  s.quantile_fn = [shared, m](double p) { return refined_quantile(*shared, m, 1.0 - p); };
  s.cdf_fn = [shared, m](double psi) {
    return 1.0 - boost::math::cdf(boost::math::normal(), shared->R(psi) - m);
  };
  for (double a : alphas) s.quantiles[a] = s.quantile_fn(a);
  return s;
}

bool conjugate_available(const ModelFamily& family, const PriorSpec& prior) {
  const LocationScaleModel* ls = family.location_scale();
  return ls && ls->kernel_name() == "normal" && prior.scale_power().has_value();
}

PosteriorSummary conjugate_normal_posterior(const Profile& profile, const PriorSpec& prior,
                                            const std::vector<double>& alphas) {
  const ModelFamily& f = profile.family();
  if (!conjugate_available(f, prior))
    throw DomainError("closed-form posterior needs the normal family and a prior sigma^-k");
  const double k = *prior.scale_power();
  const auto y = profile.sample().y();
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double S = 0.0;
  for (double v : y) S += (v - mean) * (v - mean);
  const double nu = n + k - 2.0;
  if (!(nu > 0)) throw DomainError("posterior is improper for this sample size and prior");

  PosteriorSummary s;
  s.method = PosteriorMethod::conjugate;
  fill_from_hat(s, profile, prior);
  if (f.location_scale()->scale_interest()) {
    const boost::math::chi_squared chi(nu);
    s.quantile_fn = [chi, S](double p) { return std::sqrt(S / boost::math::quantile(chi, 1.0 - p)); };
    s.cdf_fn = [chi, S](double sigma) { return sigma <= 0 ? 0.0 : boost::math::cdf(complement(chi, S / (sigma * sigma))); };
  } else {
    const boost::math::students_t t(nu);
    const double scale = std::sqrt(S / (n * nu));
    s.quantile_fn = [t, mean, scale](double p) { return mean + scale * boost::math::quantile(t, p); };
    s.cdf_fn = [t, mean, scale](double mu) { return boost::math::cdf(t, (mu - mean) / scale); };
  }
  for (double a : alphas) s.quantiles[a] = s.quantile_fn(a);
  return s;
}

}  // namespace matchprior
