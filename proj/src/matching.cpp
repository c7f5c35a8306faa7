#include "matchprior/matching.hpp"

#include <cmath>
#include <memory>

#include "matchprior/contract.hpp"
#include "matchprior/error.hpp"
#include "matchprior/finite_diff.hpp"

namespace matchprior {

double mu_F(const LambdaArrays& a) {
  if (!a.derived()) throw MissingArrayError("mu_F needs derived lambda arrays");
  if (a.lambda_rs_slash_t.dim() == 0) throw MissingArrayError("mu_F needs lambda_{rs/t}");
  const Eigen::VectorXd l1 = a.lambda_up.col(0);
  const double e = a.eta, e3 = e * e * e;
  return -0.5 * e * contract(a.lambda_rst, l1, a.lambda_up) - e3 * contract(a.lambda_rst, l1, l1, l1) / 6.0 +
         e * contract(a.lambda_rs_slash_t, l1, a.lambda_up) + 0.5 * e3 * contract(a.lambda_rs_slash_t, l1, l1, l1);
}

double a_F(const LambdaArrays& a) {
  if (!a.derived()) throw MissingArrayError("a_F needs derived lambda arrays");
  if (a.lambda_rst_slash_u.dim() == 0 || a.lambda_rs_slash_tu.dim() == 0)
    throw MissingArrayError("a_F needs lambda_{rst/u} and lambda_{rs/tu}");
  const std::size_t d = a.dim();
  const Eigen::MatrixXd& L = a.lambda_up;
  const Eigen::MatrixXd& N = a.nu_up;
  const Tensor3& l3 = a.lambda_rst;
  const Tensor3& S = a.lambda_rs_slash_t;

  // quartic bracket: 1/4 lambda_rstu - lambda_{rst/u} + lambda_{rt/su}
  Tensor4 Q(d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t u = 0; u < d; ++u)
          Q(r, s, t, u) = 0.25 * a.lambda_rstu(r, s, t, u) - a.lambda_rst_slash_u(r, s, t, u) +
                          a.lambda_rs_slash_tu(r, t, s, u);
  double v = contract(Q, L, L) - contract(Q, N, N);

  auto bracket = [&](const Eigen::MatrixXd& M, double first) {
    return first * contract(l3, l3, M, M, M) - contract(l3, S, M, M, M) + contract(S, S, M, M, M);
  };
  auto bracket_cross = [&](const Eigen::MatrixXd& M, double first) {
    return first * contract_cross(l3, l3, M, M, M) - contract_cross(l3, S, M, M, M) + contract_cross(S, S, M, M, M);
  };
  v -= bracket(L, 0.25) - bracket(N, 0.25);
  v -= bracket_cross(L, 1.0 / 6.0) - bracket_cross(N, 1.0 / 6.0);
  return v;
}

LambdaField analytic_field(const ModelFamily& family, double n) {
  return [&family, n](const Eigen::VectorXd& t) { return analytic_lambda(family, t, n); };
}

InformationField analytic_information(const ModelFamily& family, double n) {
  return [&family, n](const Eigen::VectorXd& t) {
    family.require_domain(t);
    return Eigen::MatrixXd(n * family.observation_moments(t).l_rs);
  };
}

CumulantField analytic_cumulants(const ModelFamily& family, double n) {
  return [&family, n](const Eigen::VectorXd& t) {
    family.require_domain(t);
    const ObservationMoments m = family.observation_moments(t);
    return CumulantPair{n * m.l_rs, m.l_rst * n};
  };
}

InformationField monte_carlo_information(const ModelFamily& family, std::size_t n, std::size_t reps,
                                         const Stream& stream) {
  auto uniforms = std::make_shared<std::vector<double>>(n * reps);
  for (std::size_t r = 0; r < reps; ++r) {
    Stream s = stream.split(r);
    for (std::size_t i = 0; i < n; ++i) (*uniforms)[r * n + i] = s.uniform();
  }
  return [&family, n, reps, uniforms](const Eigen::VectorXd& t) {
    family.require_domain(t);
    const auto d = static_cast<Eigen::Index>(family.dim());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t i = 0; i < n; ++i) y[i] = family.quantile(t, (*uniforms)[r * n + i]);
      acc += family.derivs_unchecked(t, y, 2).hess;
    }
    return Eigen::MatrixXd(acc / static_cast<double>(reps));
  };
}

namespace {

double step_for(const ModelFamily& family, const Eigen::VectorXd& theta, Eigen::Index k, int order) {
  return five_point_step(theta[k], family.positive_coordinates()[static_cast<std::size_t>(k)], order);
}

Eigen::MatrixXd inverse_of(const Eigen::MatrixXd& m) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) throw SingularityError("lambda_rs is singular");
  Eigen::MatrixXd inv = lu.inverse();
  return 0.5 * (inv + inv.transpose());
}

// eta lambda^{r1}
Eigen::VectorXd wp_vector(const Eigen::MatrixXd& lambda_rs) {
  const Eigen::MatrixXd up = inverse_of(lambda_rs);
  if (!(up(0, 0) < 0)) throw SingularityError("lambda^{11} is not negative");
  return up.col(0) / std::sqrt(-up(0, 0));
}

}  // namespace

double sigma2_F(const LambdaArrays& arrays, const LambdaField& field, const ModelFamily& family,
                const Eigen::VectorXd& theta) {
  const double m = mu_F(arrays);
  const auto d = static_cast<Eigen::Index>(arrays.dim());
  double drift = 0.0;
  for (Eigen::Index r = 0; r < d; ++r) {
    const double h = step_for(family, theta, r, 1);
    const double dm = five_point([&](const Eigen::VectorXd& t) { return mu_F(field(t)); }, theta, r, h);
    drift += dm * arrays.lambda_up(r, 0);
  }
  return 1.0 + a_F(arrays) + 2.0 * arrays.eta * drift - m * m;
}

double welch_peers_residual(const InformationField& field, const PriorSpec& prior, const ModelFamily& family,
                            const Eigen::VectorXd& theta) {
  const Eigen::VectorXd v = wp_vector(field(theta));
  double lhs = prior.grad_log(theta).dot(v);
  double div = 0.0;
  for (Eigen::Index r = 0; r < theta.size(); ++r) {
    const double h = step_for(family, theta, r, 1);
    div += five_point([&](const Eigen::VectorXd& t) { return wp_vector(field(t))[r]; }, theta, r, h);
  }
  return lhs + div;
}

SecondOrderResult second_order_residual(const CumulantField& field, const PriorSpec& prior, const ModelFamily& family,
                                        const Eigen::VectorXd& theta, double wp_tolerance) {
  const auto d = static_cast<Eigen::Index>(theta.size());
  const double log_pi0 = prior.log_pi(theta);
  // pi(theta') / pi(theta) keeps the normalization by pi(theta) exact.
  auto rel_pi = [&](const Eigen::VectorXd& t) { return std::exp(prior.log_pi(t) - log_pi0); };
  auto tau_of = [](const Eigen::MatrixXd& up) { return Eigen::MatrixXd(up.col(0) * up.col(0).transpose() / up(0, 0)); };

  // A_r = pi (nu^{rs} + tau^{rs} / 3) tau^{tu} lambda_stu
  auto A = [&](const Eigen::VectorXd& t) {
    const CumulantPair c = field(t);
    const Eigen::MatrixXd up = inverse_of(c.lambda_rs);
    const Eigen::MatrixXd tau = tau_of(up);
    Eigen::MatrixXd nu = up - tau;
    nu.row(0).setZero();
    nu.col(0).setZero();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    for (Eigen::Index s = 0; s < d; ++s)
      for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b)
          w[s] += tau(a, b) * c.lambda_rst(static_cast<std::size_t>(s), static_cast<std::size_t>(a),
                                          static_cast<std::size_t>(b));
    return Eigen::VectorXd(rel_pi(t) * ((nu + tau / 3.0) * w));
  };
  auto P = [&](const Eigen::VectorXd& t) { return Eigen::MatrixXd(rel_pi(t) * tau_of(inverse_of(field(t).lambda_rs))); };

  double total = 0.0;
  for (Eigen::Index r = 0; r < d; ++r) {
    const double h1 = step_for(family, theta, r, 1);
    total += five_point([&](const Eigen::VectorXd& t) { return A(t)[r]; }, theta, r, h1);
    const double h2 = step_for(family, theta, r, 2);
    total += five_point_second([&](const Eigen::VectorXd& t) { return P(t)(r, r); }, theta, r, h2);
    for (Eigen::Index s = r + 1; s < d; ++s) {
      const double hs = step_for(family, theta, s, 2);
      total += 2.0 * five_point_mixed([&](const Eigen::VectorXd& t) { return P(t)(r, s); }, theta, r, s, h2, hs);
    }
  }
  SecondOrderResult out;
  out.residual = total;
  InformationField info = [&](const Eigen::VectorXd& t) { return field(t).lambda_rs; };
  out.wp_residual = welch_peers_residual(info, prior, family, theta);
  out.precondition_warning = std::abs(out.wp_residual) > wp_tolerance;
  return out;
}

double eval_f_theta(const DerivTensors& D, const PriorSpec* prior, const Eigen::VectorXd& theta) {
  if (D.order < 3) throw MissingArrayError("f(theta) needs third derivatives");
  const Eigen::MatrixXd up = inverse_of(D.hess);
  if (!(up(0, 0) < 0)) throw SingularityError("L^{11} is not negative");
  const Eigen::VectorXd l1 = up.col(0);
  const double H = 1.0 / std::sqrt(-up(0, 0));
  double f = -0.5 * H * contract(D.third, l1, up) - H * H * H * contract(D.third, l1, l1, l1) / 6.0;
  if (prior) f += H * prior->grad_log(theta).dot(l1);
  return f;
}

MatchingReport matching_report(const ModelFamily& family, const PriorSpec& prior, const Eigen::VectorXd& theta,
                               const MatchingOptions& opt) {
  family.require_domain(theta);
  MatchingReport rep;
  rep.theta = theta;
  if (opt.order >= 2) {
    const SecondOrderResult so = second_order_residual(analytic_cumulants(family, opt.n), prior, family, theta,
                                                       opt.tolerance);
    rep.so_residual = so.residual;
    rep.wp_residual = so.wp_residual;
    rep.precondition_warning = so.precondition_warning;
  } else {
    rep.wp_residual = welch_peers_residual(analytic_information(family, opt.n), prior, family, theta);
  }
  rep.passes = std::abs(rep.wp_residual) <= opt.tolerance && (opt.order < 2 || std::abs(rep.so_residual) <= opt.tolerance);
  if (opt.moments) {
    const LambdaField field = analytic_field(family, opt.n);
    const LambdaArrays arrays = field(theta);
    rep.mu_F = mu_F(arrays);
    rep.a_F = a_F(arrays);
    rep.sigma2_F = sigma2_F(arrays, field, family, theta);
  }
  return rep;
}

std::vector<Eigen::VectorXd> theta_grid(const ModelFamily& family, const Eigen::VectorXd& reference,
                                        std::vector<std::vector<double>> axes) {
  const auto d = static_cast<std::size_t>(reference.size());
  const auto pos = family.positive_coordinates();
  axes.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    if (!axes[k].empty()) continue;
    const double x = reference[static_cast<Eigen::Index>(k)];
    axes[k] = pos[k] ? std::vector<double>{x / 2, x, 2 * x} : std::vector<double>{x - 1, x, x + 1};
  }
  std::vector<Eigen::VectorXd> grid;
  std::vector<std::size_t> idx(d, 0);
  for (;;) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) t[static_cast<Eigen::Index>(k)] = axes[k][idx[k]];
    grid.push_back(t);
    std::size_t k = 0;
    while (k < d && ++idx[k] == axes[k].size()) idx[k++] = 0;
    if (k == d) break;
  }
  return grid;
}

std::vector<MatchingReport> matching_grid(const ModelFamily& family, const PriorSpec& prior,
                                          const std::vector<Eigen::VectorXd>& grid, const MatchingOptions& opt) {
  std::vector<MatchingReport> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.push_back(matching_report(family, prior, grid[i], opt));
    out.back().grid_index = i;
  }
  return out;
}

}  // namespace matchprior
