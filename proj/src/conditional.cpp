#include "matchprior/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/tools/roots.hpp>

#include "matchprior/contract.hpp"
#include "matchprior/error.hpp"
#include "matchprior/matching.hpp"

namespace matchprior {

const LocationScaleModel& require_location_scale(const ModelFamily& family) {
  const LocationScaleModel* ls = family.location_scale();
  if (!ls) throw DomainError(family.key() + " is not a location-scale family");
  return *ls;
}

namespace {

void score_sums(const LocationScaleModel& ls, const std::vector<double>& a, double& s_loc, double& s_scale) {
  double d[5];
  s_loc = 0.0;
  s_scale = static_cast<double>(a.size());
  for (double ai : a) {
    ls.h_derivs(ai, d);
    s_loc += d[1];
    s_scale += ai * d[1];
  }
}

Configuration standardize(const LocationScaleModel& ls, std::span<const double> y, const Eigen::VectorXd& theta) {
  Configuration c;
  c.mu_hat = theta[static_cast<Eigen::Index>(ls.mu_slot())];
  c.sigma_hat = theta[static_cast<Eigen::Index>(ls.sigma_slot())];
  c.a.reserve(y.size());
  for (double v : y) c.a.push_back((v - c.mu_hat) / c.sigma_hat);
  score_sums(ls, c.a, c.score_location, c.score_scale);
  return c;
}

bool scores_ok(const Configuration& c, double tol) {
  return std::abs(c.score_location) <= tol && std::abs(c.score_scale) <= tol;
}

}  // namespace

Configuration configuration(const ModelFamily& family, const Sample& sample, const FitResult& fit, double tolerance) {
  const LocationScaleModel& ls = require_location_scale(family);
  Eigen::VectorXd theta = fit.theta_hat;
  Configuration c = standardize(ls, sample.y(), theta);
  // a few plain Newton steps take a converged fit to round-off
  for (int it = 0; it < 5 && !scores_ok(c, 0.01 * tolerance); ++it) {
    const DerivTensors D = family.derivs_unchecked(theta, sample.y(), 2);
    const Eigen::VectorXd next = theta - D.hess.ldlt().solve(D.grad);
    if (!family.in_domain(next)) break;
    const Configuration cn = standardize(ls, sample.y(), next);
    if (std::hypot(cn.score_location, cn.score_scale) >= std::hypot(c.score_location, c.score_scale)) break;
    theta = next;
    c = cn;
  }
  if (!scores_ok(c, tolerance)) {
    std::ostringstream os;
    os << "configuration fails the score equations: sum h'(a) = " << c.score_location
       << ", n + sum a h'(a) = " << c.score_scale;
    throw FitQualityError(os.str());
  }
  return c;
}

Configuration configuration_from(const ModelFamily& family, std::vector<double> a, double tolerance) {
  const LocationScaleModel& ls = require_location_scale(family);
  Configuration c;
  c.a = std::move(a);
  score_sums(ls, c.a, c.score_location, c.score_scale);
  if (!scores_ok(c, tolerance)) {
    std::ostringstream os;
    os << "residuals are not a configuration: sum h'(a) = " << c.score_location
       << ", n + sum a h'(a) = " << c.score_scale;
    throw FitQualityError(os.str());
  }
  return c;
}

Configuration simulate_configuration(const ModelFamily& family, std::size_t n, Stream& stream) {
  const LocationScaleModel& ls = require_location_scale(family);
  const ParameterPoint theta(ls.theta_of(0.0, 1.0));
  for (int attempt = 0;; ++attempt) {
    const Sample s = family.sample(theta, n, stream);
    try {
      return configuration(family, s, fit_mle(family, s));
    } catch (const Error&) {
      if (attempt >= 20) throw;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

// log density in (t, w) up to a constant, with gradient and Hessian:
// n w + sum h(e^w (t + a_i)).
double log_kernel(const LocationScaleModel& ls, const std::vector<double>& a, double t, double w,
                  Eigen::Vector2d* grad = nullptr, Eigen::Matrix2d* hess = nullptr) {
  const double v = std::exp(w);
  const double n = static_cast<double>(a.size());
  double val = n * w;
  if (!grad) return val + ls.sum_h(v * t, v, a);
  double d[5];
  Eigen::Vector2d g(0.0, n);
  Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
  for (double ai : a) {
    const double z = v * (t + ai);
    ls.h_derivs(z, d);
    val += d[0];
    g[0] += v * d[1];
    g[1] += d[1] * z;
    H(0, 0) += v * v * d[2];
    H(0, 1) += v * (d[2] * z + d[1]);
    H(1, 1) += d[2] * z * z + d[1] * z;
  }
  H(1, 0) = H(0, 1);
  *grad = g;
  if (hess) *hess = H;
  return val;
}

}  // namespace

ConditionalGrid::ConditionalGrid(const ModelFamily& family, Configuration config, const ConditionalOptions& opt)
    : ls_(&require_location_scale(family)), config_(std::move(config)), opt_(opt) {
  if (config_.n() < 3) throw DomainError("conditional density needs at least three observations");
  // mode by damped Newton from the MLE point (0, 0)
  Eigen::Vector2d x(0.0, 0.0), g;
  Eigen::Matrix2d H;
  double val = log_kernel(*ls_, config_.a, x[0], x[1], &g, &H);
  for (int it = 0; it < 100 && g.norm() > 1e-12 * std::max(1.0, std::abs(val)); ++it) {
    Eigen::LLT<Eigen::Matrix2d> llt(-H);
    Eigen::Vector2d step = llt.info() == Eigen::Success ? Eigen::Vector2d(llt.solve(g)) : Eigen::Vector2d(0.1 * g);
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Eigen::Vector2d y = x + t * step;
      const double vy = log_kernel(*ls_, config_.a, y[0], y[1]);
      if (std::isfinite(vy) && vy >= val) {
        x = y;
        moved = true;
        break;
      }
    }
    val = log_kernel(*ls_, config_.a, x[0], x[1], &g, &H);
    if (!moved) break;
  }
  Eigen::LLT<Eigen::Matrix2d> llt(-H);
  if (llt.info() != Eigen::Success) throw CurvatureError("conditional density has no interior mode");
  mode_ = x;
  cov_ = (-H).inverse();

  const int nodes = opt_.nodes > 0 ? opt_.nodes : (ls_->heavy_tailed() ? 160 : 96);
  if (nodes % opt_.per_panel != 0) throw ConfigError("conditional node count must be a multiple of the panel size");
  double width = opt_.width;
  int panels = nodes / opt_.per_panel;
  for (int attempt = 0;; ++attempt) {
    tabulate(width, panels);
    std::ostringstream os;
    os << "width " << width << " sd, " << panels * opt_.per_panel << " nodes/axis: edge mass " << edge_;
    trace_.push_back(os.str());
    if (edge_ <= opt_.edge_tolerance) break;
    if (attempt == opt_.max_expansions)
      throw QuadratureError("conditional density reaches the edge of the box", trace_);
    width *= 1.5;
    panels = static_cast<int>(std::ceil(panels * 1.5));
  }
  if (opt_.self_check) {
    const double log_norm = log_norm_;
    const auto sr = s_, w = w_;
    const auto f = f_;
    tabulate(width, 2 * panels);
    const double change = std::abs(std::expm1(log_norm_ - log_norm));
    std::ostringstream os;
    os << "doubled nodes: normalizer changes by " << change;
    trace_.push_back(os.str());
    s_ = sr;
    w_ = w;
    f_ = f;
    log_norm_ = log_norm;
    if (change > opt_.self_check_tolerance) throw QuadratureError("conditional node-doubling check failed", trace_);
  }
}

void ConditionalGrid::tabulate(double width, int panels) {
  const double sw = std::sqrt(cov_(1, 1));
  t0_ = mode_[0];
  c_ = std::sqrt(cov_(0, 0));
  // near the mode s is t in standard deviations, so asinh(width) spans the
  // same central region; expansions stretch both axes by the same factor
  const double s_half = std::asinh(opt_.width) * width / opt_.width;
  s_ = std::make_shared<CompositeRule>(-s_half, s_half, panels, opt_.per_panel);
  w_ = std::make_shared<CompositeRule>(mode_[1] - width * sw, mode_[1] + width * sw, panels, opt_.per_panel);
  const std::size_t I = s_->size(), J = w_->size();
  std::vector<double> lf(I * J);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < I; ++i) {
    const double t = t_node(i), log_jac = std::log(c_ * std::cosh(s_->node(i)));
    for (std::size_t j = 0; j < J; ++j) {
      double v = log_kernel(*ls_, config_.a, t, w_->node(j)) + log_jac;
      if (!std::isfinite(v)) v = -std::numeric_limits<double>::infinity();
      lf[i * J + j] = v;
      top = std::max(top, v);
    }
  }
  double Z = 0.0, edge = 0.0;
  const auto per = static_cast<std::size_t>(opt_.per_panel);
  f_.assign(I * J, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double f = std::exp(lf[i * J + j] - top);
      f_[i * J + j] = f;
      const double m = s_->weight(i) * w_->weight(j) * f;
      Z += m;
      if (i < per || i >= I - per || j < per || j >= J - per) edge += m;
    }
  for (double& f : f_) f /= Z;
  log_norm_ = top + std::log(Z);
  edge_ = edge / Z;
}

double ConditionalGrid::log_density_tw(double t, double w) const {
  return log_kernel(*ls_, config_.a, t, w) - log_norm_;
}

double ConditionalGrid::density_tw(double t, double w) const {
  const double v = std::exp(log_density_tw(t, w));
  return std::isfinite(v) ? v : 0.0;
}

double ConditionalGrid::density(double u, double v) const {
  if (!(v > 0)) return 0.0;
  return density_tw(u / v, std::log(v)) / (v * v);
}

namespace {

// Integral over [cut, hi] of the interpolant through `values` on `rule`.
double tail_integral(const CompositeRule& rule, const std::vector<double>& values, double cut) {
  const std::size_t K = rule.size();
  if (cut >= rule.hi()) return 0.0;
  const auto per = static_cast<std::size_t>(rule.per_panel());
  int p0 = 0;
  double partial = 0.0;
  if (cut > rule.lo()) {
    p0 = rule.panel_of(cut);
    std::span<const double> f(values.data() + static_cast<std::size_t>(p0) * per, per);
    double full = 0.0;
    for (std::size_t k = 0; k < per; ++k) full += rule.weight(static_cast<std::size_t>(p0) * per + k) * f[k];
    partial = full - rule.partial_integral(p0, f, cut);
    ++p0;
  }
  double s = partial;
  for (std::size_t k = static_cast<std::size_t>(p0) * per; k < K; ++k) s += rule.weight(k) * values[k];
  return s;
}

}  // namespace

double ConditionalGrid::row_tail(std::size_t j, double t_cut) const {
  const std::size_t I = s_->size(), J = w_->size();
  std::vector<double> row(I);
  for (std::size_t i = 0; i < I; ++i) row[i] = f_[i * J + j];
  return tail_integral(*s_, row, std::isfinite(t_cut) ? s_of_t(t_cut) : t_cut);
}

double ConditionalGrid::column_tail(std::size_t i, double w_cut) const {
  const std::size_t J = w_->size();
  std::vector<double> col(f_.begin() + static_cast<std::ptrdiff_t>(i * J),
                          f_.begin() + static_cast<std::ptrdiff_t>((i + 1) * J));
  return tail_integral(*w_, col, w_cut);
}

std::vector<double> ConditionalGrid::dataset(double t, double w, double mu, double sigma) const {
  const double v = std::exp(w);
  std::vector<double> y;
  y.reserve(config_.n());
  for (double ai : config_.a) y.push_back(mu + sigma * v * (t + ai));
  return y;
}

// ---------------------------------------------------------------------------

LambdaArrays ConditionalContext::at(const Eigen::VectorXd& theta) const {
  const LocationScaleModel& ls = require_location_scale(*family);
  const std::size_t ss = ls.sigma_slot();
  const double sigma = theta[static_cast<Eigen::Index>(ss)];
  if (!(sigma > 0)) throw DomainError("sigma must be positive");
  const double s1 = 1.0 / sigma, s2 = s1 * s1, s3 = s2 * s1, s4 = s2 * s2;
  const LambdaArrays& c = lambda_ring;
  LambdaArrays out;
  out.provenance = Provenance::conditional;
  out.n = c.n;
  out.lambda_rs = c.lambda_rs * s2;
  const bool full = c.lambda_rst.dim() > 0;
  const std::size_t d = 2;
  out.lambda_rs_slash_t = Tensor3(d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      out.lambda_rs_slash_t(r, s, ss) = -2.0 * c.lambda_rs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) * s3;
  if (full) {
    out.lambda_rst = c.lambda_rst * s3;
    out.lambda_rstu = c.lambda_rstu * s4;
    out.lambda_r_s = c.lambda_r_s * s2;
    out.lambda_rs_t = c.lambda_rs_t * s3;
    out.lambda_r_s_t = c.lambda_r_s_t * s3;
    out.lambda_rst_slash_u = Tensor4(d);
    out.lambda_rs_slash_tu = Tensor4(d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s) {
        out.lambda_rs_slash_tu(r, s, ss, ss) =
            6.0 * c.lambda_rs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) * s4;
        for (std::size_t t = 0; t < d; ++t) out.lambda_rst_slash_u(r, s, t, ss) = -3.0 * c.lambda_rst(r, s, t) * s4;
      }
  }
  return derive(std::move(out));
}

namespace {

ConditionalContext finish(ConditionalContext ctx) {
  const LocationScaleModel& ls = require_location_scale(*ctx.family);
  const auto m = static_cast<Eigen::Index>(ls.mu_slot()), s = static_cast<Eigen::Index>(ls.sigma_slot());
  ctx.B = ctx.lambda_ring.lambda_rs(m, m);
  ctx.C = ctx.lambda_ring.lambda_rs(m, s);
  ctx.D = ctx.lambda_ring.lambda_rs(s, s);
  ctx.E = ctx.B * ctx.D - ctx.C * ctx.C;
  if (!(ctx.E > 0) || !(ctx.B < 0) || !(ctx.D < 0))
    throw SingularityError("conditional information is not positive definite");
  const Eigen::VectorXd unit = ls.theta_of(0.0, 1.0);
  ctx.lambda_ring = ctx.at(unit);
  ctx.eta_ring = ctx.lambda_ring.eta;
  return ctx;
}

}  // namespace

ConditionalContext bcd_constants(FamilyPtr family, const Configuration& config, const ConditionalOptions& opt) {
  const LocationScaleModel& ls = require_location_scale(*family);
  auto grid = std::make_shared<ConditionalGrid>(*family, config, opt);
  const double n = static_cast<double>(config.n());
  // second derivatives of sum h((y - mu) / sigma) - n log sigma at (0, 1)
  double B = 0, C = 0, D = 0;
  const CompositeRule& S = grid->s_rule();
  const CompositeRule& W = grid->w_rule();
  double d[5];
  for (std::size_t i = 0; i < S.size(); ++i)
    for (std::size_t j = 0; j < W.size(); ++j) {
      const double f = grid->node_density(i, j);
      if (f == 0.0) continue;
      const double wt = grid->node_weight(i, j) * f;
      const double t = grid->t_node(i), v = std::exp(W.node(j));
      double b = 0, c = 0, dd = n;
      for (double ai : config.a) {
        const double z = v * (t + ai);
        ls.h_derivs(z, d);
        b += d[2];
        c += d[2] * z + d[1];
        dd += d[2] * z * z + 2.0 * d[1] * z;
      }
      B += wt * b;
      C += wt * c;
      D += wt * dd;
    }
  ConditionalContext ctx;
  ctx.grid = grid;
  ctx.family = family;
  const auto m = static_cast<Eigen::Index>(ls.mu_slot()), s = static_cast<Eigen::Index>(ls.sigma_slot());
  ctx.lambda_ring.provenance = Provenance::conditional;
  ctx.lambda_ring.n = n;
  ctx.lambda_ring.lambda_rs = Eigen::MatrixXd(2, 2);
  ctx.lambda_ring.lambda_rs(m, m) = B;
  ctx.lambda_ring.lambda_rs(m, s) = ctx.lambda_ring.lambda_rs(s, m) = C;
  ctx.lambda_ring.lambda_rs(s, s) = D;
  return finish(std::move(ctx));
}

ConditionalContext conditional_context(FamilyPtr family, const Configuration& config, const ConditionalOptions& opt) {
  const LocationScaleModel& ls = require_location_scale(*family);
  auto grid = std::make_shared<ConditionalGrid>(*family, config, opt);
  const Eigen::VectorXd unit = ls.theta_of(0.0, 1.0);
  const std::size_t d = 2;
  Eigen::VectorXd l_r = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd l_rs = Eigen::MatrixXd::Zero(2, 2), l_r_s = Eigen::MatrixXd::Zero(2, 2);
  Tensor3 l_rst(d), l_rs_t(d), l_r_s_t(d);
  Tensor4 l_rstu(d);
  const CompositeRule& S = grid->s_rule();
  const CompositeRule& W = grid->w_rule();
  for (std::size_t i = 0; i < S.size(); ++i)
    for (std::size_t j = 0; j < W.size(); ++j) {
      const double f = grid->node_density(i, j);
      if (f == 0.0) continue;
      const double wt = grid->node_weight(i, j) * f;
      const std::vector<double> y = grid->dataset(grid->t_node(i), W.node(j));
      const DerivTensors D = family->derivs_unchecked(unit, y, 4);
      l_r += wt * D.grad;
      l_rs += wt * D.hess;
      l_r_s += wt * D.grad * D.grad.transpose();
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t s = 0; s < d; ++s)
          for (std::size_t t = 0; t < d; ++t) {
            const auto R = static_cast<Eigen::Index>(r), S = static_cast<Eigen::Index>(s),
                       T = static_cast<Eigen::Index>(t);
            l_rst(r, s, t) += wt * D.third(r, s, t);
            l_rs_t(r, s, t) += wt * D.hess(R, S) * D.grad[T];
            l_r_s_t(r, s, t) += wt * D.grad[R] * D.grad[S] * D.grad[T];
            for (std::size_t u = 0; u < d; ++u) l_rstu(r, s, t, u) += wt * D.fourth(r, s, t, u);
          }
    }
  ConditionalContext ctx;
  ctx.grid = grid;
  ctx.family = family;
  LambdaArrays& a = ctx.lambda_ring;
  a.provenance = Provenance::conditional;
  a.n = static_cast<double>(config.n());
  a.lambda_rs = l_rs;
  a.lambda_rst = l_rst;
  a.lambda_rstu = l_rstu;
  a.lambda_r_s = l_r_s;
  a.lambda_rs_t = l_rs_t;
  a.lambda_r_s_t = l_r_s_t;
  ctx.bartlett_defect = std::max((l_rs + l_r_s).cwiseAbs().maxCoeff(), l_r.cwiseAbs().maxCoeff()) / a.n;
  return finish(std::move(ctx));
}

ConditionalResidual conditional_matching_residual(const ConditionalContext& ctx, const PriorSpec& prior,
                                                  const Eigen::VectorXd& theta) {
  const LocationScaleModel& ls = require_location_scale(*ctx.family);
  const LambdaArrays A = ctx.at(theta);
  const Eigen::VectorXd l1 = A.lambda_up.col(0);
  const Eigen::VectorXd g = prior.grad_log(theta);
  ConditionalResidual r;
  r.lhs = g.dot(l1);
  const double e2 = A.eta * A.eta;
  r.rhs = contract(A.lambda_rs_slash_t, l1, A.lambda_up) + 0.5 * e2 * contract(A.lambda_rs_slash_t, l1, l1, l1);
  r.residual = r.lhs - r.rhs;

  const double sigma = theta[static_cast<Eigen::Index>(ls.sigma_slot())];
  const double dmu = g[static_cast<Eigen::Index>(ls.mu_slot())];
  const double dsigma = g[static_cast<Eigen::Index>(ls.sigma_slot())];
  const double s2E = sigma * sigma / ctx.E;
  if (ls.scale_interest()) {
    r.lhs_closed = s2E * (ctx.B * dsigma - ctx.C * dmu);
    r.rhs_closed = -sigma * ctx.B / ctx.E;
  } else {
    r.lhs_closed = s2E * (ctx.D * dmu - ctx.C * dsigma);
    r.rhs_closed = sigma * ctx.C / ctx.E;
  }
  return r;
}

double mu_ring_F(const ConditionalContext& ctx) {
  if (ctx.lambda_ring.lambda_rst.dim() == 0) throw MissingArrayError("mu_ring_F needs the third-order ring arrays");
  return mu_F(ctx.lambda_ring);
}

double sigma2_ring_F(const ConditionalContext& ctx) {
  if (ctx.lambda_ring.lambda_rst_slash_u.dim() == 0)
    throw MissingArrayError("sigma2_ring_F needs the fourth-order ring arrays");
  const LocationScaleModel& ls = require_location_scale(*ctx.family);
  const LambdaField field = [&ctx](const Eigen::VectorXd& t) { return ctx.at(t); };
  return sigma2_F(ctx.lambda_ring, field, *ctx.family, ls.theta_of(0.0, 1.0));
}

// ---------------------------------------------------------------------------

ConditionalCoverage conditional_coverage(const ConditionalGrid& grid, const ModelFamily& family,
                                         const PriorSpec& prior, double alpha,
                                         const ConditionalCoverageOptions& opt) {
  const LocationScaleModel& ls = require_location_scale(family);
  if (!(alpha > 0 && alpha < 1)) throw DomainError("alpha must lie in (0, 1)");
  const bool scale = ls.scale_interest();
  ConditionalCoverage out;
  out.path = opt.path;
  if (out.path == CoveragePath::automatic)
    out.path = prior.scale_power() ? CoveragePath::equivariant : CoveragePath::generic;
  if (out.path == CoveragePath::equivariant && !prior.scale_power())
    throw DomainError("the equivariant path needs a prior of the form sigma^-k");
  if (opt.method == PosteriorMethod::conjugate) throw DomainError("conditional coverage has no conjugate route");

  QuadratureOptions qopt = opt.posterior;
  qopt.signed_root_moments = false;
  // posterior 1 - alpha quantile of psi for the dataset at pivotal (t, w)
  auto upper = [&](double t, double w) {
    const std::vector<double> y = grid.dataset(t, w);
    const Profile profile(family, Sample(y));
    ++out.posteriors;
    if (opt.method == PosteriorMethod::laplace_expansion)
      return laplace_posterior(profile, prior, {1.0 - alpha}).quantile(1.0 - alpha);
    return quadrature_posterior(profile, prior, {1.0 - alpha}, qopt).quantile(1.0 - alpha);
  };
  const CompositeRule& S = grid.s_rule();
  const CompositeRule& W = grid.w_rule();

  if (out.path == CoveragePath::equivariant) {
    const double q = upper(0.0, 0.0);
    double cov = 0.0;
    if (scale) {
      for (std::size_t i = 0; i < S.size(); ++i) cov += S.weight(i) * grid.column_tail(i, -std::log(q));
    } else {
      for (std::size_t j = 0; j < W.size(); ++j) cov += W.weight(j) * grid.row_tail(j, -q);
    }
    out.coverage = cov;
    return out;
  }

  // Generic: psi_l increases along rows in t (mu interest) and along columns
  // in w (sigma interest); find where it crosses the true value.
  const std::size_t outer = scale ? S.size() : W.size();
  double cov = 0.0, covered_mass = 0.0;
  for (std::size_t k = 0; k < outer; ++k) {
    const double mass = scale ? S.weight(k) * grid.column_mass(k) : W.weight(k) * grid.row_mass(k);
    if (mass < opt.skip_mass) {
      covered_mass += mass;
      continue;
    }
    const double fixed = scale ? grid.t_node(k) : W.node(k);
    // roughly x + const in both cases
    auto g = [&](double x) {
      return scale ? std::log(upper(fixed, x)) : upper(x, fixed) * std::exp(-fixed);
    };
    try {
      // start from the shift the equivariant argument would predict
      const double g0 = g(0.0);
      double a = -g0;
      double fa = g(a);
      double b = a, fb = fa;
      double step = std::max(4.0 * std::abs(fa), 1e-8);
      const double dir = fa > 0 ? -1.0 : 1.0;
      int tries = 0;
      while (fa != 0.0 && (fb > 0) == (fa > 0) && tries++ < 60) {
        b = a + dir * step;
        fb = g(b);
        if ((fb > 0) == (fa > 0)) {
          a = b;
          fa = fb;
          step *= 2.0;
        }
      }
      double root = a;
      if (fa != 0.0) {
        if ((fb > 0) == (fa > 0)) throw BracketError("coverage boundary not bracketed");
        if (a > b) {
          std::swap(a, b);
          std::swap(fa, fb);
        }
        boost::uintmax_t iters = 100;
        auto r = boost::math::tools::toms748_solve(g, a, b, fa, fb, boost::math::tools::eps_tolerance<double>(40), iters);
        root = 0.5 * (r.first + r.second);
      }
      cov += scale ? S.weight(k) * grid.column_tail(k, root) : W.weight(k) * grid.row_tail(k, root);
      covered_mass += mass;
    } catch (const Error&) {
      out.failed_mass += mass;
    }
  }
  if (out.failed_mass > opt.failure_budget) {
    std::ostringstream os;
    os << "posterior failures carry conditional mass " << out.failed_mass;
    throw IntegrityError(os.str());
  }
  out.coverage = cov / covered_mass;
  return out;
}

// ---------------------------------------------------------------------------

ConditionalSampler::ConditionalSampler(std::shared_ptr<const ConditionalGrid> grid, double df)
    : grid_(std::move(grid)), df_(df) {
  mean_ = grid_->mode();
  const Eigen::Matrix2d scale = 1.5 * grid_->covariance();
  chol_ = scale.llt().matrixL();
  prec_ = scale.inverse();
  // bound log f - log envelope over the tabulated nodes, with slack
  double top = -std::numeric_limits<double>::infinity();
  const CompositeRule& S = grid_->s_rule();
  const CompositeRule& W = grid_->w_rule();
  for (std::size_t i = 0; i < S.size(); ++i)
    for (std::size_t j = 0; j < W.size(); ++j) {
      const Eigen::Vector2d x(grid_->t_node(i), W.node(j));
      top = std::max(top, grid_->log_density_tw(x[0], x[1]) - log_envelope(x));
    }
  log_bound_ = top + std::log(1.5);
}

double ConditionalSampler::log_envelope(const Eigen::Vector2d& x) const {
  const Eigen::Vector2d d = x - mean_;
  return -0.5 * (df_ + 2.0) * std::log1p(d.dot(prec_ * d) / df_);
}

Eigen::Vector2d ConditionalSampler::draw(Stream& stream) {
  for (;;) {
    ++proposals_;
    const Eigen::Vector2d z(stream.normal(), stream.normal());
    double chi = 0.0;
    for (int k = 0; k < static_cast<int>(df_); ++k) {
      const double e = stream.normal();
      chi += e * e;
    }
    const Eigen::Vector2d x = mean_ + chol_ * z / std::sqrt(chi / df_);
    const double ratio = grid_->log_density_tw(x[0], x[1]) - log_envelope(x) - log_bound_;
    if (ratio > 0) ++violations_;
    if (std::log(stream.uniform()) < ratio) {
      ++accepted_;
      return x;
    }
  }
}

}  // namespace matchprior
