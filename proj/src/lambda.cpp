#include "matchprior/lambda.hpp"

#include <cmath>
#include <sstream>

#include "matchprior/error.hpp"

namespace matchprior {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::analytic:
      return "analytic";
    case Provenance::monte_carlo:
      return "monte-carlo";
    case Provenance::conditional:
      return "conditional";
  }
  return "unknown";
}

namespace {

void require_invertible(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-13) {
    std::ostringstream os;
    os << what << " is singular (rank " << lu.rank() << " of " << m.rows() << ", rcond " << lu.rcond() << ")";
    throw SingularityError(os.str());
  }
}

}  // namespace

LambdaArrays derive(LambdaArrays a) {
  const Eigen::Index d = a.lambda_rs.rows();
  if (d == 0 || a.lambda_rs.cols() != d) throw SingularityError("lambda_rs is missing or not square");
  require_invertible(a.lambda_rs, "lambda_rs");
  if (d > 1) require_invertible(a.lambda_rs.bottomRightCorner(d - 1, d - 1), "nuisance block lambda_ij");
  a.lambda_up = a.lambda_rs.inverse();
  a.lambda_up = 0.5 * (a.lambda_up + a.lambda_up.transpose()).eval();
  const double l11 = a.lambda_up(0, 0);
  if (!(l11 < 0)) throw SingularityError("lambda^{11} is not negative; lambda_rs is not negative definite");
  a.tau_up = a.lambda_up.col(0) * a.lambda_up.col(0).transpose() / l11;
  a.nu_up = a.lambda_up - a.tau_up;
  a.nu_up.row(0).setZero();
  a.nu_up.col(0).setZero();
  a.eta = 1.0 / std::sqrt(-l11);
  return a;
}

Tensor3 slash_via_identity(const Tensor3& lambda_rst, const Tensor3& lambda_rs_t) {
  if (lambda_rst.dim() != lambda_rs_t.dim()) throw std::invalid_argument("slash_via_identity: dimension mismatch");
  return lambda_rst + lambda_rs_t;
}

LambdaArrays analytic_lambda(const ModelFamily& family, const Eigen::VectorXd& theta, double n) {
  family.require_domain(theta);
  const std::size_t d = family.dim();
  const ObservationMoments m = family.observation_moments(theta);
  LambdaArrays a;
  a.provenance = Provenance::analytic;
  a.n = n;
  a.lambda_rs = n * m.l_rs;
  a.lambda_rst = n * m.l_rst;
  a.lambda_rstu = n * m.l_rstu;
  a.lambda_r_s = n * m.l_r_s;
  a.lambda_rs_t = n * m.l_rs_t;
  a.lambda_r_s_t = n * m.l_r_s_t;
  a.lambda_rs_slash_t = slash_via_identity(a.lambda_rst, a.lambda_rs_t);

  auto rst_field = [&](const Eigen::VectorXd& t) { return family.observation_moments(t).l_rst * n; };
  auto slash_field = [&](const Eigen::VectorXd& t) {
    ObservationMoments mm = family.observation_moments(t);
    return (mm.l_rst + mm.l_rs_t) * n;
  };
  const auto pos = family.positive_coordinates();
  a.lambda_rst_slash_u = Tensor4(d);
  a.lambda_rs_slash_tu = Tensor4(d);
  for (std::size_t u = 0; u < d; ++u) {
    const auto U = static_cast<Eigen::Index>(u);
    const double h = five_point_step(theta[U], pos[u]);
    const Tensor3 drst = five_point(rst_field, theta, U, h);
    const Tensor3 dslash = five_point(slash_field, theta, U, h);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t t = 0; t < d; ++t) {
          a.lambda_rst_slash_u(r, s, t, u) = drst(r, s, t);
          a.lambda_rs_slash_tu(r, s, t, u) = dslash(r, s, t);
        }
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t u = t + 1; u < d; ++u) {
          const double avg = 0.5 * (a.lambda_rs_slash_tu(r, s, t, u) + a.lambda_rs_slash_tu(r, s, u, t));
          a.lambda_rs_slash_tu(r, s, t, u) = a.lambda_rs_slash_tu(r, s, u, t) = avg;
        }
  return derive(std::move(a));
}

namespace {

// Offsets of the per-replicate record used by the Monte Carlo estimator.
struct RecordLayout {
  explicit RecordLayout(std::size_t d) {
    const std::size_t d2 = d * d, d3 = d2 * d, d4 = d3 * d;
    score = 0;
    rs = score + d;
    rst = rs + d2;
    rstu = rst + d3;
    r_s = rstu + d4;
    rs_t = r_s + d2;
    r_s_t = rs_t + d3;
    fd_rs_t = r_s_t + d3;
    fd_rst_u = fd_rs_t + d3;
    fd_slash_tu = fd_rst_u + d4;
    size = fd_slash_tu + d4;
  }
  std::size_t score, rs, rst, rstu, r_s, rs_t, r_s_t, fd_rs_t, fd_rst_u, fd_slash_tu, size;
};

template <int Rank>
DenseTensor<Rank> tensor_at(const Eigen::VectorXd& rec, std::size_t off, std::size_t d) {
  DenseTensor<Rank> t(d);
  for (std::size_t k = 0; k < t.size(); ++k) t.data()[k] = rec[static_cast<Eigen::Index>(off + k)];
  return t;
}

Eigen::MatrixXd matrix_at(const Eigen::VectorXd& rec, std::size_t off, std::size_t d) {
  const auto D = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd m(D, D);
  for (Eigen::Index r = 0; r < D; ++r)
    for (Eigen::Index s = 0; s < D; ++s) m(r, s) = rec[static_cast<Eigen::Index>(off) + r * D + s];
  return m;
}

}  // namespace

LambdaArrays MonteCarloLambda::arrays_from_record(const Eigen::VectorXd& rec) const {
  const RecordLayout L(dim);
  LambdaArrays a;
  a.provenance = Provenance::monte_carlo;
  a.n = n;
  a.lambda_rs = matrix_at(rec, L.rs, dim);
  a.lambda_rst = tensor_at<3>(rec, L.rst, dim);
  a.lambda_rstu = tensor_at<4>(rec, L.rstu, dim);
  a.lambda_r_s = matrix_at(rec, L.r_s, dim);
  a.lambda_rs_t = tensor_at<3>(rec, L.rs_t, dim);
  a.lambda_r_s_t = tensor_at<3>(rec, L.r_s_t, dim);
  a.lambda_rs_slash_t = slash_via_identity(a.lambda_rst, a.lambda_rs_t);
  a.lambda_rst_slash_u = tensor_at<4>(rec, L.fd_rst_u, dim);
  a.lambda_rs_slash_tu = tensor_at<4>(rec, L.fd_slash_tu, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t s = 0; s < dim; ++s)
      for (std::size_t t = 0; t < dim; ++t)
        for (std::size_t u = t + 1; u < dim; ++u) {
          const double avg = 0.5 * (a.lambda_rs_slash_tu(r, s, t, u) + a.lambda_rs_slash_tu(r, s, u, t));
          a.lambda_rs_slash_tu(r, s, t, u) = a.lambda_rs_slash_tu(r, s, u, t) = avg;
        }
  return a;
}

double MonteCarloLambda::jackknife_se(const std::function<double(const LambdaArrays&)>& stat) const {
  const Eigen::VectorXd total = block_sums.colwise().sum().transpose();
  std::size_t count = 0;
  for (auto c : block_sizes) count += c;
  std::vector<double> vals(blocks);
  double mean = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    const Eigen::VectorXd loo =
        (total - block_sums.row(static_cast<Eigen::Index>(b)).transpose()) / static_cast<double>(count - block_sizes[b]);
    vals[b] = stat(arrays_from_record(loo));
    mean += vals[b];
  }
  mean /= static_cast<double>(blocks);
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  return std::sqrt(ss * static_cast<double>(blocks - 1) / static_cast<double>(blocks));
}

MonteCarloLambda monte_carlo_lambda(const ModelFamily& family, const Eigen::VectorXd& theta, std::size_t n,
                                    std::size_t reps, const Stream& stream, std::size_t blocks) {
  if (reps < 1000) throw std::invalid_argument("monte_carlo_lambda needs at least 1000 replicates");
  if (blocks < 2 || blocks > reps) throw std::invalid_argument("monte_carlo_lambda: bad block count");
  family.require_domain(theta);
  const std::size_t d = family.dim();
  const RecordLayout L(d);
  const auto pos = family.positive_coordinates();

  MonteCarloLambda out;
  out.blocks = blocks;
  out.dim = d;
  out.n = static_cast<double>(n);
  out.block_sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(blocks), static_cast<Eigen::Index>(L.size));
  out.block_sizes.assign(blocks, 0);

  std::vector<double> u(n), y(n), yp(n), ym(n);
  Eigen::VectorXd rec(static_cast<Eigen::Index>(L.size));
  std::vector<double> h(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double x = theta[static_cast<Eigen::Index>(k)];
    h[k] = (pos[k] ? std::abs(x) : std::max(std::abs(x), 1.0)) * std::cbrt(std::numeric_limits<double>::epsilon());
  }
  const std::size_t d2 = d * d, d3 = d2 * d;
  for (std::size_t i = 0; i < reps; ++i) {
    Stream s = stream.split(i);
    for (std::size_t j = 0; j < n; ++j) {
      u[j] = s.uniform();
      y[j] = family.quantile(theta, u[j]);
    }
    const DerivTensors D = family.derivs_unchecked(theta, y, 4);
    rec.setZero();
    for (std::size_t r = 0; r < d; ++r) {
      const auto R = static_cast<Eigen::Index>(r);
      rec[static_cast<Eigen::Index>(L.score + r)] = D.grad[R];
      for (std::size_t q = 0; q < d; ++q) {
        const auto Q = static_cast<Eigen::Index>(q);
        rec[static_cast<Eigen::Index>(L.rs + r * d + q)] = D.hess(R, Q);
        rec[static_cast<Eigen::Index>(L.r_s + r * d + q)] = D.grad[R] * D.grad[Q];
        for (std::size_t t = 0; t < d; ++t) {
          const auto T = static_cast<Eigen::Index>(t);
          const std::size_t k3 = r * d2 + q * d + t;
          rec[static_cast<Eigen::Index>(L.rst + k3)] = D.third(r, q, t);
          rec[static_cast<Eigen::Index>(L.rs_t + k3)] = D.hess(R, Q) * D.grad[T];
          rec[static_cast<Eigen::Index>(L.r_s_t + k3)] = D.grad[R] * D.grad[Q] * D.grad[T];
          for (std::size_t v = 0; v < d; ++v) rec[static_cast<Eigen::Index>(L.rstu + k3 * d + v)] = D.fourth(r, q, t, v);
        }
      }
    }
    // common random numbers: the same uniforms pushed through theta +- h e_v
    for (std::size_t v = 0; v < d; ++v) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[static_cast<Eigen::Index>(v)] += h[v];
      tm[static_cast<Eigen::Index>(v)] -= h[v];
      for (std::size_t j = 0; j < n; ++j) {
        yp[j] = family.quantile(tp, u[j]);
        ym[j] = family.quantile(tm, u[j]);
      }
      const DerivTensors P = family.derivs_unchecked(tp, yp, 3);
      const DerivTensors M = family.derivs_unchecked(tm, ym, 3);
      const double inv = 1.0 / (2.0 * h[v]);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t q = 0; q < d; ++q) {
          const auto R = static_cast<Eigen::Index>(r), Q = static_cast<Eigen::Index>(q);
          rec[static_cast<Eigen::Index>(L.fd_rs_t + r * d2 + q * d + v)] = (P.hess(R, Q) - M.hess(R, Q)) * inv;
          for (std::size_t t = 0; t < d; ++t) {
            const auto T = static_cast<Eigen::Index>(t);
            const std::size_t k4 = ((r * d + q) * d + t) * d + v;
            rec[static_cast<Eigen::Index>(L.fd_rst_u + k4)] = (P.third(r, q, t) - M.third(r, q, t)) * inv;
            const double sp = P.third(r, q, t) + P.hess(R, Q) * P.grad[T];
            const double sm = M.third(r, q, t) + M.hess(R, Q) * M.grad[T];
            rec[static_cast<Eigen::Index>(L.fd_slash_tu + k4)] = (sp - sm) * inv;
          }
        }
    }
    const std::size_t b = i * blocks / reps;
    out.block_sums.row(static_cast<Eigen::Index>(b)) += rec.transpose();
    ++out.block_sizes[b];
  }

  const Eigen::VectorXd mean = out.block_sums.colwise().sum().transpose() / static_cast<double>(reps);
  // entrywise jackknife SEs in one pass over the leave-one-out records
  Eigen::MatrixXd loo(static_cast<Eigen::Index>(blocks), static_cast<Eigen::Index>(L.size));
  const Eigen::VectorXd total = mean * static_cast<double>(reps);
  for (std::size_t b = 0; b < blocks; ++b)
    loo.row(static_cast<Eigen::Index>(b)) =
        (total - out.block_sums.row(static_cast<Eigen::Index>(b)).transpose()).transpose() /
        static_cast<double>(reps - out.block_sizes[b]);
  const Eigen::RowVectorXd loo_mean = loo.colwise().mean();
  const double B = static_cast<double>(blocks);
  Eigen::VectorXd se = ((loo.rowwise() - loo_mean).array().square().colwise().sum() * (B - 1) / B).sqrt().transpose();

  LambdaArrays raw = out.arrays_from_record(mean);
  raw.mc_reps = reps;
  out.arrays = derive(std::move(raw));
  out.se = out.arrays_from_record(se);
  out.se.mc_reps = reps;
  out.mean_score = mean.segment(static_cast<Eigen::Index>(L.score), static_cast<Eigen::Index>(d));
  out.mean_score_se = se.segment(static_cast<Eigen::Index>(L.score), static_cast<Eigen::Index>(d));
  out.rs_slash_t_fd = tensor_at<3>(mean, L.fd_rs_t, d);
  out.rs_slash_t_fd_se = tensor_at<3>(se, L.fd_rs_t, d);
  // the identity-route slash array is a sum; its SE needs the joint record
  for (std::size_t k = 0; k < d3; ++k) {
    Eigen::VectorXd col = loo.col(static_cast<Eigen::Index>(L.rst + k)) + loo.col(static_cast<Eigen::Index>(L.rs_t + k));
    const double m = col.mean();
    out.se.lambda_rs_slash_t.data()[k] = std::sqrt((col.array() - m).square().sum() * (B - 1) / B);
  }
  return out;
}

IdentityReport check_identities(const LambdaArrays& a, double tolerance) {
  const std::size_t d = a.dim();
  if (a.lambda_r_s.size() == 0 || a.lambda_rs_t.empty() || a.lambda_r_s_t.empty() || a.lambda_rst.empty())
    throw MissingArrayError("check_identities needs lambda_rs, lambda_rst and the mixed cumulants");
  const double n = a.n > 0 ? a.n : 1.0;
  IdentityReport rep;
  rep.tolerance = tolerance;
  rep.second_order = (a.lambda_rs + a.lambda_r_s).cwiseAbs().maxCoeff() / n;
  double m = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t t = 0; t < d; ++t) {
        const double res = a.lambda_rst(r, s, t) + a.lambda_rs_t(r, s, t) + a.lambda_rs_t(r, t, s) +
                           a.lambda_rs_t(s, t, r) + a.lambda_r_s_t(r, s, t);
        m = std::max(m, std::abs(res));
      }
  rep.third_order = m / n;
  rep.flagged = rep.second_order > tolerance || rep.third_order > tolerance;
  return rep;
}

IdentityReport check_identities(const MonteCarloLambda& mc, double z_limit) {
  IdentityReport rep = check_identities(mc.arrays, 0.0);
  const std::size_t d = mc.dim;
  rep.tolerance = z_limit;
  double zmax = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s) {
      const auto R = static_cast<Eigen::Index>(r), S = static_cast<Eigen::Index>(s);
      auto stat = [=](const LambdaArrays& a) { return a.lambda_rs(R, S) + a.lambda_r_s(R, S); };
      const double se = mc.jackknife_se(stat);
      zmax = std::max(zmax, std::abs(stat(mc.arrays)) / se);
      for (std::size_t t = 0; t < d; ++t) {
        auto stat3 = [=](const LambdaArrays& a) {
          return a.lambda_rst(r, s, t) + a.lambda_rs_t(r, s, t) + a.lambda_rs_t(r, t, s) + a.lambda_rs_t(s, t, r) +
                 a.lambda_r_s_t(r, s, t);
        };
        const double se3 = mc.jackknife_se(stat3);
        zmax = std::max(zmax, std::abs(stat3(mc.arrays)) / se3);
      }
    }
  rep.max_z = zmax;
  rep.flagged = zmax > z_limit;
  return rep;
}

HatArrays hat_arrays(const DerivTensors& D, const Eigen::VectorXd& theta, const PriorSpec* prior) {
  if (D.order < 3) throw MissingArrayError("hat arrays need third derivatives");
  HatArrays h;
  h.theta = theta;
  h.L_rs = D.hess;
  h.L_rst = D.third;
  h.L_rstu = D.fourth;
  const Eigen::Index d = D.hess.rows();
  require_invertible(h.L_rs, "observed L_rs");
  h.L_up = h.L_rs.inverse();
  h.L_up = 0.5 * (h.L_up + h.L_up.transpose()).eval();
  const double l11 = h.L_up(0, 0);
  if (!(l11 < 0)) throw SingularityError("observed L^{11} is not negative");
  h.T_up = h.L_up.col(0) * h.L_up.col(0).transpose() / l11;
  h.V_up = h.L_up - h.T_up;
  h.V_up.row(0).setZero();
  h.V_up.col(0).setZero();
  h.H = 1.0 / std::sqrt(-l11);
  if (prior) {
    h.has_prior = true;
    h.Pi_r = prior->ratio1(theta);
    h.Pi_rs = prior->ratio2(theta);
  } else {
    h.Pi_r = Eigen::VectorXd::Zero(d);
    h.Pi_rs = Eigen::MatrixXd::Zero(d, d);
  }
  return h;
}

HatArrays hat_arrays(const ModelFamily& family, const Sample& sample, const Eigen::VectorXd& theta,
                     const PriorSpec* prior) {
  return hat_arrays(family.loglik_derivs(theta, sample, 4), theta, prior);
}

}  // namespace matchprior
