#include "matchprior/prior.hpp"

#include <cmath>

#include "matchprior/error.hpp"

namespace matchprior {

PriorSpec::PriorSpec(std::string label, LogDensity log_pi, Gradient grad, Hessian hess)
    : label_(std::move(label)), log_pi_(std::move(log_pi)), grad_(std::move(grad)), hess_(std::move(hess)) {
  if (!log_pi_) throw std::invalid_argument("prior needs a log density");
}

Eigen::VectorXd PriorSpec::grad_log_fd(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd g(theta.size());
  std::vector<int> counts(static_cast<std::size_t>(theta.size()), 0);
  for (Eigen::Index r = 0; r < theta.size(); ++r) {
    counts.assign(counts.size(), 0);
    counts[static_cast<std::size_t>(r)] = 1;
    g[r] = fd_partial(log_pi_, theta, counts);
  }
  return g;
}

Eigen::MatrixXd PriorSpec::hess_log_fd(const Eigen::VectorXd& theta) const {
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd h(d, d);
  std::vector<int> counts(static_cast<std::size_t>(d), 0);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index s = r; s < d; ++s) {
      counts.assign(counts.size(), 0);
      ++counts[static_cast<std::size_t>(r)];
      ++counts[static_cast<std::size_t>(s)];
      h(r, s) = h(s, r) = fd_partial(log_pi_, theta, counts);
    }
  return h;
}

Eigen::VectorXd PriorSpec::grad_log(const Eigen::VectorXd& theta) const {
  return grad_ ? grad_(theta) : grad_log_fd(theta);
}

Eigen::MatrixXd PriorSpec::hess_log(const Eigen::VectorXd& theta) const {
  return hess_ ? hess_(theta) : hess_log_fd(theta);
}

Eigen::MatrixXd PriorSpec::ratio2(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd g = grad_log(theta);
  return hess_log(theta) + g * g.transpose();
}

PriorSpec PriorSpec::scaled(double c) const {
  if (!(c > 0)) throw std::invalid_argument("prior scale factor must be positive");
  const double lc = std::log(c);
  auto base = log_pi_;
  PriorSpec out(label_, [base, lc](const Eigen::VectorXd& t) { return base(t) + lc; }, grad_, hess_);
  out.scale_power_ = scale_power_;
  return out;
}

PriorSpec location_scale_prior(const ModelFamily& family, std::string label, double k,
                               std::function<double(double)> log_d, std::function<double(double)> dlog_d,
                               std::function<double(double)> d2log_d) {
  const LocationScaleModel* ls = family.location_scale();
  if (!ls) throw ConfigError("prior '" + label + "' needs a location-scale family");
  const auto im = static_cast<Eigen::Index>(ls->mu_slot());
  const auto is = static_cast<Eigen::Index>(ls->sigma_slot());
  auto logp = [=](const Eigen::VectorXd& t) {
    if (!(t[is] > 0)) return -std::numeric_limits<double>::infinity();
    return log_d(t[im]) - k * std::log(t[is]);
  };
  auto grad = [=](const Eigen::VectorXd& t) {
    Eigen::VectorXd g(2);
    g[im] = dlog_d(t[im]);
    g[is] = -k / t[is];
    return g;
  };
  auto hess = [=](const Eigen::VectorXd& t) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 2);
    h(im, im) = d2log_d(t[im]);
    h(is, is) = k / (t[is] * t[is]);
    return h;
  };
  return PriorSpec(std::move(label), logp, grad, hess);
}

PriorSpec make_prior(std::string_view key, const ModelFamily& family) {
  const std::string k(key);
  if (family.location_scale()) {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    auto ident = [](double m) { return m; };
    PriorSpec p = [&]() {
      if (k == "flat") return location_scale_prior(family, k, 0.0, zero, zero, zero);
      if (k == "inv-sigma") return location_scale_prior(family, k, 1.0, zero, zero, zero);
      if (k == "inv-sigma2") return location_scale_prior(family, k, 2.0, zero, zero, zero);
      if (k == "exp-mu-inv-sigma") return location_scale_prior(family, k, 1.0, ident, one, zero);
      throw ConfigError("unknown prior '" + k + "' for " + family.key());
    }();
    if (k != "exp-mu-inv-sigma") p.set_scale_power(k == "flat" ? 0.0 : (k == "inv-sigma" ? 1.0 : 2.0));
    return p;
  }
  if (family.key().rfind("gamma", 0) == 0) {
    const Eigen::Index ir = family.key() == "gamma:rate" ? 0 : 1;
    if (k == "flat")
      return PriorSpec(
          k, [](const Eigen::VectorXd&) { return 0.0; }, [](const Eigen::VectorXd& t) { return Eigen::VectorXd::Zero(t.size()).eval(); },
          [](const Eigen::VectorXd& t) { return Eigen::MatrixXd::Zero(t.size(), t.size()).eval(); });
    if (k == "inv-rate")
      return PriorSpec(
          k, [ir](const Eigen::VectorXd& t) { return -std::log(t[ir]); },
          [ir](const Eigen::VectorXd& t) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(t.size());
            g[ir] = -1.0 / t[ir];
            return g;
          },
          [ir](const Eigen::VectorXd& t) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(t.size(), t.size());
            h(ir, ir) = 1.0 / (t[ir] * t[ir]);
            return h;
          });
    throw ConfigError("unknown prior '" + k + "' for " + family.key());
  }
  if (k == "flat") return PriorSpec(k, [](const Eigen::VectorXd&) { return 0.0; });
  throw ConfigError("unknown prior '" + k + "' for " + family.key());
}

}  // namespace matchprior
