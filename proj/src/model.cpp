#include "matchprior/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "families.hpp"
#include "matchprior/error.hpp"

namespace matchprior {

ParameterPoint::ParameterPoint(Eigen::VectorXd theta) : theta_(std::move(theta)) {
  if (theta_.size() == 0) throw DomainError("parameter point is empty");
  if (!theta_.allFinite()) throw DomainError("parameter point has non-finite coordinates");
}

ParameterPoint::ParameterPoint(std::initializer_list<double> theta)
    : ParameterPoint(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(theta.begin(), static_cast<Eigen::Index>(theta.size())))) {}

Sample::Sample(std::vector<double> y) : y_(std::move(y)) {
  if (y_.empty()) throw std::invalid_argument("sample is empty");
  for (double v : y_)
    if (!std::isfinite(v)) throw std::invalid_argument("sample contains non-finite values");
}

Eigen::VectorXd LocationScaleModel::theta_of(double mu, double sigma) const {
  Eigen::VectorXd t(2);
  t[static_cast<Eigen::Index>(mu_slot())] = mu;
  t[static_cast<Eigen::Index>(sigma_slot())] = sigma;
  return t;
}

DerivTensors derivs_from_jet(const Jet& jet, int order) {
  const std::size_t d = jet.layout().vars();
  const auto D = static_cast<Eigen::Index>(d);
  DerivTensors out;
  out.order = order;
  out.value = jet.constant();
  out.grad = Eigen::VectorXd::Zero(D);
  for (std::size_t r = 0; r < d; ++r) out.grad[static_cast<Eigen::Index>(r)] = jet.partial({r});
  if (order >= 2) {
    out.hess = Eigen::MatrixXd::Zero(D, D);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s) {
        const double v = jet.partial({r, s});
        out.hess(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = v;
        out.hess(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r)) = v;
      }
  }
  if (order >= 3) {
    out.third = Tensor3(d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s)
        for (std::size_t t = s; t < d; ++t) {
          const double v = jet.partial({r, s, t});
          out.third(r, s, t) = out.third(r, t, s) = out.third(s, r, t) = v;
          out.third(s, t, r) = out.third(t, r, s) = out.third(t, s, r) = v;
        }
  }
  if (order >= 4) {
    out.fourth = Tensor4(d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s)
        for (std::size_t t = s; t < d; ++t)
          for (std::size_t u = t; u < d; ++u) {
            const double v = jet.partial({r, s, t, u});
            std::array<std::size_t, 4> idx{r, s, t, u};
            do {
              out.fourth(idx[0], idx[1], idx[2], idx[3]) = v;
            } while (std::next_permutation(idx.begin(), idx.end()));
          }
  }
  return out;
}

double fd_step(double x, int derivative_order) {
  const double eps = std::numeric_limits<double>::epsilon();
  return std::max(std::abs(x), 1.0) * std::pow(eps, 1.0 / (derivative_order + 2));
}

namespace {

double binomial(int n, int k) {
  double b = 1.0;
  for (int j = 1; j <= k; ++j) b = b * (n - k + j) / j;
  return b;
}

double nested_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                         const std::vector<int>& counts, const Eigen::VectorXd& h) {
  const std::size_t d = counts.size();
  std::vector<int> j(d, 0);
  double sum = 0.0;
  while (true) {
    Eigen::VectorXd p = x;
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const auto A = static_cast<Eigen::Index>(a);
      p[A] += (0.5 * counts[a] - j[a]) * h[A];
      w *= ((j[a] % 2) ? -1.0 : 1.0) * binomial(counts[a], j[a]);
    }
    sum += w * f(p);
    std::size_t a = 0;
    while (a < d && j[a] == counts[a]) j[a++] = 0;
    if (a == d) break;
    ++j[a];
  }
  for (std::size_t a = 0; a < d; ++a) sum /= std::pow(h[static_cast<Eigen::Index>(a)], counts[a]);
  return sum;
}

double fd_partial_scaled(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                         const std::vector<int>& counts, const Eigen::VectorXd& scale) {
  int total = 0;
  for (int c : counts) total += c;
  if (total == 0) return f(x);
  // Richardson on an O(h^2) stencil: the optimal step grows with the order.
  const double rel = 2.0 * std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (total + 4));
  Eigen::VectorXd h = rel * scale;
  const double coarse = nested_difference(f, x, counts, h);
  const double fine = nested_difference(f, x, counts, 0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace

double fd_partial(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const std::vector<int>& counts) {
  Eigen::VectorXd scale = x.cwiseAbs().cwiseMax(1.0);
  return fd_partial_scaled(f, x, counts, scale);
}

DerivTensors ModelFamily::derivs_unchecked(const Eigen::VectorXd& theta, std::span<const double> y, int order) const {
  const std::size_t d = dim();
  const auto pos = positive_coordinates();
  Eigen::VectorXd scale(theta.size());
  for (Eigen::Index a = 0; a < theta.size(); ++a)
    scale[a] = (pos[static_cast<std::size_t>(a)] && theta[a] > 0) ? theta[a] : std::max(std::abs(theta[a]), 1.0);
  auto f = [&](const Eigen::VectorXd& t) { return loglik_unchecked(t, y); };
  auto partial = [&](std::initializer_list<std::size_t> idx) {
    std::vector<int> counts(d, 0);
    for (auto i : idx) ++counts[i];
    return fd_partial_scaled(f, theta, counts, scale);
  };
  const auto D = static_cast<Eigen::Index>(d);
  DerivTensors out;
  out.order = order;
  out.value = f(theta);
  out.grad = Eigen::VectorXd(D);
  for (std::size_t r = 0; r < d; ++r) out.grad[static_cast<Eigen::Index>(r)] = partial({r});
  if (order >= 2) {
    out.hess = Eigen::MatrixXd(D, D);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s)
        out.hess(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) =
            out.hess(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(r)) = partial({r, s});
  }
  if (order >= 3) {
    out.third = Tensor3(d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s)
        for (std::size_t t = s; t < d; ++t) {
          std::array<std::size_t, 3> idx{r, s, t};
          const double v = partial({r, s, t});
          do {
            out.third(idx[0], idx[1], idx[2]) = v;
          } while (std::next_permutation(idx.begin(), idx.end()));
        }
  }
  if (order >= 4) {
    out.fourth = Tensor4(d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = r; s < d; ++s)
        for (std::size_t t = s; t < d; ++t)
          for (std::size_t u = t; u < d; ++u) {
            std::array<std::size_t, 4> idx{r, s, t, u};
            const double v = partial({r, s, t, u});
            do {
              out.fourth(idx[0], idx[1], idx[2], idx[3]) = v;
            } while (std::next_permutation(idx.begin(), idx.end()));
          }
  }
  return out;
}

std::vector<double> ModelFamily::nuisance_candidates(std::size_t, std::span<const double>) const { return {}; }

std::vector<std::pair<double, double>> ModelFamily::expectation_rule(const Eigen::VectorXd&) const {
  throw MissingArrayError(key() + ": no expectation rule for analytic lambda arrays");
}

ObservationMoments ModelFamily::observation_moments(const Eigen::VectorXd& theta) const {
  const std::size_t d = dim();
  const auto D = static_cast<Eigen::Index>(d);
  ObservationMoments m;
  m.l_r = Eigen::VectorXd::Zero(D);
  m.l_rs = Eigen::MatrixXd::Zero(D, D);
  m.l_r_s = Eigen::MatrixXd::Zero(D, D);
  m.l_rst = Tensor3(d);
  m.l_rs_t = Tensor3(d);
  m.l_r_s_t = Tensor3(d);
  m.l_rstu = Tensor4(d);
  for (const auto& [y, w] : expectation_rule(theta)) {
    const double obs[1] = {y};
    const DerivTensors dt = derivs_unchecked(theta, obs, 4);
    m.l_r += w * dt.grad;
    m.l_rs += w * dt.hess;
    m.l_r_s += w * dt.grad * dt.grad.transpose();
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s)
        for (std::size_t t = 0; t < d; ++t) {
          const auto R = static_cast<Eigen::Index>(r), S = static_cast<Eigen::Index>(s),
                     T = static_cast<Eigen::Index>(t);
          m.l_rst(r, s, t) += w * dt.third(r, s, t);
          m.l_rs_t(r, s, t) += w * dt.hess(R, S) * dt.grad[T];
          m.l_r_s_t(r, s, t) += w * dt.grad[R] * dt.grad[S] * dt.grad[T];
          for (std::size_t u = 0; u < d; ++u) m.l_rstu(r, s, t, u) += w * dt.fourth(r, s, t, u);
        }
  }
  return m;
}

void ModelFamily::require_domain(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim()) {
    std::ostringstream os;
    os << key() << ": parameter has " << theta.size() << " coordinates, expected " << dim();
    throw DomainError(os.str());
  }
  if (!theta.allFinite() || !in_domain(theta)) {
    std::ostringstream os;
    os << key() << ": parameter (" << theta.transpose() << ") outside the model domain";
    throw DomainError(os.str());
  }
}

double ModelFamily::loglik(const ParameterPoint& theta, const Sample& sample) const {
  require_domain(theta);
  const double v = loglik_unchecked(theta, sample.y());
  if (!std::isfinite(v)) throw EvaluationError(key() + ": non-finite log-likelihood");
  return v;
}

DerivTensors ModelFamily::loglik_derivs(const ParameterPoint& theta, const Sample& sample, int order) const {
  if (order < 1 || order > 4) throw std::invalid_argument("derivative order must be in 1..4");
  require_domain(theta);
  DerivTensors d = derivs_unchecked(theta, sample.y(), order);
  if (!std::isfinite(d.value)) throw EvaluationError(key() + ": non-finite log-likelihood");
  if (!d.grad.allFinite() || (order >= 2 && !d.hess.allFinite()))
    throw EvaluationError(key() + ": non-finite log-likelihood derivatives");
  return d;
}

Sample ModelFamily::sample(const ParameterPoint& theta, std::size_t n, Stream& stream) const {
  require_domain(theta);
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  std::vector<double> y(n);
  for (auto& v : y) v = quantile(theta, stream.uniform());
  return Sample(std::move(y));
}

namespace {

class CustomFamily final : public ModelFamily {
 public:
  explicit CustomFamily(CustomFamilySpec s) : s_(std::move(s)) {
    if (!s_.loglik) throw std::invalid_argument("custom family needs a log-likelihood");
    if (s_.positive.empty()) s_.positive.assign(s_.names.size(), false);
  }
  std::string key() const override { return s_.key; }
  std::size_t dim() const override { return s_.names.size(); }
  std::vector<std::string> parameter_names() const override { return s_.names; }
  std::string interest_role() const override { return s_.role; }
  bool in_domain(const Eigen::VectorXd& t) const override {
    for (Eigen::Index a = 0; a < t.size(); ++a)
      if (s_.positive[static_cast<std::size_t>(a)] && !(t[a] > 0)) return false;
    return true;
  }
  std::vector<bool> positive_coordinates() const override { return s_.positive; }
  double loglik_unchecked(const Eigen::VectorXd& t, std::span<const double> y) const override {
    return s_.loglik(t, y);
  }
  double quantile(const Eigen::VectorXd& t, double u) const override {
    if (!s_.quantile) throw std::logic_error(s_.key + ": no sampler supplied");
    return s_.quantile(t, u);
  }
  std::vector<Eigen::VectorXd> starts(std::span<const double> y) const override {
    if (!s_.starts) throw std::logic_error(s_.key + ": no starting values supplied");
    return s_.starts(y);
  }

 private:
  CustomFamilySpec s_;
};

}  // namespace

FamilyPtr make_custom_family(CustomFamilySpec spec) { return std::make_shared<CustomFamily>(std::move(spec)); }

FamilyPtr make_family(std::string_view key) {
  std::string base(key), suffix;
  if (auto c = key.find(':'); c != std::string_view::npos) {
    base = std::string(key.substr(0, c));
    suffix = std::string(key.substr(c + 1));
  }
  if (base == "normal-ls" || base == "cauchy-ls" || base == "gumbel-ls") {
    bool scale;
    if (suffix.empty() || suffix == "loc")
      scale = false;
    else if (suffix == "scale")
      scale = true;
    else
      throw ConfigError("unknown slot suffix '" + suffix + "' for " + base);
    return detail::make_location_scale(base, scale);
  }
  if (base == "gamma") {
    bool rate;
    if (suffix.empty() || suffix == "shape")
      rate = false;
    else if (suffix == "rate")
      rate = true;
    else
      throw ConfigError("unknown slot suffix '" + suffix + "' for gamma");
    return detail::make_gamma(rate);
  }
  throw ConfigError("unknown family '" + std::string(key) + "'");
}

std::vector<std::string> family_keys() {
  return {"normal-ls:loc", "normal-ls:scale", "cauchy-ls:loc", "cauchy-ls:scale",
          "gumbel-ls:loc", "gumbel-ls:scale", "gamma:shape",   "gamma:rate"};
}

namespace {

double rel(double num, double den) { return den > 0 ? num / den : num; }

}  // namespace

double derivative_check(const ModelFamily& family, const ParameterPoint& theta, const Sample& sample) {
  family.require_domain(theta);
  const std::size_t d = family.dim();
  const auto y = sample.y();
  const DerivTensors an = family.derivs_unchecked(theta, y, 4);
  const double eps = std::numeric_limits<double>::epsilon();
  double worst = 0.0;
  Eigen::VectorXd scale = theta.theta().cwiseAbs().cwiseMax(1.0);
  const auto pos = family.positive_coordinates();
  for (std::size_t a = 0; a < d; ++a)
    if (pos[a]) scale[static_cast<Eigen::Index>(a)] = std::abs(theta[a]);

  double g_err = 0, h_err = 0, t_err = 0, f_err = 0;
  for (std::size_t a = 0; a < d; ++a) {
    const auto A = static_cast<Eigen::Index>(a);
    const double h = scale[A] * std::pow(eps, 0.2);
    const double g = five_point([&](const Eigen::VectorXd& t) { return family.loglik_unchecked(t, y); }, theta.theta(), A, h);
    g_err = std::max(g_err, std::abs(g - an.grad[A]));
    const Eigen::VectorXd hcol = five_point([&](const Eigen::VectorXd& t) { return Eigen::VectorXd(family.derivs_unchecked(t, y, 1).grad); },
                                            theta.theta(), A, h);
    h_err = std::max(h_err, (hcol - an.hess.col(A)).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd tcol = five_point([&](const Eigen::VectorXd& t) { return Eigen::MatrixXd(family.derivs_unchecked(t, y, 2).hess); },
                                            theta.theta(), A, h);
    const Tensor3 fcol = five_point([&](const Eigen::VectorXd& t) { return family.derivs_unchecked(t, y, 3).third; }, theta.theta(), A, h);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s = 0; s < d; ++s) {
        t_err = std::max(t_err, std::abs(tcol(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) - an.third(r, s, a)));
        for (std::size_t t = 0; t < d; ++t) f_err = std::max(f_err, std::abs(fcol(r, s, t) - an.fourth(r, s, t, a)));
      }
  }
  // the score can vanish at the reference point; measure it on the scale
  // a unit parameter change induces through the Hessian
  const double g_scale = std::max(an.grad.cwiseAbs().maxCoeff(), an.hess.cwiseAbs().maxCoeff() * scale.minCoeff());
  worst = std::max(worst, rel(g_err, g_scale));
  worst = std::max(worst, rel(h_err, an.hess.cwiseAbs().maxCoeff()));
  worst = std::max(worst, rel(t_err, an.third.max_abs()));
  worst = std::max(worst, rel(f_err, an.fourth.max_abs()));
  return worst;
}

}  // namespace matchprior
