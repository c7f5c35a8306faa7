#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "families.hpp"
#include "matchprior/quadrature.hpp"

namespace matchprior::detail {

namespace {

// Gamma(shape k, rate beta); log-likelihood
//   n k log(beta) - n lgamma(k) + (k - 1) sum log y - beta sum y.
class GammaFamily final : public ModelFamily {
 public:
  explicit GammaFamily(bool rate_interest) : rate_(rate_interest) {}

  std::string key() const override { return rate_ ? "gamma:rate" : "gamma:shape"; }
  std::size_t dim() const override { return 2; }
  std::vector<std::string> parameter_names() const override {
    return rate_ ? std::vector<std::string>{"rate", "shape"} : std::vector<std::string>{"shape", "rate"};
  }
  std::string interest_role() const override { return rate_ ? "rate" : "shape"; }
  bool in_domain(const Eigen::VectorXd& t) const override { return t.size() == 2 && t[0] > 0 && t[1] > 0; }
  std::vector<bool> positive_coordinates() const override { return {true, true}; }
  bool analytic_derivatives() const override { return true; }

  double loglik_unchecked(const Eigen::VectorXd& t, std::span<const double> y) const override {
    const double k = shape(t), b = rate(t);
    double s1 = 0.0, s2 = 0.0;
    for (double v : y) {
      if (!(v > 0)) return -std::numeric_limits<double>::infinity();
      s1 += std::log(v);
      s2 += v;
    }
    const double n = static_cast<double>(y.size());
    return n * k * std::log(b) - n * std::lgamma(k) + (k - 1.0) * s1 - b * s2;
  }

  DerivTensors derivs_unchecked(const Eigen::VectorXd& t, std::span<const double> y, int order) const override {
    double s1 = 0.0, s2 = 0.0;
    for (double v : y) {
      s1 += std::log(v);
      s2 += v;
    }
    const double n = static_cast<double>(y.size());
    const JetLayout& lay = JetLayout::get(2, order);
    const Jet k = Jet::variable(lay, rate_ ? 1 : 0, shape(t));
    const Jet b = Jet::variable(lay, rate_ ? 0 : 1, rate(t));
    Jet total = n * (k * log(b)) - n * lgamma(k) + s1 * (k + (-1.0)) - s2 * b;
    return derivs_from_jet(total, order);
  }

  double quantile(const Eigen::VectorXd& t, double u) const override {
    return boost::math::gamma_p_inv(shape(t), u) / rate(t);
  }

  std::vector<Eigen::VectorXd> starts(std::span<const double> y) const override {
    const double n = static_cast<double>(y.size());
    const double m = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double v = 0.0, ml = 0.0;
    for (double x : y) {
      v += (x - m) * (x - m);
      ml += std::log(x);
    }
    v /= n;
    ml /= n;
    const double k1 = (v > 0) ? m * m / v : 1.0;
    // closed-form approximation to the shape MLE from log m - mean log y
    const double s = std::log(m) - ml;
    const double k2 = (s > 0) ? (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s) : k1;
    return {point(k1, k1 / m), point(k2, k2 / m)};
  }

  bool has_expectation_rule() const override { return true; }
  // Integrates in s = log y, where the density is smooth and light-tailed.
  std::vector<std::pair<double, double>> expectation_rule(const Eigen::VectorXd& t) const override {
    const double k = shape(t), b = rate(t);
    const double lo = std::log(boost::math::gamma_p_inv(k, 1e-18) / b);
    const double hi = std::log(boost::math::gamma_q_inv(k, 1e-18) / b);
    CompositeRule r(lo, hi, 40, 12);
    std::vector<std::pair<double, double>> out;
    const double lg = std::lgamma(k);
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double s = r.node(j);
      const double logf = k * std::log(b) + k * s - b * std::exp(s) - lg;
      out.emplace_back(std::exp(s), r.weight(j) * std::exp(logf));
    }
    return out;
  }

 private:
  double shape(const Eigen::VectorXd& t) const { return rate_ ? t[1] : t[0]; }
  double rate(const Eigen::VectorXd& t) const { return rate_ ? t[0] : t[1]; }
  Eigen::VectorXd point(double k, double b) const {
    Eigen::VectorXd t(2);
    if (rate_)
      t << b, k;
    else
      t << k, b;
    return t;
  }

  bool rate_;
};

}  // namespace

FamilyPtr make_gamma(bool rate_interest) { return std::make_shared<GammaFamily>(rate_interest); }

}  // namespace matchprior::detail
