#include "matchprior/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <boost/math/special_functions/legendre.hpp>

namespace matchprior {

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (slot) return *slot;
  auto rule = std::make_unique<GaussRule>();
  // boost returns the nonnegative zeros in increasing order
  auto zeros = boost::math::legendre_p_zeros<double>(n);
  std::vector<double> x;
  for (auto it = zeros.rbegin(); it != zeros.rend(); ++it)
    if (*it != 0.0) x.push_back(-*it);
  for (double z : zeros) x.push_back(z);
  for (double xi : x) {
    const double dp = boost::math::legendre_p_prime(n, xi);
    rule->x.push_back(xi);
    rule->w.push_back(2.0 / ((1.0 - xi * xi) * dp * dp));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    double prod = 1.0;
    for (std::size_t k = 0; k < x.size(); ++k)
      if (k != j) prod *= (x[j] - x[k]);
    rule->bary.push_back(1.0 / prod);
  }
  slot = std::move(rule);
  return *slot;
}

CompositeRule::CompositeRule(double a, double b, int panels, int per_panel)
    : a_(a), b_(b), h_((b - a) / panels), panels_(panels), per_panel_(per_panel), rule_(&gauss_legendre(per_panel)) {
  if (!(b > a) || panels < 1) throw std::invalid_argument("CompositeRule: empty interval");
  nodes_.reserve(static_cast<std::size_t>(panels) * per_panel);
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h_;
    for (int j = 0; j < per_panel; ++j) {
      nodes_.push_back(mid + 0.5 * h_ * rule_->x[j]);
      weights_.push_back(0.5 * h_ * rule_->w[j]);
    }
  }
}

int CompositeRule::panel_of(double x) const {
  int p = static_cast<int>(std::floor((x - a_) / h_));
  return std::clamp(p, 0, panels_ - 1);
}

double CompositeRule::interpolate(int p, std::span<const double> f, double x) const {
  const double t = (x - (a_ + (p + 0.5) * h_)) / (0.5 * h_);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < per_panel_; ++j) {
    const double d = t - rule_->x[j];
    if (d == 0.0) return f[j];
    const double c = rule_->bary[j] / d;
    num += c * f[j];
    den += c;
  }
  return num / den;
}

double CompositeRule::partial_integral(int p, std::span<const double> f, double x) const {
  const double lo = panel_lo(p);
  if (x <= lo) return 0.0;
  const double half = 0.5 * (x - lo);
  const double mid = 0.5 * (x + lo);
  // Densities can fall by many orders of magnitude across a panel, where a
  // polynomial through f oscillates; log f stays smooth.
  const bool positive = std::all_of(f.begin(), f.end(), [](double v) { return v > 0.0; });
  std::vector<double> g(f.begin(), f.end());
  if (positive)
    for (double& v : g) v = std::log(v);
  double s = 0.0;
  for (int j = 0; j < per_panel_; ++j) {
    const double v = interpolate(p, g, mid + half * rule_->x[j]);
    s += rule_->w[j] * (positive ? std::exp(v) : v);
  }
  return half * s;
}

}  // namespace matchprior
