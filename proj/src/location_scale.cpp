#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "families.hpp"
#include "matchprior/error.hpp"
#include "matchprior/quadrature.hpp"

namespace matchprior {
namespace detail {

double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile_of(std::move(v), 0.5); }

namespace {

double mean_of(std::span<const double> y) { return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size()); }

double sd_of(std::span<const double> y) {
  const double m = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(y.size()));
}

double mad_of(std::span<const double> y, double center) {
  std::vector<double> dev;
  dev.reserve(y.size());
  for (double v : y) dev.push_back(std::abs(v - center));
  return median(std::move(dev));
}

double positive_or(double x, double fallback) { return (x > 0 && std::isfinite(x)) ? x : fallback; }

struct NormalKernel {
  static constexpr const char* name = "normal";
  static constexpr bool heavy = false;
  static double h(double z) { return -0.5 * z * z - 0.5 * std::log(2 * std::numbers::pi); }
  static void derivs(double z, double* d) {
    d[0] = h(z);
    d[1] = -z;
    d[2] = -1.0;
    d[3] = 0.0;
    d[4] = 0.0;
  }
  static double quantile(double u) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u); }
  static std::vector<std::pair<double, double>> rule() {
    CompositeRule r(-14.0, 14.0, 28, 12);
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < r.size(); ++k) out.emplace_back(r.node(k), r.weight(k) * std::exp(h(r.node(k))));
    return out;
  }
  static std::vector<std::array<double, 2>> starts(std::span<const double> y) {
    std::vector<double> v(y.begin(), y.end());
    const double med = median(v);
    const double sd = positive_or(sd_of(y), 1.0);
    return {{mean_of(y), sd}, {med, positive_or(1.4826 * mad_of(y, med), sd)}};
  }
};

struct CauchyKernel {
  static constexpr const char* name = "cauchy";
  static constexpr bool heavy = true;
  static double h(double z) { return -std::log1p(z * z) - std::log(std::numbers::pi); }
  static void derivs(double z, double* d) {
    const double z2 = z * z;
    const double w = 1.0 / (1.0 + z2);
    d[0] = h(z);
    d[1] = -2.0 * z * w;
    d[2] = -2.0 * (1.0 - z2) * w * w;
    d[3] = -4.0 * z * (z2 - 3.0) * w * w * w;
    d[4] = 12.0 * (z2 * z2 - 6.0 * z2 + 1.0) * w * w * w * w;
  }
  static double quantile(double u) { return std::tan(std::numbers::pi * (u - 0.5)); }
  // z = tan(t) turns the Cauchy law into the uniform law on (-pi/2, pi/2)
  static std::vector<std::pair<double, double>> rule() {
    CompositeRule r(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi, 24, 12);
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < r.size(); ++k) out.emplace_back(std::tan(r.node(k)), r.weight(k) / std::numbers::pi);
    return out;
  }
  static std::vector<std::array<double, 2>> starts(std::span<const double> y) {
    std::vector<double> v(y.begin(), y.end());
    const double med = median(v);
    const double iqr = quantile_of(v, 0.75) - quantile_of(v, 0.25);
    const double mad = mad_of(y, med);
    return {{med, positive_or(0.5 * iqr, 1.0)}, {med, positive_or(mad, positive_or(0.5 * iqr, 1.0))}};
  }
};

// Largest-extreme-value (Gumbel) law: g(z) = exp(-z - exp(-z)).
struct GumbelKernel {
  static constexpr const char* name = "gumbel";
  static constexpr bool heavy = false;
  static double h(double z) { return -z - std::exp(-z); }
  static void derivs(double z, double* d) {
    const double e = std::exp(-z);
    d[0] = -z - e;
    d[1] = -1.0 + e;
    d[2] = -e;
    d[3] = e;
    d[4] = -e;
  }
  static double quantile(double u) { return -std::log(-std::log(u)); }
  static std::vector<std::pair<double, double>> rule() {
    CompositeRule r(-8.0, 80.0, 88, 20);
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < r.size(); ++k) out.emplace_back(r.node(k), r.weight(k) * std::exp(h(r.node(k))));
    return out;
  }
  static std::vector<std::array<double, 2>> starts(std::span<const double> y) {
    constexpr double euler = 0.57721566490153286;
    const double sd = positive_or(sd_of(y), 1.0);
    const double s1 = sd * std::sqrt(6.0) / std::numbers::pi;
    std::vector<double> v(y.begin(), y.end());
    const double iqr = quantile_of(v, 0.75) - quantile_of(v, 0.25);
    const double s2 = positive_or(iqr / 1.5725, s1);
    return {{mean_of(y) - euler * s1, s1}, {median(v) - 0.36651292058166435 * s2, s2}};
  }
};

template <typename K>
class LocationScaleFamily final : public ModelFamily, public LocationScaleModel {
 public:
  explicit LocationScaleFamily(bool scale_interest) : scale_(scale_interest) {}

  std::string key() const override { return std::string(K::name) + "-ls" + (scale_ ? ":scale" : ":loc"); }
  std::size_t dim() const override { return 2; }
  std::vector<std::string> parameter_names() const override {
    return scale_ ? std::vector<std::string>{"sigma", "mu"} : std::vector<std::string>{"mu", "sigma"};
  }
  std::string interest_role() const override { return scale_ ? "scale" : "location"; }
  bool in_domain(const Eigen::VectorXd& t) const override {
    return t.size() == 2 && std::isfinite(t[0]) && std::isfinite(t[1]) && t[static_cast<Eigen::Index>(sigma_slot())] > 0;
  }
  std::vector<bool> positive_coordinates() const override {
    return scale_ ? std::vector<bool>{true, false} : std::vector<bool>{false, true};
  }
  bool analytic_derivatives() const override { return true; }

  double loglik_unchecked(const Eigen::VectorXd& t, std::span<const double> y) const override {
    const double mu = t[static_cast<Eigen::Index>(mu_slot())];
    const double sigma = t[static_cast<Eigen::Index>(sigma_slot())];
    double s = 0.0;
    for (double v : y) s += K::h((v - mu) / sigma);
    return s - static_cast<double>(y.size()) * std::log(sigma);
  }

  // Expansion of sum_i h(z_i) around the current standardized residuals
  // using the moment sums S[k][j] = sum_i h^(k)(z_i) z_i^j.
  DerivTensors derivs_unchecked(const Eigen::VectorXd& t, std::span<const double> y, int order) const override {
    const double mu = t[static_cast<Eigen::Index>(mu_slot())];
    const double sigma = t[static_cast<Eigen::Index>(sigma_slot())];
    const double n = static_cast<double>(y.size());
    double S[5][5] = {};
    for (double v : y) {
      const double z = (v - mu) / sigma;
      double d[5];
      K::derivs(z, d);
      for (int k = 0; k <= order; ++k) {
        double zp = 1.0;
        for (int j = 0; j <= k; ++j) {
          S[k][j] += d[k] * zp;
          zp *= z;
        }
      }
    }
    const JetLayout& lay = JetLayout::get(2, order);
    Jet p(lay), s(lay);
    p[1 + mu_slot()] = 1.0 / sigma;
    s[1 + sigma_slot()] = 1.0 / sigma;
    const Jet q = reciprocal(s + 1.0);
    const Jet a = q + (-1.0);
    const Jet b = -(p * q);
    std::array<Jet, 5> ap{Jet(lay, 1.0), a, Jet(lay), Jet(lay), Jet(lay)};
    std::array<Jet, 5> bp{Jet(lay, 1.0), b, Jet(lay), Jet(lay), Jet(lay)};
    for (int k = 2; k <= order; ++k) {
      ap[k] = ap[k - 1] * a;
      bp[k] = bp[k - 1] * b;
    }
    Jet total(lay, S[0][0]);
    double fact = 1.0;
    for (int k = 1; k <= order; ++k) {
      fact *= k;
      double binom = 1.0;
      for (int j = 0; j <= k; ++j) {
        const double c = binom * S[k][j] / fact;
        if (c != 0.0) {
          if (j == 0)
            total.add_scaled(bp[k], c);
          else if (j == k)
            total.add_scaled(ap[k], c);
          else
            total.add_scaled(ap[j] * bp[k - j], c);
        }
        binom = binom * (k - j) / (j + 1);
      }
    }
    total.add_scaled(log(s + 1.0), -n);
    total += -n * std::log(sigma);
    return derivs_from_jet(total, order);
  }

  double quantile(const Eigen::VectorXd& t, double u) const override {
    return t[static_cast<Eigen::Index>(mu_slot())] + t[static_cast<Eigen::Index>(sigma_slot())] * K::quantile(u);
  }

  std::vector<Eigen::VectorXd> starts(std::span<const double> y) const override {
    std::vector<Eigen::VectorXd> out;
    for (const auto& ms : K::starts(y)) out.push_back(theta_of(ms[0], ms[1]));
    return out;
  }

  std::vector<double> nuisance_candidates(std::size_t slot, std::span<const double> y) const override {
    if (slot == mu_slot()) return std::vector<double>(y.begin(), y.end());
    return {};
  }

  bool has_expectation_rule() const override { return true; }
  std::vector<std::pair<double, double>> expectation_rule(const Eigen::VectorXd& t) const override {
    const double mu = t[static_cast<Eigen::Index>(mu_slot())];
    const double sigma = t[static_cast<Eigen::Index>(sigma_slot())];
    auto r = K::rule();
    for (auto& [z, w] : r) z = mu + sigma * z;
    return r;
  }

  // Entries of total derivative order k scale as sigma^-k, so the unit
  // moments are computed once.
  ObservationMoments observation_moments(const Eigen::VectorXd& t) const override {
    std::call_once(unit_once_, [&] { unit_ = ModelFamily::observation_moments(theta_of(0.0, 1.0)); });
    const double sigma = t[static_cast<Eigen::Index>(sigma_slot())];
    const double s1 = 1.0 / sigma, s2 = s1 * s1, s3 = s2 * s1, s4 = s2 * s2;
    ObservationMoments m = unit_;
    m.l_r *= s1;
    m.l_rs *= s2;
    m.l_r_s *= s2;
    m.l_rst *= s3;
    m.l_rs_t *= s3;
    m.l_r_s_t *= s3;
    m.l_rstu *= s4;
    return m;
  }

  const LocationScaleModel* location_scale() const override { return this; }

  std::string kernel_name() const override { return K::name; }
  double h(double z) const override { return K::h(z); }
  void h_derivs(double z, double* out) const override { K::derivs(z, out); }
  bool heavy_tailed() const override { return K::heavy; }
  bool scale_interest() const override { return scale_; }
  double sum_h(double u, double v, std::span<const double> a) const override {
    double s = 0.0;
    for (double ai : a) s += K::h(u + v * ai);
    return s;
  }

 private:
  bool scale_;
  mutable std::once_flag unit_once_;
  mutable ObservationMoments unit_;
};

}  // namespace

FamilyPtr make_location_scale(const std::string& kernel, bool scale_interest) {
  if (kernel == "normal-ls") return std::make_shared<LocationScaleFamily<NormalKernel>>(scale_interest);
  if (kernel == "cauchy-ls") return std::make_shared<LocationScaleFamily<CauchyKernel>>(scale_interest);
  if (kernel == "gumbel-ls") return std::make_shared<LocationScaleFamily<GumbelKernel>>(scale_interest);
  throw ConfigError("unknown location-scale kernel " + kernel);
}

}  // namespace detail
}  // namespace matchprior
