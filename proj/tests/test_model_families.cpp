#include <cmath>
#include <numbers>

#include <boost/math/distributions/extreme_value.hpp>
#include <boost/math/distributions/gamma.hpp>

#include "doctest.h"
#include "matchprior/error.hpp"
#include "matchprior/model.hpp"
#include "matchprior/rng.hpp"

using namespace matchprior;

namespace {

const Sample data{0.31, -1.24, 0.82, 1.93, -0.47, 0.05, 2.4, -0.9};
const Sample positive{0.31, 1.24, 0.82, 1.93, 0.47, 0.05, 2.4, 0.9};

}  // namespace

TEST_CASE("normal log-likelihood matches the closed form in both slot orders") {
  const double mu = 0.4, sigma = 1.7;
  double ss = 0.0;
  for (double y : data.values()) ss += (y - mu) * (y - mu);
  const double n = static_cast<double>(data.n());
  const double expected = -n * std::log(sigma) - 0.5 * n * std::log(2 * std::numbers::pi) - ss / (2 * sigma * sigma);
  CHECK(make_family("normal-ls:loc")->loglik({mu, sigma}, data) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(make_family("normal-ls:scale")->loglik({sigma, mu}, data) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("hand-differentiated curvatures") {
  // normal: L_mumu = -n / sigma^2
  const Sample three{-1.0, 0.0, 1.0};
  CHECK(make_family("normal-ls:loc")->loglik_derivs({0.0, 1.0}, three, 2).hess(0, 0) == doctest::Approx(-3.0).epsilon(1e-14));
  // Cauchy: l_mumu = -2 (1 - z^2) / (1 + z^2)^2, -2 at z = 0
  const DerivTensors d = make_family("cauchy-ls:loc")->loglik_derivs({0.0, 1.0}, Sample{0.0}, 2);
  CHECK(d.hess(0, 0) == doctest::Approx(-2.0).epsilon(1e-14));
  const FamilyPtr f = make_family("cauchy-ls:loc");
  const double h = 1e-4;
  const double fd = (f->loglik({h, 1.0}, Sample{0.0}) - 2 * f->loglik({0.0, 1.0}, Sample{0.0}) +
                     f->loglik({-h, 1.0}, Sample{0.0})) / (h * h);
  CHECK(d.hess(0, 0) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("Cauchy, Gumbel and gamma log-likelihoods agree with boost densities") {
  const double mu = -0.2, sigma = 0.8;
  double cauchy = 0.0, gumbel = 0.0, gamma = 0.0;
  const boost::math::extreme_value_distribution<> ev(mu, sigma);
  const boost::math::gamma_distribution<> g(2.5, 1.0 / 1.3);
  for (double y : data.values()) {
    const double z = (y - mu) / sigma;
    cauchy += -std::log(std::numbers::pi * sigma * (1 + z * z));
    gumbel += std::log(boost::math::pdf(ev, y));
  }
  for (double y : positive.values()) gamma += std::log(boost::math::pdf(g, y));
  CHECK(make_family("cauchy-ls:loc")->loglik({mu, sigma}, data) == doctest::Approx(cauchy).epsilon(1e-13));
  CHECK(make_family("gumbel-ls:loc")->loglik({mu, sigma}, data) == doctest::Approx(gumbel).epsilon(1e-12));
  CHECK(make_family("gamma:shape")->loglik({2.5, 1.3}, positive) == doctest::Approx(gamma).epsilon(1e-12));
  CHECK(make_family("gamma:rate")->loglik({1.3, 2.5}, positive) == doctest::Approx(gamma).epsilon(1e-12));
}

TEST_CASE("analytic derivatives agree with differences of the order below") {
  for (const auto& key : family_keys()) {
    CAPTURE(key);
    const FamilyPtr f = make_family(key);
    const bool gamma = key.starts_with("gamma");
    Eigen::VectorXd theta(2);
    if (gamma)
      theta << 1.8, 0.9;
    else
      theta = f->location_scale()->theta_of(0.3, 1.4);
    CHECK(f->analytic_derivatives());
    CHECK(derivative_check(*f, theta, gamma ? positive : data) < 1e-6);
  }
}

TEST_CASE("parameter names follow the slot order") {
  CHECK(make_family("normal-ls:loc")->parameter_names() == std::vector<std::string>{"mu", "sigma"});
  CHECK(make_family("cauchy-ls:scale")->parameter_names() == std::vector<std::string>{"sigma", "mu"});
  CHECK(make_family("gamma:rate")->parameter_names() == std::vector<std::string>{"rate", "shape"});
}

TEST_CASE("out-of-domain parameters and unknown keys are rejected") {
  const FamilyPtr f = make_family("normal-ls:loc");
  CHECK_THROWS_AS(f->loglik({0.0, -1.0}, data), DomainError);
  CHECK_THROWS_AS(f->loglik({0.0, 0.0}, data), DomainError);
  CHECK_THROWS_AS(make_family("gamma:shape")->loglik({-1.0, 1.0}, positive), DomainError);
  CHECK_THROWS_AS(make_family("student-ls:loc"), ConfigError);
  CHECK_THROWS_AS(make_family("normal-ls:rate"), ConfigError);
}

TEST_CASE("samplers reproduce the law's location") {
  const std::size_t n = 100000;
  const double rn = std::sqrt(static_cast<double>(n));
  Stream s(17);
  const Sample y = make_family("normal-ls:loc")->sample({0.0, 1.0}, n, s);
  double m = 0.0;
  for (double x : y.values()) m += x;
  CHECK(std::abs(m / static_cast<double>(n)) < 4.0 / rn);

  // Gumbel median -log log 2, quartile spread log log 4 - log log(4/3)
  Stream s2(18);
  std::vector<double> v = make_family("gumbel-ls:loc")->sample({0.0, 1.0}, n, s2).values();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double spread = std::log(std::log(4.0)) - std::log(std::log(4.0 / 3.0));
  CHECK(std::abs(v[n / 2] + std::log(std::log(2.0))) < 4 * spread / rn);
}

TEST_CASE("streams are reproducible and split independently") {
  Stream a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Stream c = Stream(5).split(1), d = Stream(5).split(2);
  CHECK(c.next_u64() != d.next_u64());
  const FamilyPtr f = make_family("cauchy-ls:scale");
  Stream e(9), h(9);
  CHECK(f->sample({1.0, 0.0}, 5, e).values() == f->sample({1.0, 0.0}, 5, h).values());
}
