#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "doctest.h"
#include "matchprior/bayes.hpp"
#include "matchprior/conditional.hpp"
#include "matchprior/error.hpp"
#include "matchprior/likelihood.hpp"
#include "matchprior/matching.hpp"
#include "matchprior/prior.hpp"

using namespace matchprior;

namespace {

Configuration simulated(const char* key, std::size_t n, std::uint64_t seed) {
  Stream s(seed);
  return simulate_configuration(*make_family(key), n, s);
}

}  // namespace

TEST_CASE("configurations satisfy the score equations") {
  const Configuration c = simulated("cauchy-ls:loc", 9, 1);
  CHECK(c.n() == 9);
  CHECK(std::abs(c.score_location) < 1e-8);
  CHECK(std::abs(c.score_scale) < 1e-8);
  CHECK_THROWS_AS(configuration_from(*make_family("cauchy-ls:loc"), {0.5, 1.0, 2.0, -0.1}), FitQualityError);
}

TEST_CASE("normal pivotals follow Student t and chi-square given the configuration") {
  const std::size_t n = 8;
  const double nn = double(n);
  const ConditionalGrid g(*make_family("normal-ls:loc"), simulated("normal-ls:loc", n, 2));
  CHECK(g.expect([](double, double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-10));
  // sqrt(n - 1) t is Student t on n - 1 degrees of freedom
  const boost::math::students_t st(nn - 1);
  for (double x : {-0.8, 0.0, 0.3, 1.2}) {
    double tail = 0.0;
    for (std::size_t j = 0; j < g.w_rule().size(); ++j) tail += g.w_rule().weight(j) * g.row_tail(j, x);
    CHECK(tail == doctest::Approx(boost::math::cdf(boost::math::complement(st, x * std::sqrt(nn - 1)))).epsilon(1e-8));
  }
  // n e^{2w} is chi-square on n - 1 degrees of freedom
  const boost::math::chi_squared chi(nn - 1);
  for (double c : {-0.4, 0.0, 0.25}) {
    double tail = 0.0;
    for (std::size_t i = 0; i < g.s_rule().size(); ++i) tail += g.s_rule().weight(i) * g.column_tail(i, c);
    CHECK(tail == doctest::Approx(boost::math::cdf(boost::math::complement(chi, nn * std::exp(2 * c)))).epsilon(1e-8));
  }
}

TEST_CASE("density transforms between (t, w) and (u, v)") {
  const ConditionalGrid g(*make_family("cauchy-ls:scale"), simulated("cauchy-ls:scale", 6, 3));
  const double u = 0.3, v = 1.4;
  CHECK(g.density(u, v) == doctest::Approx(g.density_tw(u / v, std::log(v)) / (v * v)).epsilon(1e-14));
  CHECK(g.density(u, -1.0) == 0.0);
  const auto y = g.dataset(0.0, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(g.config().a[i]));
}

TEST_CASE("normal conditional constants are -n, 0, -2n") {
  const std::size_t n = 8;
  const ConditionalContext ctx = conditional_context(make_family("normal-ls:loc"), simulated("normal-ls:loc", n, 4));
  CHECK(ctx.B == doctest::Approx(-double(n)).epsilon(1e-9));
  CHECK(std::abs(ctx.C) < 1e-9);
  CHECK(ctx.D == doctest::Approx(-2.0 * double(n)).epsilon(1e-9));
  CHECK(ctx.E == doctest::Approx(ctx.B * ctx.D - ctx.C * ctx.C).epsilon(1e-12));
  CHECK(ctx.bartlett_defect < 1e-8);
}

TEST_CASE("Cauchy conditional arrays satisfy the Bartlett identities and scale as sigma^-k") {
  const FamilyPtr f = make_family("cauchy-ls:loc");
  const ConditionalContext ctx = conditional_context(f, simulated("cauchy-ls:loc", 7, 5));
  CHECK(ctx.bartlett_defect < 1e-5);
  CHECK(ctx.E > 0);
  const LambdaArrays a1 = ctx.at(Eigen::Vector2d(0.0, 1.0));
  const LambdaArrays a2 = ctx.at(Eigen::Vector2d(3.0, 2.0));
  CHECK(a2.lambda_rs(0, 1) == doctest::Approx(a1.lambda_rs(0, 1) / 4).epsilon(1e-12));
  CHECK(a2.lambda_rst(1, 1, 1) == doctest::Approx(a1.lambda_rst(1, 1, 1) / 8).epsilon(1e-12));
  CHECK(a1.lambda_rs(0, 0) == doctest::Approx(ctx.B).epsilon(1e-9));
  CHECK(a1.lambda_rs(1, 1) == doctest::Approx(ctx.D).epsilon(1e-9));
  CHECK(a1.lambda_rs(0, 1) == doctest::Approx(ctx.C).epsilon(1e-9));
}

TEST_CASE("residual contractions agree with the closed forms") {
  const Configuration c = simulated("cauchy-ls:loc", 7, 6);
  for (const char* key : {"cauchy-ls:loc", "cauchy-ls:scale"}) {
    CAPTURE(key);
    const FamilyPtr f = make_family(key);
    const ConditionalContext ctx = conditional_context(f, c);
    const Eigen::VectorXd th = f->location_scale()->theta_of(0.5, 1.7);
    for (const char* prior : {"inv-sigma", "exp-mu-inv-sigma", "flat"}) {
      CAPTURE(prior);
      const ConditionalResidual r = conditional_matching_residual(ctx, make_prior(prior, *f), th);
      CHECK(r.lhs == doctest::Approx(r.lhs_closed).epsilon(1e-9).scale(1.0));
      CHECK(r.rhs == doctest::Approx(r.rhs_closed).epsilon(1e-9).scale(1.0));
    }
    CHECK(std::abs(conditional_matching_residual(ctx, make_prior("inv-sigma", *f), th).residual) < 1e-9);
  }
}

TEST_CASE("generic and equivariant coverage agree") {
  const FamilyPtr f = make_family("normal-ls:loc");
  const ConditionalGrid g(*f, simulated("normal-ls:loc", 6, 7));
  ConditionalCoverageOptions gen, eq;
  gen.path = CoveragePath::generic;
  eq.path = CoveragePath::equivariant;
  for (const char* prior : {"inv-sigma", "inv-sigma2"}) {
    CAPTURE(prior);
    const ConditionalCoverage a = conditional_coverage(g, *f, make_prior(prior, *f), 0.1, gen);
    const ConditionalCoverage b = conditional_coverage(g, *f, make_prior(prior, *f), 0.1, eq);
    CHECK(a.coverage == doctest::Approx(b.coverage).epsilon(1e-5));
    CHECK(b.posteriors == 1);
  }
  // the normal posterior under 1/sigma is exact
  CHECK(conditional_coverage(g, *f, make_prior("inv-sigma", *f), 0.1).coverage == doctest::Approx(0.9).epsilon(1e-7));
  CHECK_THROWS(conditional_coverage(g, *f, make_prior("exp-mu-inv-sigma", *f), 0.1, eq));
}

TEST_CASE("sampler draws reproduce grid moments") {
  const FamilyPtr f = make_family("gumbel-ls:loc");
  auto g = std::make_shared<const ConditionalGrid>(*f, simulated("gumbel-ls:loc", 6, 8));
  const double mt = g->expect([](double t, double) { return t; });
  const double mw = g->expect([](double, double w) { return w; });
  const double vw = g->expect([&](double, double w) { return (w - mw) * (w - mw); });
  ConditionalSampler s(g);
  Stream st(9);
  const int N = 20000;
  double sw = 0.0, stt = 0.0;
  std::vector<double> ts;
  for (int i = 0; i < N; ++i) {
    const Eigen::Vector2d x = s.draw(st);
    sw += x[1];
    ts.push_back(x[0]);
  }
  CHECK(std::abs(sw / N - mw) < 4 * std::sqrt(vw / N));
  for (double t : ts) stt += t;
  const double vt = g->expect([&](double t, double) { return (t - mt) * (t - mt); });
  CHECK(std::abs(stt / N - mt) < 4 * std::sqrt(vt / N));
  CHECK(s.envelope_violations() == 0);
  CHECK(s.acceptance_rate() > 0.05);
}

TEST_CASE("three-point normal configuration by hand") {
  const FamilyPtr f = make_family("normal-ls:loc");
  const Sample y{-1.0, 0.0, 1.0};
  const Configuration c = configuration(*f, y, fit_mle(*f, y));
  const double a = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(c.a[0] == doctest::Approx(-a).epsilon(1e-10));
  CHECK(std::abs(c.a[1]) < 1e-10);
  CHECK(c.a[2] == doctest::Approx(a).epsilon(1e-10));
  CHECK(c.a[2] == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("the configuration is unchanged by affine maps of the data") {
  const FamilyPtr f = make_family("gumbel-ls:scale");
  const Sample y{0.31, -1.24, 0.82, 1.93, -0.47, 0.05, 2.4, -0.9};
  std::vector<double> z;
  for (double v : y.values()) z.push_back(2.5 * v - 1.3);
  const Configuration c1 = configuration(*f, y, fit_mle(*f, y));
  const Configuration c2 = configuration(*f, Sample(z), fit_mle(*f, Sample(z)));
  for (std::size_t i = 0; i < c1.a.size(); ++i) CHECK(c1.a[i] == doctest::Approx(c2.a[i]).epsilon(1e-10).scale(1.0));
}

TEST_CASE("normal conditional information stays near -n at n = 20") {
  const ConditionalContext ctx = bcd_constants(make_family("normal-ls:loc"), simulated("normal-ls:loc", 20, 10));
  CHECK(std::abs(ctx.B + 20.0) / 20.0 <= 0.15);
}

TEST_CASE("symmetric configurations have no cross information") {
  const FamilyPtr f = make_family("cauchy-ls:loc");
  const Sample y{-3.0, -1.0, 0.0, 1.0, 3.0};
  const Configuration c = configuration(*f, y, fit_mle(*f, y));
  for (std::size_t i = 0; i < c.n(); ++i) CHECK(c.a[i] == doctest::Approx(-c.a[c.n() - 1 - i]).epsilon(1e-9).scale(1.0));
  const ConditionalContext ctx = bcd_constants(f, c);
  CHECK(std::abs(ctx.C) < 1e-9);
  CHECK(ctx.B < 0);
}

TEST_CASE("priors away from 1/sigma fail the conditional condition when C is nonzero") {
  const Configuration c = simulated("cauchy-ls:loc", 7, 6);
  const Eigen::VectorXd th0 = make_family("cauchy-ls:loc")->location_scale()->theta_of(0.5, 1.7);
  {
    const FamilyPtr f = make_family("cauchy-ls:scale");
    const ConditionalContext ctx = conditional_context(f, c);
    REQUIRE(std::abs(ctx.C) > 1e-3);
    const Eigen::VectorXd th = f->location_scale()->theta_of(0.5, 1.7);
    CHECK(std::abs(conditional_matching_residual(ctx, make_prior("exp-mu-inv-sigma", *f), th).residual) > 1e-4);
  }
  {
    // flat prior, location interest: the left side vanishes and the right side is sigma C / E
    const FamilyPtr f = make_family("cauchy-ls:loc");
    const ConditionalContext ctx = conditional_context(f, c);
    const double r = conditional_matching_residual(ctx, make_prior("flat", *f), th0).residual;
    CHECK(r == doctest::Approx(-1.7 * ctx.C / ctx.E).epsilon(1e-8));
    CHECK(std::abs(r) > 1e-4);
  }
}

TEST_CASE("normal conditional mu_F averages to mu_F over configurations") {
  // 2000 configurations, n = 10, scale interest
  const FamilyPtr f = make_family("normal-ls:scale");
  const double target = mu_F(analytic_lambda(*f, f->location_scale()->theta_of(0.0, 1.0), 10.0));
  const int K = 2000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < K; ++i) {
    Stream s = Stream(31).split(i);
    const double m = mu_ring_F(conditional_context(f, simulate_configuration(*f, 10, s)));
    s1 += m, s2 += m * m;
  }
  const double m = s1 / K;
  const double se = std::sqrt(std::max(0.0, s2 / K - m * m) / K);
  CHECK(std::abs(m - target) <= std::max(4 * se, 1e-8));
}

TEST_CASE("conditional mu_F approaches mu_F as n grows") {
  for (const char* key : {"gumbel-ls:loc", "gumbel-ls:scale"}) {
    CAPTURE(key);
    const FamilyPtr f = make_family(key);
    const Eigen::VectorXd th = f->location_scale()->theta_of(0.0, 1.0);
    std::vector<double> x, y;
    for (std::size_t n : {10, 20, 40}) {
      const double target = mu_F(analytic_lambda(*f, th, double(n)));
      std::vector<double> gap;
      for (int i = 0; i < 100; ++i) {
        Stream s = Stream(31).split(i);
        gap.push_back(std::abs(mu_ring_F(conditional_context(f, simulate_configuration(*f, n, s))) - target));
      }
      std::nth_element(gap.begin(), gap.begin() + 50, gap.end());
      x.push_back(std::log(double(n)));
      y.push_back(std::log(gap[50]));
    }
    const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
    double sxy = 0.0, sxx = 0.0;
    for (int k = 0; k < 3; ++k) sxy += (x[k] - mx) * (y[k] - my), sxx += (x[k] - mx) * (x[k] - mx);
    CHECK(sxy / sxx <= -0.6);
  }
}

TEST_CASE("conditional draws of R centre on the quadrature mean, which tracks conditional mu_F") {
  const FamilyPtr f = make_family("cauchy-ls:loc");
  // the dataset at (t, w) has its MLE at (e^w t, e^w); starting there keeps
  // the fit off the secondary Cauchy maxima in the far tails
  auto R_at = [&](const ConditionalGrid& g, double t, double w) {
    const Sample y(g.dataset(t, w));
    return signed_root(*f, y, 0.0, fit_mle(*f, y, Eigen::VectorXd(Eigen::Vector2d(std::exp(w) * t, std::exp(w))))).R;
  };
  auto mean_R = [&](const ConditionalGrid& g) { return g.expect([&](double t, double w) { return R_at(g, t, w); }); };
  {
    const ConditionalContext ctx = conditional_context(f, simulated("cauchy-ls:loc", 10, 41));
    const double target = mean_R(*ctx.grid);
    ConditionalSampler smp(ctx.grid);
    Stream st(7);
    const int N = 10000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < N; ++i) {
      const Eigen::Vector2d d = smp.draw(st);
      const double r = R_at(*ctx.grid, d[0], d[1]);
      s1 += r, s2 += r * r;
    }
    const double m = s1 / N, se = std::sqrt((s2 / N - m * m) / N);
    CHECK(std::abs(m - target) <= 4 * se);
  }
  for (std::size_t n : {20, 40}) {
    CAPTURE(n);
    const ConditionalContext ctx = conditional_context(f, simulated("cauchy-ls:loc", n, 41));
    CHECK(std::abs(mean_R(*ctx.grid) - mu_ring_F(ctx)) < 0.01);
  }
}

TEST_CASE("conditional coverage at n = 8") {
  const double alpha = 0.05;
  {
    const FamilyPtr f = make_family("normal-ls:loc");
    const ConditionalGrid g(*f, simulated("normal-ls:loc", 8, 12));
    CHECK(std::abs(conditional_coverage(g, *f, make_prior("inv-sigma", *f), alpha).coverage - 0.95) <= 1e-3);
  }
  {
    const FamilyPtr f = make_family("cauchy-ls:scale");
    const ConditionalGrid g(*f, simulated("cauchy-ls:scale", 8, 13));
    CHECK(std::abs(conditional_coverage(g, *f, make_prior("inv-sigma", *f), alpha).coverage - 0.95) <= 2e-3);
  }
  {
    const FamilyPtr f = make_family("normal-ls:scale");
    const ConditionalGrid g(*f, simulated("normal-ls:scale", 8, 14));
    CHECK(std::abs(conditional_coverage(g, *f, make_prior("flat", *f), alpha).coverage - 0.95) > 5e-3);
  }
}

TEST_CASE("under 1/sigma the Bayesian mean tracks conditional mu_F beyond order n^-1") {
  // mu_B at the MLE depends on the data only through a, so it is its own
  // conditional expectation
  for (const char* key : {"cauchy-ls:loc", "cauchy-ls:scale"}) {
    CAPTURE(key);
    const FamilyPtr f = make_family(key);
    const LocationScaleModel& ls = *f->location_scale();
    const PriorSpec p = make_prior("inv-sigma", *f);
    std::vector<double> x, y;
    for (std::size_t n : {10, 20, 40, 80}) {
      std::vector<double> gap;
      for (int i = 0; i < 20; ++i) {
        Stream s = Stream(61).split(i);
        const ConditionalContext ctx = conditional_context(f, simulate_configuration(*f, n, s));
        const double m0 = mu_B(hat_arrays(*f, Sample(ctx.grid->dataset(0.0, 0.0)), ls.theta_of(0.0, 1.0), &p));
        const double m1 = mu_B(hat_arrays(*f, Sample(ctx.grid->dataset(0.7, 0.3)),
                                          ls.theta_of(0.7 * std::exp(0.3), std::exp(0.3)), &p));
        CHECK(m1 == doctest::Approx(m0).epsilon(1e-8).scale(1.0));
        gap.push_back(std::abs(m0 - mu_ring_F(ctx)));
      }
      std::nth_element(gap.begin(), gap.begin() + 10, gap.end());
      x.push_back(std::log(double(n)));
      y.push_back(std::log(gap[10]));
    }
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < 4; ++k) mx += x[k] / 4, my += y[k] / 4;
    double sxy = 0.0, sxx = 0.0;
    for (int k = 0; k < 4; ++k) sxy += (x[k] - mx) * (y[k] - my), sxx += (x[k] - mx) * (x[k] - mx);
    CHECK(sxy / sxx <= -1.1);
  }
  // exp(mu)/sigma is not invariant, so mu_B moves with the pivotal
  const FamilyPtr f = make_family("cauchy-ls:scale");
  const LocationScaleModel& ls = *f->location_scale();
  const PriorSpec p = make_prior("exp-mu-inv-sigma", *f);
  const ConditionalGrid g(*f, simulated("cauchy-ls:scale", 10, 6));
  const double m0 = mu_B(hat_arrays(*f, Sample(g.dataset(0.0, 0.0)), ls.theta_of(0.0, 1.0), &p));
  const double m1 = mu_B(hat_arrays(*f, Sample(g.dataset(0.7, 0.3)), ls.theta_of(0.7 * std::exp(0.3), std::exp(0.3)), &p));
  CHECK(std::abs(m1 - m0) > 1e-3);
}
