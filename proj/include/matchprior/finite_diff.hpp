#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace matchprior {

// Step for a second-order central difference of the given derivative order:
// max(|x|, 1) * eps^(1/(order+2)).
double fd_step(double x, int derivative_order);

// Richardson-extrapolated nested central differences of a mixed partial;
// counts[a] is the number of differentiations along axis a.
double fd_partial(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const std::vector<int>& counts);

// Step for the five-point (fourth-order) stencils below. Positive
// coordinates are scaled by their own magnitude so the stencil stays inside
// the domain.
inline double five_point_step(double x, bool positive, int derivative_order = 1) {
  const double scale = positive ? std::abs(x) : std::max(std::abs(x), 1.0);
  return scale * std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (derivative_order + 4));
}

// Five-point first derivative of a field (double, Eigen object, or tensor).
template <typename F>
auto five_point(F&& f, const Eigen::VectorXd& x, Eigen::Index axis, double h) {
  Eigen::VectorXd p = x;
  p[axis] = x[axis] - 2 * h;
  auto m2 = f(p);
  p[axis] = x[axis] - h;
  auto m1 = f(p);
  p[axis] = x[axis] + h;
  auto p1 = f(p);
  p[axis] = x[axis] + 2 * h;
  auto p2 = f(p);
  using T = decltype(m2);
  return T(((m2 - p2) + 8.0 * (p1 - m1)) * (1.0 / (12.0 * h)));
}

// Five-point second derivative along one axis.
template <typename F>
auto five_point_second(F&& f, const Eigen::VectorXd& x, Eigen::Index axis, double h) {
  Eigen::VectorXd p = x;
  auto c = f(p);
  p[axis] = x[axis] - 2 * h;
  auto m2 = f(p);
  p[axis] = x[axis] - h;
  auto m1 = f(p);
  p[axis] = x[axis] + h;
  auto p1 = f(p);
  p[axis] = x[axis] + 2 * h;
  auto p2 = f(p);
  using T = decltype(c);
  return T((16.0 * (p1 + m1) - (p2 + m2) - 30.0 * c) * (1.0 / (12.0 * h * h)));
}

// Mixed second derivative from the tensor product of two five-point stencils.
template <typename F>
auto five_point_mixed(F&& f, const Eigen::VectorXd& x, Eigen::Index a, Eigen::Index b, double ha, double hb) {
  return five_point([&](const Eigen::VectorXd& y) { return five_point(f, y, b, hb); }, x, a, ha);
}

}  // namespace matchprior
