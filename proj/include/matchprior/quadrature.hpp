#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace matchprior {

// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
  std::vector<double> bary;  // barycentric interpolation weights for x
};

const GaussRule& gauss_legendre(int n);

// Composite Gauss-Legendre rule on [a, b] with equal panels.
class CompositeRule {
 public:
  CompositeRule(double a, double b, int panels, int per_panel);

  std::size_t size() const { return nodes_.size(); }
  double node(std::size_t k) const { return nodes_[k]; }
  double weight(std::size_t k) const { return weights_[k]; }
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  int panels() const { return panels_; }
  int per_panel() const { return per_panel_; }
  double lo() const { return a_; }
  double hi() const { return b_; }
  double panel_lo(int p) const { return a_ + p * h_; }
  double panel_hi(int p) const { return a_ + (p + 1) * h_; }
  int panel_of(double x) const;

  // Integral from panel_lo(p) to x of the interpolant of the values f
  // (given at panel p's nodes): exp of the polynomial through log f when
  // every value is positive, the polynomial through f otherwise.
  double partial_integral(int p, std::span<const double> f, double x) const;
  double interpolate(int p, std::span<const double> f, double x) const;

 private:
  double a_, b_, h_;
  int panels_, per_panel_;
  const GaussRule* rule_;
  std::vector<double> nodes_, weights_;
};

}  // namespace matchprior
