#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace matchprior {

// Monomial bookkeeping for truncated multivariate Taylor polynomials.
// Monomials are ordered by total degree, so coefficient 0 is the constant
// and 1..vars are the linear terms.
class JetLayout {
 public:
  static constexpr std::size_t kMaxTerms = 35;  // 3 variables through order 4

  static const JetLayout& get(std::size_t vars, int order);

  std::size_t vars() const { return vars_; }
  int order() const { return order_; }
  std::size_t size() const { return exps_.size(); }
  const std::vector<std::uint8_t>& exponents(std::size_t term) const { return exps_[term]; }
  int degree(std::size_t term) const { return degree_[term]; }
  // Term index for a list of variable indices, e.g. {0, 0, 1} -> x0^2 x1.
  std::size_t term_of(std::span<const std::size_t> vars) const;
  // Product of factorials of the exponents of a term.
  double factorial_weight(std::size_t term) const { return fact_[term]; }

  struct Product {
    std::uint16_t a, b, out;
  };
  const std::vector<Product>& products() const { return products_; }

 private:
  JetLayout(std::size_t vars, int order);

  std::size_t vars_;
  int order_;
  std::vector<std::vector<std::uint8_t>> exps_;
  std::vector<int> degree_;
  std::vector<double> fact_;
  std::vector<Product> products_;
};

class Jet {
 public:
  explicit Jet(const JetLayout& layout, double constant = 0.0);
  static Jet variable(const JetLayout& layout, std::size_t var, double value);

  const JetLayout& layout() const { return *layout_; }
  std::size_t size() const { return layout_->size(); }
  double constant() const { return c_[0]; }
  double& operator[](std::size_t k) { return c_[k]; }
  double operator[](std::size_t k) const { return c_[k]; }

  // Partial derivative of the represented function, variables listed with
  // repetition: {0, 1, 1} is d^3 / dx0 dx1^2.
  double partial(std::span<const std::size_t> vars) const;
  double partial(std::initializer_list<std::size_t> vars) const {
    return partial(std::span<const std::size_t>(vars.begin(), vars.size()));
  }

  // f(this) given f and its derivatives at the constant term:
  // derivs[k] = f^{(k)}(constant()), k = 0..order.
  Jet compose(std::span<const double> derivs) const;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }
  Jet& operator*=(double s);
  Jet& operator*=(const Jet& o);
  // this += s * o, the workhorse of the moment-sum expansion.
  Jet& add_scaled(const Jet& o, double s);

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator-(const Jet& a);

 private:
  const JetLayout* layout_;
  std::array<double, JetLayout::kMaxTerms> c_{};
};

Jet log(const Jet& x);
Jet exp(const Jet& x);
Jet reciprocal(const Jet& x);
Jet lgamma(const Jet& x);

}  // namespace matchprior
