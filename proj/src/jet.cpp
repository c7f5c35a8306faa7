#include "matchprior/jet.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <boost/math/special_functions/polygamma.hpp>

namespace matchprior {

namespace {

void enumerate(std::size_t vars, int degree, std::size_t pos, std::vector<std::uint8_t>& cur,
               std::vector<std::vector<std::uint8_t>>& out) {
  if (pos + 1 == vars) {
    cur[pos] = static_cast<std::uint8_t>(degree);
    out.push_back(cur);
    return;
  }
  for (int k = degree; k >= 0; --k) {
    cur[pos] = static_cast<std::uint8_t>(k);
    enumerate(vars, degree - k, pos + 1, cur, out);
  }
  cur[pos] = 0;
}

double factorial(int k) {
  double f = 1.0;
  for (int j = 2; j <= k; ++j) f *= j;
  return f;
}

}  // namespace

JetLayout::JetLayout(std::size_t vars, int order) : vars_(vars), order_(order) {
  if (vars == 0 || order < 0 || order > 4) throw std::invalid_argument("jet layout supports orders 0..4");
  for (int d = 0; d <= order; ++d) {
    std::vector<std::uint8_t> cur(vars, 0);
    enumerate(vars, d, 0, cur, exps_);
  }
  if (exps_.size() > kMaxTerms) throw std::invalid_argument("jet layout too large");
  for (const auto& e : exps_) {
    int deg = 0;
    double f = 1.0;
    for (auto x : e) {
      deg += x;
      f *= factorial(x);
    }
    degree_.push_back(deg);
    fact_.push_back(f);
  }
  std::map<std::vector<std::uint8_t>, std::size_t> index;
  for (std::size_t k = 0; k < exps_.size(); ++k) index[exps_[k]] = k;
  for (std::size_t a = 0; a < exps_.size(); ++a) {
    for (std::size_t b = 0; b < exps_.size(); ++b) {
      if (degree_[a] + degree_[b] > order) continue;
      std::vector<std::uint8_t> sum(vars);
      for (std::size_t v = 0; v < vars; ++v) sum[v] = exps_[a][v] + exps_[b][v];
      products_.push_back({static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(b),
                           static_cast<std::uint16_t>(index.at(sum))});
    }
  }
}

const JetLayout& JetLayout::get(std::size_t vars, int order) {
  static std::mutex mu;
  static std::map<std::pair<std::size_t, int>, std::unique_ptr<JetLayout>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{vars, order}];
  if (!slot) slot.reset(new JetLayout(vars, order));
  return *slot;
}

std::size_t JetLayout::term_of(std::span<const std::size_t> vars) const {
  std::vector<std::uint8_t> e(vars_, 0);
  for (auto v : vars) {
    if (v >= vars_) throw std::out_of_range("jet variable index");
    ++e[v];
  }
  for (std::size_t k = 0; k < exps_.size(); ++k)
    if (exps_[k] == e) return k;
  throw std::out_of_range("jet term beyond truncation order");
}

Jet::Jet(const JetLayout& layout, double constant) : layout_(&layout) { c_[0] = constant; }

Jet Jet::variable(const JetLayout& layout, std::size_t var, double value) {
  Jet j(layout, value);
  j.c_[1 + var] = 1.0;
  return j;
}

double Jet::partial(std::span<const std::size_t> vars) const {
  std::size_t t = layout_->term_of(vars);
  return c_[t] * layout_->factorial_weight(t);
}

Jet& Jet::operator+=(const Jet& o) {
  for (std::size_t k = 0; k < size(); ++k) c_[k] += o.c_[k];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  for (std::size_t k = 0; k < size(); ++k) c_[k] -= o.c_[k];
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (std::size_t k = 0; k < size(); ++k) c_[k] *= s;
  return *this;
}

Jet& Jet::add_scaled(const Jet& o, double s) {
  for (std::size_t k = 0; k < size(); ++k) c_[k] += s * o.c_[k];
  return *this;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet out(*a.layout_);
  for (const auto& p : a.layout_->products()) out.c_[p.out] += a.c_[p.a] * b.c_[p.b];
  return out;
}

Jet& Jet::operator*=(const Jet& o) { return *this = *this * o; }

Jet operator-(const Jet& a) {
  Jet out = a;
  out *= -1.0;
  return out;
}

Jet Jet::compose(std::span<const double> derivs) const {
  const int order = layout_->order();
  if (static_cast<int>(derivs.size()) < order + 1) throw std::invalid_argument("compose needs order+1 derivatives");
  Jet delta = *this;
  delta.c_[0] = 0.0;
  Jet acc(*layout_, derivs[order] / factorial(order));
  for (int k = order - 1; k >= 0; --k) {
    acc = acc * delta;
    acc.c_[0] += derivs[k] / factorial(k);
  }
  return acc;
}

Jet log(const Jet& x) {
  const double c = x.constant();
  std::array<double, 5> d{std::log(c), 1.0 / c, -1.0 / (c * c), 2.0 / (c * c * c), -6.0 / (c * c * c * c)};
  return x.compose(std::span<const double>(d.data(), x.layout().order() + 1));
}

Jet exp(const Jet& x) {
  const double e = std::exp(x.constant());
  std::array<double, 5> d{e, e, e, e, e};
  return x.compose(std::span<const double>(d.data(), x.layout().order() + 1));
}

Jet reciprocal(const Jet& x) {
  const double c = x.constant();
  const double r = 1.0 / c;
  std::array<double, 5> d{r, -r * r, 2 * r * r * r, -6 * r * r * r * r, 24 * r * r * r * r * r};
  return x.compose(std::span<const double>(d.data(), x.layout().order() + 1));
}

Jet lgamma(const Jet& x) {
  const double c = x.constant();
  const int order = x.layout().order();
  std::array<double, 5> d{std::lgamma(c), 0, 0, 0, 0};
  for (int k = 1; k <= order; ++k) d[k] = boost::math::polygamma(k - 1, c);
  return x.compose(std::span<const double>(d.data(), order + 1));
}

}  // namespace matchprior
