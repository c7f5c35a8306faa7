#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace matchprior {

// Dense d x d x ... arrays. The parameter dimension never exceeds a handful
// of coordinates, so storing every permutation is cheap and keeps index
// contractions readable.
template <int Rank>
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::size_t dim, double fill = 0.0) : dim_(dim), data_(pow(dim), fill) {}

  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  template <typename... I>
  double& operator()(I... idx) {
    static_assert(sizeof...(I) == Rank);
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }
  template <typename... I>
  double operator()(I... idx) const {
    static_assert(sizeof...(I) == Rank);
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }

  DenseTensor& operator+=(const DenseTensor& o) {
    assert(o.dim_ == dim_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    assert(o.dim_ == dim_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  DenseTensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }
  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
  friend DenseTensor operator*(double s, DenseTensor a) { return a *= s; }
  friend DenseTensor operator*(DenseTensor a, double s) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  static std::size_t pow(std::size_t d) {
    std::size_t p = 1;
    for (int k = 0; k < Rank; ++k) p *= d;
    return p;
  }
  template <typename... I>
  std::size_t offset(I... idx) const {
    std::size_t off = 0;
    ((off = off * dim_ + idx), ...);
    return off;
  }

  std::size_t dim_ = 0;
  std::vector<double> data_;
};

using Tensor3 = DenseTensor<3>;
using Tensor4 = DenseTensor<4>;

// Largest deviation from full permutation symmetry.
double symmetry_defect(const Tensor3& t);
double symmetry_defect(const Tensor4& t);

}  // namespace matchprior
