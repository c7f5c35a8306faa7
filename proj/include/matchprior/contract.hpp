#pragma once

#include <Eigen/Dense>

#include "matchprior/tensor.hpp"

namespace matchprior {

// T_rst a^r b^s c^t
inline double contract(const Tensor3& T, const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const std::size_t d = T.dim();
  double s = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t q = 0; q < d; ++q)
      for (std::size_t t = 0; t < d; ++t)
        s += T(r, q, t) * a[static_cast<Eigen::Index>(r)] * b[static_cast<Eigen::Index>(q)] * c[static_cast<Eigen::Index>(t)];
  return s;
}

// T_rst a^r M^{st}
inline double contract(const Tensor3& T, const Eigen::VectorXd& a, const Eigen::MatrixXd& M) {
  const std::size_t d = T.dim();
  double s = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t q = 0; q < d; ++q)
      for (std::size_t t = 0; t < d; ++t)
        s += T(r, q, t) * a[static_cast<Eigen::Index>(r)] * M(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(t));
  return s;
}

// T_rstu A^{rs} B^{tu}
inline double contract(const Tensor4& T, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const std::size_t d = T.dim();
  double s = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t q = 0; q < d; ++q)
      for (std::size_t t = 0; t < d; ++t)
        for (std::size_t u = 0; u < d; ++u)
          s += T(r, q, t, u) * A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q)) *
               B(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u));
  return s;
}

// X_rst Y_uvw A^{ru} B^{st} C^{vw}
inline double contract(const Tensor3& X, const Tensor3& Y, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                       const Eigen::MatrixXd& C) {
  const auto d = static_cast<Eigen::Index>(X.dim());
  // x_r = X_rst B^{st}, y_u = Y_uvw C^{vw}
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d), y = Eigen::VectorXd::Zero(d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index s = 0; s < d; ++s)
      for (Eigen::Index t = 0; t < d; ++t) {
        x[r] += X(r, s, t) * B(s, t);
        y[r] += Y(r, s, t) * C(s, t);
      }
  return x.dot(A * y);
}

// X_rst Y_uvw A^{ru} B^{sw} C^{tv}
inline double contract_cross(const Tensor3& X, const Tensor3& Y, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& C) {
  const auto d = static_cast<Eigen::Index>(X.dim());
  double s = 0.0;
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index q = 0; q < d; ++q)
      for (Eigen::Index t = 0; t < d; ++t) {
        const double x = X(r, q, t);
        if (x == 0.0) continue;
        for (Eigen::Index u = 0; u < d; ++u)
          for (Eigen::Index v = 0; v < d; ++v)
            for (Eigen::Index w = 0; w < d; ++w) s += x * Y(u, v, w) * A(r, u) * B(q, w) * C(t, v);
      }
  return s;
}

}  // namespace matchprior
