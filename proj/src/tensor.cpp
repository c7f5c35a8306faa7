#include "matchprior/tensor.hpp"

#include <array>

namespace matchprior {

double symmetry_defect(const Tensor3& t) {
  const std::size_t d = t.dim();
  double m = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t u = 0; u < d; ++u) {
        const double x = t(r, s, u);
        m = std::max({m, std::abs(x - t(s, r, u)), std::abs(x - t(r, u, s)), std::abs(x - t(u, s, r))});
      }
  return m;
}

double symmetry_defect(const Tensor4& t) {
  const std::size_t d = t.dim();
  double m = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t s = 0; s < d; ++s)
      for (std::size_t u = 0; u < d; ++u)
        for (std::size_t v = 0; v < d; ++v) {
          const double x = t(r, s, u, v);
          // adjacent transpositions generate the symmetric group
          m = std::max({m, std::abs(x - t(s, r, u, v)), std::abs(x - t(r, u, s, v)),
                        std::abs(x - t(r, s, v, u))});
        }
  return m;
}

}  // namespace matchprior
