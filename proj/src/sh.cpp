#include "sphervor/sh.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sphervor {

// Normalized associated Legendre recurrence with the sin^m(theta) factor
// folded into the azimuthal part, so everything stays finite at high degree.
// P[l][m] below is K(l,m) * P_l^m(z) / sin^m(theta); the azimuthal factor
// sin^m(theta) * {cos,sin}(m phi) is Re/Im of (x + iy)^m.
void sh_basis(int degree, const Vec3& d, double* out) {
  if (degree < 0) throw std::invalid_argument("sh_basis: degree must be >= 0");
  const double x = d.x(), y = d.y(), z = d.z();
  const int L = degree;

  std::vector<double> pmm(L + 1);
  double cur = 0.28209479177387814;  // 1 / (2 sqrt(pi))
  pmm[0] = cur;
  for (int m = 1; m <= L; ++m) {
    cur *= std::sqrt((2.0 * m + 1.0) / (2.0 * m));
    pmm[m] = cur;
  }

  double am = 1.0, bm = 0.0;  // (x + iy)^m
  const double sqrt2 = std::sqrt(2.0);
  for (int m = 0; m <= L; ++m) {
    if (m > 0) {
      double an = x * am - y * bm;
      bm = x * bm + y * am;
      am = an;
    }
    double p_prev2 = 0.0;
    double p_prev = pmm[m];
    for (int l = m; l <= L; ++l) {
      double p;
      if (l == m) {
        p = p_prev;
      } else if (l == m + 1) {
        p = z * std::sqrt(2.0 * m + 3.0) * pmm[m];
      } else {
        double l2 = double(l) * l, m2 = double(m) * m;
        double a = std::sqrt((4.0 * l2 - 1.0) / (l2 - m2));
        double b = std::sqrt(((2.0 * l + 1.0) * (l - 1.0 - m) * (l - 1.0 + m)) /
                             ((2.0 * l - 3.0) * (l2 - m2)));
        p = a * z * p_prev - b * p_prev2;
      }
      if (l > m) {
        p_prev2 = p_prev;
        p_prev = p;
      }
      if (m == 0) {
        out[sh_index(l, 0)] = p;
      } else {
        out[sh_index(l, m)] = sqrt2 * p * am;
        out[sh_index(l, -m)] = sqrt2 * p * bm;
      }
    }
  }
}

}  // namespace sphervor
