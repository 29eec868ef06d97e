#include "pdm/sh.hpp"

namespace pdm {

double legendre(int l, int m, double x) {
  if (m < 0 || m > l || l > 4) throw std::invalid_argument("legendre: need 0 <= m <= l <= 4");
  if (std::abs(x) > 1.0) throw std::invalid_argument("legendre: |x| > 1");
  // P_m^m = (2m-1)!! (1-x^2)^{m/2}
  double pmm = 1.0;
  if (m > 0) {
    double somx2 = std::sqrt((1.0 - x) * (1.0 + x));
    double fact = 1.0;
    for (int i = 1; i <= m; ++i) {
      pmm *= fact * somx2;
      fact += 2.0;
    }
  }
  if (l == m) return pmm;
  double pmmp1 = x * (2.0 * m + 1.0) * pmm;  // P_{m+1}^m
  if (l == m + 1) return pmmp1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = (x * (2.0 * ll - 1.0) * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
    pmm = pmmp1;
    pmmp1 = pll;
  }
  return pll;
}

Vec sh_basis(int L, double theta, double phi) {
  if (L < 2 || L > 4) throw std::invalid_argument("sh_basis: L must be in {2,3,4}");
  Vec out(sh_count(L));
  const double ct = std::cos(theta);
  int idx = 0;
  for (int l = 0; l <= L; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI));
      if (am > 0) {
        double ratio = 1.0;
        for (int k = l - am + 1; k <= l + am; ++k) ratio *= k;
        norm *= std::sqrt(2.0 / ratio);
      }
      const double p = legendre(l, am, ct);
      double val;
      if (m == 0)
        val = norm * p;
      else if (m > 0)
        val = norm * p * std::cos(m * phi);
      else
        val = norm * p * std::sin(am * phi);
      out[idx++] = val;
    }
  }
  return out;
}

}  // namespace pdm
