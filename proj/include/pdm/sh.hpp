#pragma once

#include "pdm/types.hpp"

namespace pdm {

// Associated Legendre P_l^m(x) without the Condon-Shortley phase, via the
// standard (l-m) P_l^m = x(2l-1) P_{l-1}^m - (l+m-1) P_{l-2}^m recurrence.
// Requires 0 <= m <= l <= 4 and |x| <= 1.
double legendre(int l, int m, double x);

// Real orthonormal spherical-harmonic basis, ordered (l,m) with l = 0..L and
// m = -l..l. theta is the polar angle, phi the azimuth.
Vec sh_basis(int L, double theta, double phi);

inline int sh_count(int L) { return (L + 1) * (L + 1); }

}  // namespace pdm
