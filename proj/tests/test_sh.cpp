#include "pdm/sh.hpp"

#include <doctest.h>

#include <random>

using namespace pdm;

TEST_SUITE_BEGIN("sh");

TEST_CASE("associated Legendre against closed forms") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    double x = u(rng);
    double s = std::sqrt(1 - x * x);
    CHECK(legendre(0, 0, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(legendre(1, 0, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(legendre(1, 1, x) == doctest::Approx(s).epsilon(1e-12));
    CHECK(legendre(2, 0, x) ==
          doctest::Approx(0.5 * (3 * x * x - 1)).epsilon(1e-12));
    CHECK(legendre(2, 1, x) == doctest::Approx(3 * x * s).epsilon(1e-12));
    CHECK(legendre(2, 2, x) == doctest::Approx(3 * (1 - x * x)).epsilon(1e-12));
    CHECK(legendre(3, 0, x) ==
          doctest::Approx(0.5 * x * (5 * x * x - 3)).epsilon(1e-12));
    CHECK(legendre(3, 1, x) ==
          doctest::Approx(1.5 * (5 * x * x - 1) * s).epsilon(1e-12));
    CHECK(legendre(3, 2, x) ==
          doctest::Approx(15 * x * (1 - x * x)).epsilon(1e-12));
    CHECK(legendre(3, 3, x) == doctest::Approx(15 * s * s * s).epsilon(1e-12));
  }
  // no Condon-Shortley phase: P_1^1(0) = +1, not -1
  CHECK(legendre(1, 1, 0.0) == doctest::Approx(1.0));
  CHECK(legendre(2, 0, 0.5) == doctest::Approx(-0.125));
  for (int l = 0; l <= 4; ++l) CHECK(legendre(l, 0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("basis layout and the constant term") {
  for (int L : {2, 3, 4}) {
    Vec b = sh_basis(L, 1.0, 2.0);
    CHECK(b.size() == sh_count(L));
    CHECK(b(0) == doctest::Approx(0.28209479177387814));  // 1/(2 sqrt(pi))
  }
  CHECK(sh_count(2) == 9);
  CHECK(sh_count(3) == 16);
  CHECK(sh_count(4) == 25);
}

TEST_CASE("Monte Carlo orthonormality over the sphere") {
  const int L = 3;
  const int n = sh_count(L);
  const int samples = 1000000;
  Mat gram = Mat::Zero(n, n);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uc(-1.0, 1.0);
  std::uniform_real_distribution<double> up(0.0, 2 * M_PI);
  for (int s = 0; s < samples; ++s) {
    double theta = std::acos(uc(rng));  // uniform on the sphere
    Vec b = sh_basis(L, theta, up(rng));
    gram.noalias() += b * b.transpose();
  }
  gram *= 4 * M_PI / samples;  // integral estimate
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double want = i == j ? 1.0 : 0.0;
      CHECK(std::abs(gram(i, j) - want) < 5e-3);
    }
}

TEST_SUITE_END();
