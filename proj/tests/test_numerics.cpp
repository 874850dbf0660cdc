#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "msmtrial/dist.hpp"
#include "msmtrial/linalg.hpp"
#include "msmtrial/rng.hpp"

using namespace msmtrial;

TEST_CASE("cholesky reconstructs random positive definite matrices") {
  RngStream rng(42, 0);
  for (int rep = 0; rep < 50; ++rep) {
    SymMatrix a(2);
    // A = B B^T + eps I
    double b[4] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    a(0, 0) = b[0] * b[0] + b[1] * b[1] + 0.1;
    a(0, 1) = a(1, 0) = b[0] * b[2] + b[1] * b[3];
    a(1, 1) = b[2] * b[2] + b[3] * b[3] + 0.1;
    const auto L = cholesky_lower(a);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 2; ++k) s += L[i * 2 + k] * L[j * 2 + k];
        CHECK(std::fabs(s - a(i, j)) < 1e-12);
      }
  }
}

TEST_CASE("cholesky rejects non positive definite input") {
  SymMatrix a(2);
  a(0, 0) = 1.0;
  a(0, 1) = a(1, 0) = 2.0;
  a(1, 1) = 1.0;
  CHECK_THROWS_AS(cholesky_lower(a), not_positive_definite);
}

TEST_CASE("pseudo inverse matches inverse on full rank and drops null space") {
  SymMatrix a(2);
  a(0, 0) = 4.0;
  a(1, 1) = 9.0;
  std::size_t rank = 0;
  SymMatrix inv = pseudo_inverse(a, 1e-10, &rank);
  CHECK(rank == 2);
  CHECK(inv(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(inv(1, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));

  // rank-1: outer product
  SymMatrix b(2);
  b(0, 0) = 1.0;
  b(0, 1) = b(1, 0) = 1.0;
  b(1, 1) = 1.0;
  inv = pseudo_inverse(b, 1e-10, &rank);
  CHECK(rank == 1);
  // pinv of [[1,1],[1,1]] is [[.25,.25],[.25,.25]]
  CHECK(inv(0, 0) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(inv(0, 1) == doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("eigen_sym diagonalizes") {
  RngStream rng(7, 3);
  for (int rep = 0; rep < 20; ++rep) {
    SymMatrix a(3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        const double v = rng.normal();
        a(i, j) = v;
        a(j, i) = v;
      }
    const EigenSym e = eigen_sym(a);
    // A v_k = lambda_k v_k
    for (int k = 0; k < 3; ++k) {
      for (int i = 0; i < 3; ++i) {
        double av = 0.0;
        for (int j = 0; j < 3; ++j) av += a(i, j) * e.vectors[j * 3 + k];
        CHECK(av == doctest::Approx(e.values[k] * e.vectors[i * 3 + k]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("distribution wrappers match known values") {
  CHECK(norm_isf(0.05) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(norm_sf(1.96) == doctest::Approx(0.024997895148220435).epsilon(1e-10));
  // chi2_2 survival has the closed form exp(-x/2)
  for (double x : {0.1, 1.0, 3.7, 10.0})
    CHECK(chi2_sf(x, 2) == doctest::Approx(std::exp(-0.5 * x)).epsilon(1e-12));
  CHECK(nc_chi2_sf(5.99, 2, 0.0) == doctest::Approx(chi2_sf(5.99, 2)).epsilon(1e-12));
  CHECK(norm_isf(1.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("philox streams are deterministic and uniform-ish") {
  RngStream a(123, 5), b(123, 5);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  RngStream c(123, 5);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = c.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("philox streams never collide (counter-based construction)") {
  // 10^6 (stream, counter) blocks must be pairwise distinct
  std::set<std::array<std::uint32_t, 4>> seen;
  for (std::uint64_t stream = 0; stream < 1000; ++stream) {
    RngStream rng(987654321, stream);
    for (std::uint64_t ctr = 0; ctr < 1000; ++ctr) {
      const auto blk = rng.block(ctr);
      CHECK(seen.insert(blk).second);
    }
  }
  CHECK(seen.size() == 1000000);
}

TEST_CASE("normal transform has the right moments") {
  RngStream rng(2024, 1);
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    m += x;
    v += x * x;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::fabs(m) < 0.01);
  CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}
