#include <catch2/catch_amalgamated.hpp>

#include <gridfreq/linalg.hpp>

#include <complex>
#include <random>

using namespace gridfreq;
using namespace std::complex_literals;

namespace {

CMatrix random_matrix(std::mt19937& gen, int rows, int cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  CMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = Complex(dist(gen), dist(gen));
    }
  }
  return m;
}

/// Random Hermitian positive definite matrix with moderate conditioning.
CMatrix random_hpd(std::mt19937& gen, int n) {
  const CMatrix x = random_matrix(gen, n, n);
  return CMatrix(x * x.adjoint() + 0.5 * CMatrix::Identity(n, n));
}

}  // namespace

TEST_CASE("augment_vector stacks the conjugate below the base") {
  CVector x(2);
  x << 1.0 + 2.0i, 3.0 - 1.0i;
  const AugmentedVector xa = augment_vector(x);

  REQUIRE(xa.base.size() == 2);
  REQUIRE(xa.full.size() == 4);
  CHECK(xa.full[0] == 1.0 + 2.0i);
  CHECK(xa.full[1] == 3.0 - 1.0i);
  CHECK(xa.full[2] == 1.0 - 2.0i);
  CHECK(xa.full[3] == 3.0 + 1.0i);
  CHECK(mirror_residual(xa.full) == 0.0);
}

TEST_CASE("enforce_mirror is a round trip on augmented vectors") {
  std::mt19937 gen(41);
  for (int trial = 0; trial < 10; ++trial) {
    const CVector x = random_matrix(gen, 5, 1);
    const CVector full = augment_vector(x).full;
    const CVector projected = enforce_mirror(full);
    CHECK(max_abs(projected - full) == 0.0);

    // Perturb the bottom half only; the projection must split the
    // disagreement evenly and restore the mirror structure exactly.
    CVector bent = full;
    bent[7] += Complex(1e-3, -2e-3);
    const CVector fixed = enforce_mirror(bent);
    CHECK(mirror_residual(fixed) == 0.0);
    CHECK(std::abs(fixed[2] - 0.5 * (full[2] + std::conj(bent[7]))) < 1e-15);
  }
}

TEST_CASE("top_half and bottom_half recover the original halves") {
  CVector x(3);
  x << 1.0 + 1.0i, 2.0, -3.0i;
  const CVector full = augment_vector(x).full;
  CHECK(max_abs(top_half(full) - x) == 0.0);
  CHECK(max_abs(bottom_half(full) - x.conjugate()) == 0.0);

  CVector odd(3);
  odd << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(top_half(odd), DimensionError);
  CHECK_THROWS_AS(mirror_residual(odd), DimensionError);
}

TEST_CASE("augment_blocks lays out [[M, C], [conj C, conj M]]") {
  CMatrix m(1, 2), c(1, 2);
  m << 1.0 + 1.0i, 2.0;
  c << 3.0i, 4.0 - 1.0i;
  const CMatrix a = augment_blocks(m, c);
  REQUIRE(a.rows() == 2);
  REQUIRE(a.cols() == 4);
  CHECK(a(0, 0) == 1.0 + 1.0i);
  CHECK(a(0, 2) == 3.0i);
  CHECK(a(1, 0) == std::conj(3.0i));
  CHECK(a(1, 2) == 1.0 - 1.0i);

  CMatrix wrong(2, 2);
  CHECK_THROWS_AS(augment_blocks(m, wrong), DimensionError);
}

TEST_CASE("augment_covariance validates Hermitian R and symmetric P") {
  CMatrix r(2, 2);
  r << 2.0, 1.0i, -1.0i, 2.0;
  CMatrix p(2, 2);
  p << 0.5, 0.25 + 0.1i, 0.25 + 0.1i, -0.5i;
  const CMatrix ra = augment_covariance(r, p);
  REQUIRE(ra.rows() == 4);
  CHECK(ra(0, 1) == 1.0i);
  CHECK(ra(0, 2) == 0.5);
  CHECK(ra(2, 0) == std::conj(0.5 + 0.0i));
  CHECK(ra(2, 2) == 2.0);
  CHECK(ra(3, 2) == std::conj(-1.0i));  // conj(R(1,0))
  // The augmented covariance of a proper pair (P = 0) is itself Hermitian.
  CHECK(hermitian_residual(augment_covariance(r, CMatrix::Zero(2, 2))) ==
        0.0);

  CMatrix not_herm(2, 2);
  not_herm << 1.0, 1.0, 0.0, 1.0;
  CHECK_THROWS_AS(augment_covariance(not_herm, p), NumericalError);

  CMatrix not_sym(2, 2);
  not_sym << 0.0, 1.0, -1.0, 0.0;
  CHECK_THROWS_AS(augment_covariance(r, not_sym), NumericalError);
}

TEST_CASE("solve_hermitian reproduces a hand-computed 2x2 inverse") {
  // A = [[2, i], [-i, 2]] has inverse [[2/3, -i/3], [i/3, 2/3]]:
  // det = 4 - (i)(-i) = 3, adjugate [[2, -i], [i, 2]].
  CMatrix a(2, 2);
  a << 2.0, 1.0i, -1.0i, 2.0;
  const CMatrix x = solve_hermitian(a, CMatrix::Identity(2, 2));
  CMatrix expected(2, 2);
  expected << 2.0 / 3.0, -1.0i / 3.0, 1.0i / 3.0, 2.0 / 3.0;
  CHECK(max_abs(x - expected) < 1e-14);
}

TEST_CASE("solve_hermitian solves a scalar system exactly") {
  CMatrix a(1, 1), b(1, 1);
  a << 2.0;
  b << 1.0;
  SolveInfo info;
  const CMatrix x = solve_hermitian(a, b, &info);
  CHECK(x(0, 0) == 0.5);
  CHECK_FALSE(info.jittered);
  CHECK(info.condition_estimate == 1.0);
}

TEST_CASE("solve_hermitian meets the residual bound on random HPD systems") {
  std::mt19937 gen(202);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 7;
    const CMatrix a = random_hpd(gen, n);
    const CMatrix b = random_matrix(gen, n, 3);
    SolveInfo info;
    const CMatrix x = solve_hermitian(a, b, &info);
    CHECK((a * x - b).norm() <= 1e-9 * b.norm());
    CHECK_FALSE(info.jittered);
    CHECK(info.condition_estimate < 1e6);
  }
}

TEST_CASE("solve_hermitian survives condition numbers up to 1e6") {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 4;
    // Hermitian with eigenvalues spanning [1e-6, 1]: Q D Q^H from a unitary
    // factor of a random matrix.
    const CMatrix m = random_matrix(gen, n, n);
    const Eigen::HouseholderQR<CMatrix> qr(m);
    const CMatrix q = qr.householderQ();
    RVector eigs(n);
    eigs << 1.0, 1e-2, 1e-4, 1e-6;
    const CMatrix a0 = q * eigs.asDiagonal() * q.adjoint();
    const CMatrix a = enforce_hermitian(a0);
    const CMatrix b = random_matrix(gen, n, 2);
    const CMatrix x = solve_hermitian(a, b);
    CHECK((a * x - b).norm() <= 1e-9 * b.norm());
  }
}

TEST_CASE("solve_hermitian jitters a benign near-singular diagonal") {
  // diag(1, 1e-20) trips the rank gate (|d| ratio below 1e-14) but the
  // system is consistent, so the jittered retry succeeds with zero residual.
  CMatrix a(2, 2);
  a << 1.0, 0.0, 0.0, 1e-20;
  CMatrix b(2, 1);
  b << 1.0, 0.0;
  SolveInfo info;
  const CMatrix x = solve_hermitian(a, b, &info);
  CHECK(info.jittered);
  CHECK(std::abs(x(0, 0) - 1.0) < 1e-9);
  CHECK(std::abs(x(1, 0)) < 1e-9);
}

TEST_CASE("solve_hermitian rejects singular systems with a condition report") {
  CMatrix a(2, 2);
  a << 1.0, 1.0, 1.0, 1.0;
  CMatrix b(2, 1);
  b << 1.0, 0.0;  // not in the range space of A
  try {
    solve_hermitian(a, b);
    FAIL("expected NumericalError");
  } catch (const NumericalError& err) {
    CHECK(err.condition_estimate() > 1e12);
  }
}

TEST_CASE("solve_hermitian validates shapes and symmetry") {
  CMatrix rect(2, 3);
  CHECK_THROWS_AS(solve_hermitian(rect, CMatrix::Identity(2, 2)),
                  DimensionError);

  CMatrix a(2, 2);
  a << 1.0, 0.5, 0.5, 1.0;
  CMatrix b_bad(3, 1);
  CHECK_THROWS_AS(solve_hermitian(a, b_bad), DimensionError);

  CMatrix skew(2, 2);
  skew << 1.0, 1.0, -1.0, 1.0;
  CHECK_THROWS_AS(solve_hermitian(skew, CMatrix::Identity(2, 2)),
                  NumericalError);

  CMatrix nan_mat = CMatrix::Identity(2, 2);
  nan_mat(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_hermitian(nan_mat, CMatrix::Identity(2, 2)),
                  NumericalError);
}

TEST_CASE("hermitian_transpose distributes over products in reverse") {
  std::mt19937 gen(99);
  for (int trial = 0; trial < 10; ++trial) {
    const CMatrix a = random_matrix(gen, 3, 4);
    const CMatrix b = random_matrix(gen, 4, 2);
    const CMatrix lhs = hermitian_transpose(matmul(a, b));
    const CMatrix rhs = matmul(hermitian_transpose(b), hermitian_transpose(a));
    CHECK(max_abs(lhs - rhs) < 1e-12);
  }

  CHECK_THROWS_AS(matmul(random_matrix(gen, 2, 3), random_matrix(gen, 2, 3)),
                  DimensionError);
}

TEST_CASE("enforce_hermitian projects and is idempotent") {
  std::mt19937 gen(5);
  const CMatrix a = random_matrix(gen, 4, 4);
  const CMatrix h = enforce_hermitian(a);
  CHECK(hermitian_residual(h) < 1e-14);
  CHECK(max_abs(enforce_hermitian(h) - h) < 1e-15);
  // Hermitian inputs pass through unchanged.
  const CMatrix hpd = random_hpd(gen, 3);
  CHECK(max_abs(enforce_hermitian(hpd) - hpd) < 1e-15);
}

TEST_CASE("conjugate and max_abs behave on simple inputs") {
  CMatrix a(1, 2);
  a << 1.0 + 2.0i, -3.0;
  const CMatrix c = conjugate(a);
  CHECK(c(0, 0) == 1.0 - 2.0i);
  CHECK(c(0, 1) == -3.0 + 0.0i);
  CHECK(max_abs(a) == 3.0);
  CHECK(is_finite(a));
  a(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(is_finite(a));
}
