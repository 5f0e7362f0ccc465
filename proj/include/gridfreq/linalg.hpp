#pragma once

// Dense complex linear algebra for widely linear estimation: augmented
// (vector, conjugate) stacking, Hermitian solves with diagnostics, and the
// small validation helpers the filter stack is built on. Backed by Eigen.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gridfreq {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape/size mismatch between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Invalid configuration or model input (non-finite entries, bad files, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Numerical failure (singular solve, divergence); carries a condition
/// estimate of the offending matrix when one is available.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what,
                          double condition_estimate = 0.0)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// ---------------------------------------------------------------------------
// Small validators

template <typename Derived>
bool is_finite(const Eigen::MatrixBase<Derived>& a) {
  return a.allFinite();
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a, const char* what) {
  if (!is_finite(a)) {
    throw NumericalError(std::string(what) + ": non-finite entries");
  }
}

/// Largest deviation from Hermitian symmetry, max |A - A^H|.
inline double hermitian_residual(const CMatrix& a) {
  return max_abs(a - a.adjoint());
}

/// Checks max |A - A^H| <= tol_factor * max |A| (default 1e-9 relative).
inline void require_hermitian(const CMatrix& a, const char* what,
                              double tol_factor = 1e-9) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(what) + ": expected square matrix, got " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  const double dev = hermitian_residual(a);
  if (dev > tol_factor * max_abs(a)) {
    std::ostringstream msg;
    msg << what << ": not Hermitian (max |A - A^H| = " << dev << ")";
    throw NumericalError(msg.str());
  }
}

/// Project onto the Hermitian subspace: (A + A^H) / 2. Used after covariance
/// updates to stop round-off from accumulating into asymmetry.
inline CMatrix enforce_hermitian(const CMatrix& a) {
  return 0.5 * (a + a.adjoint());
}

// ---------------------------------------------------------------------------
// Augmented (widely linear) stacking

/// A complex vector together with its conjugate-augmented form [x; conj(x)].
struct AugmentedVector {
  CVector base;  ///< x, length L
  CVector full;  ///< [x; conj(x)], length 2L
};

/// Builds x^a = [x; conj(x)].
inline AugmentedVector augment_vector(const CVector& x) {
  require_finite(x, "augment_vector");
  AugmentedVector out;
  out.base = x;
  out.full.resize(2 * x.size());
  out.full.head(x.size()) = x;
  out.full.tail(x.size()) = x.conjugate();
  return out;
}

/// Block layout shared by every augmented quantity:
/// [[M, C], [conj(C), conj(M)]]. No validity checks; see augment_covariance
/// for the checked covariance builder.
inline CMatrix augment_blocks(const CMatrix& m, const CMatrix& c) {
  if (m.rows() != c.rows() || m.cols() != c.cols()) {
    throw DimensionError("augment_blocks: block shapes differ (" +
                         std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " vs " +
                         std::to_string(c.rows()) + "x" +
                         std::to_string(c.cols()) + ")");
  }
  CMatrix out(2 * m.rows(), 2 * m.cols());
  out.topLeftCorner(m.rows(), m.cols()) = m;
  out.topRightCorner(m.rows(), m.cols()) = c;
  out.bottomLeftCorner(m.rows(), m.cols()) = c.conjugate();
  out.bottomRightCorner(m.rows(), m.cols()) = m.conjugate();
  return out;
}

/// Builds the augmented covariance [[R, P], [conj(P), conj(R)]] after
/// validating that R is Hermitian and P is (complex-)symmetric, the structure
/// every covariance / pseudo-covariance pair must satisfy.
inline CMatrix augment_covariance(const CMatrix& r, const CMatrix& p) {
  require_finite(r, "augment_covariance: R");
  require_finite(p, "augment_covariance: P");
  require_hermitian(r, "augment_covariance: R");
  if (p.rows() != p.cols()) {
    throw DimensionError("augment_covariance: P must be square");
  }
  const double sym_dev = max_abs(p - p.transpose());
  if (sym_dev > 1e-9 * max_abs(p)) {
    std::ostringstream msg;
    msg << "augment_covariance: P not symmetric (max |P - P^T| = " << sym_dev
        << ")";
    throw NumericalError(msg.str());
  }
  return augment_blocks(r, p);
}

/// First half of an augmented vector (the unaugmented estimate).
inline CVector top_half(const CVector& xa) {
  if (xa.size() % 2 != 0) {
    throw DimensionError("top_half: augmented vector has odd length " +
                         std::to_string(xa.size()));
  }
  return xa.head(xa.size() / 2);
}

inline CVector bottom_half(const CVector& xa) {
  if (xa.size() % 2 != 0) {
    throw DimensionError("bottom_half: augmented vector has odd length " +
                         std::to_string(xa.size()));
  }
  return xa.tail(xa.size() / 2);
}

/// How far an augmented vector is from the mirror structure [x; conj(x)]:
/// max |top - conj(bottom)|.
inline double mirror_residual(const CVector& xa) {
  const auto n = xa.size() / 2;
  if (xa.size() % 2 != 0) {
    throw DimensionError("mirror_residual: odd length");
  }
  double dev = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    dev = std::max(dev, std::abs(xa[i] - std::conj(xa[n + i])));
  }
  return dev;
}

/// Projects an augmented vector back onto the mirror subspace:
/// top' = (top + conj(bottom)) / 2, bottom' = conj(top').
inline CVector enforce_mirror(const CVector& xa) {
  const auto n = xa.size() / 2;
  if (xa.size() % 2 != 0) {
    throw DimensionError("enforce_mirror: odd length");
  }
  CVector out(xa.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex t = 0.5 * (xa[i] + std::conj(xa[n + i]));
    out[i] = t;
    out[n + i] = std::conj(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// General-purpose operations

inline CMatrix hermitian_transpose(const CMatrix& a) { return a.adjoint(); }

inline CMatrix conjugate(const CMatrix& a) { return a.conjugate(); }

inline CMatrix matmul(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  return a * b;
}

/// Diagnostics from solve_hermitian.
struct SolveInfo {
  bool jittered = false;          ///< diagonal jitter retry was needed
  int refinement_passes = 0;      ///< iterative refinement passes applied
  double condition_estimate = 0;  ///< max|d| / min|d| from the LDLT diagonal
};

namespace detail {

struct LdltAttempt {
  std::optional<CMatrix> x;
  double condition = 0.0;
  int refinements = 0;
};

/// One factor-solve-refine attempt of lhs * X = B, with the residual always
/// measured against the original matrix `a`.
inline LdltAttempt solve_attempt(const CMatrix& a, const CMatrix& lhs,
                                 const CMatrix& b, double b_norm) {
  LdltAttempt out;
  Eigen::LDLT<CMatrix> ldlt(lhs);
  double d_min = std::numeric_limits<double>::infinity();
  double d_max = 0.0;
  const auto d = ldlt.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double m = std::abs(d[i]);
    d_min = std::min(d_min, m);
    d_max = std::max(d_max, m);
  }
  out.condition = d_min > 0.0 ? d_max / d_min
                              : std::numeric_limits<double>::infinity();
  // Reject obvious rank deficiency before trusting the triangular solve.
  if (ldlt.info() != Eigen::Success || !(d_min > 1e-14 * d_max)) {
    return out;
  }
  CMatrix x = ldlt.solve(b);
  const double accept_tol = 1e-10 * b_norm;
  const double refine_trigger = 1e-11 * b_norm;
  double resid = (b - a * x).norm();
  // Up to two refinement passes; each is deterministic, so the overall
  // result stays bit-reproducible.
  for (int pass = 0; pass < 2 && resid > refine_trigger; ++pass) {
    x += ldlt.solve(b - a * x);
    resid = (b - a * x).norm();
    ++out.refinements;
  }
  if (resid <= accept_tol || !(resid == resid)) {
    // NaN residual can only come from non-finite inputs, which the caller
    // has already rejected; treat it as failure.
    if (resid == resid) {
      out.x = std::move(x);
    }
  }
  return out;
}

}  // namespace detail

/// Solves A X = B for Hermitian A via LDLT. Near-singular factorizations get
/// one diagonal-jitter retry with eps = 1e-12 * trace(A) / L; if the solve
/// still cannot reach a relative residual of 1e-10, throws NumericalError
/// carrying the condition estimate.
inline CMatrix solve_hermitian(const CMatrix& a, const CMatrix& b,
                               SolveInfo* info = nullptr) {
  if (a.rows() != a.cols()) {
    throw DimensionError("solve_hermitian: A must be square, got " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  if (b.rows() != a.rows()) {
    throw DimensionError("solve_hermitian: B has " + std::to_string(b.rows()) +
                         " rows, expected " + std::to_string(a.rows()));
  }
  require_finite(a, "solve_hermitian: A");
  require_finite(b, "solve_hermitian: B");
  require_hermitian(a, "solve_hermitian: A");

  if (a.rows() == 0) {
    if (info != nullptr) *info = SolveInfo{};
    return CMatrix(0, b.cols());
  }

  const double b_norm = std::max(b.norm(), 1e-300);

  detail::LdltAttempt first = detail::solve_attempt(a, a, b, b_norm);
  if (first.x) {
    if (info != nullptr) {
      *info = SolveInfo{false, first.refinements, first.condition};
    }
    return std::move(*first.x);
  }

  double eps = 1e-12 * a.trace().real() / static_cast<double>(a.rows());
  if (!(eps > 0.0)) eps = 1e-12;
  const CMatrix jittered =
      a + eps * CMatrix::Identity(a.rows(), a.cols());
  detail::LdltAttempt second = detail::solve_attempt(a, jittered, b, b_norm);
  if (second.x) {
    if (info != nullptr) {
      *info = SolveInfo{true, second.refinements, second.condition};
    }
    return std::move(*second.x);
  }

  std::ostringstream msg;
  msg << "solve_hermitian: numerically singular system (condition estimate "
      << std::max(first.condition, second.condition) << ", jitter " << eps
      << " did not help)";
  throw NumericalError(msg.str(), std::max(first.condition, second.condition));
}

}  // namespace gridfreq
