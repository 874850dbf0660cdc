#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace msmtrial {

/// Thrown by factorizations that require positive definiteness.
/// Callers that can handle singular matrices should use the spectral
/// pseudo-inverse path (stage_statistic) instead of Cholesky.
class not_positive_definite : public std::runtime_error {
 public:
  explicit not_positive_definite(const std::string& what)
      : std::runtime_error(what) {}
};

/// Dense symmetric matrix, row-major, small dimension (d <= ~8).
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t d) : d_(d), a_(d * d, 0.0) {}

  std::size_t dim() const { return d_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * d_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * d_ + j]; }

  SymMatrix& operator+=(const SymMatrix& o);
  SymMatrix& operator-=(const SymMatrix& o);
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }

  double max_abs() const;
  bool symmetric(double tol) const;

 private:
  std::size_t d_ = 0;
  std::vector<double> a_;
};

/// Lower-triangular Cholesky factor L with A = L L^T.
/// Throws not_positive_definite when a pivot is not strictly positive.
std::vector<double> cholesky_lower(const SymMatrix& a);

/// Solves L y = b for lower-triangular L (forward substitution).
std::vector<double> forward_solve(const std::vector<double>& L, std::size_t d,
                                  const std::vector<double>& b);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending; columns of vecs are the eigenvectors.
struct EigenSym {
  std::vector<double> values;
  std::vector<double> vectors;  // row-major d x d, column k = eigenvector k
};
EigenSym eigen_sym(const SymMatrix& a);

/// Spectral Moore-Penrose pseudo-inverse. Eigenvalues below
/// rel_tol * max(|eigenvalue|) are treated as zero; rank_out reports the
/// number of retained eigenvalues.
SymMatrix pseudo_inverse(const SymMatrix& a, double rel_tol, std::size_t* rank_out);

/// Quadratic form x^T A x.
double quad_form(const SymMatrix& a, const std::vector<double>& x);

}  // namespace msmtrial
