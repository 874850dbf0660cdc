#include "msmtrial/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace msmtrial {

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) {
  if (o.d_ != d_) throw std::invalid_argument("SymMatrix dimension mismatch");
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
  return *this;
}

SymMatrix& SymMatrix::operator-=(const SymMatrix& o) {
  if (o.d_ != d_) throw std::invalid_argument("SymMatrix dimension mismatch");
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
  return *this;
}

double SymMatrix::max_abs() const {
  double m = 0.0;
  for (double v : a_) m = std::max(m, std::fabs(v));
  return m;
}

bool SymMatrix::symmetric(double tol) const {
  for (std::size_t i = 0; i < d_; ++i)
    for (std::size_t j = i + 1; j < d_; ++j)
      if (std::fabs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

std::vector<double> cholesky_lower(const SymMatrix& a) {
  const std::size_t d = a.dim();
  std::vector<double> L(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L[i * d + k] * L[j * d + k];
      if (i == j) {
        if (s <= 0.0)
          throw not_positive_definite(
              "Cholesky pivot " + std::to_string(i) + " is " + std::to_string(s) +
              "; matrix is not positive definite (see stage_statistic for the "
              "pseudo-inverse path and invertibility_report for diagnostics)");
        L[i * d + i] = std::sqrt(s);
      } else {
        L[i * d + j] = s / L[j * d + j];
      }
    }
  }
  return L;
}

std::vector<double> forward_solve(const std::vector<double>& L, std::size_t d,
                                  const std::vector<double>& b) {
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= L[i * d + k] * y[k];
    y[i] = s / L[i * d + i];
  }
  return y;
}

EigenSym eigen_sym(const SymMatrix& a) {
  const std::size_t d = a.dim();
  std::vector<double> m(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m[i * d + j] = a(i, j);
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += m[p * d + q] * m[p * d + q];
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = m[p * d + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double mkp = m[k * d + p], mkq = m[k * d + q];
          m[k * d + p] = c * mkp - s * mkq;
          m[k * d + q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double mpk = m[p * d + k], mqk = m[q * d + k];
          m[p * d + k] = c * mpk - s * mqk;
          m[q * d + k] = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return m[i * d + i] < m[j * d + j]; });
  EigenSym out;
  out.values.resize(d);
  out.vectors.assign(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    out.values[k] = m[order[k] * d + order[k]];
    for (std::size_t i = 0; i < d; ++i) out.vectors[i * d + k] = v[i * d + order[k]];
  }
  return out;
}

SymMatrix pseudo_inverse(const SymMatrix& a, double rel_tol, std::size_t* rank_out) {
  const std::size_t d = a.dim();
  EigenSym e = eigen_sym(a);
  double lmax = 0.0;
  for (double l : e.values) lmax = std::max(lmax, std::fabs(l));
  const double cutoff = rel_tol * lmax;
  SymMatrix inv(d);
  std::size_t rank = 0;
  for (std::size_t k = 0; k < d; ++k) {
    if (std::fabs(e.values[k]) <= cutoff || e.values[k] == 0.0) continue;
    ++rank;
    const double w = 1.0 / e.values[k];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        inv(i, j) += w * e.vectors[i * d + k] * e.vectors[j * d + k];
  }
  if (rank_out) *rank_out = rank;
  return inv;
}

double quad_form(const SymMatrix& a, const std::vector<double>& x) {
  const std::size_t d = a.dim();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s += x[i] * a(i, j) * x[j];
  return s;
}

}  // namespace msmtrial
