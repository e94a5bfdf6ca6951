#include "spdot/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "spdot/error.hpp"

namespace spdot {

namespace {

constexpr double kSymmetryTolerance = 1e-9;

void check_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << a.rows() << "x" << a.cols();
    throw DimensionError(os.str());
  }
  if (!a.allFinite()) throw DomainError(std::string(what) + ": non-finite entries");
}

void check_symmetric(const Matrix& a, const char* what) {
  const double scale = std::max(1.0, a.norm());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    std::ostringstream os;
    os << what << ": matrix is not symmetric (max |a_ij - a_ji| = " << asym << ")";
    throw DomainError(os.str());
  }
}

// Sorts descending and fixes the eigenvector sign convention.
void canonicalize(Vector& values, Matrix& vectors) {
  const int n = static_cast<int>(values.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values(a) > values(b); });
  Vector v(n);
  Matrix u(n, n);
  for (int k = 0; k < n; ++k) {
    v(k) = values(order[k]);
    u.col(k) = vectors.col(order[k]);
    int lead = 0;
    for (int i = 1; i < n; ++i)
      if (std::abs(u(i, k)) > std::abs(u(lead, k))) lead = i;
    if (u(lead, k) < 0) u.col(k) = -u.col(k);
  }
  values = std::move(v);
  vectors = std::move(u);
}

}  // namespace

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Matrix EigDecomp::reconstruct() const {
  return vectors * values.asDiagonal() * vectors.transpose();
}

SymMatrix::SymMatrix(const Matrix& a) {
  check_square(a, "SymMatrix");
  check_symmetric(a, "SymMatrix");
  m_ = symmetrize(a);
}

SymMatrix SymMatrix::zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim), Unchecked{}); }

SymMatrix SymMatrix::identity(int dim) {
  return SymMatrix(Matrix::Identity(dim, dim), Unchecked{});
}

SymMatrix SymMatrix::diagonal(std::initializer_list<double> diag) {
  Vector d(static_cast<Eigen::Index>(diag.size()));
  int i = 0;
  for (double x : diag) d(i++) = x;
  return SymMatrix(Matrix(d.asDiagonal()));
}

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
  if (o.dim() != dim()) throw DimensionError("SymMatrix +: dimension mismatch");
  return SymMatrix(m_ + o.m_, Unchecked{});
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
  if (o.dim() != dim()) throw DimensionError("SymMatrix -: dimension mismatch");
  return SymMatrix(m_ - o.m_, Unchecked{});
}

SymMatrix SymMatrix::operator*(double s) const { return SymMatrix(m_ * s, Unchecked{}); }

SpdMatrix::SpdMatrix(const Matrix& a) {
  check_square(a, "SpdMatrix");
  check_symmetric(a, "SpdMatrix");
  m_ = symmetrize(a);
  eig_ = sym_eig(SymMatrix(m_));
  const double lmax = eig_.values(0);
  const double lmin = eig_.values(eig_.dim() - 1);
  if (!(lmax > 0.0) || !(lmin > kPdRelativeTolerance * lmax)) {
    std::ostringstream os;
    os << "SpdMatrix: matrix is not positive definite (eigenvalues in [" << lmin << ", " << lmax
       << "])";
    throw DomainError(os.str());
  }
}

SpdMatrix SpdMatrix::identity(int dim) { return SpdMatrix(Matrix::Identity(dim, dim)); }

SpdMatrix SpdMatrix::diagonal(std::initializer_list<double> diag) {
  Vector d(static_cast<Eigen::Index>(diag.size()));
  int i = 0;
  for (double x : diag) d(i++) = x;
  return SpdMatrix(Matrix(d.asDiagonal()));
}

EigDecomp sym_eig(const SymMatrix& sym, const EigOptions& opts) {
  Matrix a = sym.matrix();
  const int n = sym.dim();
  Matrix v = Matrix::Identity(n, n);

  // A pair (p, q) is settled once its coupling cannot move either
  // diagonal entry at working precision (relative criterion), or it is
  // negligible against the whole matrix.
  const double total = a.norm();
  const double eps = std::numeric_limits<double>::epsilon();
  const double floor = 1e-18 * total;
  for (int sweep = 0;; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double app = a(p, p);
        const double aqq = a(q, q);
        if (std::abs(apq) <= floor || std::abs(apq) <= eps * std::sqrt(std::abs(app * aqq))) {
          continue;
        }
        if (sweep >= opts.max_sweeps) {
          std::ostringstream os;
          os << "sym_eig: Jacobi iteration did not converge after " << opts.max_sweeps
             << " sweeps (||A||_F = " << total << ")";
          throw NumericalError(os.str());
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  EigDecomp e;
  e.values = a.diagonal();
  e.vectors = std::move(v);
  canonicalize(e.values, e.vectors);
  return e;
}

Matrix apply_spectral(const EigDecomp& e, const std::function<double(double)>& f) {
  Vector fv = e.values.unaryExpr(f);
  return symmetrize(e.vectors * fv.asDiagonal() * e.vectors.transpose());
}

Matrix loewner_matrix(const EigDecomp& e, const std::function<double(double)>& f,
                      const std::function<double(double)>& df, double gap) {
  const int n = e.dim();
  Vector fv = e.values.unaryExpr(f);
  Matrix l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = e.values(i) - e.values(j);
      l(i, j) = std::abs(d) < gap ? df(e.values(i)) : (fv(i) - fv(j)) / d;
    }
  }
  return l;
}

Matrix spectral_derivative(const EigDecomp& e, const std::function<double(double)>& f,
                           const std::function<double(double)>& df, const Matrix& v,
                           double gap) {
  const Matrix& u = e.vectors;
  Matrix inner = u.transpose() * symmetrize(v) * u;
  inner = inner.cwiseProduct(loewner_matrix(e, f, df, gap));
  return symmetrize(u * inner * u.transpose());
}

}  // namespace spdot
