#pragma once

// Core value types for symmetric and SPD matrices, the symmetric
// eigensolver they are built on, and spectral matrix functions.

#include <functional>
#include <initializer_list>

#include <Eigen/Dense>

namespace spdot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigendecomposition A = U diag(values) U^T of a symmetric matrix.
/// Eigenvalues are sorted descending; each column of U has its
/// largest-magnitude component positive (first such index on ties).
struct EigDecomp {
  Vector values;
  Matrix vectors;

  int dim() const { return static_cast<int>(values.size()); }
  Matrix reconstruct() const;
};

/// A symmetric matrix: a tangent vector or a point in log coordinates.
/// The constructor rejects inputs whose asymmetry exceeds
/// 1e-9 * max(1, ||A||_F) and stores the exact symmetrization.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& a);

  static SymMatrix zero(int dim);
  static SymMatrix identity(int dim);
  static SymMatrix diagonal(std::initializer_list<double> diag);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  double norm() const { return m_.norm(); }

  SymMatrix operator+(const SymMatrix& o) const;
  SymMatrix operator-(const SymMatrix& o) const;
  SymMatrix operator*(double s) const;

 private:
  struct Unchecked {};
  SymMatrix(Matrix m, Unchecked) : m_(std::move(m)) {}
  Matrix m_;
};

inline SymMatrix operator*(double s, const SymMatrix& a) { return a * s; }

/// A symmetric positive definite matrix. Construction symmetrizes the
/// input, eigendecomposes it, and rejects it unless
/// min eigenvalue > 1e-12 * max eigenvalue (and max eigenvalue > 0).
/// The decomposition is kept so matrix functions need no re-solve.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Matrix& a);

  static SpdMatrix identity(int dim);
  static SpdMatrix diagonal(std::initializer_list<double> diag);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  const EigDecomp& eig() const { return eig_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix m_;
  EigDecomp eig_;
};

/// Relative PD threshold used by SpdMatrix.
inline constexpr double kPdRelativeTolerance = 1e-12;

struct EigOptions {
  int max_sweeps = 100;
};

/// Cyclic Jacobi eigensolver. Throws NumericalError if the off-diagonal
/// mass has not vanished after max_sweeps.
EigDecomp sym_eig(const SymMatrix& a, const EigOptions& opts = {});

/// U diag(f(values)) U^T.
Matrix apply_spectral(const EigDecomp& e, const std::function<double(double)>& f);

/// Loewner matrix of f at the spectrum: (f(li) - f(lj)) / (li - lj),
/// replaced by df(li) when |li - lj| < gap.
Matrix loewner_matrix(const EigDecomp& e, const std::function<double(double)>& f,
                      const std::function<double(double)>& df, double gap = 1e-9);

/// Frechet derivative of the spectral function X -> U f(L) U^T at the
/// decomposed point, applied to the symmetric direction v. The map is
/// self-adjoint under the Frobenius inner product, so the same call
/// backpropagates a gradient.
Matrix spectral_derivative(const EigDecomp& e, const std::function<double(double)>& f,
                           const std::function<double(double)>& df, const Matrix& v,
                           double gap = 1e-9);

/// (A + A^T) / 2
Matrix symmetrize(const Matrix& a);

}  // namespace spdot
