#include "spdot/spd.hpp"

#include <cmath>
#include <sstream>

namespace spdot {

namespace {

double log_fn(double x) { return std::log(x); }
double inv_fn(double x) { return 1.0 / x; }
double exp_fn(double x) { return std::exp(x); }

void check_same_dim(const SpdMatrix& a, const SpdMatrix& b, const char* what) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    throw DimensionError(os.str());
  }
}

// Whitening M = P^{-1/2} S P^{-1/2}.
SpdMatrix whiten(const SpdMatrix& p, const SpdMatrix& s) {
  const Matrix ih = apply_spectral(p.eig(), [](double x) { return 1.0 / std::sqrt(x); });
  return SpdMatrix(ih * s.matrix() * ih);
}

EigDecomp log_of_eig(const EigDecomp& e) {
  EigDecomp out = e;
  out.values = e.values.unaryExpr(&log_fn);
  return out;
}

}  // namespace

SymMatrix spd_log(const SpdMatrix& s) { return SymMatrix(apply_spectral(s.eig(), &log_fn)); }

SymMatrix spd_log(const SymMatrix& s) {
  const EigDecomp e = sym_eig(s);
  for (int i = e.dim() - 1; i >= 0; --i) {
    if (!(e.values(i) > 0.0)) {
      std::ostringstream os;
      os << "spd_log: matrix logarithm undefined, eigenvalue " << e.values(i) << " <= 0";
      throw DomainError(os.str());
    }
  }
  return SymMatrix(apply_spectral(e, &log_fn));
}

SpdMatrix spd_exp(const SymMatrix& x) { return SpdMatrix(apply_spectral(sym_eig(x), &exp_fn)); }

SpdMatrix spd_pow(const SpdMatrix& s, double p) {
  return SpdMatrix(apply_spectral(s.eig(), [p](double x) { return std::pow(x, p); }));
}

SpdMatrix spd_sqrt(const SpdMatrix& s) {
  return SpdMatrix(apply_spectral(s.eig(), [](double x) { return std::sqrt(x); }));
}

SpdMatrix spd_inv(const SpdMatrix& s) { return SpdMatrix(apply_spectral(s.eig(), &inv_fn)); }

SymMatrix dlog(const SpdMatrix& p, const SymMatrix& v) {
  if (p.dim() != v.dim()) throw DimensionError("dlog: dimension mismatch");
  return SymMatrix(spectral_derivative(p.eig(), &log_fn, &inv_fn, v.matrix()));
}

SymMatrix dexp(const SymMatrix& x, const SymMatrix& v) {
  if (x.dim() != v.dim()) throw DimensionError("dexp: dimension mismatch");
  return SymMatrix(spectral_derivative(sym_eig(x), &exp_fn, &exp_fn, v.matrix()));
}

SpdMatrix log_mult(const SpdMatrix& s1, const SpdMatrix& s2) {
  check_same_dim(s1, s2, "log_mult");
  return spd_exp(spd_log(s1) + spd_log(s2));
}

SpdMatrix log_scale(double lambda, const SpdMatrix& s) { return spd_pow(s, lambda); }

double lem_distance(const SpdMatrix& s1, const SpdMatrix& s2) {
  check_same_dim(s1, s2, "lem_distance");
  return (spd_log(s1).matrix() - spd_log(s2).matrix()).norm();
}

double airm_distance(const SpdMatrix& s1, const SpdMatrix& s2) {
  check_same_dim(s1, s2, "airm_distance");
  const Vector lam = whiten(s1, s2).eig().values;
  return lam.unaryExpr(&log_fn).norm();
}

double distance(const SpdMatrix& s1, const SpdMatrix& s2, Metric metric) {
  return metric == Metric::lem ? lem_distance(s1, s2) : airm_distance(s1, s2);
}

SymMatrix lem_log_mean(std::span<const SymMatrix> logs) {
  if (logs.empty()) throw InputError("lem_log_mean: empty batch");
  const int n = logs.front().dim();
  Matrix acc = Matrix::Zero(n, n);
  for (const auto& x : logs) {
    if (x.dim() != n) throw DimensionError("lem_log_mean: dimension mismatch in batch");
    acc += x.matrix();
  }
  return SymMatrix(acc / static_cast<double>(logs.size()));
}

SpdMatrix lem_frechet_mean(std::span<const SpdMatrix> batch) {
  if (batch.empty()) throw InputError("lem_frechet_mean: empty batch");
  std::vector<SymMatrix> logs;
  logs.reserve(batch.size());
  for (const auto& s : batch) logs.push_back(spd_log(s));
  return spd_exp(lem_log_mean(logs));
}

SymMatrix airm_mean_residual(const SpdMatrix& mu, std::span<const SpdMatrix> batch) {
  if (batch.empty()) throw InputError("airm_mean_residual: empty batch");
  std::vector<SymMatrix> logs;
  logs.reserve(batch.size());
  for (const auto& s : batch) {
    check_same_dim(mu, s, "airm_frechet_mean");
    logs.push_back(spd_log(whiten(mu, s)));
  }
  return lem_log_mean(logs);
}

SpdMatrix airm_frechet_mean(std::span<const SpdMatrix> batch, const AirmMeanOptions& opts) {
  if (batch.empty()) throw InputError("airm_frechet_mean: empty batch");
  const int n = batch.front().dim();
  Matrix arith = Matrix::Zero(n, n);
  for (const auto& s : batch) {
    if (s.dim() != n) throw DimensionError("airm_frechet_mean: dimension mismatch in batch");
    arith += s.matrix();
  }
  SpdMatrix mu(arith / static_cast<double>(batch.size()));

  double residual = 0.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const SymMatrix step = airm_mean_residual(mu, batch);
    residual = step.norm();
    if (residual < opts.tol) return mu;
    const Matrix h = apply_spectral(mu.eig(), [](double x) { return std::sqrt(x); });
    mu = SpdMatrix(h * spd_exp(step).matrix() * h);
  }
  residual = airm_mean_residual(mu, batch).norm();
  if (residual < opts.tol) return mu;
  std::ostringstream os;
  os << "airm_frechet_mean: no convergence after " << opts.max_iter
     << " iterations (step norm " << residual << ")";
  throw NonConvergenceError(os.str(), mu, residual);
}

SpdMatrix frechet_mean(std::span<const SpdMatrix> batch, Metric metric) {
  return metric == Metric::lem ? lem_frechet_mean(batch) : airm_frechet_mean(batch);
}

double airm_inner(const SpdMatrix& p, const SymMatrix& v, const SymMatrix& w) {
  const Matrix pinv = apply_spectral(p.eig(), &inv_fn);
  return (pinv * v.matrix() * pinv * w.matrix()).trace();
}

double lem_inner(const SpdMatrix& p, const SymMatrix& v, const SymMatrix& w) {
  return (dlog(p, v).matrix().cwiseProduct(dlog(p, w).matrix())).sum();
}

SpdMatrix airm_exp(const SpdMatrix& p, const SymMatrix& v) {
  if (p.dim() != v.dim()) throw DimensionError("airm_exp: dimension mismatch");
  const Matrix h = apply_spectral(p.eig(), [](double x) { return std::sqrt(x); });
  const Matrix ih = apply_spectral(p.eig(), [](double x) { return 1.0 / std::sqrt(x); });
  const SpdMatrix inner = spd_exp(SymMatrix(symmetrize(ih * v.matrix() * ih)));
  return SpdMatrix(h * inner.matrix() * h);
}

SymMatrix airm_log(const SpdMatrix& p, const SpdMatrix& s) {
  check_same_dim(p, s, "airm_log");
  const Matrix h = apply_spectral(p.eig(), [](double x) { return std::sqrt(x); });
  return SymMatrix(symmetrize(h * spd_log(whiten(p, s)).matrix() * h));
}

SpdMatrix lem_exp(const SpdMatrix& p, const SymMatrix& v) {
  return spd_exp(spd_log(p) + dlog(p, v));
}

SymMatrix lem_log(const SpdMatrix& p, const SpdMatrix& s) {
  check_same_dim(p, s, "lem_log");
  const SymMatrix diff = spd_log(s) - spd_log(p);
  return SymMatrix(spectral_derivative(log_of_eig(p.eig()), &exp_fn, &exp_fn, diff.matrix()));
}

SpdMatrix geodesic(const SpdMatrix& s1, const SpdMatrix& s2, double t, Metric metric) {
  check_same_dim(s1, s2, "geodesic");
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream os;
    os << "geodesic: t = " << t << " outside [0, 1]";
    throw InputError(os.str());
  }
  if (t == 0.0) return s1;
  if (t == 1.0) return s2;
  if (metric == Metric::lem) return spd_exp(spd_log(s1) * (1.0 - t) + spd_log(s2) * t);
  const Matrix h = apply_spectral(s1.eig(), [](double x) { return std::sqrt(x); });
  const SpdMatrix inner = spd_pow(whiten(s1, s2), t);
  return SpdMatrix(h * inner.matrix() * h);
}

Matrix airm_transport_factor(const SpdMatrix& a, const SpdMatrix& b) {
  check_same_dim(a, b, "airm_transport_factor");
  const Matrix bh = apply_spectral(b.eig(), [](double x) { return std::sqrt(x); });
  const Matrix bih = apply_spectral(b.eig(), [](double x) { return 1.0 / std::sqrt(x); });
  const Matrix root = apply_spectral(whiten(b, a).eig(), [](double x) { return std::sqrt(x); });
  return bh * root * bih;
}

SymMatrix parallel_transport(const SpdMatrix& s1, const SpdMatrix& s2, const SymMatrix& s,
                             Metric metric) {
  check_same_dim(s1, s2, "parallel_transport");
  if (s.dim() != s1.dim()) throw DimensionError("parallel_transport: tangent dimension mismatch");
  if (metric == Metric::lem) return s;
  const Matrix e = airm_transport_factor(s2, s1);
  return SymMatrix(symmetrize(e * s.matrix() * e.transpose()));
}

SymMatrix lem_half_sq_distance_gradient(const SpdMatrix& p, const SpdMatrix& q) {
  check_same_dim(p, q, "lem_half_sq_distance_gradient");
  return spd_log(p) - spd_log(q);
}

Vector vec(const Matrix& a) {
  Vector out(a.size());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(k++) = a(i, j);
  return out;
}

Matrix unvec(const Vector& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols)
    throw DimensionError("unvec: size does not match rows * cols");
  Matrix out(rows, cols);
  Eigen::Index k = 0;
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) out(i, j) = v(k++);
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix bimap_as_kron(const Matrix& w) { return kron(w, w); }

}  // namespace spdot
