#pragma once

// Log-Euclidean and affine-invariant geometry on the SPD cone.

#include <span>
#include <vector>

#include "spdot/error.hpp"
#include "spdot/linalg.hpp"

namespace spdot {

enum class Metric { lem, airm };

// ---- matrix functions -----------------------------------------------------

SymMatrix spd_log(const SpdMatrix& s);

/// Logarithm of a symmetric matrix. Throws DomainError naming the first
/// non-positive eigenvalue.
SymMatrix spd_log(const SymMatrix& s);

SpdMatrix spd_exp(const SymMatrix& x);

/// S^p via the eigendecomposition.
SpdMatrix spd_pow(const SpdMatrix& s, double p);
SpdMatrix spd_sqrt(const SpdMatrix& s);
SpdMatrix spd_inv(const SpdMatrix& s);

/// Frechet derivative of the matrix logarithm at P applied to v.
SymMatrix dlog(const SpdMatrix& p, const SymMatrix& v);

/// Frechet derivative of the matrix exponential at X applied to v.
SymMatrix dexp(const SymMatrix& x, const SymMatrix& v);

// ---- Log-Euclidean group operations ---------------------------------------

/// exp(log S1 + log S2)
SpdMatrix log_mult(const SpdMatrix& s1, const SpdMatrix& s2);

/// exp(lambda log S) = S^lambda
SpdMatrix log_scale(double lambda, const SpdMatrix& s);

// ---- distances and means --------------------------------------------------

/// ||log S1 - log S2||_F
double lem_distance(const SpdMatrix& s1, const SpdMatrix& s2);

/// ||log(S1^{-1/2} S2 S1^{-1/2})||_F
double airm_distance(const SpdMatrix& s1, const SpdMatrix& s2);

double distance(const SpdMatrix& s1, const SpdMatrix& s2, Metric metric);

/// Closed-form mean exp(mean_i log S_i). Throws InputError on an empty batch.
SpdMatrix lem_frechet_mean(std::span<const SpdMatrix> batch);

/// Mean of precomputed logarithms, returned in log coordinates.
SymMatrix lem_log_mean(std::span<const SymMatrix> logs);

struct AirmMeanOptions {
  int max_iter = 100;
  double tol = 1e-10;
};

/// Thrown when the affine-invariant mean iteration stalls.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, SpdMatrix last_iterate, double residual)
      : NumericalError(what), last_iterate_(std::move(last_iterate)), residual_(residual) {}

  const SpdMatrix& last_iterate() const { return last_iterate_; }
  double residual() const { return residual_; }

 private:
  SpdMatrix last_iterate_;
  double residual_;
};

/// Fixed-point iteration
///   mu <- mu^{1/2} exp(mean_i log(mu^{-1/2} S_i mu^{-1/2})) mu^{1/2}
/// started from the arithmetic mean; stops once the Frobenius norm of the
/// whitened step falls below tol.
SpdMatrix airm_frechet_mean(std::span<const SpdMatrix> batch, const AirmMeanOptions& opts = {});

SpdMatrix frechet_mean(std::span<const SpdMatrix> batch, Metric metric);

/// mean_i log(mu^{-1/2} S_i mu^{-1/2}); zero at the affine-invariant mean.
SymMatrix airm_mean_residual(const SpdMatrix& mu, std::span<const SpdMatrix> batch);

// ---- Riemannian operators -------------------------------------------------

/// tr(P^{-1} v P^{-1} w)
double airm_inner(const SpdMatrix& p, const SymMatrix& v, const SymMatrix& w);

/// <Dlog(P) v, Dlog(P) w>_F
double lem_inner(const SpdMatrix& p, const SymMatrix& v, const SymMatrix& w);

/// P^{1/2} exp(P^{-1/2} v P^{-1/2}) P^{1/2}
SpdMatrix airm_exp(const SpdMatrix& p, const SymMatrix& v);

/// P^{1/2} log(P^{-1/2} S P^{-1/2}) P^{1/2}
SymMatrix airm_log(const SpdMatrix& p, const SpdMatrix& s);

/// exp(log P + Dlog(P) v)
SpdMatrix lem_exp(const SpdMatrix& p, const SymMatrix& v);

/// Dexp(log P)(log S - log P)
SymMatrix lem_log(const SpdMatrix& p, const SpdMatrix& s);

/// Geodesic point at t in [0, 1]; endpoints are returned exactly.
SpdMatrix geodesic(const SpdMatrix& s1, const SpdMatrix& s2, double t, Metric metric);

/// Transport of s from T_{S1} to T_{S2}. Under LEM this is the identity.
/// Under AIRM it is E s E^T with E = (S2 S1^{-1})^{1/2}, the congruence
/// that carries S1 onto S2; see airm_transport_factor.
SymMatrix parallel_transport(const SpdMatrix& s1, const SpdMatrix& s2, const SymMatrix& s,
                             Metric metric);

/// Principal square root of A B^{-1} for SPD A, B (not symmetric in general).
Matrix airm_transport_factor(const SpdMatrix& a, const SpdMatrix& b);

/// Gradient of 1/2 d_LEM(P, Q)^2 in the log chart at X = log P, i.e. X - log Q.
SymMatrix lem_half_sq_distance_gradient(const SpdMatrix& p, const SpdMatrix& q);

// ---- vectorization --------------------------------------------------------

/// Column stacking.
Vector vec(const Matrix& a);
Matrix unvec(const Vector& v, int rows, int cols);
Matrix kron(const Matrix& a, const Matrix& b);

/// W (x) W, the matrix acting on vec(S) as S -> W S W^T does.
Matrix bimap_as_kron(const Matrix& w);

}  // namespace spdot
