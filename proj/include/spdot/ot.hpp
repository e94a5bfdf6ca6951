#pragma once

// Exact discrete optimal transport and the log-Euclidean barycentric map.

#include <span>
#include <utility>
#include <vector>

#include "spdot/linalg.hpp"

namespace spdot {

/// Nonnegative weights summing to 1 (to 1e-12).
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(Vector weights);
  static DiscreteMeasure uniform(int n);

  int size() const { return static_cast<int>(w_.size()); }
  const Vector& weights() const { return w_; }
  double operator[](int i) const { return w_(i); }

 private:
  Vector w_;
};

/// Nonnegative finite ground costs, rows indexed by source, columns by target.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix c);

  int rows() const { return static_cast<int>(c_.rows()); }
  int cols() const { return static_cast<int>(c_.cols()); }
  const Matrix& matrix() const { return c_; }
  double operator()(int i, int j) const { return c_(i, j); }

 private:
  Matrix c_;
};

/// A coupling gamma >= 0. The (matrix, mu, nu) constructor checks both
/// marginals to 1e-9; from_coupling only checks total mass 1.
class TransportPlan {
 public:
  static constexpr double kMarginalTolerance = 1e-9;

  TransportPlan(Matrix gamma, const DiscreteMeasure& mu, const DiscreteMeasure& nu);
  static TransportPlan from_coupling(Matrix gamma);
  static TransportPlan identity(int n);

  int rows() const { return static_cast<int>(g_.rows()); }
  int cols() const { return static_cast<int>(g_.cols()); }
  const Matrix& matrix() const { return g_; }
  double operator()(int i, int j) const { return g_(i, j); }

  Vector row_sums() const { return g_.rowwise().sum(); }
  Vector col_sums() const { return g_.colwise().sum().transpose(); }

  /// max over rows and columns of |marginal - weight|
  double marginal_error(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const;

  /// <gamma, cost>_F
  double cost(const CostMatrix& c) const;

  TransportPlan transposed() const;

 private:
  explicit TransportPlan(Matrix gamma);
  Matrix g_;
};

enum class GroundCost { squared_lem, lem };

/// D(i, j) = d_LEM(S_i, T_j), squared by default.
CostMatrix cost_matrix_lem(std::span<const SpdMatrix> sources, std::span<const SpdMatrix> targets,
                           GroundCost kind = GroundCost::squared_lem);

/// D(i, j) = ||x_i - y_j||^2
CostMatrix cost_matrix_sq_euclidean(std::span<const Vector> sources,
                                    std::span<const Vector> targets);

struct EmdOptions {
  // Pivots are taken while some reduced cost is below -tol * max(1, max cost).
  double tol = 1e-13;
  long max_iterations = 10'000'000;
  // After this many consecutive degenerate pivots the entering rule
  // switches from most-negative to smallest-index (Bland) until progress.
  int degenerate_switch = 50;
};

struct EmdResult {
  TransportPlan plan;
  double cost = 0.0;
  // Dual potentials: u_i + v_j <= c_ij with equality on the basis.
  Vector u;
  Vector v;
  long iterations = 0;
};

/// Exact earth mover's distance by the transportation simplex, started
/// from Vogel's approximation. Deterministic: ties in Vogel penalties,
/// entering and leaving cells are broken by smallest (row, column).
EmdResult solve_emd(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                    const EmdOptions& opts = {});

enum class ColumnWeights {
  // gamma[:, j] / sum_i gamma[i, j]
  normalized,
  // gamma[:, j] as is (the unnormalized update)
  raw,
};

/// Log-domain barycentric map: output j is exp(sum_i w_ij log S_i) with
/// w taken from column j of the plan. Rows of the plan index sources.
/// Throws InputError naming the first column with zero mass when normalizing.
std::vector<SpdMatrix> barycentric_map_lem(const TransportPlan& plan,
                                           std::span<const SpdMatrix> sources,
                                           ColumnWeights weights = ColumnWeights::normalized);

struct TransportAssignment {
  int index;
  SpdMatrix target;
};

/// Minimizer of 1/2 d_LEM(S, T_j)^2 over the mapped set, smallest index
/// on ties. This is the map generated by the c-concave potential that is
/// zero on the mapped set and +inf elsewhere.
TransportAssignment c_concave_transport(const SpdMatrix& s, std::span<const SpdMatrix> mapped);

struct AffineRecoveryReport {
  // max |gamma_ij - delta_ij / N|
  double plan_deviation = 0.0;
  // max_i ||T(x_i) - (A x_i + b)||_2 for the barycentric map T
  double map_error = 0.0;
  double objective = 0.0;
  bool identity_plan = false;
  bool passed(double tol = 1e-8) const { return identity_plan && map_error <= tol; }
};

/// Pushes samples by x -> A x + b (A symmetric PD), solves EMD with the
/// squared Euclidean cost under uniform weights and checks that the
/// optimal plan is the identity coupling and the barycentric map recovers
/// the affine image. Throws InputError on duplicate samples and
/// DomainError if A is not symmetric positive definite.
AffineRecoveryReport verify_affine_recovery(std::span<const Vector> samples, const Matrix& a,
                                            const Vector& b);

struct BimapRecoveryReport {
  AffineRecoveryReport affine;
  // max_i ||vec(W S_i W^T) - (W (x) W) vec(S_i)||_inf
  double kron_identity_error = 0.0;
};

/// Bi-Map analogue: targets W S_i W^T, squared l2 cost on vec(S). The
/// recovered map is compared against the Kronecker form (W (x) W) vec(S).
BimapRecoveryReport verify_bimap_recovery(std::span<const SpdMatrix> samples, const Matrix& w);

/// True iff EMD between the two sets of band means (uniform weights,
/// squared LEM cost) is the scaled identity coupling. Throws
/// DimensionError on a band count mismatch.
bool corollary_identity_plan(std::span<const SpdMatrix> source_band_means,
                             std::span<const SpdMatrix> target_band_means);

/// max |gamma_ij - delta_ij / N| for a square plan.
double identity_plan_deviation(const TransportPlan& plan);

}  // namespace spdot
