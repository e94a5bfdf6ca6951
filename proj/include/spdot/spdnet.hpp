#pragma once

// One-block SPD network: Bi-Map -> ReEig -> LogEig -> linear head.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdot/dataset.hpp"
#include "spdot/linalg.hpp"
#include "spdot/spd.hpp"

namespace spdot {

/// S -> W S W^T with W of full row rank (d_out x d_in).
class BiMapLayer {
 public:
  /// Throws DomainError if sigma_min(W) < 1e-10.
  explicit BiMapLayer(Matrix w);

  int d_in() const { return static_cast<int>(w_.cols()); }
  int d_out() const { return static_cast<int>(w_.rows()); }
  const Matrix& weight() const { return w_; }

  SpdMatrix forward(const SpdMatrix& s) const;

  struct Grad {
    Matrix dw;     // d <G, W S W^T> / dW = 2 G W S
    SymMatrix ds;  // W^T G W
  };
  Grad backward(const SpdMatrix& s, const SymMatrix& upstream) const;

 private:
  Matrix w_;
};

/// U max(eps, Sigma) U^T.
class ReEigLayer {
 public:
  static constexpr double kDefaultEpsilon = 1e-4;

  explicit ReEigLayer(double epsilon = kDefaultEpsilon);
  double epsilon() const { return eps_; }

  SpdMatrix forward(const SpdMatrix& s) const;
  /// Gradient with respect to the input, using the input's cached spectrum.
  SymMatrix backward(const SpdMatrix& s, const SymMatrix& upstream) const;

 private:
  double eps_;
};

SymMatrix logeig_forward(const SpdMatrix& s);
SymMatrix logeig_backward(const SpdMatrix& s, const SymMatrix& upstream);

/// Upper triangle (row-major, i <= j) with off-diagonals scaled by sqrt(2),
/// so that <tri(X), tri(Y)> = <X, Y>_F.
Vector tri_vec(const SymMatrix& x);
/// Adjoint of tri_vec: the symmetric matrix G with <G, dX>_F = <g, tri(dX)>.
SymMatrix tri_vec_adjoint(const Vector& g, int dim);

struct ClassifierHead {
  Matrix weight;  // classes x dim(dim+1)/2
  Vector bias;    // classes
};

struct DotModel {
  BiMapLayer bimap;
  ReEigLayer reeig;
  ClassifierHead head;

  int d_in() const { return bimap.d_in(); }
  int d_out() const { return bimap.d_out(); }
  int num_classes() const { return static_cast<int>(head.weight.rows()); }

  /// Throws DimensionError unless the head matches the Bi-Map output.
  void validate() const;
};

/// Random semi-orthogonal W (W W^T = I) and a small random head.
DotModel init_model(int d_in, int d_out, int num_classes, std::uint64_t seed,
                    double epsilon = ReEigLayer::kDefaultEpsilon);

/// Per-sample forward cache.
struct Activations {
  std::optional<SpdMatrix> input;
  std::optional<SpdMatrix> bimap;   // W S W^T
  std::optional<SpdMatrix> embed;   // ReEig output, the feature MDA/CDA compare
  std::optional<SymMatrix> log;     // LogEig output
  Vector features;
  Vector logits;
};

Activations forward(const DotModel& model, const SpdMatrix& s);

/// Argmax of the logits, smallest index on ties.
int predict(const DotModel& model, const SpdMatrix& s);
int argmax(const Vector& logits);

struct ModelGrad {
  Matrix dw;
  Matrix dhead;
  Vector dbias;

  static ModelGrad zeros(const DotModel& model);
  ModelGrad& operator+=(const ModelGrad& o);
  bool all_finite() const;
};

/// Backpropagates dlogits (gradient w.r.t. the logits) and, optionally,
/// dlog (gradient w.r.t. the LogEig output) through one cached sample.
/// Throws InputError if the cache is empty. If dinput is non-null the
/// gradient w.r.t. the input matrix is written there.
ModelGrad backward(const DotModel& model, const Activations& act, const Vector& dlogits,
                   const std::optional<SymMatrix>& dlog = std::nullopt,
                   SymMatrix* dinput = nullptr);

/// Row-Stiefel step: xi = G - sym(G W^T) W, W - lr xi, then a QR
/// retraction back to W W^T = I. A zero gradient returns W unchanged.
/// Throws NumericalError on non-finite gradients.
Matrix stiefel_update(const Matrix& w, const Matrix& grad, double lr);

/// Stiefel step for W, plain gradient step for the head.
void apply_gradient(DotModel& model, const ModelGrad& grad, double lr);

// ---- minimum distance to mean ---------------------------------------------

struct MdmModel {
  std::vector<SpdMatrix> centroids;
  Metric metric = Metric::lem;
};

/// Per-class Frechet mean. Throws InputError if some class has no sample.
MdmModel mdm_fit(std::span<const SpdMatrix> samples, std::span<const int> labels,
                 int num_classes, Metric metric);
MdmModel mdm_fit(const SpdDataset& data, Metric metric);

/// Nearest centroid, smallest index on ties. Throws InputError if unfitted.
int mdm_predict(const MdmModel& model, const SpdMatrix& s);

// ---- checkpoint -----------------------------------------------------------

/// Binary layout, all little-endian:
///   8 bytes "SPDOTCKP", u32 version (1), u32 d_in, u32 d_out, u32 classes,
///   f64 epsilon, then W (d_out x d_in), head weight (classes x features)
///   and head bias (classes) as row-major f64.
void save_checkpoint(const std::string& path, const DotModel& model);
DotModel load_checkpoint(const std::string& path);

}  // namespace spdot
