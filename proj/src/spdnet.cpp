#include "spdot/spdnet.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <sstream>

#include "spdot/error.hpp"

namespace spdot {

namespace {

constexpr double kRankTolerance = 1e-10;

double min_singular_value(const Matrix& w) {
  return Eigen::JacobiSVD<Matrix>(w).singularValues().minCoeff();
}

// Q factor of m^T with a positive R diagonal, transposed back: the rows
// of the result are orthonormal and span the row space of m.
Matrix orthonormal_rows(const Matrix& m) {
  const int r = static_cast<int>(m.rows());
  const int c = static_cast<int>(m.cols());
  Eigen::HouseholderQR<Matrix> qr(Matrix(m.transpose()));
  Matrix q = qr.householderQ() * Matrix::Identity(c, r);
  for (int j = 0; j < r; ++j)
    if (qr.matrixQR()(j, j) < 0) q.col(j) = -q.col(j);
  return q.transpose();
}

}  // namespace

// ---- layers ---------------------------------------------------------------

BiMapLayer::BiMapLayer(Matrix w) : w_(std::move(w)) {
  if (w_.rows() == 0 || w_.rows() > w_.cols()) {
    std::ostringstream os;
    os << "BiMapLayer: W is " << w_.rows() << "x" << w_.cols() << ", need 0 < d_out <= d_in";
    throw DimensionError(os.str());
  }
  if (!w_.allFinite()) throw DomainError("BiMapLayer: W has non-finite entries");
  const double smin = min_singular_value(w_);
  if (!(smin >= kRankTolerance)) {
    std::ostringstream os;
    os << "BiMapLayer: W is rank deficient (smallest singular value " << smin << ")";
    throw DomainError(os.str());
  }
}

SpdMatrix BiMapLayer::forward(const SpdMatrix& s) const {
  if (s.dim() != d_in()) {
    std::ostringstream os;
    os << "BiMapLayer: input is " << s.dim() << "x" << s.dim() << ", expected " << d_in();
    throw DimensionError(os.str());
  }
  return SpdMatrix(symmetrize(w_ * s.matrix() * w_.transpose()));
}

BiMapLayer::Grad BiMapLayer::backward(const SpdMatrix& s, const SymMatrix& upstream) const {
  if (s.dim() != d_in() || upstream.dim() != d_out())
    throw DimensionError("BiMapLayer::backward: dimension mismatch");
  const Matrix& g = upstream.matrix();
  return {2.0 * g * w_ * s.matrix(), SymMatrix(symmetrize(w_.transpose() * g * w_))};
}

ReEigLayer::ReEigLayer(double epsilon) : eps_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw InputError("ReEigLayer: epsilon must be positive");
}

SpdMatrix ReEigLayer::forward(const SpdMatrix& s) const {
  const double e = eps_;
  return SpdMatrix(apply_spectral(s.eig(), [e](double x) { return std::max(e, x); }));
}

SymMatrix ReEigLayer::backward(const SpdMatrix& s, const SymMatrix& upstream) const {
  if (s.dim() != upstream.dim()) throw DimensionError("ReEigLayer::backward: dimension mismatch");
  const double e = eps_;
  return SymMatrix(spectral_derivative(
      s.eig(), [e](double x) { return std::max(e, x); },
      [e](double x) { return x > e ? 1.0 : 0.0; }, upstream.matrix()));
}

SymMatrix logeig_forward(const SpdMatrix& s) { return spd_log(s); }

SymMatrix logeig_backward(const SpdMatrix& s, const SymMatrix& upstream) {
  return dlog(s, upstream);
}

Vector tri_vec(const SymMatrix& x) {
  const int d = x.dim();
  Vector out(d * (d + 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) out(k++) = i == j ? x(i, j) : std::sqrt(2.0) * x(i, j);
  return out;
}

SymMatrix tri_vec_adjoint(const Vector& g, int dim) {
  if (g.size() != dim * (dim + 1) / 2) throw DimensionError("tri_vec_adjoint: size mismatch");
  Matrix out(dim, dim);
  int k = 0;
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j, ++k) {
      if (i == j)
        out(i, i) = g(k);
      else
        out(i, j) = out(j, i) = g(k) / std::sqrt(2.0);
    }
  }
  return SymMatrix(out);
}

// ---- model ----------------------------------------------------------------

void DotModel::validate() const {
  const int feat = d_out() * (d_out() + 1) / 2;
  if (head.weight.cols() != feat || head.bias.size() != head.weight.rows() ||
      head.weight.rows() == 0) {
    std::ostringstream os;
    os << "DotModel: head is " << head.weight.rows() << "x" << head.weight.cols() << " with "
       << head.bias.size() << " biases, expected L x " << feat;
    throw DimensionError(os.str());
  }
  if (!head.weight.allFinite() || !head.bias.allFinite())
    throw DomainError("DotModel: head has non-finite entries");
}

DotModel init_model(int d_in, int d_out, int num_classes, std::uint64_t seed, double epsilon) {
  if (d_in <= 0 || d_out <= 0 || d_out > d_in || num_classes <= 0)
    throw InputError("init_model: need 0 < d_out <= d_in and num_classes > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(d_out, d_in);
  for (int i = 0; i < d_out; ++i)
    for (int j = 0; j < d_in; ++j) a(i, j) = normal(rng);

  const int feat = d_out * (d_out + 1) / 2;
  ClassifierHead head{Matrix(num_classes, feat), Vector::Zero(num_classes)};
  std::normal_distribution<double> small(0.0, 0.1);
  for (int i = 0; i < num_classes; ++i)
    for (int j = 0; j < feat; ++j) head.weight(i, j) = small(rng);
  return DotModel{BiMapLayer(orthonormal_rows(a)), ReEigLayer(epsilon), std::move(head)};
}

Activations forward(const DotModel& model, const SpdMatrix& s) {
  Activations a;
  a.input = s;
  a.bimap = model.bimap.forward(s);
  a.embed = model.reeig.forward(*a.bimap);
  a.log = logeig_forward(*a.embed);
  a.features = tri_vec(*a.log);
  if (model.head.weight.cols() != a.features.size())
    throw DimensionError("forward: head does not match the Bi-Map output dimension");
  a.logits = model.head.weight * a.features + model.head.bias;
  return a;
}

int argmax(const Vector& logits) {
  int best = 0;
  for (int i = 1; i < logits.size(); ++i)
    if (logits(i) > logits(best)) best = i;
  return best;
}

int predict(const DotModel& model, const SpdMatrix& s) { return argmax(forward(model, s).logits); }

ModelGrad ModelGrad::zeros(const DotModel& model) {
  return {Matrix::Zero(model.d_out(), model.d_in()),
          Matrix::Zero(model.head.weight.rows(), model.head.weight.cols()),
          Vector::Zero(model.head.bias.size())};
}

ModelGrad& ModelGrad::operator+=(const ModelGrad& o) {
  dw += o.dw;
  dhead += o.dhead;
  dbias += o.dbias;
  return *this;
}

bool ModelGrad::all_finite() const {
  return dw.allFinite() && dhead.allFinite() && dbias.allFinite();
}

ModelGrad backward(const DotModel& model, const Activations& act, const Vector& dlogits,
                   const std::optional<SymMatrix>& dlog, SymMatrix* dinput) {
  if (!act.input || !act.bimap || !act.embed || !act.log)
    throw InputError("backward: no forward cache for this sample");
  if (dlogits.size() != model.num_classes())
    throw DimensionError("backward: dlogits does not match the number of classes");
  ModelGrad g;
  g.dhead = dlogits * act.features.transpose();
  g.dbias = dlogits;
  SymMatrix dx = tri_vec_adjoint(model.head.weight.transpose() * dlogits, model.d_out());
  if (dlog) dx = dx + *dlog;
  const SymMatrix de = logeig_backward(*act.embed, dx);
  const SymMatrix db = model.reeig.backward(*act.bimap, de);
  auto bg = model.bimap.backward(*act.input, db);
  g.dw = std::move(bg.dw);
  if (dinput) *dinput = bg.ds;
  return g;
}

Matrix stiefel_update(const Matrix& w, const Matrix& grad, double lr) {
  if (grad.rows() != w.rows() || grad.cols() != w.cols())
    throw DimensionError("stiefel_update: gradient shape does not match W");
  if (!grad.allFinite()) throw NumericalError("stiefel_update: non-finite gradient");
  if (!std::isfinite(lr)) throw NumericalError("stiefel_update: non-finite learning rate");
  if (lr == 0.0 || grad.isZero(0.0)) return w;

  const Matrix xi = grad - symmetrize(grad * w.transpose()) * w;
  Matrix out = orthonormal_rows(w - lr * xi);
  if (!out.allFinite()) throw NumericalError("stiefel_update: retraction produced non-finite W");
  return out;
}

void apply_gradient(DotModel& model, const ModelGrad& grad, double lr) {
  if (!grad.all_finite()) throw NumericalError("apply_gradient: non-finite gradient");
  model.bimap = BiMapLayer(stiefel_update(model.bimap.weight(), grad.dw, lr));
  model.head.weight -= lr * grad.dhead;
  model.head.bias -= lr * grad.dbias;
}

// ---- MDM ------------------------------------------------------------------

MdmModel mdm_fit(std::span<const SpdMatrix> samples, std::span<const int> labels,
                 int num_classes, Metric metric) {
  if (samples.size() != labels.size())
    throw DimensionError("mdm_fit: samples and labels differ in length");
  if (num_classes <= 0) throw InputError("mdm_fit: num_classes must be positive");
  std::vector<std::vector<SpdMatrix>> by_class(num_classes);
  for (size_t i = 0; i < samples.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      std::ostringstream os;
      os << "mdm_fit: label " << labels[i] << " of sample " << i << " out of range";
      throw InputError(os.str());
    }
    by_class[labels[i]].push_back(samples[i]);
  }
  MdmModel m;
  m.metric = metric;
  for (int c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) {
      std::ostringstream os;
      os << "mdm_fit: class " << c << " has no training sample";
      throw InputError(os.str());
    }
    m.centroids.push_back(frechet_mean(by_class[c], metric));
  }
  return m;
}

MdmModel mdm_fit(const SpdDataset& data, Metric metric) {
  const auto ms = data.matrices();
  const auto ys = data.labels();
  return mdm_fit(ms, ys, data.num_classes(), metric);
}

int mdm_predict(const MdmModel& model, const SpdMatrix& s) {
  if (model.centroids.empty()) throw InputError("mdm_predict: model is not fitted");
  int best = 0;
  double best_d = distance(model.centroids[0], s, model.metric);
  for (size_t c = 1; c < model.centroids.size(); ++c) {
    const double d = distance(model.centroids[c], s, model.metric);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace spdot
