#include "spdot/dot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "spdot/error.hpp"

namespace spdot {

void LossWeights::validate() const {
  for (double a : {alpha1, alpha2, alpha3, jd_alpha1, jd_alpha2})
    if (!(a >= 0.0) || !std::isfinite(a))
      throw InputError("LossWeights: every weight must be finite and nonnegative");
}

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::source_only: return "source";
    case TrainMode::mda: return "mda";
    case TrainMode::cda: return "cda";
    case TrainMode::mda_cda: return "mda+cda";
    case TrainMode::deepjdot: return "deepjdot";
  }
  return "?";
}

TrainMode parse_train_mode(const std::string& s) {
  for (TrainMode m : {TrainMode::source_only, TrainMode::mda, TrainMode::cda, TrainMode::mda_cda,
                      TrainMode::deepjdot})
    if (s == to_string(m)) return m;
  throw InputError("unknown training mode '" + s +
                   "' (expected source, mda, cda, mda+cda or deepjdot)");
}

LossWeights effective_weights(const LossWeights& w, TrainMode mode) {
  LossWeights e = w;
  if (mode == TrainMode::source_only || mode == TrainMode::cda || mode == TrainMode::deepjdot)
    e.alpha2 = 0.0;
  if (mode == TrainMode::source_only || mode == TrainMode::mda || mode == TrainMode::deepjdot)
    e.alpha3 = 0.0;
  return e;
}

// ---- losses ---------------------------------------------------------------

namespace {

std::vector<SymMatrix> logs_of(std::span<const SpdMatrix> xs) {
  std::vector<SymMatrix> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(spd_log(x));
  return out;
}

Matrix log_mean(std::span<const SymMatrix> xs) { return lem_log_mean(xs).matrix(); }

void check_labels(std::span<const int> labels, size_t n, int num_classes, const char* what) {
  if (labels.size() != n) {
    std::ostringstream os;
    os << what << ": " << labels.size() << " labels for " << n << " samples";
    throw DimensionError(os.str());
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      std::ostringstream os;
      os << what << ": label " << labels[i] << " at position " << i << " outside [0, "
         << num_classes << ")";
      throw InputError(os.str());
    }
  }
}

// Per-class sums and counts of the log features.
struct ClassMeans {
  std::vector<Matrix> mean;
  std::vector<int> count;
};

ClassMeans class_means(std::span<const SymMatrix> xs, std::span<const int> labels,
                       int num_classes) {
  const int d = xs.front().dim();
  ClassMeans cm{std::vector<Matrix>(num_classes, Matrix::Zero(d, d)),
                std::vector<int>(num_classes, 0)};
  for (size_t i = 0; i < xs.size(); ++i) {
    cm.mean[labels[i]] += xs[i].matrix();
    ++cm.count[labels[i]];
  }
  for (int c = 0; c < num_classes; ++c)
    if (cm.count[c] > 0) cm.mean[c] /= cm.count[c];
  return cm;
}

Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

double log_softmax_at(const Vector& z, int y) {
  const double m = z.maxCoeff();
  return z(y) - m - std::log((z.array() - m).exp().sum());
}

}  // namespace

double mda_loss_logs(std::span<const SymMatrix> log_s, std::span<const SymMatrix> log_t) {
  if (log_s.empty() || log_t.empty()) throw InputError("mda_loss: empty batch");
  return (log_mean(log_s) - log_mean(log_t)).norm();
}

double mda_loss(std::span<const SpdMatrix> embed_s, std::span<const SpdMatrix> embed_t) {
  if (embed_s.empty() || embed_t.empty()) throw InputError("mda_loss: empty batch");
  return mda_loss_logs(logs_of(embed_s), logs_of(embed_t));
}

double cda_loss_logs(std::span<const SymMatrix> log_s, std::span<const int> labels_s,
                     std::span<const SymMatrix> log_t, std::span<const int> pseudo_t,
                     int num_classes) {
  if (log_s.empty() || log_t.empty()) throw InputError("cda_loss: empty batch");
  check_labels(labels_s, log_s.size(), num_classes, "cda_loss (source)");
  check_labels(pseudo_t, log_t.size(), num_classes, "cda_loss (target pseudo-labels)");
  const ClassMeans s = class_means(log_s, labels_s, num_classes);
  const ClassMeans t = class_means(log_t, pseudo_t, num_classes);
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c)
    if (s.count[c] > 0 && t.count[c] > 0) total += (s.mean[c] - t.mean[c]).norm();
  return total;
}

double cda_loss(std::span<const SpdMatrix> embed_s, std::span<const int> labels_s,
                std::span<const SpdMatrix> embed_t, std::span<const int> pseudo_t,
                int num_classes) {
  if (embed_s.empty() || embed_t.empty()) throw InputError("cda_loss: empty batch");
  return cda_loss_logs(logs_of(embed_s), labels_s, logs_of(embed_t), pseudo_t, num_classes);
}

double cross_entropy(std::span<const Vector> logits, std::span<const int> labels) {
  if (logits.empty()) throw InputError("cross_entropy: empty batch");
  check_labels(labels, logits.size(), static_cast<int>(logits.front().size()), "cross_entropy");
  double acc = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) acc -= log_softmax_at(logits[i], labels[i]);
  return acc / static_cast<double>(logits.size());
}

LossBreakdown dot_total_loss(std::span<const Vector> logits_s, std::span<const int> labels_s,
                             std::span<const SpdMatrix> embed_s,
                             std::span<const SpdMatrix> embed_t, std::span<const int> pseudo_t,
                             int num_classes, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.ce = cross_entropy(logits_s, labels_s);
  const auto ls = logs_of(embed_s);
  const auto lt = logs_of(embed_t);
  b.mda = mda_loss_logs(ls, lt);
  if (!pseudo_t.empty() || w.alpha3 > 0.0)
    b.cda = cda_loss_logs(ls, labels_s, lt, pseudo_t, num_classes);
  b.total = w.alpha1 * b.ce + w.alpha2 * b.mda * b.mda + w.alpha3 * b.cda * b.cda;
  return b;
}

double multi_source_loss(std::span<const SourceTerms> terms, std::span<const LossWeights> weights,
                         bool squared) {
  if (terms.empty()) throw InputError("multi_source_loss: no sources");
  if (terms.size() != weights.size()) {
    std::ostringstream os;
    os << "multi_source_loss: " << terms.size() << " sources but " << weights.size()
       << " weight sets";
    throw DimensionError(os.str());
  }
  double total = 0.0;
  for (size_t i = 0; i < terms.size(); ++i) {
    weights[i].validate();
    const double m = squared ? terms[i].mda * terms[i].mda : terms[i].mda;
    const double c = squared ? terms[i].cda * terms[i].cda : terms[i].cda;
    total += weights[i].alpha1 * terms[i].ce + weights[i].alpha2 * m + weights[i].alpha3 * c;
  }
  return total;
}

// ---- objectives -----------------------------------------------------------

void TrainBatch::validate(int num_classes) const {
  if (source.empty()) throw InputError("TrainBatch: empty source batch");
  check_labels(source_labels, source.size(), num_classes, "TrainBatch (source)");
  if (!target_pseudo.empty())
    check_labels(target_pseudo, target.size(), num_classes, "TrainBatch (target pseudo-labels)");
}

namespace {

struct BatchForward {
  std::vector<Activations> s, t;
  std::vector<SymMatrix> log_s, log_t;
  std::vector<Vector> logits_s;
};

BatchForward run_forward(const DotModel& model, const TrainBatch& batch) {
  BatchForward f;
  for (const auto& x : batch.source) {
    f.s.push_back(forward(model, x));
    f.log_s.push_back(*f.s.back().log);
    f.logits_s.push_back(f.s.back().logits);
  }
  for (const auto& x : batch.target) {
    f.t.push_back(forward(model, x));
    f.log_t.push_back(*f.t.back().log);
  }
  return f;
}

SymMatrix sym(const Matrix& m) { return SymMatrix(symmetrize(m)); }

// Accumulates per-sample backward passes in a fixed order.
ModelGrad backprop_all(const DotModel& model, const BatchForward& f,
                       const std::vector<Vector>& dlogits_s, const std::vector<Vector>& dlogits_t,
                       const std::vector<std::optional<SymMatrix>>& dlog_s,
                       const std::vector<std::optional<SymMatrix>>& dlog_t) {
  ModelGrad g = ModelGrad::zeros(model);
  for (size_t i = 0; i < f.s.size(); ++i) g += backward(model, f.s[i], dlogits_s[i], dlog_s[i]);
  for (size_t j = 0; j < f.t.size(); ++j) {
    if (!dlog_t[j] && dlogits_t[j].isZero(0.0)) continue;
    g += backward(model, f.t[j], dlogits_t[j], dlog_t[j]);
  }
  return g;
}

void add_to(std::optional<SymMatrix>& slot, const SymMatrix& v) {
  slot = slot ? *slot + v : v;
}

}  // namespace

Objective dot_objective(const DotModel& model, const TrainBatch& batch, const LossWeights& weights,
                        TrainMode mode) {
  const LossWeights w = effective_weights(weights, mode);
  w.validate();
  if (mode == TrainMode::deepjdot)
    throw InputError("dot_objective: use deepjdot_objective for the deepjdot mode");
  const int classes = model.num_classes();
  batch.validate(classes);
  if (batch.target.empty()) throw InputError("dot_objective: empty target batch");
  if (w.alpha3 > 0.0 && batch.target_pseudo.empty())
    throw InputError("dot_objective: CDA needs target pseudo-labels");

  const BatchForward f = run_forward(model, batch);
  const size_t ns = f.s.size(), nt = f.t.size();
  Objective obj;
  obj.loss.ce = cross_entropy(f.logits_s, batch.source_labels);
  obj.loss.mda = mda_loss_logs(f.log_s, f.log_t);
  if (!batch.target_pseudo.empty())
    obj.loss.cda =
        cda_loss_logs(f.log_s, batch.source_labels, f.log_t, batch.target_pseudo, classes);
  obj.loss.total = w.alpha1 * obj.loss.ce + w.alpha2 * obj.loss.mda * obj.loss.mda +
                   w.alpha3 * obj.loss.cda * obj.loss.cda;

  std::vector<Vector> dls(ns, Vector::Zero(classes)), dlt(nt, Vector::Zero(classes));
  std::vector<std::optional<SymMatrix>> dxs(ns), dxt(nt);
  if (w.alpha1 > 0.0) {
    for (size_t i = 0; i < ns; ++i) {
      Vector p = softmax(f.logits_s[i]);
      p(batch.source_labels[i]) -= 1.0;
      dls[i] = (w.alpha1 / static_cast<double>(ns)) * p;
    }
  }
  if (w.alpha2 > 0.0) {
    const Matrix diff = log_mean(f.log_s) - log_mean(f.log_t);
    const SymMatrix gs = sym(2.0 * w.alpha2 / static_cast<double>(ns) * diff);
    const SymMatrix gt = sym(-2.0 * w.alpha2 / static_cast<double>(nt) * diff);
    for (auto& x : dxs) add_to(x, gs);
    for (auto& x : dxt) add_to(x, gt);
  }
  if (w.alpha3 > 0.0 && obj.loss.cda > 0.0) {
    const ClassMeans s = class_means(f.log_s, batch.source_labels, classes);
    const ClassMeans t = class_means(f.log_t, batch.target_pseudo, classes);
    for (int c = 0; c < classes; ++c) {
      if (s.count[c] == 0 || t.count[c] == 0) continue;
      const Matrix diff = s.mean[c] - t.mean[c];
      const double dist = diff.norm();
      if (dist == 0.0) continue;  // subgradient 0 at a kink
      const Matrix unit = 2.0 * w.alpha3 * obj.loss.cda * diff / dist;
      const SymMatrix gs = sym(unit / s.count[c]);
      const SymMatrix gt = sym(-unit / t.count[c]);
      for (size_t i = 0; i < ns; ++i)
        if (batch.source_labels[i] == c) add_to(dxs[i], gs);
      for (size_t j = 0; j < nt; ++j)
        if (batch.target_pseudo[j] == c) add_to(dxt[j], gt);
    }
  }
  obj.grad = backprop_all(model, f, dls, dlt, dxs, dxt);
  return obj;
}

namespace {

void check_coupling(const Matrix& gamma, size_t ns, size_t nt) {
  if (gamma.rows() != static_cast<Eigen::Index>(ns) ||
      gamma.cols() != static_cast<Eigen::Index>(nt)) {
    std::ostringstream os;
    os << "deepjdot: coupling is " << gamma.rows() << "x" << gamma.cols() << " but the batch is "
       << ns << "x" << nt;
    throw DimensionError(os.str());
  }
  if (!gamma.allFinite() || (gamma.size() > 0 && gamma.minCoeff() < 0.0))
    throw InputError("deepjdot: coupling entries must be finite and nonnegative");
}

}  // namespace

Objective deepjdot_objective(const DotModel& model, const TrainBatch& batch, const Matrix& gamma,
                             const LossWeights& w) {
  w.validate();
  const int classes = model.num_classes();
  batch.validate(classes);
  check_coupling(gamma, batch.source.size(), batch.target.size());
  const BatchForward f = run_forward(model, batch);
  const size_t ns = f.s.size(), nt = f.t.size();

  Objective obj;
  obj.loss.ce = cross_entropy(f.logits_s, batch.source_labels);
  double feature = 0.0, label = 0.0;
  std::vector<Vector> dls(ns, Vector::Zero(classes)), dlt(nt, Vector::Zero(classes));
  std::vector<Matrix> gxs(ns, Matrix::Zero(model.d_out(), model.d_out()));
  std::vector<Matrix> gxt(nt, Matrix::Zero(model.d_out(), model.d_out()));
  std::vector<Vector> pt;
  for (size_t j = 0; j < nt; ++j) pt.push_back(softmax(f.t[j].logits));

  for (size_t i = 0; i < ns; ++i) {
    const int y = batch.source_labels[i];
    for (size_t j = 0; j < nt; ++j) {
      const double g = gamma(i, j);
      if (g == 0.0) continue;
      const Matrix diff = f.log_s[i].matrix() - f.log_t[j].matrix();
      feature += g * diff.squaredNorm();
      label -= g * log_softmax_at(f.t[j].logits, y);
      gxs[i] += (2.0 * w.jd_alpha1 * g) * diff;
      gxt[j] -= (2.0 * w.jd_alpha1 * g) * diff;
      Vector p = pt[j];
      p(y) -= 1.0;
      dlt[j] += (w.jd_alpha2 * g) * p;
    }
  }
  obj.loss.total = w.alpha1 * obj.loss.ce + w.jd_alpha1 * feature + w.jd_alpha2 * label;

  if (w.alpha1 > 0.0) {
    for (size_t i = 0; i < ns; ++i) {
      Vector p = softmax(f.logits_s[i]);
      p(batch.source_labels[i]) -= 1.0;
      dls[i] = (w.alpha1 / static_cast<double>(ns)) * p;
    }
  }
  std::vector<std::optional<SymMatrix>> dxs(ns), dxt(nt);
  if (w.jd_alpha1 > 0.0) {
    for (size_t i = 0; i < ns; ++i) dxs[i] = sym(gxs[i]);
    for (size_t j = 0; j < nt; ++j) dxt[j] = sym(gxt[j]);
  }
  obj.grad = backprop_all(model, f, dls, dlt, dxs, dxt);
  return obj;
}

double deepjdot_loss(const DotModel& model, const TrainBatch& batch, const Matrix& gamma,
                     const LossWeights& w) {
  return deepjdot_objective(model, batch, gamma, w).loss.total;
}

DeepJdotStep deepjdot_step(DotModel& model, const TrainBatch& batch, const LossWeights& w,
                           double lr) {
  batch.validate(model.num_classes());
  if (batch.target.empty()) throw InputError("deepjdot_step: empty target batch");
  std::vector<SpdMatrix> es, et;
  for (const auto& x : batch.source) es.push_back(*forward(model, x).embed);
  for (const auto& x : batch.target) et.push_back(*forward(model, x).embed);
  const auto mu = DiscreteMeasure::uniform(static_cast<int>(es.size()));
  const auto nu = DiscreteMeasure::uniform(static_cast<int>(et.size()));
  EmdResult emd = solve_emd(mu, nu, cost_matrix_lem(es, et));
  const Objective obj = deepjdot_objective(model, batch, emd.plan.matrix(), w);
  if (!std::isfinite(obj.loss.total)) throw NumericalError("deepjdot_step: non-finite loss");
  apply_gradient(model, obj.grad, lr);
  return {std::move(emd.plan), obj.loss.total};
}

std::vector<int> refresh_pseudo_labels(const MdmModel& mdm, std::span<const SpdMatrix> targets) {
  if (mdm.centroids.empty()) throw InputError("refresh_pseudo_labels: MDM baseline not fitted");
  std::vector<int> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(mdm_predict(mdm, t));
  return out;
}

std::vector<int> refresh_pseudo_labels(const DotModel& model, std::span<const SpdMatrix> targets) {
  std::vector<int> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(predict(model, t));
  return out;
}

// ---- training -------------------------------------------------------------

namespace {

double accuracy(const DotModel& model, const SpdDataset& data) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const auto& s : data.samples()) hits += predict(model, s.m) == s.label;
  return static_cast<double>(hits) / data.size();
}

TrainBatch full_batch(const SpdDataset& source, const SpdDataset& target,
                      std::span<const int> pseudo) {
  return {source.matrices(), source.labels(), target.matrices(),
          std::vector<int>(pseudo.begin(), pseudo.end())};
}

}  // namespace

EpochRecord evaluate(const DotModel& model, const SpdDataset& source, const SpdDataset& target,
                     std::span<const int> pseudo_t, const TrainConfig& cfg, int epoch) {
  const TrainBatch all = full_batch(source, target, pseudo_t);
  EpochRecord r;
  r.epoch = epoch;
  const auto f = run_forward(model, all);
  r.ce = cross_entropy(f.logits_s, all.source_labels);
  r.mda = mda_loss_logs(f.log_s, f.log_t);
  if (!all.target_pseudo.empty())
    r.cda = cda_loss_logs(f.log_s, all.source_labels, f.log_t, all.target_pseudo,
                          model.num_classes());
  if (cfg.mode == TrainMode::deepjdot) {
    std::vector<SpdMatrix> es, et;
    for (const auto& a : f.s) es.push_back(*a.embed);
    for (const auto& a : f.t) et.push_back(*a.embed);
    const EmdResult emd = solve_emd(DiscreteMeasure::uniform(static_cast<int>(es.size())),
                                    DiscreteMeasure::uniform(static_cast<int>(et.size())),
                                    cost_matrix_lem(es, et));
    r.total = deepjdot_loss(model, all, emd.plan.matrix(), cfg.weights);
  } else {
    const LossWeights w = effective_weights(cfg.weights, cfg.mode);
    r.total = w.alpha1 * r.ce + w.alpha2 * r.mda * r.mda + w.alpha3 * r.cda * r.cda;
  }
  r.source_acc = accuracy(model, source);
  r.target_acc = accuracy(model, target);
  return r;
}

std::vector<EpochRecord> train(DotModel& model, const SpdDataset& source,
                               const SpdDataset& target, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (source.empty() || target.empty()) throw InputError("train: empty source or target set");
  if (source.dim() != model.d_in() || target.dim() != model.d_in()) {
    std::ostringstream os;
    os << "train: data dimension " << source.dim() << "/" << target.dim()
       << " does not match the model input " << model.d_in();
    throw DimensionError(os.str());
  }
  if (source.num_classes() != model.num_classes())
    throw DimensionError("train: source class count does not match the model head");

  const auto src = source.matrices();
  const auto ys = source.labels();
  const auto tgt = target.matrices();
  std::optional<MdmModel> mdm;
  if (cfg.pseudo_labels == PseudoLabelSource::mdm) mdm = mdm_fit(source, cfg.mdm_metric);
  auto refresh = [&]() {
    return mdm ? refresh_pseudo_labels(*mdm, tgt) : refresh_pseudo_labels(model, tgt);
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> pseudo = refresh();
  std::vector<EpochRecord> history{evaluate(model, source, target, pseudo, cfg, 0)};
  std::vector<int> perm_s(src.size()), perm_t(tgt.size());
  const size_t paired = std::min(src.size(), tgt.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if ((epoch - 1) % cfg.refresh_period == 0) pseudo = refresh();
    std::iota(perm_s.begin(), perm_s.end(), 0);
    std::iota(perm_t.begin(), perm_t.end(), 0);
    std::shuffle(perm_s.begin(), perm_s.end(), rng);
    std::shuffle(perm_t.begin(), perm_t.end(), rng);

    int step = 0;
    for (size_t start = 0; start < paired; start += cfg.batch_size, ++step) {
      const size_t stop = std::min(paired, start + static_cast<size_t>(cfg.batch_size));
      TrainBatch b;
      for (size_t k = start; k < stop; ++k) {
        b.source.push_back(src[perm_s[k]]);
        b.source_labels.push_back(ys[perm_s[k]]);
        b.target.push_back(tgt[perm_t[k]]);
        b.target_pseudo.push_back(pseudo[perm_t[k]]);
      }
      double loss;
      std::string detail;
      if (cfg.mode == TrainMode::deepjdot) {
        loss = deepjdot_step(model, b, cfg.weights, cfg.lr).loss;
      } else {
        const Objective obj = dot_objective(model, b, cfg.weights, cfg.mode);
        loss = obj.loss.total;
        std::ostringstream os;
        os << " (ce " << obj.loss.ce << ", mda " << obj.loss.mda << ", cda " << obj.loss.cda << ")";
        detail = os.str();
        if (std::isfinite(loss) && obj.grad.all_finite()) apply_gradient(model, obj.grad, cfg.lr);
        else loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", step " << step << detail;
        throw NumericalError(os.str());
      }
    }
    history.push_back(evaluate(model, source, target, pseudo, cfg, epoch));
  }
  return history;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,ce,mda,cda,total,source_acc,target_acc\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.ce,
                  r.mda, r.cda, r.total, r.source_acc, r.target_acc);
    out << buf;
  }
}

}  // namespace spdot
