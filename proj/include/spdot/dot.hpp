#pragma once

// Domain adaptation losses (MDA, CDA, DeepJDOT) and the training loop.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdot/dataset.hpp"
#include "spdot/ot.hpp"
#include "spdot/spdnet.hpp"

namespace spdot {

struct LossWeights {
  double alpha1 = 1.0;  // cross-entropy
  double alpha2 = 1.0;  // MDA^2
  double alpha3 = 1.0;  // CDA^2
  double jd_alpha1 = 1.0;  // DeepJDOT feature term
  double jd_alpha2 = 1.0;  // DeepJDOT label term
  void validate() const;  // InputError unless every weight is finite and >= 0
};

enum class TrainMode { source_only, mda, cda, mda_cda, deepjdot };
std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);  // "mda+cda" for mda_cda

/// Weights with the terms a mode does not use set to zero.
LossWeights effective_weights(const LossWeights& w, TrainMode mode);

// ---- losses ---------------------------------------------------------------

/// ||mean_i log S_i - mean_j log T_j||_F on embedded (post-ReEig) batches.
double mda_loss(std::span<const SpdMatrix> embed_s, std::span<const SpdMatrix> embed_t);
double mda_loss_logs(std::span<const SymMatrix> log_s, std::span<const SymMatrix> log_t);

/// Sum over classes present in both batches of the per-class MDA.
/// Classes missing from either side contribute 0.
double cda_loss(std::span<const SpdMatrix> embed_s, std::span<const int> labels_s,
                std::span<const SpdMatrix> embed_t, std::span<const int> pseudo_t,
                int num_classes);
double cda_loss_logs(std::span<const SymMatrix> log_s, std::span<const int> labels_s,
                     std::span<const SymMatrix> log_t, std::span<const int> pseudo_t,
                     int num_classes);

/// Mean of -log softmax(logits_i)[y_i].
double cross_entropy(std::span<const Vector> logits, std::span<const int> labels);

struct LossBreakdown {
  double ce = 0.0;
  double mda = 0.0;
  double cda = 0.0;
  double total = 0.0;
};

/// alpha1 CE + alpha2 MDA^2 + alpha3 CDA^2. pseudo_t may be empty when
/// alpha3 == 0.
LossBreakdown dot_total_loss(std::span<const Vector> logits_s, std::span<const int> labels_s,
                             std::span<const SpdMatrix> embed_s,
                             std::span<const SpdMatrix> embed_t, std::span<const int> pseudo_t,
                             int num_classes, const LossWeights& w);

struct SourceTerms {
  double ce = 0.0;
  double mda = 0.0;
  double cda = 0.0;
};

/// sum_i alpha1^i CE_i + alpha2^i MDA_i^p + alpha3^i CDA_i^p with p = 2 when
/// squared, else 1.
double multi_source_loss(std::span<const SourceTerms> terms, std::span<const LossWeights> weights,
                         bool squared = true);

// ---- batches and objectives -----------------------------------------------

struct TrainBatch {
  std::vector<SpdMatrix> source;
  std::vector<int> source_labels;
  std::vector<SpdMatrix> target;
  std::vector<int> target_pseudo;  // empty when unavailable

  void validate(int num_classes) const;
};

struct Objective {
  LossBreakdown loss;
  ModelGrad grad;
};

/// Eq.-7-style objective of one batch and its gradient w.r.t. every model
/// parameter. Terms whose effective weight is 0 contribute no gradient.
Objective dot_objective(const DotModel& model, const TrainBatch& batch, const LossWeights& w,
                        TrainMode mode);

/// alpha1 CE(source) + sum_ij gamma_ij (jd_alpha1 d_LEM^2(g(S_i), g(T_j))
///   + jd_alpha2 CE(y_i, f(g(T_j)))) for a fixed coupling gamma (source x target).
double deepjdot_loss(const DotModel& model, const TrainBatch& batch, const Matrix& gamma,
                     const LossWeights& w);
Objective deepjdot_objective(const DotModel& model, const TrainBatch& batch, const Matrix& gamma,
                             const LossWeights& w);

struct DeepJdotStep {
  TransportPlan plan;
  double loss = 0.0;  // before the step
};

/// Solves EMD between the embedded batch halves (squared LEM cost, uniform
/// weights), then takes one gradient step with the plan held fixed.
DeepJdotStep deepjdot_step(DotModel& model, const TrainBatch& batch, const LossWeights& w,
                           double lr);

std::vector<int> refresh_pseudo_labels(const MdmModel& mdm, std::span<const SpdMatrix> targets);
std::vector<int> refresh_pseudo_labels(const DotModel& model, std::span<const SpdMatrix> targets);

// ---- training -------------------------------------------------------------

enum class PseudoLabelSource { mdm, network };

/// Flat key=value file; see docs/formats.md.
struct TrainConfig {
  int epochs = 100;
  int batch_size = 50;
  double lr = 1e-2;
  int refresh_period = 1;
  std::uint64_t seed = 42;
  LossWeights weights;
  TrainMode mode = TrainMode::mda;
  PseudoLabelSource pseudo_labels = PseudoLabelSource::mdm;
  Metric mdm_metric = Metric::lem;

  void validate() const;
};

/// Throws ParseError with the line number on syntax errors, unknown keys
/// and invalid values.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double ce = 0.0;
  double mda = 0.0;
  double cda = 0.0;
  double total = 0.0;
  double source_acc = 0.0;
  double target_acc = 0.0;
};

/// Full-data loss components and accuracies; target labels are only used
/// for target_acc.
EpochRecord evaluate(const DotModel& model, const SpdDataset& source, const SpdDataset& target,
                     std::span<const int> pseudo_t, const TrainConfig& cfg, int epoch);

/// Trains in place. The history starts with epoch 0 (the initial model).
/// Throws NumericalError naming epoch and step if the loss turns non-finite.
std::vector<EpochRecord> train(DotModel& model, const SpdDataset& source,
                               const SpdDataset& target, const TrainConfig& cfg);

/// Header: epoch,ce,mda,cda,total,source_acc,target_acc
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace spdot
