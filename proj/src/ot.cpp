#include "spdot/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spdot/error.hpp"
#include "spdot/spd.hpp"

namespace spdot {

// ---- value types ----------------------------------------------------------

DiscreteMeasure::DiscreteMeasure(Vector weights) : w_(std::move(weights)) {
  if (w_.size() == 0) throw InputError("DiscreteMeasure: empty weight vector");
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (!std::isfinite(w_(i)) || w_(i) < 0.0) {
      std::ostringstream os;
      os << "DiscreteMeasure: weight " << i << " = " << w_(i) << " is not a nonnegative number";
      throw InputError(os.str());
    }
  }
  const double total = w_.sum();
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "DiscreteMeasure: weights sum to " << total << ", expected 1";
    throw InputError(os.str());
  }
}

DiscreteMeasure DiscreteMeasure::uniform(int n) {
  if (n <= 0) throw InputError("DiscreteMeasure::uniform: n must be positive");
  return DiscreteMeasure(Vector::Constant(n, 1.0 / n));
}

CostMatrix::CostMatrix(Matrix c) : c_(std::move(c)) {
  if (c_.size() == 0) throw InputError("CostMatrix: empty matrix");
  if (!c_.allFinite()) throw InputError("CostMatrix: non-finite entry");
  if (c_.minCoeff() < 0.0) throw InputError("CostMatrix: negative entry");
}

TransportPlan::TransportPlan(Matrix gamma) : g_(std::move(gamma)) {
  if (g_.size() == 0) throw InputError("TransportPlan: empty matrix");
  if (!g_.allFinite() || g_.minCoeff() < 0.0)
    throw InputError("TransportPlan: entries must be finite and nonnegative");
}

TransportPlan::TransportPlan(Matrix gamma, const DiscreteMeasure& mu, const DiscreteMeasure& nu)
    : TransportPlan(std::move(gamma)) {
  if (rows() != mu.size() || cols() != nu.size())
    throw DimensionError("TransportPlan: shape does not match the marginals");
  const double err = marginal_error(mu, nu);
  if (err > kMarginalTolerance) {
    std::ostringstream os;
    os << "TransportPlan: marginal constraint violated by " << err;
    throw InputError(os.str());
  }
}

TransportPlan TransportPlan::from_coupling(Matrix gamma) {
  TransportPlan p(std::move(gamma));
  if (std::abs(p.g_.sum() - 1.0) > kMarginalTolerance)
    throw InputError("TransportPlan: total mass must be 1");
  return p;
}

TransportPlan TransportPlan::identity(int n) {
  return TransportPlan(Matrix(Matrix::Identity(n, n) / n));
}

double TransportPlan::marginal_error(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const {
  if (rows() != mu.size() || cols() != nu.size())
    throw DimensionError("TransportPlan::marginal_error: shape mismatch");
  const double r = (row_sums() - mu.weights()).cwiseAbs().maxCoeff();
  const double c = (col_sums() - nu.weights()).cwiseAbs().maxCoeff();
  return std::max(r, c);
}

double TransportPlan::cost(const CostMatrix& c) const {
  if (c.rows() != rows() || c.cols() != cols())
    throw DimensionError("TransportPlan::cost: shape mismatch");
  return g_.cwiseProduct(c.matrix()).sum();
}

TransportPlan TransportPlan::transposed() const { return TransportPlan(Matrix(g_.transpose())); }

double identity_plan_deviation(const TransportPlan& plan) {
  if (plan.rows() != plan.cols())
    throw DimensionError("identity_plan_deviation: plan is not square");
  const int n = plan.rows();
  return (plan.matrix() - Matrix::Identity(n, n) / n).cwiseAbs().maxCoeff();
}

// ---- cost matrices --------------------------------------------------------

CostMatrix cost_matrix_lem(std::span<const SpdMatrix> sources, std::span<const SpdMatrix> targets,
                           GroundCost kind) {
  if (sources.empty() || targets.empty()) throw InputError("cost_matrix_lem: empty sample set");
  const int dim = sources.front().dim();
  std::vector<Matrix> ls, lt;
  for (const auto& s : sources) {
    if (s.dim() != dim) throw DimensionError("cost_matrix_lem: dimension mismatch");
    ls.push_back(spd_log(s).matrix());
  }
  for (const auto& t : targets) {
    if (t.dim() != dim) throw DimensionError("cost_matrix_lem: dimension mismatch");
    lt.push_back(spd_log(t).matrix());
  }
  Matrix d(ls.size(), lt.size());
  for (size_t i = 0; i < ls.size(); ++i) {
    for (size_t j = 0; j < lt.size(); ++j) {
      const double sq = (ls[i] - lt[j]).squaredNorm();
      d(i, j) = kind == GroundCost::squared_lem ? sq : std::sqrt(sq);
    }
  }
  return CostMatrix(std::move(d));
}

CostMatrix cost_matrix_sq_euclidean(std::span<const Vector> sources,
                                    std::span<const Vector> targets) {
  if (sources.empty() || targets.empty())
    throw InputError("cost_matrix_sq_euclidean: empty sample set");
  Matrix d(sources.size(), targets.size());
  for (size_t i = 0; i < sources.size(); ++i) {
    for (size_t j = 0; j < targets.size(); ++j) {
      if (sources[i].size() != targets[j].size())
        throw DimensionError("cost_matrix_sq_euclidean: dimension mismatch");
      d(i, j) = (sources[i] - targets[j]).squaredNorm();
    }
  }
  return CostMatrix(std::move(d));
}

// ---- transportation simplex -----------------------------------------------

namespace {

struct Cell {
  int i;
  int j;
  double flow;
};

class TransportationSimplex {
 public:
  TransportationSimplex(const Vector& supply, const Vector& demand, const Matrix& cost,
                        const EmdOptions& opts)
      : n_(static_cast<int>(supply.size())),
        m_(static_cast<int>(demand.size())),
        a_(supply),
        b_(demand),
        c_(cost),
        opts_(opts),
        basic_(n_, m_) {
    basic_.setConstant(-1);
    u_.setZero(n_);
    v_.setZero(m_);
  }

  void run() {
    vogel();
    const double threshold = -opts_.tol * std::max(1.0, c_.maxCoeff());
    int degenerate_run = 0;
    for (iterations_ = 0;; ++iterations_) {
      if (iterations_ >= opts_.max_iterations) {
        throw NumericalError("solve_emd: iteration limit reached");
      }
      compute_potentials();
      const bool bland = degenerate_run >= opts_.degenerate_switch;
      int ei = -1, ej = -1;
      double best = threshold;
      for (int i = 0; i < n_ && !(bland && ei >= 0); ++i) {
        for (int j = 0; j < m_; ++j) {
          if (basic_(i, j) >= 0) continue;
          const double r = c_(i, j) - u_(i) - v_(j);
          if (r < best) {
            best = bland ? threshold : r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) break;
      const double theta = pivot(ei, ej);
      degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
    }
    compute_potentials();
  }

  Matrix plan() const {
    Matrix g = Matrix::Zero(n_, m_);
    for (const auto& c : cells_) g(c.i, c.j) = std::max(0.0, c.flow);
    return g;
  }

  const Vector& u() const { return u_; }
  const Vector& v() const { return v_; }
  long iterations() const { return iterations_; }

 private:
  void add_cell(int i, int j, double flow) {
    basic_(i, j) = static_cast<int>(cells_.size());
    cells_.push_back({i, j, flow});
  }

  // Vogel's approximation. Exactly one line is retired per step (both on
  // the last step), so the result is a spanning tree of n + m - 1 cells.
  void vogel() {
    Vector s = a_, d = b_;
    std::vector<char> row_live(n_, 1), col_live(m_, 1);
    int rows_left = n_, cols_left = m_;
    constexpr double kInf = std::numeric_limits<double>::infinity();

    auto line_penalty = [&](bool is_row, int k, int& best_idx) {
      double m1 = kInf, m2 = kInf;
      best_idx = -1;
      const int len = is_row ? m_ : n_;
      for (int t = 0; t < len; ++t) {
        if (!(is_row ? col_live[t] : row_live[t])) continue;
        const double c = is_row ? c_(k, t) : c_(t, k);
        if (c < m1) {
          m2 = m1;
          m1 = c;
          best_idx = t;
        } else if (c < m2) {
          m2 = c;
        }
      }
      return m2 == kInf ? m1 : m2 - m1;
    };

    while (rows_left > 0 && cols_left > 0) {
      double best_pen = -1.0;
      int bi = -1, bj = -1;
      for (int i = 0; i < n_; ++i) {
        if (!row_live[i]) continue;
        int j;
        const double p = line_penalty(true, i, j);
        if (p > best_pen) {
          best_pen = p;
          bi = i;
          bj = j;
        }
      }
      for (int j = 0; j < m_; ++j) {
        if (!col_live[j]) continue;
        int i;
        const double p = line_penalty(false, j, i);
        if (p > best_pen) {
          best_pen = p;
          bi = i;
          bj = j;
        }
      }
      const double q = std::min(s(bi), d(bj));
      add_cell(bi, bj, q);
      s(bi) -= q;
      d(bj) -= q;
      const bool last = rows_left == 1 && cols_left == 1;
      if (last) {
        row_live[bi] = col_live[bj] = 0;
        --rows_left;
        --cols_left;
      } else if ((s(bi) <= d(bj) && rows_left > 1) || cols_left == 1) {
        row_live[bi] = 0;
        --rows_left;
      } else {
        col_live[bj] = 0;
        --cols_left;
      }
    }
  }

  void build_adjacency() {
    adj_.assign(n_ + m_, {});
    for (int k = 0; k < static_cast<int>(cells_.size()); ++k) {
      adj_[cells_[k].i].push_back(k);
      adj_[n_ + cells_[k].j].push_back(k);
    }
  }

  void compute_potentials() {
    build_adjacency();
    std::vector<char> seen(n_ + m_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    u_(0) = 0.0;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int k : adj_[node]) {
        const Cell& c = cells_[k];
        if (node < n_) {
          if (seen[n_ + c.j]) continue;
          v_(c.j) = c_(c.i, c.j) - u_(c.i);
          seen[n_ + c.j] = 1;
          stack.push_back(n_ + c.j);
        } else {
          if (seen[c.i]) continue;
          u_(c.i) = c_(c.i, c.j) - v_(c.j);
          seen[c.i] = 1;
          stack.push_back(c.i);
        }
      }
    }
    for (char s : seen)
      if (!s) throw NumericalError("solve_emd: basis is not a spanning tree");
  }

  // Enters (ei, ej), returns the step length.
  double pivot(int ei, int ej) {
    // Path in the basis tree from row ei to column ej.
    std::vector<int> parent_cell(n_ + m_, -1);
    std::vector<int> parent_node(n_ + m_, -1);
    std::vector<char> seen(n_ + m_, 0);
    std::vector<int> queue{ei};
    seen[ei] = 1;
    const int goal = n_ + ej;
    for (size_t h = 0; h < queue.size() && !seen[goal]; ++h) {
      const int node = queue[h];
      for (int k : adj_[node]) {
        const int other = node < n_ ? n_ + cells_[k].j : cells_[k].i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_cell[other] = k;
        parent_node[other] = node;
        queue.push_back(other);
      }
    }
    // Edges from the column end back to row ei; the one touching the
    // column loses flow, then signs alternate.
    std::vector<int> path;
    for (int node = goal; node != ei; node = parent_node[node]) path.push_back(parent_cell[node]);

    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (size_t t = 0; t < path.size(); t += 2) {
      const Cell& c = cells_[path[t]];
      const bool better = c.flow < theta ||
                          (c.flow == theta && leave >= 0 &&
                           std::pair(c.i, c.j) < std::pair(cells_[leave].i, cells_[leave].j));
      if (better) {
        theta = c.flow;
        leave = path[t];
      }
    }
    theta = std::max(0.0, theta);
    for (size_t t = 0; t < path.size(); ++t) {
      Cell& c = cells_[path[t]];
      c.flow += (t % 2 == 0) ? -theta : theta;
    }
    basic_(cells_[leave].i, cells_[leave].j) = -1;
    cells_[leave] = {ei, ej, theta};
    basic_(ei, ej) = leave;
    return theta;
  }

  int n_, m_;
  Vector a_, b_;
  const Matrix& c_;
  EmdOptions opts_;
  Eigen::MatrixXi basic_;
  std::vector<Cell> cells_;
  std::vector<std::vector<int>> adj_;
  Vector u_, v_;
  long iterations_ = 0;
};

}  // namespace

EmdResult solve_emd(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                    const EmdOptions& opts) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    std::ostringstream os;
    os << "solve_emd: cost is " << cost.rows() << "x" << cost.cols() << " but marginals have "
       << mu.size() << " and " << nu.size() << " entries";
    throw DimensionError(os.str());
  }
  if (std::abs(mu.weights().sum() - nu.weights().sum()) > 1e-9)
    throw InputError("solve_emd: source and target weights have different total mass");

  TransportationSimplex simplex(mu.weights(), nu.weights(), cost.matrix(), opts);
  simplex.run();
  EmdResult r{TransportPlan(simplex.plan(), mu, nu), 0.0, simplex.u(), simplex.v(),
              simplex.iterations()};
  r.cost = r.plan.cost(cost);
  return r;
}

// ---- barycentric map and c-concave transport ------------------------------

std::vector<SpdMatrix> barycentric_map_lem(const TransportPlan& plan,
                                           std::span<const SpdMatrix> sources,
                                           ColumnWeights weights) {
  if (static_cast<int>(sources.size()) != plan.rows()) {
    std::ostringstream os;
    os << "barycentric_map_lem: plan has " << plan.rows() << " rows but " << sources.size()
       << " sources were given";
    throw DimensionError(os.str());
  }
  const int dim = sources.front().dim();
  std::vector<Matrix> logs;
  logs.reserve(sources.size());
  for (const auto& s : sources) {
    if (s.dim() != dim) throw DimensionError("barycentric_map_lem: dimension mismatch");
    logs.push_back(spd_log(s).matrix());
  }
  const Vector mass = plan.col_sums();
  std::vector<SpdMatrix> out;
  out.reserve(plan.cols());
  for (int j = 0; j < plan.cols(); ++j) {
    double scale = 1.0;
    if (weights == ColumnWeights::normalized) {
      if (!(mass(j) > 0.0)) {
        std::ostringstream os;
        os << "barycentric_map_lem: column " << j << " of the plan has zero mass";
        throw InputError(os.str());
      }
      scale = 1.0 / mass(j);
    }
    Matrix acc = Matrix::Zero(dim, dim);
    for (int i = 0; i < plan.rows(); ++i) {
      const double w = plan(i, j) * scale;
      if (w != 0.0) acc += w * logs[i];
    }
    out.push_back(spd_exp(SymMatrix(acc)));
  }
  return out;
}

TransportAssignment c_concave_transport(const SpdMatrix& s, std::span<const SpdMatrix> mapped) {
  if (mapped.empty()) throw InputError("c_concave_transport: empty target set");
  const Matrix ls = spd_log(s).matrix();
  int best = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < mapped.size(); ++j) {
    if (mapped[j].dim() != s.dim()) throw DimensionError("c_concave_transport: dimension mismatch");
    const double c = 0.5 * (ls - spd_log(mapped[j]).matrix()).squaredNorm();
    if (c < best_cost) {
      best_cost = c;
      best = static_cast<int>(j);
    }
  }
  return {best, mapped[best]};
}

// ---- recovery checks ------------------------------------------------------

namespace {

void check_distinct(std::span<const Vector> xs) {
  for (size_t i = 0; i < xs.size(); ++i) {
    for (size_t j = i + 1; j < xs.size(); ++j) {
      const double scale = std::max(1.0, xs[i].norm());
      if ((xs[i] - xs[j]).norm() <= 1e-12 * scale) {
        std::ostringstream os;
        os << "duplicate samples " << i << " and " << j;
        throw InputError(os.str());
      }
    }
  }
}

void check_spd_operator(const Matrix& a, const char* what) {
  try {
    SpdMatrix checked(a);
  } catch (const Error& e) {
    throw DomainError(std::string(what) + ": matrix must be symmetric positive definite (" +
                      e.what() + ")");
  }
}

// Solves uniform EMD from xs to targets under the squared l2 cost and
// compares the barycentric image of each x_i with expected[i].
AffineRecoveryReport recovery_report(std::span<const Vector> xs, std::span<const Vector> targets,
                                     std::span<const Vector> expected) {
  const int count = static_cast<int>(xs.size());
  const auto uniform = DiscreteMeasure::uniform(count);
  const EmdResult res = solve_emd(uniform, uniform, cost_matrix_sq_euclidean(xs, targets));

  AffineRecoveryReport rep;
  rep.objective = res.cost;
  rep.plan_deviation = identity_plan_deviation(res.plan);
  rep.identity_plan = rep.plan_deviation <= TransportPlan::kMarginalTolerance;
  const Vector mass = res.plan.row_sums();
  for (int i = 0; i < count; ++i) {
    Vector mapped = Vector::Zero(targets[0].size());
    for (int j = 0; j < count; ++j) mapped += res.plan(i, j) * targets[j];
    mapped /= mass(i);
    rep.map_error = std::max(rep.map_error, (mapped - expected[i]).norm());
  }
  return rep;
}

}  // namespace

AffineRecoveryReport verify_affine_recovery(std::span<const Vector> samples, const Matrix& a,
                                            const Vector& b) {
  if (samples.empty()) throw InputError("verify_affine_recovery: no samples");
  const auto n = static_cast<Eigen::Index>(samples.front().size());
  if (a.rows() != n || a.cols() != n || b.size() != n)
    throw DimensionError("verify_affine_recovery: A, b do not match the sample dimension");
  for (const auto& x : samples)
    if (x.size() != n) throw DimensionError("verify_affine_recovery: ragged samples");
  check_spd_operator(a, "verify_affine_recovery");
  check_distinct(samples);

  std::vector<Vector> targets;
  targets.reserve(samples.size());
  for (const auto& x : samples) targets.push_back(a * x + b);
  return recovery_report(samples, targets, targets);
}

BimapRecoveryReport verify_bimap_recovery(std::span<const SpdMatrix> samples, const Matrix& w) {
  if (samples.empty()) throw InputError("verify_bimap_recovery: no samples");
  const int d = samples.front().dim();
  if (w.rows() != d || w.cols() != d)
    throw DimensionError("verify_bimap_recovery: W must be square of the sample dimension");
  check_spd_operator(w, "verify_bimap_recovery");

  const Matrix k = bimap_as_kron(w);
  std::vector<Vector> xs, pushed, kron_image;
  BimapRecoveryReport rep;
  for (const auto& s : samples) {
    if (s.dim() != d) throw DimensionError("verify_bimap_recovery: dimension mismatch");
    xs.push_back(vec(s.matrix()));
    pushed.push_back(vec(w * s.matrix() * w.transpose()));
    kron_image.push_back(k * xs.back());
    rep.kron_identity_error =
        std::max(rep.kron_identity_error, (pushed.back() - kron_image.back()).cwiseAbs().maxCoeff());
  }
  check_distinct(xs);
  rep.affine = recovery_report(xs, pushed, kron_image);
  return rep;
}

bool corollary_identity_plan(std::span<const SpdMatrix> source_band_means,
                             std::span<const SpdMatrix> target_band_means) {
  if (source_band_means.size() != target_band_means.size()) {
    std::ostringstream os;
    os << "corollary_identity_plan: " << source_band_means.size() << " source bands vs "
       << target_band_means.size() << " target bands";
    throw DimensionError(os.str());
  }
  const int k = static_cast<int>(source_band_means.size());
  const auto uniform = DiscreteMeasure::uniform(k);
  const EmdResult res =
      solve_emd(uniform, uniform, cost_matrix_lem(source_band_means, target_band_means));
  return identity_plan_deviation(res.plan) <= TransportPlan::kMarginalTolerance;
}

}  // namespace spdot
