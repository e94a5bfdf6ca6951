#include "spdot/gradcheck.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "spdot/dot.hpp"
#include "spdot/error.hpp"
#include "spdot/spd.hpp"
#include "spdot/spdnet.hpp"

namespace spdot {

double gradient_rel_error(const Vector& analytic, const Vector& numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient_rel_error: size mismatch");
  return (analytic - numeric).norm() / std::max({analytic.norm(), numeric.norm(), 1e-12});
}

namespace {

using Rng = std::mt19937_64;

Matrix gaussian(int r, int c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Matrix orthogonal(int n, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

SymMatrix random_sym(int n, Rng& rng) {
  const Matrix a = gaussian(n, n, rng);
  return SymMatrix(symmetrize(a));
}

// Eigenvalues log-uniform in [lo, hi], two of them exactly gap apart.
SpdMatrix planted_spd(int n, double gap, Rng& rng, double lo = 0.2, double hi = 5.0) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  Vector s(n);
  for (int i = 0; i < n; ++i) s(i) = std::exp(u(rng));
  if (n >= 2) s(1) = s(0) + gap;
  const Matrix q = orthogonal(n, rng);
  return SpdMatrix(Matrix(q * s.asDiagonal() * q.transpose()));
}

// Symmetric directions D_k: E_ii, then E_ij + E_ji for i < j.
std::vector<Matrix> sym_directions(int n) {
  std::vector<Matrix> out;
  for (int i = 0; i < n; ++i) {
    Matrix d = Matrix::Zero(n, n);
    d(i, i) = 1.0;
    out.push_back(d);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Matrix d = Matrix::Zero(n, n);
      d(i, j) = d(j, i) = 1.0;
      out.push_back(d);
    }
  return out;
}

using ScalarOfMatrix = std::function<double(const Matrix&)>;

// Compares <G, D_k> against central differences of f along each D_k.
double check_sym_input(const ScalarOfMatrix& f, const Matrix& x, const Matrix& g, double h) {
  const auto dirs = sym_directions(static_cast<int>(x.rows()));
  Vector a(dirs.size()), num(dirs.size());
  for (size_t k = 0; k < dirs.size(); ++k) {
    a(k) = g.cwiseProduct(dirs[k]).sum();
    num(k) = (f(x + h * dirs[k]) - f(x - h * dirs[k])) / (2.0 * h);
  }
  return gradient_rel_error(a, num);
}

// Entrywise central differences of f at x against the full gradient g.
double check_dense(const ScalarOfMatrix& f, const Matrix& x, const Matrix& g, double h) {
  Vector a(x.size()), num(x.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j, ++k) {
      Matrix p = x, m = x;
      p(i, j) += h;
      m(i, j) -= h;
      a(k) = g(i, j);
      num(k) = (f(p) - f(m)) / (2.0 * h);
    }
  }
  return gradient_rel_error(a, num);
}

TrainBatch random_batch(int dim, int classes, int ns, int nt, double gap, Rng& rng) {
  TrainBatch b;
  for (int i = 0; i < ns; ++i) {
    b.source.push_back(planted_spd(dim, gap, rng));
    b.source_labels.push_back(i % classes);
  }
  for (int j = 0; j < nt; ++j) {
    b.target.push_back(planted_spd(dim, gap, rng));
    b.target_pseudo.push_back((j + 1) % classes);
  }
  return b;
}

DotModel with_params(const DotModel& m, const Matrix* w, const Matrix* head, const Vector* bias) {
  DotModel out = m;
  if (w) out.bimap = BiMapLayer(*w);
  if (head) out.head.weight = *head;
  if (bias) out.head.bias = *bias;
  return out;
}

// Full-model check of an objective with its analytic gradient.
void check_model(const std::string& name, std::uint64_t seed, int dim, const DotModel& model,
                 const std::function<Objective(const DotModel&)>& obj, double h,
                 std::vector<GradcheckEntry>& out) {
  const Objective o = obj(model);
  auto value = [&](const DotModel& m) { return obj(m).loss.total; };
  const Matrix bias_col = model.head.bias;
  out.push_back({name + ".W", seed, dim,
                 check_dense([&](const Matrix& w) { return value(with_params(model, &w, nullptr, nullptr)); },
                             model.bimap.weight(), o.grad.dw, h)});
  out.push_back({name + ".head", seed, dim,
                 check_dense([&](const Matrix& a) { return value(with_params(model, nullptr, &a, nullptr)); },
                             model.head.weight, o.grad.dhead, h)});
  out.push_back({name + ".bias", seed, dim,
                 check_dense(
                     [&](const Matrix& b) {
                       const Vector v = b.col(0);
                       return value(with_params(model, nullptr, nullptr, &v));
                     },
                     bias_col, Matrix(o.grad.dbias), h)});
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  if (opts.seeds <= 0 || opts.min_dim < 2 || opts.max_dim < opts.min_dim || !(opts.h > 0.0))
    throw InputError("run_gradcheck: invalid options");
  GradcheckReport rep;
  const double h = opts.h;
  const int span = opts.max_dim - opts.min_dim + 1;
  for (int s = 0; s < opts.seeds; ++s) {
    const std::uint64_t seed = static_cast<std::uint64_t>(s);
    Rng rng(seed);
    const int d = opts.min_dim + s % span;
    // Planted gaps sweep from 1e-2 down to min_gap across seeds.
    const double t = opts.seeds > 1 ? double(s) / (opts.seeds - 1) : 1.0;
    const double gap = std::exp(std::log(1e-2) + t * (std::log(opts.min_gap) - std::log(1e-2)));
    const int d_out = (s % 2 == 0) ? d : d - 1;

    // Bi-Map: weight and input.
    {
      const SpdMatrix x = planted_spd(d, gap, rng);
      const Matrix w = gaussian(d_out, d, rng);
      const BiMapLayer layer(w);
      const SymMatrix g = random_sym(d_out, rng);
      const auto grad = layer.backward(x, g);
      auto fw = [&](const Matrix& ww) {
        return g.matrix().cwiseProduct(ww * x.matrix() * ww.transpose()).sum();
      };
      auto fx = [&](const Matrix& xx) {
        return g.matrix().cwiseProduct(w * xx * w.transpose()).sum();
      };
      rep.entries.push_back({"bimap.W", seed, d, check_dense(fw, w, grad.dw, h)});
      rep.entries.push_back({"bimap.input", seed, d, check_sym_input(fx, x.matrix(), grad.ds.matrix(), h)});
    }
    // ReEig with the threshold in the middle of the widest spectral gap,
    // so some eigenvalues are clipped and none sits near the kink.
    {
      const SpdMatrix x = planted_spd(d, gap, rng);
      const Vector& lam = x.eig().values;
      int k = 0;
      for (int i = 1; i + 1 < d; ++i)
        if (lam(i) - lam(i + 1) > lam(k) - lam(k + 1)) k = i;
      const double eps = 0.5 * (lam(k) + lam(k + 1));
      const ReEigLayer layer(eps);
      const SymMatrix g = random_sym(d, rng);
      const SymMatrix grad = layer.backward(x, g);
      auto f = [&](const Matrix& xx) {
        const EigDecomp e = sym_eig(SymMatrix(symmetrize(xx)));
        return g.matrix().cwiseProduct(apply_spectral(e, [eps](double v) { return std::max(eps, v); })).sum();
      };
      rep.entries.push_back({"reeig.input", seed, d, check_sym_input(f, x.matrix(), grad.matrix(), h)});
    }
    // LogEig.
    {
      const SpdMatrix x = planted_spd(d, gap, rng);
      const SymMatrix g = random_sym(d, rng);
      const SymMatrix grad = logeig_backward(x, g);
      auto f = [&](const Matrix& xx) {
        return g.matrix().cwiseProduct(spd_log(SymMatrix(symmetrize(xx))).matrix()).sum();
      };
      rep.entries.push_back({"logeig.input", seed, d, check_sym_input(f, x.matrix(), grad.matrix(), h)});
    }
    // Chart gradient of 1/2 d_LEM(P, Q)^2 at X = log P.
    {
      const SpdMatrix p = planted_spd(d, gap, rng), q = planted_spd(d, gap, rng);
      const Matrix lq = spd_log(q).matrix();
      auto f = [&](const Matrix& x) { return 0.5 * (x - lq).squaredNorm(); };
      rep.entries.push_back({"chart.half_sq_lem", seed, d,
                             check_sym_input(f, spd_log(p).matrix(),
                                             lem_half_sq_distance_gradient(p, q).matrix(), h)});
    }
    // Full model: combined objective and DeepJDOT with a fixed coupling.
    {
      const int classes = 2 + s % 2;
      DotModel model = init_model(d, d_out, classes, seed + 1000);
      Matrix head = gaussian(classes, d_out * (d_out + 1) / 2, rng) * 0.3;
      model.head.weight = head;
      model.head.bias = gaussian(classes, 1, rng).col(0) * 0.1;
      const TrainBatch batch = random_batch(d, classes, 4, 3, gap, rng);
      const LossWeights w{1.0, 0.7, 0.4, 0.5, 0.3};
      check_model("model.total", seed, d, model,
                  [&](const DotModel& m) { return dot_objective(m, batch, w, TrainMode::mda_cda); },
                  h, rep.entries);
      Matrix gamma = gaussian(4, 3, rng).cwiseAbs();
      gamma /= gamma.sum();
      check_model("model.deepjdot", seed, d, model,
                  [&](const DotModel& m) { return deepjdot_objective(m, batch, gamma, w); }, h,
                  rep.entries);
    }
  }
  for (const auto& e : rep.entries) {
    if (rep.worst_check.empty() || e.rel_error > rep.max_rel_error) {
      rep.max_rel_error = e.rel_error;
      rep.worst_check = e.check;
    }
  }
  rep.passed = rep.max_rel_error <= opts.tolerance;
  return rep;
}

}  // namespace spdot
