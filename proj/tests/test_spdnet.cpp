#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "spdot/error.hpp"
#include "spdot/gradcheck.hpp"
#include "spdot/spdnet.hpp"
#include "spdot/synth.hpp"
#include "test_util.hpp"

using namespace spdot;
using namespace spdot::testing;

namespace {

Matrix semi_orthogonal(int r, int c, std::mt19937_64& rng) {
  return random_orthogonal(c, rng).topRows(r);
}

double fd_sym_pairing_error(const std::function<double(const Matrix&)>& f, const Matrix& x,
                            const Matrix& g) {
  const int n = static_cast<int>(x.rows());
  Vector a(n * n), num(n * n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j, ++k) {
      Matrix d = Matrix::Zero(n, n);
      d(i, j) += 0.5;
      d(j, i) += 0.5;
      a(k) = g.cwiseProduct(d).sum();
      num(k) = directional_fd(f, x, d);
    }
  return (a - num).norm() / std::max({a.norm(), num.norm(), 1e-12});
}

}  // namespace

TEST(BiMap, ForwardExamples) {
  std::mt19937_64 rng(1);
  const SpdMatrix s = random_spd(3, rng);
  EXPECT_LE(rel_err(BiMapLayer(Matrix::Identity(3, 3)).forward(s).matrix(), s.matrix()), 1e-15);
  Matrix sel(1, 2);
  sel << 1, 0;
  EXPECT_DOUBLE_EQ(BiMapLayer(sel).forward(SpdMatrix::diagonal({2, 3}))(0, 0), 2.0);
  for (int t = 0; t < 20; ++t) {
    const BiMapLayer layer(semi_orthogonal(3, 5, rng));
    EXPECT_GT(layer.forward(random_spd(5, rng)).eig().values.minCoeff(), 0.0);
  }
}

TEST(BiMap, RejectsRankDeficientWeights) {
  Matrix w(2, 3);
  w << 1, 2, 3, 2, 4, 6;
  EXPECT_THROW(BiMapLayer{w}, DomainError);
  EXPECT_THROW(BiMapLayer{Matrix::Identity(3, 2)}, DimensionError);
}

TEST(BiMap, IdentityBackwardPassesGradientThrough) {
  std::mt19937_64 rng(2);
  const SymMatrix g = random_sym(4, rng);
  const auto grad = BiMapLayer(Matrix::Identity(4, 4)).backward(random_spd(4, rng), g);
  EXPECT_LE(rel_err(grad.ds.matrix(), g.matrix()), 1e-15);
}

TEST(ReEig, FloorsAndIsIdempotent) {
  const ReEigLayer layer(1e-4);
  const SpdMatrix out = layer.forward(SpdMatrix::diagonal({1e-6, 2.0}));
  EXPECT_NEAR(out(0, 0), 1e-4, 1e-18);
  EXPECT_NEAR(out(1, 1), 2.0, 1e-15);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const SpdMatrix s = random_spd(4, rng, 1e-6, 1.0);
    const SpdMatrix once = ReEigLayer(0.1).forward(s);
    EXPECT_GE(once.eig().values.minCoeff(), 0.1 - 1e-12);
    EXPECT_LE(rel_err(ReEigLayer(0.1).forward(once).matrix(), once.matrix()), 1e-13);
  }
  const SpdMatrix big = random_spd(3, rng, 1.0, 2.0);
  EXPECT_LE(rel_err(layer.forward(big).matrix(), big.matrix()), 1e-14);
  EXPECT_THROW(ReEigLayer(0.0), InputError);
}

TEST(LogEig, AtIdentityGradientIsUpstream) {
  std::mt19937_64 rng(4);
  const SymMatrix g = random_sym(4, rng);
  EXPECT_LE(rel_err(logeig_backward(SpdMatrix::identity(4), g).matrix(), g.matrix()), 1e-15);
  EXPECT_EQ(logeig_forward(SpdMatrix::identity(2)).matrix(), Matrix::Zero(2, 2));
}

TEST(Layers, BackwardMatchesFiniteDifferencesOn4x4) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const SpdMatrix s = random_spd(4, rng);
    const SymMatrix g = random_sym(4, rng);
    auto flog = [&](const Matrix& x) {
      return g.matrix().cwiseProduct(spd_log(SymMatrix(symmetrize(x))).matrix()).sum();
    };
    EXPECT_LE(fd_sym_pairing_error(flog, s.matrix(), logeig_backward(s, g).matrix()), 1e-7);

    const Matrix w = semi_orthogonal(4, 4, rng);
    auto fmap = [&](const Matrix& x) { return g.matrix().cwiseProduct(w * x * w.transpose()).sum(); };
    EXPECT_LE(fd_sym_pairing_error(fmap, s.matrix(), BiMapLayer(w).backward(s, g).ds.matrix()),
              1e-8);
  }
}

TEST(TriVec, IsometricAndAdjoint) {
  std::mt19937_64 rng(6);
  const SymMatrix a = random_sym(5, rng), b = random_sym(5, rng);
  EXPECT_NEAR(tri_vec(a).dot(tri_vec(b)), a.matrix().cwiseProduct(b.matrix()).sum(), 1e-12);
  const Vector g = random_matrix(15, 1, rng);
  EXPECT_NEAR(tri_vec_adjoint(g, 5).matrix().cwiseProduct(a.matrix()).sum(), g.dot(tri_vec(a)),
              1e-12);
}

TEST(Model, ZeroHeadPredictsClassZero) {
  DotModel m = init_model(3, 3, 4, 1);
  m.head.weight.setZero();
  std::mt19937_64 rng(7);
  const auto act = forward(m, random_spd(3, rng));
  EXPECT_EQ(act.logits, Vector::Zero(4));
  EXPECT_EQ(predict(m, random_spd(3, rng)), 0);
}

TEST(Model, ReplicatedHeadRowsGiveInvariantPrediction) {
  DotModel m = init_model(3, 2, 3, 2);
  for (int c = 1; c < 3; ++c) m.head.weight.row(c) = m.head.weight.row(0);
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) EXPECT_EQ(predict(m, random_spd(3, rng)), 0);
}

TEST(Model, PredictionInvariantUnderPositiveRescaling) {
  DotModel m = init_model(4, 3, 3, 3);
  DotModel scaled = m;
  scaled.head.weight *= 2.5;
  scaled.head.bias *= 2.5;
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const SpdMatrix s = random_spd(4, rng);
    EXPECT_EQ(predict(m, s), predict(scaled, s));
  }
}

TEST(Model, DimensionMismatch) {
  const DotModel m = init_model(3, 3, 2, 1);
  EXPECT_THROW(forward(m, SpdMatrix::identity(4)), DimensionError);
  EXPECT_THROW(backward(m, Activations{}, Vector::Zero(2)), InputError);
}

TEST(Model, InitIsSemiOrthogonal) {
  const DotModel m = init_model(6, 4, 2, 5);
  const Matrix& w = m.bimap.weight();
  EXPECT_LE((w * w.transpose() - Matrix::Identity(4, 4)).norm(), 1e-12);
}

TEST(Stiefel, ZeroGradientAndSmallSteps) {
  std::mt19937_64 rng(10);
  const Matrix w = semi_orthogonal(3, 5, rng);
  EXPECT_EQ(stiefel_update(w, Matrix::Zero(3, 5), 0.1), w);
  const Matrix g = random_matrix(3, 5, rng);
  const double d1 = (stiefel_update(w, g, 1e-4) - w).norm();
  const double d2 = (stiefel_update(w, g, 1e-5) - w).norm();
  EXPECT_GT(d1, 0.0);
  EXPECT_NEAR(d1 / d2, 10.0, 1e-2);
  Matrix bad = g;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(stiefel_update(w, bad, 0.1), NumericalError);
}

TEST(Stiefel, InvariantOverManyUpdates) {
  std::mt19937_64 rng(11);
  Matrix w = semi_orthogonal(4, 6, rng);
  for (int t = 0; t < 100; ++t) w = stiefel_update(w, random_matrix(4, 6, rng), 0.3);
  EXPECT_LE((w * w.transpose() - Matrix::Identity(4, 4)).norm(), 1e-8);
}

TEST(Stiefel, StepIsADescentDirection) {
  // f(W) = <C, W>: a small Stiefel step must not increase f.
  std::mt19937_64 rng(12);
  const Matrix w = semi_orthogonal(3, 5, rng);
  const Matrix c = random_matrix(3, 5, rng);
  const Matrix next = stiefel_update(w, c, 1e-3);
  EXPECT_LT(c.cwiseProduct(next).sum(), c.cwiseProduct(w).sum());
}

TEST(Mdm, NearestSampleAndCentroid) {
  const std::vector<SpdMatrix> xs{SpdMatrix::identity(2), SpdMatrix::diagonal({9, 9})};
  const std::vector<int> ys{0, 1};
  for (Metric metric : {Metric::lem, Metric::airm}) {
    const MdmModel m = mdm_fit(xs, ys, 2, metric);
    EXPECT_EQ(mdm_predict(m, SpdMatrix::diagonal({1.5, 1.5})), 0);
    EXPECT_EQ(mdm_predict(m, SpdMatrix::diagonal({7, 8})), 1);
    EXPECT_EQ(mdm_predict(m, xs[1]), 1);
  }
  EXPECT_THROW(mdm_fit(xs, std::vector<int>{0, 0}, 2, Metric::lem), InputError);
  EXPECT_THROW(mdm_predict(MdmModel{}, xs[0]), InputError);
}

TEST(Mdm, SeparableGaussianClasses) {
  // Two log-domain Gaussians, sigma 0.1, centres 3 apart in LEM distance.
  const SpdMatrix c0 = SpdMatrix::identity(3);
  const SpdMatrix c1 = spd_exp(sym_basis(3, 0) * 3.0);
  auto a = sample_spd_gaussian({c0, 0.1, 40, 1});
  auto b = sample_spd_gaussian({c1, 0.1, 40, 2});
  std::vector<SpdMatrix> xs = a;
  xs.insert(xs.end(), b.begin(), b.end());
  std::vector<int> ys(40, 0);
  ys.insert(ys.end(), 40, 1);
  for (Metric metric : {Metric::lem, Metric::airm}) {
    const MdmModel m = mdm_fit(xs, ys, 2, metric);
    int hits = 0;
    for (size_t i = 0; i < xs.size(); ++i) hits += mdm_predict(m, xs[i]) == ys[i];
    EXPECT_EQ(hits, 80);
  }
}

TEST(Checkpoint, RoundTripAndTruncation) {
  const DotModel m = init_model(5, 3, 4, 17, 1e-3);
  const auto path = (std::filesystem::temp_directory_path() / "spdot_ckpt.bin").string();
  save_checkpoint(path, m);
  const DotModel back = load_checkpoint(path);
  EXPECT_EQ(back.bimap.weight(), m.bimap.weight());
  EXPECT_EQ(back.head.weight, m.head.weight);
  EXPECT_EQ(back.head.bias, m.head.bias);
  EXPECT_EQ(back.reeig.epsilon(), 1e-3);
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 16u + 8u + 8u * (15 + 4 * 6 + 4));

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  EXPECT_THROW(load_checkpoint(path), ParseError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::remove(path.c_str());
}

TEST(Gradcheck, SuiteWithinTolerance) {
  GradcheckOptions opts;
  opts.seeds = 12;
  const GradcheckReport rep = run_gradcheck(opts);
  EXPECT_TRUE(rep.passed) << rep.worst_check << " " << rep.max_rel_error;
  EXPECT_LE(rep.max_rel_error, 1e-5);
}
