#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "spdot/error.hpp"
#include "spdot/linalg.hpp"
#include "test_util.hpp"

using namespace spdot;
using namespace spdot::testing;

TEST(SymMatrix, RejectsAsymmetricInput) {
  Matrix a(2, 2);
  a << 1, 2, 2.1, 1;
  EXPECT_THROW(SymMatrix{a}, DomainError);
  EXPECT_THROW(SymMatrix{Matrix(2, 3)}, DimensionError);
}

TEST(SymMatrix, SymmetrizesWithinTolerance) {
  Matrix a(2, 2);
  a << 1, 2, 2 + 1e-12, 1;
  const SymMatrix s(a);
  EXPECT_EQ(s.matrix()(0, 1), s.matrix()(1, 0));
}

TEST(SpdMatrix, RejectsIndefiniteAndSingular) {
  EXPECT_THROW(SpdMatrix::diagonal({1.0, -1.0}), DomainError);
  EXPECT_THROW(SpdMatrix::diagonal({1.0, 0.0}), DomainError);
  EXPECT_THROW(SpdMatrix::diagonal({1.0, 1e-13}), DomainError);
  EXPECT_NO_THROW(SpdMatrix::diagonal({1.0, 1e-11}));
}

TEST(SymEig, AgreesWithEigenSelfAdjointSolver) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 7;
    const SymMatrix a = random_sym(n, rng, 3.0);
    const EigDecomp e = sym_eig(a);
    Eigen::SelfAdjointEigenSolver<Matrix> ref(a.matrix());
    const Vector expected = ref.eigenvalues().reverse();
    EXPECT_LE((e.values - expected).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, a.norm()));
    EXPECT_LE((e.reconstruct() - a.matrix()).norm(), 1e-12 * std::max(1.0, a.norm()));
    EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix::Identity(n, n)).norm(), 1e-13);
    for (int k = 0; k + 1 < n; ++k) EXPECT_GE(e.values(k), e.values(k + 1));
  }
}

TEST(SymEig, SignConventionLargestComponentPositive) {
  std::mt19937_64 rng(3);
  const SymMatrix a = random_sym(5, rng);
  const EigDecomp e = sym_eig(a);
  for (int k = 0; k < 5; ++k) {
    Eigen::Index arg;
    e.vectors.col(k).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(e.vectors(arg, k), 0.0);
  }
}

TEST(SymEig, WideSpectrum) {
  std::mt19937_64 rng(11);
  Vector s(4);
  s << 1e4, 1.0, 1e-2, 1e-4;
  const SpdMatrix p = spd_with_spectrum(s, rng);
  const Vector got = p.eig().values;
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(got(i) / s(i), 1.0, 1e-6);
}

TEST(Loewner, DivergesToDerivativeOnTies) {
  EigDecomp e;
  e.values = Vector::Constant(3, 2.0);
  e.vectors = Matrix::Identity(3, 3);
  const Matrix l = loewner_matrix(e, [](double x) { return std::log(x); },
                                  [](double x) { return 1.0 / x; });
  EXPECT_TRUE(l.isApprox(Matrix::Constant(3, 3, 0.5)));
}

TEST(SpectralDerivative, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 6;
    const SpdMatrix p = random_spd(n, rng);
    const SymMatrix v = random_sym(n, rng);
    const SymMatrix w = random_sym(n, rng);
    auto f = [&](const Matrix& x) {
      const Matrix lx = apply_spectral(sym_eig(SymMatrix(x)), [](double t) { return std::log(t); });
      return (lx.cwiseProduct(w.matrix())).sum();
    };
    const Matrix d = spectral_derivative(p.eig(), [](double t) { return std::log(t); },
                                         [](double t) { return 1.0 / t; }, v.matrix());
    const double analytic = d.cwiseProduct(w.matrix()).sum();
    EXPECT_LE(rel_err(analytic, directional_fd(f, p.matrix(), v.matrix())), 1e-7);
  }
}
