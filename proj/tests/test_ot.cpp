#include <gtest/gtest.h>

#include <random>

#include "spdot/error.hpp"
#include "spdot/ot.hpp"
#include "spdot/spd.hpp"
#include "test_util.hpp"

using namespace spdot;
using namespace spdot::testing;

namespace {

Matrix random_cost(int n, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Matrix c(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) c(i, j) = u(rng);
  return c;
}

Vector random_weights(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector w(n);
  for (int i = 0; i < n; ++i) w(i) = u(rng);
  w /= w.sum();
  w(n - 1) = 1.0 - w.head(n - 1).sum();
  return w;
}

}  // namespace

TEST(DiscreteMeasure, Validation) {
  EXPECT_THROW(DiscreteMeasure(Vector::Constant(2, 0.6)), InputError);
  Vector neg(2);
  neg << 1.5, -0.5;
  EXPECT_THROW(DiscreteMeasure{neg}, InputError);
  EXPECT_NO_THROW(DiscreteMeasure::uniform(7));
}

TEST(Emd, UniformMatchesBruteForcePermutation) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const Matrix c = random_cost(n, n, rng);
    const auto mu = DiscreteMeasure::uniform(n);
    const EmdResult r = solve_emd(mu, mu, CostMatrix(c));
    EXPECT_NEAR(r.cost, brute_force_assignment(c), 1e-9) << "trial " << trial;
    EXPECT_LE(r.plan.marginal_error(mu, mu), 1e-9);
  }
}

TEST(Emd, DualCertificateOnRandomWeights) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 9, m = 2 + (trial * 7) % 11;
    const Matrix c = random_cost(n, m, rng);
    const DiscreteMeasure mu(random_weights(n, rng)), nu(random_weights(m, rng));
    const EmdResult r = solve_emd(mu, nu, CostMatrix(c));
    // Feasible duals with equal objective certify optimality.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) EXPECT_LE(r.u(i) + r.v(j), c(i, j) + 1e-9);
    const double dual = r.u.dot(mu.weights()) + r.v.dot(nu.weights());
    EXPECT_NEAR(dual, r.cost, 1e-9);
    EXPECT_LE(r.plan.marginal_error(mu, nu), 1e-9);
  }
}

TEST(Emd, MarginalsHoldUpTo128) {
  std::mt19937_64 rng(102);
  for (int n : {16, 64, 128}) {
    const auto mu = DiscreteMeasure::uniform(n);
    const EmdResult r = solve_emd(mu, mu, CostMatrix(random_cost(n, n, rng)));
    EXPECT_LE(r.plan.marginal_error(mu, mu), 1e-9);
  }
}

TEST(Emd, DegenerateCostsTerminate) {
  const auto mu = DiscreteMeasure::uniform(12);
  const EmdResult r = solve_emd(mu, mu, CostMatrix(Matrix::Zero(12, 12)));
  EXPECT_EQ(r.cost, 0.0);
  Matrix c = Matrix::Ones(10, 10);
  const auto nu = DiscreteMeasure::uniform(10);
  EXPECT_NEAR(solve_emd(nu, nu, CostMatrix(c)).cost, 1.0, 1e-12);
}

TEST(Emd, Deterministic) {
  std::mt19937_64 rng(103);
  const Matrix c = random_cost(9, 9, rng).array().round();
  const auto mu = DiscreteMeasure::uniform(9);
  const Matrix a = solve_emd(mu, mu, CostMatrix(c)).plan.matrix();
  const Matrix b = solve_emd(mu, mu, CostMatrix(c)).plan.matrix();
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Emd, ShapeAndMassErrors) {
  const auto mu = DiscreteMeasure::uniform(3);
  EXPECT_THROW(solve_emd(mu, mu, CostMatrix(Matrix::Zero(3, 4))), DimensionError);
}

TEST(Emd, IdenticalSetsGiveIdentityCoupling) {
  std::mt19937_64 rng(104);
  std::vector<SpdMatrix> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(random_spd(3, rng));
  const auto mu = DiscreteMeasure::uniform(10);
  const EmdResult r = solve_emd(mu, mu, cost_matrix_lem(xs, xs));
  EXPECT_EQ(r.cost, 0.0);
  EXPECT_LE(identity_plan_deviation(r.plan), 1e-15);
}

TEST(CostMatrix, SquaredAndUnsquaredLem) {
  std::mt19937_64 rng(105);
  std::vector<SpdMatrix> a{random_spd(3, rng), random_spd(3, rng)};
  std::vector<SpdMatrix> b{random_spd(3, rng)};
  const CostMatrix sq = cost_matrix_lem(a, b);
  const CostMatrix un = cost_matrix_lem(a, b, GroundCost::lem);
  for (int i = 0; i < 2; ++i) {
    const double d = lem_distance(a[i], b[0]);
    EXPECT_NEAR(sq(i, 0), d * d, 1e-12);
    EXPECT_NEAR(un(i, 0), d, 1e-12);
  }
}

TEST(Barycentric, IdentityCouplingReproducesSources) {
  std::mt19937_64 rng(106);
  std::vector<SpdMatrix> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_spd(3, rng));
  const auto plan = TransportPlan::identity(5);
  const auto mapped = barycentric_map_lem(plan, xs);
  for (int i = 0; i < 5; ++i) EXPECT_LE(rel_err(mapped[i].matrix(), xs[i].matrix()), 1e-12);
  // Unnormalized columns give exp(log S / N) = S^{1/N}.
  const auto raw = barycentric_map_lem(plan, xs, ColumnWeights::raw);
  for (int i = 0; i < 5; ++i)
    EXPECT_LE(rel_err(raw[i].matrix(), spd_pow(xs[i], 0.2).matrix()), 1e-12);
}

TEST(Barycentric, ColumnAveragesAreLemMeans) {
  std::mt19937_64 rng(107);
  std::vector<SpdMatrix> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(random_spd(3, rng));
  const auto plan = TransportPlan::from_coupling(Matrix::Constant(4, 2, 1.0 / 8.0));
  const auto mapped = barycentric_map_lem(plan, xs);
  ASSERT_EQ(mapped.size(), 2u);
  EXPECT_LE(rel_err(mapped[0].matrix(), lem_frechet_mean(xs).matrix()), 1e-12);
}

TEST(Barycentric, ZeroMassColumnIsNamed) {
  Matrix g = Matrix::Zero(2, 3);
  g(0, 0) = 0.5;
  g(1, 2) = 0.5;
  const auto plan = TransportPlan::from_coupling(g);
  const std::vector<SpdMatrix> xs{SpdMatrix::identity(2), SpdMatrix::identity(2)};
  try {
    barycentric_map_lem(plan, xs);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
  }
}

TEST(CConcave, NearestMappedPointSmallestIndexOnTies) {
  const std::vector<SpdMatrix> t{SpdMatrix::diagonal({2, 2}), SpdMatrix::diagonal({0.5, 0.5}),
                                 SpdMatrix::diagonal({4, 4})};
  const auto a = c_concave_transport(SpdMatrix::identity(2), t);
  EXPECT_EQ(a.index, 0);
  const auto b = c_concave_transport(SpdMatrix::diagonal({3.5, 3.5}), t);
  EXPECT_EQ(b.index, 2);
}

TEST(CConcave, AgreesWithEmdOnMappedSet) {
  // Once sources coincide with the barycentric images, the c-concave map
  // sends each source to its own image.
  std::mt19937_64 rng(108);
  std::vector<SpdMatrix> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_spd(3, rng));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(c_concave_transport(xs[i], xs).index, i);
}

TEST(Recovery, AffineAndBimap) {
  std::mt19937_64 rng(109);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vector> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(random_matrix(3, 1, rng));
    const SpdMatrix a = random_spd(3, rng, 0.5, 5.0);
    const Vector b = random_matrix(3, 1, rng);
    const auto rep = verify_affine_recovery(xs, a.matrix(), b);
    EXPECT_TRUE(rep.passed()) << rep.plan_deviation << " " << rep.map_error;

    std::vector<SpdMatrix> ss;
    for (int i = 0; i < 8; ++i) ss.push_back(random_spd(3, rng));
    const auto br = verify_bimap_recovery(ss, random_spd(3, rng, 0.5, 2.0).matrix());
    EXPECT_TRUE(br.affine.passed());
    EXPECT_LE(br.kron_identity_error, 1e-12);
  }
}

TEST(Recovery, RejectsBadOperators) {
  std::vector<Vector> xs{Vector::Zero(2), Vector::Ones(2)};
  Matrix indefinite(2, 2);
  indefinite << 1, 0, 0, -1;
  EXPECT_THROW(verify_affine_recovery(xs, indefinite, Vector::Zero(2)), DomainError);
  std::vector<Vector> dup{Vector::Ones(2), Vector::Ones(2)};
  EXPECT_THROW(verify_affine_recovery(dup, Matrix::Identity(2, 2), Vector::Zero(2)), InputError);
}

TEST(BandMeans, BandCountMismatch) {
  const std::vector<SpdMatrix> a{SpdMatrix::identity(2)};
  const std::vector<SpdMatrix> b{SpdMatrix::identity(2), SpdMatrix::identity(2)};
  EXPECT_THROW(corollary_identity_plan(a, b), DimensionError);
}
