#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "spdot/dataset.hpp"
#include "spdot/error.hpp"
#include "spdot/ot.hpp"
#include "spdot/spd.hpp"
#include "spdot/synth.hpp"
#include "test_util.hpp"

using namespace spdot;
using namespace spdot::testing;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("spdot_" + name)).string();
}

std::string fixture(const std::string& name) { return std::string(SPDOT_FIXTURE_DIR) + "/" + name; }

}  // namespace

TEST(Gaussian, TinySigmaCollapsesOntoCenter) {
  std::mt19937_64 rng(1);
  const SpdMatrix c = random_spd(3, rng);
  for (const auto& s : sample_spd_gaussian({c, 1e-14, 10, 5}))
    EXPECT_LE(rel_err(s.matrix(), c.matrix()), 1e-12);
  EXPECT_THROW(sample_spd_gaussian({c, 0.0, 10, 5}), InputError);
}

TEST(Gaussian, LogMeanConvergesToLogCenter) {
  const double sigma = 0.4;
  const int n = 10000;
  const auto draws = sample_spd_gaussian({SpdMatrix::identity(3), sigma, n, 17});
  Matrix acc = Matrix::Zero(3, 3);
  Matrix sq = Matrix::Zero(3, 3);
  for (const auto& s : draws) {
    const Matrix l = spd_log(s).matrix();
    acc += l;
    sq += l.cwiseProduct(l);
  }
  acc /= n;
  sq /= n;
  EXPECT_LE(acc.cwiseAbs().maxCoeff(), 3.0 * sigma / std::sqrt(double(n)));
  // Frobenius-isometric chart: Var(x_ii) = sigma^2, Var(x_ij) = sigma^2 / 2.
  EXPECT_NEAR(sq(0, 0), sigma * sigma, 0.01);
  EXPECT_NEAR(sq(0, 1), sigma * sigma / 2, 0.01);
}

TEST(Gaussian, DeterministicGivenSeed) {
  const auto a = sample_spd_gaussian({SpdMatrix::identity(2), 0.4, 50, 42});
  const auto b = sample_spd_gaussian({SpdMatrix::identity(2), 0.4, 50, 42});
  for (size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE((a[i].matrix().array() == b[i].matrix().array()).all());
}

TEST(BimapShift, HandComputedExample) {
  Matrix w(2, 2);
  w << 1, 0.5, 0.5, 1;
  const std::vector<SpdMatrix> in{SpdMatrix::identity(2)};
  const auto out = apply_bimap_shift(w, in);
  Matrix want(2, 2);
  want << 1.25, 1, 1, 1.25;
  EXPECT_LE((out[0].matrix() - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(apply_bimap_shift(Matrix::Identity(2, 2), in)[0].matrix(), in[0].matrix());
}

TEST(BimapShift, PreservesDefinitenessAndRejectsSingular) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const auto data = sample_spd_gaussian({SpdMatrix::identity(4), 0.5, 5, 100u + t});
    for (const auto& s : apply_bimap_shift(random_matrix(4, 4, rng), data))
      EXPECT_GT(s.eig().values.minCoeff(), 0.0);
  }
  Matrix sing(2, 2);
  sing << 1, 2, 2, 4;
  EXPECT_THROW(apply_bimap_shift(sing, std::vector<SpdMatrix>{SpdMatrix::identity(2)}),
               DomainError);
}

TEST(SymBasis, Orthonormal) {
  const int d = 4;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b)
      EXPECT_NEAR(sym_basis(d, a).matrix().cwiseProduct(sym_basis(d, b).matrix()).sum(),
                  a == b ? 1.0 : 0.0, 1e-15);
  EXPECT_THROW(sym_basis(d, 10), InputError);
}

TEST(Banded, ZeroShiftGivesZeroDiagonal) {
  BandedConfig cfg;
  cfg.within_band_shift = 0.0;
  cfg.num_bands = 3;
  const auto ds = make_banded_dataset(cfg);
  const Matrix t = distance_table(ds.source, ds.target);
  EXPECT_LE(t.diagonal().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Banded, GuaranteedModeIsDiagonalMinimal) {
  BandedConfig cfg;
  cfg.num_bands = 3;
  cfg.band_separation = 3.0;
  cfg.within_band_shift = 0.3;
  const auto ds = make_banded_dataset(cfg);
  const Matrix t = distance_table(ds.source, ds.target);
  for (bool ok : diagonal_minimal(t)) EXPECT_TRUE(ok);
  EXPECT_NEAR(t(0, 0), 0.3, 1e-10);
  // Swapping roles transposes the table.
  const Matrix back = distance_table(ds.target, ds.source);
  EXPECT_LE((back - t.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Banded, AdversarialModeViolatesTheOrdering) {
  BandedConfig cfg;
  cfg.num_bands = 3;
  cfg.within_band_shift = 0.3;
  cfg.mode = BandMode::adversarial;
  const auto ds = make_banded_dataset(cfg);
  const auto rows = diagonal_minimal(distance_table(ds.source, ds.target));
  EXPECT_NE(std::count(rows.begin(), rows.end(), true), 3);
  EXPECT_FALSE(corollary_identity_plan(segment_means(ds.source), segment_means(ds.target)));
}

TEST(Banded, ParameterChecks) {
  BandedConfig cfg;
  cfg.within_band_shift = 5.0;
  EXPECT_THROW(make_banded_dataset(cfg), InputError);
  cfg = {};
  cfg.num_bands = 11;
  EXPECT_THROW(make_banded_dataset(cfg), InputError);
}

TEST(DistanceTable, SegmentCountMismatch) {
  SpdDataset a(2, 1, 1), b(2, 1, 2);
  EXPECT_THROW(distance_table(a, b), InputError);
  EXPECT_THROW(segment_means(a), InputError);
}

TEST(Dataset, RoundTripIsBitExact) {
  BandedConfig cfg;
  cfg.num_bands = 4;
  const auto ds = make_banded_dataset(cfg);
  const std::string path = temp_path("roundtrip.jsonl");
  save_dataset(path, ds.target);
  const SpdDataset back = load_dataset(path);
  EXPECT_TRUE(back == ds.target);
  std::remove(path.c_str());
}

TEST(Dataset, GoldenFixture) {
  const SpdDataset d = load_dataset(fixture("one_sample.jsonl"));
  ASSERT_EQ(d.size(), 1);
  EXPECT_EQ(d.dim(), 2);
  EXPECT_EQ(d.num_classes(), 2);
  EXPECT_EQ(d[0].label, 1);
  EXPECT_EQ(d[0].dom, Domain::target);
  Matrix want(2, 2);
  want << 2.0, 0.5, 0.5, 1.0;
  EXPECT_EQ(d[0].m.matrix(), want);
}

TEST(Dataset, TruncatedFileFails) {
  const std::string path = temp_path("truncated.jsonl");
  {
    std::ofstream out(path);
    out << "{\"version\":1,\"dim\":2,\"num_classes\":1,\"num_segments\":1,\"count\":3}\n";
    out << "{\"m\":[1,0,0,1],\"y\":0,\"dom\":\"source\",\"seg\":0}\n";
    out << "{\"m\":[1,0,0,";
  }
  EXPECT_THROW(load_dataset(path), ParseError);
  std::remove(path.c_str());
}

TEST(Dataset, MalformedFieldsCarryLineContext) {
  const std::string path = temp_path("malformed.jsonl");
  {
    std::ofstream out(path);
    out << "{\"version\":1,\"dim\":2,\"num_classes\":1,\"num_segments\":1,\"count\":1}\n";
    out << "{\"m\":[1,0,0,1],\"y\":0,\"dom\":\"elsewhere\",\"seg\":0}\n";
  }
  try {
    load_dataset(path);
    FAIL();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("dom"), std::string::npos) << msg;
  }
  std::remove(path.c_str());
}

TEST(Dataset, NonSpdSampleIsNamed) {
  try {
    load_dataset(fixture("not_spd.jsonl"));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos) << e.what();
  }
}

TEST(Dataset, InvariantsEnforcedOnAdd) {
  SpdDataset d(2, 2, 1);
  EXPECT_THROW(d.add({SpdMatrix::identity(3), 0, Domain::source, 0}), DimensionError);
  EXPECT_THROW(d.add({SpdMatrix::identity(2), 2, Domain::source, 0}), InputError);
  EXPECT_THROW(d.add({SpdMatrix::identity(2), 0, Domain::source, 1}), InputError);
}
