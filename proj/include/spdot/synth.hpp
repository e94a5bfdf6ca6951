#pragma once

// Synthetic SPD data: log-domain Gaussians, Bi-Map shifts, banded datasets.

#include <cstdint>
#include <span>
#include <vector>

#include "spdot/dataset.hpp"
#include "spdot/linalg.hpp"

namespace spdot {

struct GaussianSpec {
  SpdMatrix center;
  double sigma = 0.4;  // log-domain standard deviation
  int count = 50;
  std::uint64_t seed = 42;
};

/// exp(log(center) + X) where X is symmetric with N(0, sigma^2) diagonal
/// and N(0, sigma^2 / 2) off-diagonal entries, so that the coordinates
/// (x_ii, sqrt(2) x_ij) are i.i.d. N(0, sigma^2).
std::vector<SpdMatrix> sample_spd_gaussian(const GaussianSpec& spec);

/// W S W^T for every S. Throws DomainError if W is singular.
std::vector<SpdMatrix> apply_bimap_shift(const Matrix& w, std::span<const SpdMatrix> data);

/// i-th element of the orthonormal basis of Sym(d): the d diagonal units
/// first, then (E_ij + E_ji) / sqrt(2) for i < j in row-major order.
SymMatrix sym_basis(int dim, int index);

enum class BandMode {
  // Each target band is its source band scaled by exp(delta / sqrt(d)),
  // a log shift of Frobenius norm delta.
  guaranteed,
  // Target band k is translated in the log domain onto the centre of band
  // k + 1 (cyclically) before the same scalar shift, so nearest bands are
  // permuted.
  adversarial,
};

struct BandedConfig {
  int num_bands = 9;
  // Band k is sampled around exp(log(center) + (k - (K - 1) / 2) * separation * B_k).
  GaussianSpec per_band{SpdMatrix::identity(4), 0.1, 20, 42};
  double band_separation = 3.0;
  double within_band_shift = 0.3;
  BandMode mode = BandMode::guaranteed;
};

struct BandedDataset {
  SpdDataset source;
  SpdDataset target;
  std::vector<SpdMatrix> centers;
};

/// Segment and label of every sample are its band index. In guaranteed
/// mode the construction is rejected (InputError) unless every pair of
/// empirical source band means is more than 2 * within_band_shift apart,
/// which makes the band distance table diagonal-minimal.
BandedDataset make_banded_dataset(const BandedConfig& cfg);

/// Source = Gaussian around I, target = W S W^T of the same draws; one
/// class and one segment.
struct SyntheticPair {
  SpdDataset source;
  SpdDataset target;
};
SyntheticPair make_synthetic_pair(int dim, int count, double sigma, const Matrix& w,
                                  std::uint64_t seed);

/// LEM Frechet mean of each segment. Throws InputError on an empty segment.
std::vector<SpdMatrix> segment_means(const SpdDataset& data);

/// (a, b) = d_LEM(mean of source segment a, mean of target segment b).
Matrix distance_table(const SpdDataset& source, const SpdDataset& target);

/// Per row: whether the diagonal entry is a minimum of the row.
std::vector<bool> diagonal_minimal(const Matrix& table);

}  // namespace spdot
