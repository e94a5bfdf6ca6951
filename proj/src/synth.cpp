#include "spdot/synth.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <sstream>

#include "spdot/error.hpp"
#include "spdot/spd.hpp"

namespace spdot {

namespace {

SymMatrix gaussian_sym(int d, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> diag(0.0, sigma);
  std::normal_distribution<double> off(0.0, sigma / std::sqrt(2.0));
  Matrix x(d, d);
  for (int i = 0; i < d; ++i) {
    x(i, i) = diag(rng);
    for (int j = i + 1; j < d; ++j) x(i, j) = x(j, i) = off(rng);
  }
  return SymMatrix(x);
}

std::vector<SpdMatrix> sample_with(const GaussianSpec& spec, std::mt19937_64& rng) {
  if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma))
    throw InputError("sample_spd_gaussian: sigma must be positive");
  if (spec.count <= 0) throw InputError("sample_spd_gaussian: count must be positive");
  const SymMatrix base = spd_log(spec.center);
  std::vector<SpdMatrix> out;
  out.reserve(spec.count);
  for (int k = 0; k < spec.count; ++k)
    out.push_back(spd_exp(base + gaussian_sym(spec.center.dim(), spec.sigma, rng)));
  return out;
}

SpdDataset make_dataset(std::span<const SpdMatrix> ms, Domain dom, int classes, int segments,
                        const std::vector<int>& seg) {
  SpdDataset data(ms.front().dim(), classes, segments);
  for (size_t i = 0; i < ms.size(); ++i) data.add({ms[i], seg[i], dom, seg[i]});
  return data;
}

}  // namespace

std::vector<SpdMatrix> sample_spd_gaussian(const GaussianSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  return sample_with(spec, rng);
}

std::vector<SpdMatrix> apply_bimap_shift(const Matrix& w, std::span<const SpdMatrix> data) {
  if (w.rows() != w.cols()) throw DimensionError("apply_bimap_shift: W must be square");
  if (!w.allFinite()) throw DomainError("apply_bimap_shift: W has non-finite entries");
  const Vector sv = Eigen::JacobiSVD<Matrix>(w).singularValues();
  if (!(sv(sv.size() - 1) > 1e-12 * sv(0))) {
    std::ostringstream os;
    os << "apply_bimap_shift: W is singular (singular values in [" << sv(sv.size() - 1) << ", "
       << sv(0) << "])";
    throw DomainError(os.str());
  }
  std::vector<SpdMatrix> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    if (s.dim() != w.cols()) throw DimensionError("apply_bimap_shift: dimension mismatch");
    out.emplace_back(symmetrize(w * s.matrix() * w.transpose()));
  }
  return out;
}

SymMatrix sym_basis(int dim, int index) {
  const int total = dim * (dim + 1) / 2;
  if (index < 0 || index >= total) {
    std::ostringstream os;
    os << "sym_basis: index " << index << " outside [0, " << total << ") for dimension " << dim;
    throw InputError(os.str());
  }
  Matrix b = Matrix::Zero(dim, dim);
  if (index < dim) {
    b(index, index) = 1.0;
    return SymMatrix(b);
  }
  int k = dim;
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j, ++k) {
      if (k == index) {
        b(i, j) = b(j, i) = 1.0 / std::sqrt(2.0);
        return SymMatrix(b);
      }
    }
  }
  throw InputError("sym_basis: unreachable index");
}

BandedDataset make_banded_dataset(const BandedConfig& cfg) {
  const int d = cfg.per_band.center.dim();
  const int bands = cfg.num_bands;
  const double delta = cfg.within_band_shift;
  if (bands <= 0) throw InputError("make_banded_dataset: num_bands must be positive");
  if (bands > d * (d + 1) / 2) {
    std::ostringstream os;
    os << "make_banded_dataset: " << bands << " bands need distinct directions but Sym(" << d
       << ") has only " << d * (d + 1) / 2;
    throw InputError(os.str());
  }
  if (!(delta >= 0.0)) throw InputError("make_banded_dataset: within_band_shift must be >= 0");
  if (cfg.mode == BandMode::guaranteed && !(cfg.band_separation > delta))
    throw InputError("make_banded_dataset: band_separation must exceed within_band_shift");

  const SymMatrix base = spd_log(cfg.per_band.center);
  // Band offsets are centred on the middle band so that the spread stays
  // symmetric around the template centre and the conditioning stays usable.
  std::vector<SpdMatrix> centers;
  const double mid = 0.5 * (bands - 1);
  for (int k = 0; k < bands; ++k)
    centers.push_back(spd_exp(base + sym_basis(d, k) * ((k - mid) * cfg.band_separation)));

  const Matrix scalar = Matrix::Identity(d, d) * std::exp(delta / (2.0 * std::sqrt(double(d))));
  std::mt19937_64 rng(cfg.per_band.seed);
  std::vector<SpdMatrix> src, tgt;
  std::vector<int> seg;
  for (int k = 0; k < bands; ++k) {
    GaussianSpec spec = cfg.per_band;
    spec.center = centers[k];
    const auto draws = sample_with(spec, rng);
    std::vector<SpdMatrix> moved = draws;
    if (cfg.mode == BandMode::adversarial && bands > 1) {
      const SymMatrix step = spd_log(centers[(k + 1) % bands]) - spd_log(centers[k]);
      for (auto& m : moved) m = spd_exp(spd_log(m) + step);
    }
    const auto pushed = apply_bimap_shift(scalar, moved);
    src.insert(src.end(), draws.begin(), draws.end());
    tgt.insert(tgt.end(), pushed.begin(), pushed.end());
    seg.insert(seg.end(), draws.size(), k);
  }

  BandedDataset out{make_dataset(src, Domain::source, bands, bands, seg),
                    make_dataset(tgt, Domain::target, bands, bands, seg), centers};

  if (cfg.mode == BandMode::guaranteed) {
    const auto means = segment_means(out.source);
    for (int a = 0; a < bands; ++a) {
      for (int b = a + 1; b < bands; ++b) {
        const double gap = lem_distance(means[a], means[b]);
        if (!(gap > 2.0 * delta)) {
          std::ostringstream os;
          os << "make_banded_dataset: empirical means of bands " << a << " and " << b
             << " are only " << gap << " apart, need more than 2 * within_band_shift";
          throw InputError(os.str());
        }
      }
    }
  }
  return out;
}

SyntheticPair make_synthetic_pair(int dim, int count, double sigma, const Matrix& w,
                                  std::uint64_t seed) {
  if (dim <= 0) throw InputError("make_synthetic_pair: dim must be positive");
  const auto src = sample_spd_gaussian({SpdMatrix::identity(dim), sigma, count, seed});
  const auto tgt = apply_bimap_shift(w, src);
  const std::vector<int> zeros(src.size(), 0);
  return {make_dataset(src, Domain::source, 1, 1, zeros),
          make_dataset(tgt, Domain::target, 1, 1, zeros)};
}

std::vector<SpdMatrix> segment_means(const SpdDataset& data) {
  std::vector<SpdMatrix> means;
  for (int s = 0; s < data.num_segments(); ++s) {
    const auto members = data.segment(s);
    if (members.empty()) {
      std::ostringstream os;
      os << "segment_means: segment " << s << " is empty";
      throw InputError(os.str());
    }
    means.push_back(lem_frechet_mean(members));
  }
  return means;
}

Matrix distance_table(const SpdDataset& source, const SpdDataset& target) {
  if (source.num_segments() != target.num_segments()) {
    std::ostringstream os;
    os << "distance_table: " << source.num_segments() << " source segments vs "
       << target.num_segments() << " target segments";
    throw InputError(os.str());
  }
  const auto ms = segment_means(source);
  const auto mt = segment_means(target);
  Matrix t(ms.size(), mt.size());
  for (size_t a = 0; a < ms.size(); ++a)
    for (size_t b = 0; b < mt.size(); ++b) t(a, b) = lem_distance(ms[a], mt[b]);
  return t;
}

std::vector<bool> diagonal_minimal(const Matrix& table) {
  if (table.rows() != table.cols()) throw DimensionError("diagonal_minimal: table is not square");
  std::vector<bool> out;
  for (Eigen::Index a = 0; a < table.rows(); ++a)
    out.push_back(table(a, a) <= table.row(a).minCoeff());
  return out;
}

}  // namespace spdot
