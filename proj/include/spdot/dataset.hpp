#pragma once

// Labelled SPD samples and their JSONL file format.

#include <string>
#include <vector>

#include "spdot/linalg.hpp"

namespace spdot {

enum class Domain { source, target };

struct Sample {
  SpdMatrix m;
  int label = 0;
  Domain dom = Domain::source;
  int segment = 0;
};

/// Samples sharing one dimension, with labels in [0, num_classes) and
/// segments in [0, num_segments).
class SpdDataset {
 public:
  static constexpr int kFormatVersion = 1;

  SpdDataset(int dim, int num_classes, int num_segments);

  /// Throws DimensionError / InputError if the sample breaks an invariant.
  void add(Sample s);

  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }
  int num_segments() const { return num_segments_; }
  int size() const { return static_cast<int>(samples_.size()); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](int i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const { return samples_; }

  std::vector<SpdMatrix> matrices() const;
  std::vector<int> labels() const;
  /// Matrices whose segment equals seg, in file order.
  std::vector<SpdMatrix> segment(int seg) const;

 private:
  int dim_, num_classes_, num_segments_;
  std::vector<Sample> samples_;
};

/// Bit-exact comparison of every field.
bool operator==(const SpdDataset& a, const SpdDataset& b);

/// One JSON object per line: a header
///   {"version":1,"dim":d,"num_classes":c,"num_segments":s,"count":n}
/// followed by n records {"m":[row-major entries],"y":..,"dom":"source"|"target","seg":..}.
/// Doubles are written as shortest round-trip decimals.
void save_dataset(const std::string& path, const SpdDataset& data);

/// Throws ParseError (with line and field) on malformed or truncated
/// input and DomainError naming the sample index for a non-SPD matrix.
SpdDataset load_dataset(const std::string& path);

std::string to_string(Domain d);

}  // namespace spdot
