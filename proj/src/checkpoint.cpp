#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spdot/error.hpp"
#include "spdot/spdnet.hpp"

namespace spdot {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'D', 'O', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(v)); }
  void block(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }

 private:
  template <class T>
  void raw(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  std::uint32_t u32(const char* field) { return to_little(raw<std::uint32_t>(field)); }
  double f64(const char* field) { return to_little(raw<double>(field)); }
  Matrix block(Eigen::Index rows, Eigen::Index cols, const char* field) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64(field);
    return m;
  }
  void bytes(char* dst, size_t n, const char* field) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) fail(field);
  }
  [[noreturn]] void fail(const char* field) {
    std::ostringstream os;
    os << path_ << ": truncated checkpoint while reading " << field << " at byte " << offset();
    throw ParseError(os.str());
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  template <class T>
  T raw(const char* field) {
    T v;
    bytes(reinterpret_cast<char*>(&v), sizeof(T), field);
    return v;
  }
  long long offset() {
    in_.clear();
    return static_cast<long long>(in_.tellg());
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const DotModel& model) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  Writer w(out);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.d_in()));
  w.u32(static_cast<std::uint32_t>(model.d_out()));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.f64(model.reeig.epsilon());
  w.block(model.bimap.weight());
  w.block(model.head.weight);
  w.block(Matrix(model.head.bias));
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

DotModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  Reader r(in, path);
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t d_in = r.u32("d_in");
  const std::uint32_t d_out = r.u32("d_out");
  const std::uint32_t classes = r.u32("classes");
  constexpr std::uint32_t kMaxDim = 4096;
  if (d_in == 0 || d_out == 0 || d_out > d_in || d_in > kMaxDim || classes == 0 ||
      classes > kMaxDim)
    throw ParseError(path + ": implausible dimensions in checkpoint header");
  const double eps = r.f64("epsilon");
  const int feat = static_cast<int>(d_out * (d_out + 1) / 2);
  Matrix w = r.block(d_out, d_in, "W");
  Matrix head = r.block(classes, feat, "head weight");
  Vector bias = r.block(classes, 1, "head bias");
  if (!r.at_end()) throw ParseError(path + ": trailing bytes after checkpoint payload");
  try {
    DotModel m{BiMapLayer(std::move(w)), ReEigLayer(eps), {std::move(head), std::move(bias)}};
    m.validate();
    return m;
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path + ": invalid checkpoint contents (" + e.what() + ")");
  }
}

}  // namespace spdot
