#include "spdot/dataset.hpp"

#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "spdot/error.hpp"

namespace spdot {

using nlohmann::json;

SpdDataset::SpdDataset(int dim, int num_classes, int num_segments)
    : dim_(dim), num_classes_(num_classes), num_segments_(num_segments) {
  if (dim <= 0 || num_classes <= 0 || num_segments <= 0)
    throw InputError("SpdDataset: dim, num_classes and num_segments must be positive");
}

void SpdDataset::add(Sample s) {
  if (s.m.dim() != dim_) {
    std::ostringstream os;
    os << "SpdDataset: sample " << samples_.size() << " has dimension " << s.m.dim()
       << ", expected " << dim_;
    throw DimensionError(os.str());
  }
  if (s.label < 0 || s.label >= num_classes_ || s.segment < 0 || s.segment >= num_segments_) {
    std::ostringstream os;
    os << "SpdDataset: sample " << samples_.size() << " has label " << s.label << " / segment "
       << s.segment << " out of range";
    throw InputError(os.str());
  }
  samples_.push_back(std::move(s));
}

std::vector<SpdMatrix> SpdDataset::matrices() const {
  std::vector<SpdMatrix> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.m);
  return out;
}

std::vector<int> SpdDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.label);
  return out;
}

std::vector<SpdMatrix> SpdDataset::segment(int seg) const {
  std::vector<SpdMatrix> out;
  for (const auto& s : samples_)
    if (s.segment == seg) out.push_back(s.m);
  return out;
}

bool operator==(const SpdDataset& a, const SpdDataset& b) {
  if (a.dim() != b.dim() || a.num_classes() != b.num_classes() ||
      a.num_segments() != b.num_segments() || a.size() != b.size())
    return false;
  for (int i = 0; i < a.size(); ++i) {
    const Sample& x = a[i];
    const Sample& y = b[i];
    if (x.label != y.label || x.dom != y.dom || x.segment != y.segment) return false;
    if (!(x.m.matrix().array() == y.m.matrix().array()).all()) return false;
  }
  return true;
}

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

void save_dataset(const std::string& path, const SpdDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_dataset: cannot open " + path + " for writing");
  json header = {{"version", SpdDataset::kFormatVersion},
                 {"dim", data.dim()},
                 {"num_classes", data.num_classes()},
                 {"num_segments", data.num_segments()},
                 {"count", data.size()}};
  out << header.dump() << '\n';
  const int d = data.dim();
  for (const auto& s : data.samples()) {
    std::vector<double> entries;
    entries.reserve(static_cast<size_t>(d) * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) entries.push_back(s.m.matrix()(i, j));
    json rec = {{"m", entries}, {"y", s.label}, {"dom", to_string(s.dom)}, {"seg", s.segment}};
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("save_dataset: write failed for " + path);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& msg) {
  std::ostringstream os;
  os << path << ":" << line << ": " << msg;
  throw ParseError(os.str());
}

int int_field(const json& j, const char* key, const std::string& path, int line) {
  auto it = j.find(key);
  if (it == j.end()) parse_fail(path, line, std::string("missing field \"") + key + "\"");
  if (!it->is_number_integer())
    parse_fail(path, line, std::string("field \"") + key + "\" must be an integer");
  return it->get<int>();
}

}  // namespace

SpdDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open " + path);

  std::string text;
  int line_no = 0;
  auto next = [&](json& j) {
    while (std::getline(in, text)) {
      ++line_no;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        parse_fail(path, line_no, std::string("invalid JSON (") + e.what() + ")");
      }
      if (!j.is_object()) parse_fail(path, line_no, "expected a JSON object");
      return true;
    }
    return false;
  };

  json header;
  if (!next(header)) parse_fail(path, 1, "empty file, expected header");
  const int version = int_field(header, "version", path, line_no);
  if (version != SpdDataset::kFormatVersion)
    parse_fail(path, line_no, "unsupported version " + std::to_string(version));
  const int dim = int_field(header, "dim", path, line_no);
  const int classes = int_field(header, "num_classes", path, line_no);
  const int segments = int_field(header, "num_segments", path, line_no);
  const int count = int_field(header, "count", path, line_no);
  if (dim <= 0 || classes <= 0 || segments <= 0 || count < 0)
    parse_fail(path, line_no, "header fields must be positive");

  SpdDataset data(dim, classes, segments);
  json rec;
  for (int k = 0; k < count; ++k) {
    if (!next(rec)) {
      std::ostringstream os;
      os << "truncated: header announces " << count << " samples, found " << k;
      parse_fail(path, line_no + 1, os.str());
    }
    auto m = rec.find("m");
    if (m == rec.end() || !m->is_array()) parse_fail(path, line_no, "field \"m\" must be an array");
    if (static_cast<int>(m->size()) != dim * dim) {
      std::ostringstream os;
      os << "field \"m\" has " << m->size() << " entries, expected " << dim * dim;
      parse_fail(path, line_no, os.str());
    }
    Matrix mat(dim, dim);
    for (int i = 0; i < dim * dim; ++i) {
      const json& x = (*m)[i];
      if (!x.is_number()) parse_fail(path, line_no, "field \"m\" holds a non-number");
      mat(i / dim, i % dim) = x.get<double>();
    }
    auto dom = rec.find("dom");
    if (dom == rec.end() || !dom->is_string())
      parse_fail(path, line_no, "field \"dom\" must be \"source\" or \"target\"");
    Domain d;
    if (*dom == "source")
      d = Domain::source;
    else if (*dom == "target")
      d = Domain::target;
    else
      parse_fail(path, line_no, "field \"dom\" must be \"source\" or \"target\"");
    const int y = int_field(rec, "y", path, line_no);
    const int seg = int_field(rec, "seg", path, line_no);

    std::optional<SpdMatrix> spd;
    try {
      spd.emplace(mat);
    } catch (const Error& e) {
      std::ostringstream os;
      os << path << ": sample " << k << " (line " << line_no << "): " << e.what();
      throw DomainError(os.str());
    }
    try {
      data.add({*spd, y, d, seg});
    } catch (const Error& e) {
      parse_fail(path, line_no, e.what());
    }
  }
  if (next(rec)) parse_fail(path, line_no, "unexpected record after the announced count");
  return data;
}

}  // namespace spdot
