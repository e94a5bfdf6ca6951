#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spdot/dot.hpp"
#include "spdot/error.hpp"

namespace spdot {

void TrainConfig::validate() const {
  if (epochs < 0) throw InputError("TrainConfig: epochs must be >= 0");
  if (batch_size <= 0) throw InputError("TrainConfig: batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InputError("TrainConfig: lr must be positive");
  if (refresh_period <= 0) throw InputError("TrainConfig: refresh_period must be positive");
  weights.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
bool parse_number(const std::string& v, T& out) {
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto fail = [&](const std::string& msg) {
      std::ostringstream os;
      os << "config line " << line_no << ": " << msg;
      throw ParseError(os.str());
    };
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto integer = [&](int& dst) {
      if (!parse_number(value, dst)) fail("'" + key + "' needs an integer, got '" + value + "'");
    };
    auto real = [&](double& dst) {
      if (!parse_number(value, dst)) fail("'" + key + "' needs a number, got '" + value + "'");
    };
    if (key == "epochs") {
      integer(cfg.epochs);
    } else if (key == "batch_size") {
      integer(cfg.batch_size);
    } else if (key == "lr") {
      real(cfg.lr);
    } else if (key == "refresh_period") {
      integer(cfg.refresh_period);
    } else if (key == "seed") {
      if (!parse_number(value, cfg.seed)) fail("'seed' needs an unsigned integer");
    } else if (key == "alpha1") {
      real(cfg.weights.alpha1);
    } else if (key == "alpha2") {
      real(cfg.weights.alpha2);
    } else if (key == "alpha3") {
      real(cfg.weights.alpha3);
    } else if (key == "jd_alpha1") {
      real(cfg.weights.jd_alpha1);
    } else if (key == "jd_alpha2") {
      real(cfg.weights.jd_alpha2);
    } else if (key == "mode") {
      try {
        cfg.mode = parse_train_mode(value);
      } catch (const InputError& e) {
        fail(e.what());
      }
    } else if (key == "pseudo_labels") {
      if (value == "mdm")
        cfg.pseudo_labels = PseudoLabelSource::mdm;
      else if (value == "network")
        cfg.pseudo_labels = PseudoLabelSource::network;
      else
        fail("pseudo_labels must be mdm or network");
    } else if (key == "mdm_metric") {
      if (value == "lem")
        cfg.mdm_metric = Metric::lem;
      else if (value == "airm")
        cfg.mdm_metric = Metric::airm;
      else
        fail("mdm_metric must be lem or airm");
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_train_config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_train_config(text.str());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "epochs = " << cfg.epochs << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "lr = " << cfg.lr << "\n"
     << "refresh_period = " << cfg.refresh_period << "\n"
     << "seed = " << cfg.seed << "\n"
     << "alpha1 = " << cfg.weights.alpha1 << "\n"
     << "alpha2 = " << cfg.weights.alpha2 << "\n"
     << "alpha3 = " << cfg.weights.alpha3 << "\n"
     << "jd_alpha1 = " << cfg.weights.jd_alpha1 << "\n"
     << "jd_alpha2 = " << cfg.weights.jd_alpha2 << "\n"
     << "mode = " << to_string(cfg.mode) << "\n"
     << "pseudo_labels = " << (cfg.pseudo_labels == PseudoLabelSource::mdm ? "mdm" : "network")
     << "\n"
     << "mdm_metric = " << (cfg.mdm_metric == Metric::lem ? "lem" : "airm") << "\n";
  return os.str();
}

}  // namespace spdot
