// spdot: command-line front end for generation, transport, training,
// evaluation, band distance tables and gradient checks.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "spdot/dataset.hpp"
#include "spdot/dot.hpp"
#include "spdot/error.hpp"
#include "spdot/gradcheck.hpp"
#include "spdot/ot.hpp"
#include "spdot/spd.hpp"
#include "spdot/spdnet.hpp"
#include "spdot/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace spdot;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 42;
  bool seed_given = false;
  bool quiet = false;
  std::string out;
};

// "a,b;c,d" -> row-major matrix.
Matrix parse_matrix_flag(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> vals;
    std::stringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) {
      try {
        size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw UsageError("matrix flag: '" + cell + "' is not a number in \"" + text + "\"");
      }
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty() || rows[0].empty()) throw UsageError("matrix flag: empty matrix");
  Matrix m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw UsageError("matrix flag: ragged rows in \"" + text + "\"");
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void require_out(const Globals& g, const char* cmd) {
  if (g.out.empty()) throw UsageError(std::string(cmd) + ": --out is required");
}

fs::path out_dir(const Globals& g) {
  fs::path p(g.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + g.out + ": " + ec.message());
  return p;
}

void emit(const Globals& g, const ordered_json& j) {
  if (!g.quiet) std::cout << j.dump(2) << "\n";
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

void write_matrix_csv(const fs::path& p, const Matrix& m) {
  auto out = open_out(p);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << num(m(i, j));
    out << "\n";
  }
}

// One row per matrix: set,index,label,log coordinates (upper triangle,
// off-diagonals scaled by sqrt 2),eigenvalues (descending).
void write_points_csv(const fs::path& p,
                      const std::vector<std::pair<std::string, const SpdDataset*>>& sets) {
  auto out = open_out(p);
  const int d = sets.front().second->dim();
  out << "set,index,label";
  for (int k = 0; k < d * (d + 1) / 2; ++k) out << ",log_" << k;
  for (int k = 0; k < d; ++k) out << ",eig_" << k;
  out << "\n";
  for (const auto& [name, data] : sets) {
    for (int i = 0; i < data->size(); ++i) {
      const Sample& s = (*data)[i];
      out << name << "," << i << "," << s.label;
      const Vector v = tri_vec(spd_log(s.m));
      for (Eigen::Index k = 0; k < v.size(); ++k) out << "," << num(v(k));
      for (Eigen::Index k = 0; k < s.m.eig().values.size(); ++k)
        out << "," << num(s.m.eig().values(k));
      out << "\n";
    }
  }
}

SpdDataset relabel(const std::vector<SpdMatrix>& ms, const SpdDataset& like, Domain dom) {
  SpdDataset out(like.dim(), like.num_classes(), like.num_segments());
  for (size_t i = 0; i < ms.size(); ++i)
    out.add({ms[i], like[static_cast<int>(i)].label, dom, like[static_cast<int>(i)].segment});
  return out;
}

// ---- gen ------------------------------------------------------------------

struct GenArgs {
  int dim = 2;
  int count = 50;
  double sigma = 0.4;
  std::string shift_w = "1,0.5;0.5,1";
  int bands = 0;
  double separation = 3.0;
  double within_shift = 0.3;
  bool adversarial = false;
};

int cmd_gen(const GenArgs& a, bool dim_given, const Globals& g) {
  require_out(g, "gen");
  const fs::path dir = out_dir(g);
  ordered_json summary{{"command", "gen"}, {"seed", g.seed}};
  SpdDataset src(1, 1, 1), tgt(1, 1, 1);
  if (a.bands > 0) {
    int dim = a.dim;
    if (!dim_given)
      while (dim * (dim + 1) / 2 < a.bands) ++dim;
    BandedConfig cfg;
    cfg.num_bands = a.bands;
    cfg.per_band = {SpdMatrix::identity(dim), a.sigma, a.count, g.seed};
    cfg.band_separation = a.separation;
    cfg.within_band_shift = a.within_shift;
    cfg.mode = a.adversarial ? BandMode::adversarial : BandMode::guaranteed;
    auto ds = make_banded_dataset(cfg);
    src = std::move(ds.source);
    tgt = std::move(ds.target);
    summary["mode"] = a.adversarial ? "adversarial" : "guaranteed";
    summary["bands"] = a.bands;
    summary["separation"] = a.separation;
    summary["within_shift"] = a.within_shift;
  } else {
    const Matrix w = parse_matrix_flag(a.shift_w);
    if (w.rows() != a.dim || w.cols() != a.dim)
      throw UsageError("gen: --shift-w must be " + std::to_string(a.dim) + "x" +
                       std::to_string(a.dim));
    auto pair = make_synthetic_pair(a.dim, a.count, a.sigma, w, g.seed);
    src = std::move(pair.source);
    tgt = std::move(pair.target);
    summary["shift_w"] = a.shift_w;
  }
  const fs::path sp = dir / "source.jsonl", tp = dir / "target.jsonl";
  save_dataset(sp.string(), src);
  save_dataset(tp.string(), tgt);
  write_points_csv(dir / "points.csv", {{"source", &src}, {"target", &tgt}});
  summary["dim"] = src.dim();
  summary["count"] = a.count;
  summary["sigma"] = a.sigma;
  summary["source"] = sp.string();
  summary["target"] = tp.string();
  summary["source_samples"] = src.size();
  summary["target_samples"] = tgt.size();
  emit(g, summary);
  return 0;
}

// ---- transport ------------------------------------------------------------

struct TransportArgs {
  std::string source, target;
  std::string cost = "squared";
  bool verify_affine = false;
  std::string shift_w = "1,0.5;0.5,1";
};

int cmd_transport(const TransportArgs& a, const Globals& g) {
  require_out(g, "transport");
  GroundCost kind;
  if (a.cost == "squared")
    kind = GroundCost::squared_lem;
  else if (a.cost == "unsquared")
    kind = GroundCost::lem;
  else
    throw UsageError("transport: --cost must be squared or unsquared");
  const SpdDataset src = load_dataset(a.source);
  const SpdDataset tgt = load_dataset(a.target);
  if (src.dim() != tgt.dim()) throw InputError("transport: source and target dimensions differ");
  const fs::path dir = out_dir(g);

  const auto xs = src.matrices(), ys = tgt.matrices();
  const auto mu = DiscreteMeasure::uniform(src.size());
  const auto nu = DiscreteMeasure::uniform(tgt.size());
  const EmdResult r = solve_emd(mu, nu, cost_matrix_lem(xs, ys, kind));
  // Columns: each target's barycentre of sources. Rows: each source's
  // barycentre of targets, i.e. the sources carried into the target domain.
  const auto mapped_targets = barycentric_map_lem(r.plan, xs);
  const auto mapped_sources = barycentric_map_lem(r.plan.transposed(), ys);

  double pre = 0.0, post = 0.0, mass = 0.0;
  for (int i = 0; i < src.size(); ++i) {
    for (int j = 0; j < tgt.size(); ++j) {
      const double gij = r.plan(i, j);
      if (gij == 0.0) continue;
      pre += gij * lem_distance(xs[i], ys[j]);
      post += gij * lem_distance(mapped_sources[i], ys[j]);
      mass += gij;
    }
  }
  write_matrix_csv(dir / "plan.csv", r.plan.matrix());
  const SpdDataset ms = relabel(mapped_sources, src, Domain::target);
  const SpdDataset mt = relabel(mapped_targets, tgt, Domain::target);
  save_dataset((dir / "mapped_sources.jsonl").string(), ms);
  save_dataset((dir / "mapped_targets.jsonl").string(), mt);
  write_points_csv(dir / "points.csv", {{"source", &src}, {"target", &tgt}, {"mapped", &ms}});

  ordered_json summary{{"command", "transport"},
                       {"cost", a.cost},
                       {"objective", r.cost},
                       {"iterations", r.iterations},
                       {"marginal_error", r.plan.marginal_error(mu, nu)},
                       {"mean_coupled_distance_before", pre / mass},
                       {"mean_coupled_distance_after", post / mass},
                       {"plan", (dir / "plan.csv").string()},
                       {"mapped_sources", (dir / "mapped_sources.jsonl").string()},
                       {"mapped_targets", (dir / "mapped_targets.jsonl").string()}};
  int code = 0;
  if (a.verify_affine) {
    const Matrix w = parse_matrix_flag(a.shift_w);
    const BimapRecoveryReport rep = verify_bimap_recovery(xs, w);
    summary["verify_affine"] = {{"identity_plan", rep.affine.identity_plan},
                                {"plan_deviation", rep.affine.plan_deviation},
                                {"map_error", rep.affine.map_error},
                                {"kron_identity_error", rep.kron_identity_error},
                                {"passed", rep.affine.passed() && rep.kron_identity_error <= 1e-12}};
    if (!summary["verify_affine"]["passed"].get<bool>()) {
      std::cerr << "transport: affine recovery check failed\n";
      code = kExitRuntime;
    }
  }
  emit(g, summary);
  return code;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string source, target, config;
  std::string mode;
  int epochs = -1, batch_size = -1, refresh = -1;
  double lr = -1;
  std::optional<double> alpha1, alpha2, alpha3, jd_alpha1, jd_alpha2;
  std::string pseudo;
  int d_out = 0;
  double epsilon = ReEigLayer::kDefaultEpsilon;
};

int cmd_train(const TrainArgs& a, const Globals& g) {
  require_out(g, "train");
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.config.empty() || g.seed_given) cfg.seed = g.seed;
  if (!a.mode.empty()) {
    try {
      cfg.mode = parse_train_mode(a.mode);
    } catch (const InputError& e) {
      throw UsageError(e.what());
    }
  }
  if (a.epochs >= 0) cfg.epochs = a.epochs;
  if (a.batch_size >= 0) cfg.batch_size = a.batch_size;
  if (a.refresh >= 0) cfg.refresh_period = a.refresh;
  if (a.lr >= 0) cfg.lr = a.lr;
  if (a.alpha1) cfg.weights.alpha1 = *a.alpha1;
  if (a.alpha2) cfg.weights.alpha2 = *a.alpha2;
  if (a.alpha3) cfg.weights.alpha3 = *a.alpha3;
  if (a.jd_alpha1) cfg.weights.jd_alpha1 = *a.jd_alpha1;
  if (a.jd_alpha2) cfg.weights.jd_alpha2 = *a.jd_alpha2;
  if (a.pseudo == "network")
    cfg.pseudo_labels = PseudoLabelSource::network;
  else if (a.pseudo == "mdm")
    cfg.pseudo_labels = PseudoLabelSource::mdm;
  else if (!a.pseudo.empty())
    throw UsageError("train: --pseudo must be mdm or network");
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }

  const SpdDataset src = load_dataset(a.source);
  const SpdDataset tgt = load_dataset(a.target);
  const int d_out = a.d_out > 0 ? a.d_out : src.dim();
  DotModel model = init_model(src.dim(), d_out, src.num_classes(), cfg.seed, a.epsilon);
  const auto history = train(model, src, tgt, cfg);

  const fs::path dir = out_dir(g);
  save_checkpoint((dir / "model.ckpt").string(), model);
  {
    auto out = open_out(dir / "history.csv");
    write_history_csv(out, history);
  }
  {
    auto out = open_out(dir / "config.txt");
    out << format_train_config(cfg);
  }
  // Embedded log-features for plotting.
  SpdDataset es(d_out, src.num_classes(), src.num_segments());
  SpdDataset et(d_out, tgt.num_classes(), tgt.num_segments());
  for (const auto& s : src.samples()) es.add({*forward(model, s.m).embed, s.label, s.dom, s.segment});
  for (const auto& s : tgt.samples()) et.add({*forward(model, s.m).embed, s.label, s.dom, s.segment});
  write_points_csv(dir / "embedded_points.csv", {{"source", &es}, {"target", &et}});

  const EpochRecord& first = history.front();
  const EpochRecord& last = history.back();
  ordered_json summary{{"command", "train"},
                       {"mode", to_string(cfg.mode)},
                       {"epochs", cfg.epochs},
                       {"d_in", model.d_in()},
                       {"d_out", model.d_out()},
                       {"classes", model.num_classes()},
                       {"initial", {{"mda", first.mda}, {"cda", first.cda}, {"total", first.total}}},
                       {"final",
                        {{"ce", last.ce},
                         {"mda", last.mda},
                         {"cda", last.cda},
                         {"total", last.total},
                         {"source_acc", last.source_acc},
                         {"target_acc", last.target_acc}}},
                       {"checkpoint", (dir / "model.ckpt").string()},
                       {"history", (dir / "history.csv").string()}};
  emit(g, summary);
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data_path, const Globals& g) {
  const DotModel model = load_checkpoint(model_path);
  const SpdDataset data = load_dataset(data_path);
  if (data.num_classes() > model.num_classes())
    throw InputError("eval: dataset has more classes than the model head");
  std::vector<int> count(model.num_classes(), 0), correct(model.num_classes(), 0),
      predicted(model.num_classes(), 0);
  int hits = 0;
  for (const auto& s : data.samples()) {
    const int p = predict(model, s.m);
    ++count[s.label];
    ++predicted[p];
    if (p == s.label) {
      ++correct[s.label];
      ++hits;
    }
  }
  ordered_json per_class = ordered_json::array();
  for (int c = 0; c < model.num_classes(); ++c)
    per_class.push_back(
        {{"class", c}, {"count", count[c]}, {"correct", correct[c]}, {"predicted", predicted[c]}});
  ordered_json summary{{"command", "eval"},
                       {"samples", data.size()},
                       {"accuracy", data.empty() ? 0.0 : double(hits) / data.size()},
                       {"per_class", per_class}};
  if (!g.out.empty()) {
    auto out = open_out(out_dir(g) / "eval.json");
    out << summary.dump(2) << "\n";
  }
  emit(g, summary);
  return 0;
}

// ---- disttable ------------------------------------------------------------

int cmd_disttable(const std::string& source, const std::string& target, const Globals& g) {
  require_out(g, "disttable");
  const SpdDataset src = load_dataset(source);
  const SpdDataset tgt = load_dataset(target);
  const Matrix t = distance_table(src, tgt);
  const auto rows = diagonal_minimal(t);
  const bool identity = corollary_identity_plan(segment_means(src), segment_means(tgt));

  const fs::path path = out_dir(g) / "disttable.csv";
  auto out = open_out(path);
  out << "band";
  for (Eigen::Index b = 0; b < t.cols(); ++b) out << ",t" << b;
  out << ",diagonal_minimal\n";
  bool all = true;
  for (Eigen::Index a = 0; a < t.rows(); ++a) {
    out << a;
    for (Eigen::Index b = 0; b < t.cols(); ++b) out << "," << num(t(a, b));
    out << "," << (rows[a] ? "true" : "false") << "\n";
    all = all && rows[a];
  }
  ordered_json summary{{"command", "disttable"},
                       {"bands", t.rows()},
                       {"diagonal_minimal", rows},
                       {"all_diagonal_minimal", all},
                       {"band_mean_identity_plan", identity},
                       {"table", path.string()}};
  emit(g, summary);
  return 0;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(const GradcheckOptions& opts, const Globals& g) {
  const GradcheckReport rep = run_gradcheck(opts);
  ordered_json summary{{"command", "gradcheck"},
                       {"seeds", opts.seeds},
                       {"dims", {opts.min_dim, opts.max_dim}},
                       {"checks", rep.entries.size()},
                       {"max_rel_error", rep.max_rel_error},
                       {"worst_check", rep.worst_check},
                       {"tolerance", opts.tolerance},
                       {"passed", rep.passed}};
  if (!g.out.empty()) {
    auto out = open_out(out_dir(g) / "gradcheck.csv");
    out << "check,seed,dim,rel_error\n";
    for (const auto& e : rep.entries)
      out << e.check << "," << e.seed << "," << e.dim << "," << num(e.rel_error) << "\n";
  }
  emit(g, summary);
  if (!rep.passed) {
    std::cerr << "gradcheck: max relative error " << rep.max_rel_error << " in " << rep.worst_check
              << " exceeds " << opts.tolerance << "\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPD domain adaptation by optimal transport"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress the JSON summary on stdout");
  app.add_option("--out", g.out, "output directory");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "generate a source/target dataset pair");
  c_gen->add_option("--dim", gen.dim, "matrix dimension")->check(CLI::PositiveNumber);
  c_gen->add_option("--count", gen.count, "samples per domain (per band with --bands)")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--sigma", gen.sigma, "log-domain standard deviation")
      ->check(CLI::PositiveNumber);
  c_gen->add_option("--shift-w", gen.shift_w, "Bi-Map shift W as \"a,b;c,d\"");
  c_gen->add_option("--bands", gen.bands, "generate a banded dataset with this many bands")
      ->check(CLI::NonNegativeNumber);
  c_gen->add_option("--separation", gen.separation, "band separation");
  c_gen->add_option("--within-shift", gen.within_shift, "within-band shift");
  c_gen->add_flag("--adversarial", gen.adversarial, "permute bands (negative control)");

  TransportArgs tr;
  auto* c_tr = app.add_subcommand("transport", "solve EMD and map sources onto targets");
  c_tr->add_option("--source", tr.source)->required();
  c_tr->add_option("--target", tr.target)->required();
  c_tr->add_option("--cost", tr.cost, "squared | unsquared");
  c_tr->add_flag("--verify-affine", tr.verify_affine, "run the Bi-Map recovery check");
  c_tr->add_option("--shift-w", tr.shift_w, "W for --verify-affine");

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train", "train the SPD network");
  c_train->add_option("--source", ta.source)->required();
  c_train->add_option("--target", ta.target)->required();
  c_train->add_option("--config", ta.config, "key=value config file");
  c_train->add_option("--mode", ta.mode, "source | mda | cda | mda+cda | deepjdot");
  c_train->add_option("--epochs", ta.epochs)->check(CLI::NonNegativeNumber);
  c_train->add_option("--batch-size", ta.batch_size)->check(CLI::PositiveNumber);
  c_train->add_option("--refresh", ta.refresh, "pseudo-label refresh period")
      ->check(CLI::PositiveNumber);
  c_train->add_option("--lr", ta.lr)->check(CLI::PositiveNumber);
  c_train->add_option("--alpha1", ta.alpha1);
  c_train->add_option("--alpha2", ta.alpha2);
  c_train->add_option("--alpha3", ta.alpha3);
  c_train->add_option("--jd-alpha1", ta.jd_alpha1);
  c_train->add_option("--jd-alpha2", ta.jd_alpha2);
  c_train->add_option("--pseudo", ta.pseudo, "mdm | network");
  c_train->add_option("--d-out", ta.d_out, "Bi-Map output dimension")->check(CLI::PositiveNumber);
  c_train->add_option("--epsilon", ta.epsilon, "ReEig threshold")->check(CLI::PositiveNumber);

  std::string model_path, data_path;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  c_eval->add_option("--model", model_path)->required();
  c_eval->add_option("--data", data_path)->required();

  std::string dt_source, dt_target;
  auto* c_dt = app.add_subcommand("disttable", "band-by-band LEM distance table");
  c_dt->add_option("--source", dt_source)->required();
  c_dt->add_option("--target", dt_target)->required();

  GradcheckOptions gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  c_gc->add_option("--seeds", gc.seeds)->check(CLI::PositiveNumber);
  c_gc->add_option("--min-dim", gc.min_dim)->check(CLI::Range(2, 64));
  c_gc->add_option("--max-dim", gc.max_dim)->check(CLI::Range(2, 64));
  c_gc->add_option("--tolerance", gc.tolerance)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  g.seed_given = app.count("--seed") > 0;

  try {
    if (*c_gen) return cmd_gen(gen, c_gen->count("--dim") > 0, g);
    if (*c_tr) return cmd_transport(tr, g);
    if (*c_train) return cmd_train(ta, g);
    if (*c_eval) return cmd_eval(model_path, data_path, g);
    if (*c_dt) return cmd_disttable(dt_source, dt_target, g);
    if (*c_gc) return cmd_gradcheck(gc, g);
  } catch (const UsageError& e) {
    std::cerr << "spdot: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "spdot: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
