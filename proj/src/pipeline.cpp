#include "stmc/pipeline.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "stmc/io.hpp"
#include "stmc/kernels.hpp"
#include "stmc/parallel.hpp"

namespace stmc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const char* kind_name(BasisKind k) {
  switch (k) {
    case BasisKind::Constant:
      return "constant";
    case BasisKind::LinearX:
      return "linear_x";
    case BasisKind::LinearY:
      return "linear_y";
  }
  return "?";
}

}  // namespace

// ---------------------------------------------------------------------------
// In-memory stages

FineProblem fine_problem(const RunConfig& config, const DomainTimeline& timeline) {
  FineProblem p;
  p.grid = FineGrid{config.geometry.n_cells};
  p.timeline = &timeline;
  p.time = config.time;
  p.data = config.problem();
  p.solver = config.spd_options();
  return p;
}

CellStage run_cells(const RunConfig& config, const DomainTimeline& timeline, int coarse_n, int layers) {
  const auto t0 = Clock::now();
  const FineGrid grid{config.geometry.n_cells};
  CellStage out;
  out.layout = build_rve_layout(1.0 / coarse_n, layers, grid);
  const RveLayout& layout = out.layout;
  const CoefficientField kappa = config.problem().conductivity(grid, timeline.at(0));
  out.bases = BasisTimeline(layout.num_blocks(), layout.block_cells, config.time.num_points());
  const std::vector<BasisRequest> requests = all_basis_requests();
  std::vector<std::vector<ResidualRecord>> per_block(static_cast<std::size_t>(layout.num_blocks()));

  parallel_for(layout.num_blocks(), config.threads, [&](int p) {
    const std::vector<BasisSeries> series =
        solve_block_bases(layout, p, timeline, kappa, config.time, requests, config.saddle_options());
    out.bases.store(layout, p, series);
    auto& recs = per_block[static_cast<std::size_t>(p)];
    for (const auto& s : series)
      for (const auto& l : s.levels)
        recs.push_back({p, s.continuum, s.kind, l.time_index, l.constraint_residual, l.stationarity_residual,
                        static_cast<int>(l.rows.size()), static_cast<int>(l.dropped.size())});
  });
  for (auto& recs : per_block)
    for (auto& r : recs) {
      out.max_constraint_residual = std::max(out.max_constraint_residual, r.constraint_residual);
      out.max_stationarity_residual = std::max(out.max_stationarity_residual, r.stationarity_residual);
      out.residuals.push_back(r);
    }
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<EffectiveCoefficients> run_upscale(const RunConfig& config, const DomainTimeline& timeline,
                                               const CellStage& cells) {
  const FineGrid grid{config.geometry.n_cells};
  const CoefficientField kappa = config.problem().conductivity(grid, timeline.at(0));
  const ProblemData data = config.problem();
  CoefficientInputs in;
  in.layout = &cells.layout;
  in.bases = &cells.bases;
  in.timeline = &timeline;
  in.kappa = &kappa;
  in.data = &data;
  in.time = config.time;
  std::vector<EffectiveCoefficients> out;
  for (int idx = 0; idx < config.time.num_points(); ++idx)
    out.push_back(effective_coefficients(in, idx, config.threads));
  return out;
}

ExampleRun run_example(const RunConfig& config) {
  validate(config);
  ExampleRun run;
  run.config = config;
  run.timeline = build_timeline(config.geometry);
  run.fine = run_fine(fine_problem(config, run.timeline));
  for (std::size_t k = 0; k < config.coarse.size(); ++k) {
    CoarseRun c;
    c.n = config.coarse[k];
    c.layers = config.layers[k];
    c.cells = run_cells(config, run.timeline, c.n, c.layers);
    c.coeffs = run_upscale(config, run.timeline, c.cells);
    c.macro = run_macro(c.coeffs, CoarseGrid{c.n}, config.time, {config.use_dtensor});
    c.errors = relative_errors(run.fine, c.macro, c.cells.layout, run.timeline);
    run.coarse.push_back(std::move(c));
  }
  return run;
}

// ---------------------------------------------------------------------------
// Serialization helpers

std::string coefficients_csv(const BlockCoefficients& c) {
  std::ostringstream os;
  char buf[64];
  auto row = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << name << "," << buf << "\n";
  };
  os << "name,value\n";
  row("weight", c.weight);
  row("area", c.area);
  for (int i = 0; i < kNumContinua; ++i) row("vanished_" + std::to_string(i + 1), c.vanished[i] ? 1.0 : 0.0);
  for (int j = 0; j < kNumContinua; ++j)
    for (int i = 0; i < kNumContinua; ++i) row("D_" + std::to_string(j + 1) + "_" + std::to_string(i + 1), c.D[j][i]);
  for (int j = 0; j < kNumContinua; ++j)
    for (int i = 0; i < kNumContinua; ++i) row("B_" + std::to_string(j + 1) + "_" + std::to_string(i + 1), c.B[j][i]);
  auto tensor = [&](const char* name, const ContinuumTensor& t) {
    for (int j = 0; j < kNumContinua; ++j)
      for (int i = 0; i < kNumContinua; ++i)
        for (int m = 0; m < 2; ++m)
          for (int n = 0; n < 2; ++n)
            row(std::string(name) + "_" + std::to_string(j + 1) + "_" + std::to_string(i + 1) + "_" +
                    std::to_string(m + 1) + "_" + std::to_string(n + 1),
                t[j][i][m][n]);
  };
  tensor("Btensor", c.Btensor);
  for (int j = 0; j < kNumContinua; ++j) row("b_" + std::to_string(j + 1), c.b[j]);
  if (c.has_initial) {
    tensor("Dtensor", c.Dtensor);
    for (int j = 0; j < kNumContinua; ++j) row("b0_" + std::to_string(j + 1), c.b0[j]);
  }
  return os.str();
}

namespace {

struct Blob {
  std::vector<long long> ints;
  std::vector<double> doubles;
};

constexpr char kMagic[8] = {'S', 'T', 'M', 'C', 'B', 'L', 'B', '1'};

void write_blob(const fs::path& path, const Blob& b) {
  std::string bytes(kMagic, sizeof kMagic);
  auto put = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  const std::uint64_t ni = b.ints.size(), nd = b.doubles.size();
  put(&ni, sizeof ni);
  put(&nd, sizeof nd);
  put(b.ints.data(), ni * sizeof(long long));
  put(b.doubles.data(), nd * sizeof(double));
  write_text(path, bytes);
}

Blob read_blob(const fs::path& path) {
  const std::string bytes = read_text(path);
  std::size_t pos = 0;
  auto get = [&](void* p, std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("truncated binary store " + path.string());
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  };
  char magic[8];
  get(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError("bad binary store " + path.string());
  std::uint64_t ni = 0, nd = 0;
  get(&ni, sizeof ni);
  get(&nd, sizeof nd);
  Blob b;
  b.ints.resize(ni);
  b.doubles.resize(nd);
  get(b.ints.data(), ni * sizeof(long long));
  get(b.doubles.data(), nd * sizeof(double));
  return b;
}

// weight, area, D, B, Btensor, Dtensor, b, has_initial, b0, vanished
constexpr int kCoeffDoubles = 2 + 2 * kNumContinua * kNumContinua + 8 * kNumContinua * kNumContinua + kNumContinua +
                              1 + kNumContinua + kNumContinua;

void flatten(const BlockCoefficients& c, std::vector<double>& out) {
  out.push_back(c.weight);
  out.push_back(c.area);
  for (auto& r : c.D) out.insert(out.end(), r.begin(), r.end());
  for (auto& r : c.B) out.insert(out.end(), r.begin(), r.end());
  for (const ContinuumTensor* t : {&c.Btensor, &c.Dtensor})
    for (auto& a : *t)
      for (auto& b : a)
        for (auto& m : b) out.insert(out.end(), m.begin(), m.end());
  out.insert(out.end(), c.b.begin(), c.b.end());
  out.push_back(c.has_initial ? 1.0 : 0.0);
  out.insert(out.end(), c.b0.begin(), c.b0.end());
  for (bool v : c.vanished) out.push_back(v ? 1.0 : 0.0);
}

BlockCoefficients unflatten(const double*& p) {
  BlockCoefficients c;
  c.weight = *p++;
  c.area = *p++;
  for (auto& r : c.D)
    for (auto& v : r) v = *p++;
  for (auto& r : c.B)
    for (auto& v : r) v = *p++;
  for (ContinuumTensor* t : {&c.Btensor, &c.Dtensor})
    for (auto& a : *t)
      for (auto& b : a)
        for (auto& m : b)
          for (auto& v : m) v = *p++;
  for (auto& v : c.b) v = *p++;
  c.has_initial = *p++ != 0.0;
  for (auto& v : c.b0) v = *p++;
  for (int k = 0; k < kNumContinua; ++k) c.vanished[k] = *p++ != 0.0;
  return c;
}

Grid2D cell_average_grid(const FineGrid& grid, const std::vector<double>& nodal, const LabelGrid& labels) {
  const int n = grid.n_cells, w = n + 1;
  Grid2D g{n, n, std::vector<double>(static_cast<std::size_t>(n) * n)};
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int a = 0; a < 4; ++a)
        s += nodal[static_cast<std::size_t>(j + q1::kCorner[a][1]) * w + i + q1::kCorner[a][0]];
      g.values[static_cast<std::size_t>(j) * n + i] = labels.at(i, j) == Label::Excluded ? std::nan("") : 0.25 * s;
    }
  return g;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Disk pipeline

const std::map<std::string, std::vector<std::string>> kDeps{
    {"geometry", {}},           {"fine", {"geometry"}},          {"cells", {"geometry"}},
    {"upscale", {"cells"}},     {"macro", {"upscale"}},          {"errors", {"fine", "macro"}}};

std::set<std::string> needed_stages(const std::vector<std::string>& selected) {
  std::set<std::string> out;
  std::vector<std::string> todo(selected.begin(), selected.end());
  while (!todo.empty()) {
    const std::string s = todo.back();
    todo.pop_back();
    if (!out.insert(s).second) continue;
    for (const auto& d : kDeps.at(s)) todo.push_back(d);
  }
  return out;
}

class DiskRun {
 public:
  explicit DiskRun(const RunConfig& cfg) : cfg_(cfg), out_(cfg.out_dir), grid_{cfg.geometry.n_cells} {
    RunConfig k = cfg;
    k.out_dir = "";
    k.stages = kAllStages;
    k.threads = 0;
    base_key_ = serialize_config(k);
  }

  PipelineResult run();

 private:
  using Body = std::function<std::vector<fs::path>()>;
  using Loader = std::function<void()>;

  std::string stamp_key(const std::string& stage, int coarse) const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(base_key_ + "|" + stage + "|" + std::to_string(coarse))));
    return buf;
  }
  fs::path stamp_path(const std::string& stage, int coarse) const {
    return out_ / "stamps" / (coarse ? stage + "_H" + std::to_string(coarse) + ".stamp" : stage + ".stamp");
  }
  bool stamp_valid(const std::string& stage, int coarse) const;
  void write_stamp(const std::string& stage, int coarse, const std::vector<fs::path>& files) const;
  /// Runs or loads one stage; returns false after a failure.
  bool stage(const std::string& name, int coarse, const Body& body, const Loader& load);

  fs::path hdir(int n) const { return out_ / ("H" + std::to_string(n)); }

  std::vector<fs::path> do_geometry();
  void load_geometry();
  std::vector<fs::path> do_fine();
  void load_fine();
  std::vector<fs::path> do_cells(CoarseRun& c);
  void load_cells(CoarseRun& c);
  std::vector<fs::path> do_upscale(CoarseRun& c);
  void load_upscale(CoarseRun& c);
  std::vector<fs::path> do_macro(CoarseRun& c);
  void load_macro(CoarseRun& c);
  std::vector<fs::path> do_errors(CoarseRun& c);

  json manifest(const PipelineResult& r) const;

  RunConfig cfg_;
  fs::path out_;
  FineGrid grid_;
  std::string base_key_;
  std::set<std::string> needed_;
  std::vector<StageRecord> records_;
  std::string error_;
  std::string failed_stage_;
  ExampleRun run_;
  bool have_timeline_ = false;
  bool have_fine_ = false;
  json scaling_;
};

bool DiskRun::stamp_valid(const std::string& stage, int coarse) const {
  const fs::path p = stamp_path(stage, coarse);
  if (!fs::exists(p)) return false;
  std::istringstream in(read_text(p));
  std::string key;
  std::getline(in, key);
  if (key != stamp_key(stage, coarse)) return false;
  std::string file;
  while (std::getline(in, file))
    if (!file.empty() && !fs::exists(out_ / file)) return false;
  return true;
}

void DiskRun::write_stamp(const std::string& stage, int coarse, const std::vector<fs::path>& files) const {
  std::string text = stamp_key(stage, coarse) + "\n";
  for (const auto& f : files) text += fs::relative(f, out_).generic_string() + "\n";
  write_text(stamp_path(stage, coarse), text);
}

bool DiskRun::stage(const std::string& name, int coarse, const Body& body, const Loader& load) {
  StageRecord rec{name, coarse, "", 0.0, ""};
  const auto t0 = Clock::now();
  if (!needed_.count(name)) {
    rec.status = "skipped";
    records_.push_back(rec);
    return true;
  }
  try {
    if (stamp_valid(name, coarse)) {
      load();
      rec.status = "cached";
    } else {
      fs::remove(stamp_path(name, coarse));
      write_stamp(name, coarse, body());
      rec.status = "ran";
    }
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.message = e.what();
    error_ = e.what();
    failed_stage_ = coarse ? name + "_H" + std::to_string(coarse) : name;
  }
  rec.seconds = seconds_since(t0);
  records_.push_back(rec);
  return rec.status != "failed";
}

std::vector<fs::path> DiskRun::do_geometry() {
  run_.timeline = build_timeline(cfg_.geometry);
  have_timeline_ = true;
  std::vector<fs::path> files;
  for (int k = 0; k <= run_.timeline.n_steps(); ++k) {
    const Grid2D g = label_grid(run_.timeline.at(k));
    const fs::path p = out_ / ("labels_k" + std::to_string(k) + ".csv");
    write_grid_csv(p, g);
    files.push_back(p);
    if (cfg_.heatmaps) {
      Grid2D shown = g;
      for (double& v : shown.values)
        if (v == 0.0) v = std::nan("");
      const fs::path s = out_ / ("labels_k" + std::to_string(k) + ".svg");
      write_heatmap(s, shown, {"labels at k = " + std::to_string(k) + " (1 thick, 2 thin, gray excluded)", 2});
      files.push_back(s);
    }
  }
  json report = json::array();
  for (std::size_t i = 0; i < cfg_.coarse.size(); ++i) {
    const RveLayout layout = build_rve_layout(1.0 / cfg_.coarse[i], cfg_.layers[i], grid_);
    const ValidationReport v = validate_geometry(run_.timeline, layout);
    json flags = json::array();
    for (const auto& f : v.flags) flags.push_back({{"block", f.block}, {"level", f.level}, {"continuum", f.continuum + 1}});
    report.push_back({{"coarse", cfg_.coarse[i]}, {"ok", v.ok()}, {"flags", flags}});
  }
  const fs::path gj = out_ / "geometry.json";
  write_text(gj, report.dump(2) + "\n");
  files.push_back(gj);
  return files;
}

void DiskRun::load_geometry() {
  DomainTimeline tl;
  tl.n_cells = cfg_.geometry.n_cells;
  for (int k = 0; k <= cfg_.time.n_steps; ++k) {
    const Grid2D g = read_grid_csv(out_ / ("labels_k" + std::to_string(k) + ".csv"));
    if (g.nx != tl.n_cells || g.ny != tl.n_cells) throw IoError("cached labels have the wrong size");
    LabelGrid l(tl.n_cells);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) l.set(i, j, static_cast<Label>(static_cast<int>(g.at(i, j))));
    tl.levels.push_back(std::move(l));
  }
  run_.timeline = std::move(tl);
  have_timeline_ = true;
}

std::vector<fs::path> DiskRun::do_fine() {
  run_.fine = run_fine(fine_problem(cfg_, run_.timeline));
  have_fine_ = true;
  std::vector<fs::path> files;
  Blob blob;
  blob.ints = {grid_.n_cells, cfg_.time.num_points()};
  for (const auto& l : run_.fine.levels) {
    blob.ints.push_back(l.iterations);
    const std::vector<double> nodal = l.nodal_grid();
    blob.doubles.insert(blob.doubles.end(), nodal.begin(), nodal.end());
  }
  blob.doubles.push_back(run_.fine.total_seconds);
  const fs::path bin = out_ / "fine.bin";
  write_blob(bin, blob);
  files.push_back(bin);
  for (int k = 0; k <= cfg_.time.n_steps; ++k) {
    const FineLevel& l = run_.fine.at_geometry_level(k);
    const int w = grid_.nodes_per_side();
    const std::vector<double> nodal = l.nodal_grid();
    const fs::path p = out_ / ("fine_k" + std::to_string(k) + ".csv");
    write_grid_csv(p, Grid2D{w, w, nodal});
    files.push_back(p);
    if (cfg_.heatmaps) {
      const fs::path s = out_ / ("fine_k" + std::to_string(k) + ".svg");
      char cap[64];
      std::snprintf(cap, sizeof cap, "fine solution, t = %g", l.t);
      write_heatmap(s, cell_average_grid(grid_, nodal, run_.timeline.at(k)), {cap, 2});
      files.push_back(s);
    }
  }
  return files;
}

void DiskRun::load_fine() {
  const Blob b = read_blob(out_ / "fine.bin");
  const int np = cfg_.time.num_points();
  const std::size_t per = static_cast<std::size_t>(grid_.num_nodes());
  if (b.ints.size() != static_cast<std::size_t>(2 + np) || b.ints[0] != grid_.n_cells || b.ints[1] != np ||
      b.doubles.size() != per * np + 1)
    throw IoError("cached fine.bin does not match the configuration");
  FineTrajectory t;
  t.grid = grid_;
  t.time = cfg_.time;
  for (int idx = 0; idx < np; ++idx) {
    FineLevel l;
    l.time_index = idx;
    l.t = cfg_.time.time(idx);
    l.geometry_level = cfg_.time.geometry_level(idx);
    l.active = active_nodes(grid_, run_.timeline.at(l.geometry_level), std::nullopt, l.geometry_level);
    l.values = l.active.restrict_field(std::span(b.doubles.data() + per * idx, per));
    l.iterations = static_cast<int>(b.ints[2 + idx]);
    t.levels.push_back(std::move(l));
  }
  t.total_seconds = b.doubles.back();
  run_.fine = std::move(t);
  have_fine_ = true;
}

std::vector<fs::path> DiskRun::do_cells(CoarseRun& c) {
  c.cells = run_cells(cfg_, run_.timeline, c.n, c.layers);
  const BasisTimeline& bt = c.cells.bases;
  std::vector<fs::path> files;
  Blob blob;
  blob.ints = {bt.num_blocks(), bt.block_cells(), bt.num_time_points()};
  blob.doubles = bt.raw();
  blob.doubles.push_back(c.cells.max_constraint_residual);
  blob.doubles.push_back(c.cells.max_stationarity_residual);
  blob.doubles.push_back(c.cells.seconds);
  const fs::path bin = hdir(c.n) / "bases.bin";
  write_blob(bin, blob);
  files.push_back(bin);

  std::string log;
  for (const auto& r : c.cells.residuals) {
    json j{{"block", r.block},
           {"continuum", r.continuum + 1},
           {"kind", kind_name(r.kind)},
           {"time_index", r.time_index},
           {"constraint_residual", r.constraint_residual},
           {"stationarity_residual", r.stationarity_residual},
           {"rows", r.rows},
           {"dropped", r.dropped}};
    log += j.dump() + "\n";
  }
  const fs::path lp = hdir(c.n) / "constraint_residuals.jsonl";
  write_text(lp, log);
  files.push_back(lp);
  return files;
}

void DiskRun::load_cells(CoarseRun& c) {
  const Blob b = read_blob(hdir(c.n) / "bases.bin");
  c.cells.layout = build_rve_layout(1.0 / c.n, c.layers, grid_);
  if (b.ints.size() != 3 || b.ints[0] != c.cells.layout.num_blocks() || b.ints[1] != c.cells.layout.block_cells ||
      b.ints[2] != cfg_.time.num_points())
    throw IoError("cached bases.bin does not match the configuration");
  c.cells.bases = BasisTimeline(static_cast<int>(b.ints[0]), static_cast<int>(b.ints[1]), static_cast<int>(b.ints[2]));
  auto& raw = c.cells.bases.raw();
  if (b.doubles.size() != raw.size() + 3) throw IoError("cached bases.bin is truncated");
  std::copy(b.doubles.begin(), b.doubles.begin() + static_cast<std::ptrdiff_t>(raw.size()), raw.begin());
  c.cells.max_constraint_residual = b.doubles[raw.size()];
  c.cells.max_stationarity_residual = b.doubles[raw.size() + 1];
  c.cells.seconds = b.doubles[raw.size() + 2];
}

std::vector<fs::path> DiskRun::do_upscale(CoarseRun& c) {
  c.coeffs = run_upscale(cfg_, run_.timeline, c.cells);
  std::vector<fs::path> files;
  Blob blob;
  blob.ints = {c.n, static_cast<long long>(c.coeffs.size())};
  for (const auto& e : c.coeffs)
    for (const auto& b : e.blocks) flatten(b, blob.doubles);
  const fs::path bin = hdir(c.n) / "coeffs.bin";
  write_blob(bin, blob);
  files.push_back(bin);
  for (int k = 0; k <= cfg_.time.n_steps; ++k) {
    const EffectiveCoefficients& e = c.coeffs[static_cast<std::size_t>(cfg_.time.index_of_level(k))];
    for (const auto& b : e.blocks) {
      const fs::path p = hdir(c.n) / ("coeffs_p" + std::to_string(b.block) + "_k" + std::to_string(k) + ".csv");
      write_text(p, coefficients_csv(b));
      files.push_back(p);
    }
  }
  return files;
}

void DiskRun::load_upscale(CoarseRun& c) {
  const Blob b = read_blob(hdir(c.n) / "coeffs.bin");
  const int np = cfg_.time.num_points(), nb = c.n * c.n;
  if (b.ints.size() != 2 || b.ints[0] != c.n || b.ints[1] != np ||
      b.doubles.size() != static_cast<std::size_t>(np) * nb * kCoeffDoubles)
    throw IoError("cached coeffs.bin does not match the configuration");
  const double* p = b.doubles.data();
  c.coeffs.clear();
  for (int idx = 0; idx < np; ++idx) {
    EffectiveCoefficients e;
    e.time_index = idx;
    e.t = cfg_.time.time(idx);
    e.geometry_level = cfg_.time.geometry_level(idx);
    for (int q = 0; q < nb; ++q) {
      e.blocks.push_back(unflatten(p));
      e.blocks.back().block = q;
    }
    c.coeffs.push_back(std::move(e));
  }
}

std::vector<fs::path> DiskRun::do_macro(CoarseRun& c) {
  const CoarseGrid cg{c.n};
  c.macro = run_macro(c.coeffs, cg, cfg_.time, {cfg_.use_dtensor});
  std::vector<fs::path> files;
  Blob blob;
  blob.ints = {c.n, static_cast<long long>(c.macro.levels.size())};
  for (const auto& l : c.macro.levels)
    for (const auto& u : l.U) blob.doubles.insert(blob.doubles.end(), u.begin(), u.end());
  blob.doubles.push_back(c.macro.seconds);
  const fs::path bin = hdir(c.n) / "macro.bin";
  write_blob(bin, blob);
  files.push_back(bin);
  const int w = cg.nodes_per_side();
  for (int k = 0; k <= cfg_.time.n_steps; ++k) {
    const MacroLevel& l = c.macro.at_geometry_level(k);
    std::string text = "x,y";
    for (int cc = 0; cc < kNumContinua; ++cc) text += ",U" + std::to_string(cc + 1);
    text += "\n";
    for (int J = 0; J < w; ++J)
      for (int I = 0; I < w; ++I) {
        text += fmt(I * cg.H()) + "," + fmt(J * cg.H());
        for (int cc = 0; cc < kNumContinua; ++cc) text += "," + fmt(l.U[cc][static_cast<std::size_t>(J) * w + I]);
        text += "\n";
      }
    const fs::path p = hdir(c.n) / ("macro_k" + std::to_string(k) + ".csv");
    write_text(p, text);
    files.push_back(p);
    if (cfg_.heatmaps)
      for (int cc = 0; cc < kNumContinua; ++cc) {
        const fs::path s = hdir(c.n) / ("macro_U" + std::to_string(cc + 1) + "_k" + std::to_string(k) + ".svg");
        char cap[80];
        std::snprintf(cap, sizeof cap, "macro U%d, H = 1/%d, t = %g", cc + 1, c.n, l.t);
        write_heatmap(s, Grid2D{w, w, l.U[cc]}, {cap, std::max(4, 240 / w)});
        files.push_back(s);
      }
  }
  return files;
}

void DiskRun::load_macro(CoarseRun& c) {
  const Blob b = read_blob(hdir(c.n) / "macro.bin");
  const CoarseGrid cg{c.n};
  const int np = cfg_.time.num_points();
  const std::size_t per = static_cast<std::size_t>(cg.num_nodes());
  if (b.ints.size() != 2 || b.ints[0] != c.n || b.ints[1] != np || b.doubles.size() != per * kNumContinua * np + 1)
    throw IoError("cached macro.bin does not match the configuration");
  MacroTrajectory t;
  t.grid = cg;
  t.time = cfg_.time;
  t.dofs = cg.num_dofs();
  const double* p = b.doubles.data();
  for (int idx = 0; idx < np; ++idx) {
    MacroLevel l;
    l.time_index = idx;
    l.t = cfg_.time.time(idx);
    for (auto& u : l.U) {
      u.assign(p, p + per);
      p += per;
    }
    t.levels.push_back(std::move(l));
  }
  t.seconds = b.doubles.back();
  c.macro = std::move(t);
}

std::vector<fs::path> DiskRun::do_errors(CoarseRun& c) {
  c.errors = relative_errors(run_.fine, c.macro, c.cells.layout, run_.timeline);
  std::string table = "t";
  std::string detail = "t";
  for (int cc = 0; cc < kNumContinua; ++cc) {
    table += ",e2_" + std::to_string(cc + 1);
    const std::string s = std::to_string(cc + 1);
    detail += ",e2_" + s + ",sqrt_e2_" + s + ",blocks_" + s + ",skipped_" + s;
  }
  table += "\n";
  detail += "\n";
  for (const auto& row : c.errors.errors) {
    table += fmt(row[0].t);
    detail += fmt(row[0].t);
    for (const auto& e : row) {
      table += "," + fmt(e.ratio);
      detail += "," + fmt(e.ratio) + "," + fmt(e.root) + "," + std::to_string(e.blocks.size()) + "," +
                std::to_string(e.skipped.size());
    }
    table += "\n";
    detail += "\n";
  }
  const fs::path p = out_ / ("errors_H" + std::to_string(c.n) + ".csv");
  const fs::path d = hdir(c.n) / "errors_detail.csv";
  write_text(p, table);
  write_text(d, detail);
  return {p, d};
}

json DiskRun::manifest(const PipelineResult& r) const {
  json m;
  m["tool"] = "stmc";
  m["version"] = "0.1.0";
  m["status"] = r.exit_code == 0 ? "ok" : "failed";
  m["failed_stage"] = failed_stage_.empty() ? json(nullptr) : json(failed_stage_);
  m["error"] = error_.empty() ? json(nullptr) : json(error_);
  m["config_hash"] = config_hash(cfg_);
  m["config"] = serialize_config(cfg_);
  m["versions"] = {{"compiler", __VERSION__},
                   {"cxx_standard", static_cast<long>(__cplusplus)},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"kernels", kernels::backend_name(kernels::active_backend())}};
  m["threads"] = resolve_threads(cfg_.threads);
  json stages = json::array();
  for (const auto& s : records_) {
    json j{{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}};
    if (s.coarse) j["H"] = "1/" + std::to_string(s.coarse);
    if (!s.message.empty()) j["message"] = s.message;
    stages.push_back(j);
  }
  m["stages"] = stages;
  if (have_fine_) {
    long dofs = 0, iters = 0;
    for (const auto& l : run_.fine.levels) {
      dofs = std::max<long>(dofs, l.active.size());
      iters += l.iterations;
    }
    m["fine"] = {{"h", "1/" + std::to_string(grid_.n_cells)},
                 {"dofs", dofs},
                 {"cg_iterations", iters},
                 {"seconds", run_.fine.total_seconds}};
  }
  json coarse = json::array();
  for (const auto& c : run_.coarse) {
    json j{{"H", "1/" + std::to_string(c.n)}, {"layers", c.layers}};
    if (!c.cells.bases.raw().empty()) {
      j["max_constraint_residual"] = c.cells.max_constraint_residual;
      j["max_stationarity_residual"] = c.cells.max_stationarity_residual;
      j["cell_seconds"] = c.cells.seconds;
    }
    if (!c.macro.levels.empty()) {
      j["dofs"] = c.macro.dofs;
      j["macro_seconds"] = c.macro.seconds;
    }
    if (!c.errors.errors.empty()) {
      json e = json::array();
      for (const auto& row : c.errors.errors) {
        json x{{"t", row[0].t}};
        for (const auto& ce : row) {
          const std::string s = std::to_string(ce.continuum + 1);
          x["e2_" + s] = ce.undefined ? json(nullptr) : json(ce.ratio);
          x["sqrt_e2_" + s] = ce.undefined ? json(nullptr) : json(ce.root);
        }
        e.push_back(x);
      }
      j["errors"] = e;
    }
    coarse.push_back(j);
  }
  m["coarse"] = coarse;
  if (!scaling_.is_null()) m["scaling"] = scaling_;
  return m;
}

PipelineResult DiskRun::run() {
  PipelineResult result;
  try {
    validate(cfg_);
    fs::create_directories(out_);
    needed_ = needed_stages(cfg_.stages);
  } catch (const std::exception& e) {
    error_ = e.what();
    failed_stage_ = "config";
  }

  bool ok = error_.empty();
  ok = ok && stage("geometry", 0, [&] { return do_geometry(); }, [&] { load_geometry(); });
  ok = ok && stage("fine", 0, [&] { return do_fine(); }, [&] { load_fine(); });
  if (ok)
    for (std::size_t i = 0; i < cfg_.coarse.size() && ok; ++i) {
      CoarseRun& c = run_.coarse.emplace_back();
      c.n = cfg_.coarse[i];
      c.layers = cfg_.layers[i];
      c.cells.layout = build_rve_layout(1.0 / c.n, c.layers, grid_);
      ok = ok && stage("cells", c.n, [&] { return do_cells(c); }, [&] { load_cells(c); });
      ok = ok && stage("upscale", c.n, [&] { return do_upscale(c); }, [&] { load_upscale(c); });
      ok = ok && stage("macro", c.n, [&] { return do_macro(c); }, [&] { load_macro(c); });
      ok = ok && stage("errors", c.n, [&] { return do_errors(c); },
                       [&] { c.errors = relative_errors(run_.fine, c.macro, c.cells.layout, run_.timeline); });
    }

  if (ok && run_.coarse.size() >= 2 && have_timeline_) {
    const CoarseRun& a = run_.coarse[0];
    const CoarseRun& b = run_.coarse[1];
    if (!a.cells.bases.raw().empty() && !b.cells.bases.raw().empty() && a.n < b.n && b.n % a.n == 0) {
      const ScalingReport s =
          scaling_report(a.cells.layout, a.cells.bases, b.cells.layout, b.cells.bases, run_.timeline, cfg_.time);
      scaling_ = {{"H_coarse", "1/" + std::to_string(a.n)},
                  {"H_fine", "1/" + std::to_string(b.n)},
                  {"median_linear_ratio", s.median_linear_ratio},
                  {"median_grad_scaled_coarse", s.median_grad_scaled_coarse},
                  {"median_grad_scaled_fine", s.median_grad_scaled_fine}};
    }
  }

  result.exit_code = error_.empty() ? 0 : 1;
  result.error = error_;
  result.stages = records_;
  result.manifest = out_ / "manifest.json";
  try {
    write_text(result.manifest, manifest(result).dump(2) + "\n");
  } catch (const std::exception& e) {
    if (result.error.empty()) result.error = std::string("manifest: ") + e.what();
    result.exit_code = 1;
  }
  return result;
}

}  // namespace

std::string stage_label(const StageRecord& s) {
  return s.coarse ? s.name + " (H = 1/" + std::to_string(s.coarse) + ")" : s.name;
}

PipelineResult run_pipeline(const RunConfig& config) { return DiskRun(config).run(); }

}  // namespace stmc
