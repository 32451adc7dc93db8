#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <map>

#include "stmc/io.hpp"
#include "stmc/pipeline.hpp"

using namespace stmc;
namespace fs = std::filesystem;

namespace {

RunConfig small_config(const std::string& dir) {
  RunConfig c = default_config();
  c.geometry.n_cells = 40;
  c.geometry.thick_channels.clear();
  c.geometry.thin_channels.clear();
  for (int k = 0; k < 4; ++k) c.geometry.thick_channels.push_back({Orientation::Horizontal, 5 + 10 * k, 7});
  for (int k = 0; k < 4; ++k) c.geometry.thin_channels.push_back({Orientation::Vertical, 5 + 10 * k, 3});
  c.geometry.shrink_rate = {2, 1};
  c.geometry.n_steps = 2;
  c.time = {2, 1.0, 1};
  c.coarse = {4, 8};
  c.layers = {1, 2};
  c.out_dir = (fs::temp_directory_path() / ("stmc_pipeline_" + dir)).string();
  fs::remove_all(c.out_dir);
  return c;
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().extension() == ".csv") out[fs::relative(e.path(), root).string()] = read_text(e.path());
  return out;
}

nlohmann::json manifest(const RunConfig& c) { return nlohmann::json::parse(read_text(fs::path(c.out_dir) / "manifest.json")); }

}  // namespace

TEST_CASE("geometry stage alone writes labels and a manifest") {
  RunConfig c = small_config("geometry");
  c.stages = {"geometry"};
  const PipelineResult r = run_pipeline(c);
  CHECK(r.exit_code == 0);
  for (int k = 0; k <= 2; ++k) CHECK(fs::exists(fs::path(c.out_dir) / ("labels_k" + std::to_string(k) + ".csv")));
  CHECK_FALSE(fs::exists(fs::path(c.out_dir) / "fine_k0.csv"));
  const auto m = manifest(c);
  CHECK(m["status"] == "ok");
  CHECK(m["config_hash"] == config_hash(c));
  const Grid2D l0 = read_grid_csv(fs::path(c.out_dir) / "labels_k0.csv");
  CHECK(l0.nx == 40);
  CHECK(l0 == label_grid(build_timeline(c.geometry).at(0)));
  fs::remove_all(c.out_dir);
}

TEST_CASE("full run, cached rerun and a fresh run agree byte for byte") {
  const RunConfig c = small_config("full");
  const PipelineResult first = run_pipeline(c);
  REQUIRE(first.exit_code == 0);
  for (const auto& s : first.stages) CHECK(s.status == "ran");
  const fs::path out(c.out_dir);
  for (const char* f : {"errors_H4.csv", "errors_H8.csv", "fine_k2.csv", "labels_k1.csv", "H4/macro_k2.csv",
                        "H8/coeffs_p63_k2.csv", "H4/coeffs_p0_k0.csv", "H4/constraint_residuals.jsonl",
                        "fine_k0.svg", "H8/macro_U2_k1.svg"})
    CHECK_MESSAGE(fs::exists(out / f), f);
  const std::string errors = read_text(out / "errors_H4.csv");
  CHECK(errors.rfind("t,e2_1,e2_2\n", 0) == 0);
  CHECK(std::count(errors.begin(), errors.end(), '\n') == 4);

  const auto m = manifest(c);
  CHECK(m["status"] == "ok");
  CHECK(m["coarse"].size() == 2);
  CHECK(m["coarse"][0]["max_constraint_residual"].get<double>() <= 1e-9);
  CHECK(m["fine"]["dofs"].get<long>() > 0);
  CHECK(m.contains("scaling"));

  const auto before = csv_files(out);
  const PipelineResult second = run_pipeline(c);
  INFO(second.error);
  REQUIRE(second.exit_code == 0);
  for (const auto& s : second.stages) CHECK(s.status == "cached");
  CHECK(csv_files(out) == before);

  RunConfig fresh = small_config("fresh");
  const PipelineResult third = run_pipeline(fresh);
  REQUIRE(third.exit_code == 0);
  CHECK(csv_files(fresh.out_dir) == before);

  RunConfig changed = c;
  changed.contrast = 2e-2;
  const PipelineResult fourth = run_pipeline(changed);
  for (const auto& s : fourth.stages)
    if (s.name == "fine") CHECK(s.status == "ran");
  fs::remove_all(c.out_dir);
  fs::remove_all(fresh.out_dir);
}

TEST_CASE("a failing stage still writes the manifest and keeps earlier artifacts") {
  RunConfig c = small_config("failing");
  c.fine_max_iterations = 1;
  c.fine_tol = 1e-14;
  const PipelineResult r = run_pipeline(c);
  CHECK(r.exit_code != 0);
  CHECK_FALSE(r.error.empty());
  const auto m = manifest(c);
  CHECK(m["status"] == "failed");
  CHECK(m["failed_stage"] == "fine");
  CHECK(fs::exists(fs::path(c.out_dir) / "labels_k0.csv"));
  fs::remove_all(c.out_dir);
}

TEST_CASE("an invalid configuration is reported in the manifest") {
  RunConfig c = small_config("invalid");
  c.coarse = {7};
  c.layers = {1};
  const PipelineResult r = run_pipeline(c);
  CHECK(r.exit_code != 0);
  CHECK(manifest(c)["failed_stage"] == "config");
  fs::remove_all(c.out_dir);
}

TEST_CASE("coefficient CSV rows") {
  BlockCoefficients b;
  b.area = 0.25;
  b.D[1][0] = 0.5;
  const std::string csv = coefficients_csv(b);
  CHECK(csv.find("D_2_1,0.5\n") != std::string::npos);
  CHECK(csv.find("Dtensor") == std::string::npos);
  b.has_initial = true;
  CHECK(coefficients_csv(b).find("Dtensor_1_1_1_1") != std::string::npos);
}

TEST_CASE("in-memory run: shapes of the results") {
  RunConfig c = small_config("memory");
  c.coarse = {4};
  c.layers = {1};
  const ExampleRun run = run_example(c);
  REQUIRE(run.coarse.size() == 1);
  const CoarseRun& cr = run.coarse[0];
  CHECK(cr.coeffs.size() == 3);
  CHECK(cr.macro.levels.size() == 3);
  CHECK(cr.errors.errors.size() == 3);
  CHECK(cr.cells.residuals.size() == 16u * 6u * 3u);
  CHECK(cr.cells.max_constraint_residual <= 1e-9);
}
