#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <regex>

#include "stmc/io.hpp"

using namespace stmc;

namespace {

int count(const std::string& s, const std::string& needle) {
  int n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stmc_io_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("a 2x2 grid yields exactly four cell rectangles") {
  const Grid2D g{2, 2, {0.0, 1.0, 2.0, 3.0}};
  const std::string svg = heatmap_svg(g, {"u", 10});
  CHECK(count(svg, "<rect") == 4);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find(">u<") != std::string::npos);
}

TEST_CASE("palette endpoints, NaN cells and constant fields") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Grid2D g{3, 1, {-1.0, nan, 1.0}};
  const std::string svg = heatmap_svg(g);
  CHECK(count(svg, "#9a9a9a") >= 1);
  const std::regex fill("<rect[^>]*fill=\"(#[0-9a-f]{6})\"");
  std::vector<std::string> fills;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it)
    fills.push_back((*it)[1]);
  REQUIRE(fills.size() == 3);
  CHECK(fills[0] != fills[2]);

  const Grid2D c{2, 2, {4.0, 4.0, 4.0, 4.0}};
  const std::string flat = heatmap_svg(c);
  CHECK(flat.find("constant") != std::string::npos);
  fills.clear();
  for (auto it = std::sregex_iterator(flat.begin(), flat.end(), fill); it != std::sregex_iterator(); ++it)
    fills.push_back((*it)[1]);
  REQUIRE(fills.size() == 4);
  CHECK(std::all_of(fills.begin(), fills.end(), [&](const std::string& f) { return f == fills[0]; }));

  const Grid2D allnan{1, 2, {nan, nan}};
  CHECK(heatmap_svg(allnan).find("no data") != std::string::npos);
  CHECK_THROWS_AS(heatmap_svg(Grid2D{}), IoError);
}

TEST_CASE("CSV grids round trip bit for bit, NaN included") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Grid2D g{3, 2, {0.1, -2.5e-300, 1.0 / 3.0, nan, 7.0, 1e22}};
  const Grid2D back = grid_from_csv(grid_to_csv(g));
  REQUIRE(back.nx == 3);
  REQUIRE(back.ny == 2);
  for (std::size_t k = 0; k < g.values.size(); ++k) {
    if (std::isnan(g.values[k]))
      CHECK(std::isnan(back.values[k]));
    else
      CHECK(back.values[k] == g.values[k]);
  }
  CHECK_THROWS_AS(grid_from_csv("1,2\n3\n"), IoError);
  CHECK_THROWS_AS(grid_from_csv("1,abc\n"), IoError);
}

TEST_CASE("files are written atomically into fresh directories") {
  const auto dir = scratch("files");
  const auto path = dir / "a" / "b" / "grid.csv";
  const Grid2D g{2, 1, {1.0, 2.0}};
  write_grid_csv(path, g);
  CHECK(read_grid_csv(path) == g);
  write_text(dir / "t.txt", "first");
  write_text(dir / "t.txt", "second");
  CHECK(read_text(dir / "t.txt") == "second");
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    CHECK(e.path().filename().string().find(".tmp") == std::string::npos);
  CHECK_THROWS_AS(read_text(dir / "missing.txt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("label grids map labels to 0, 1, 2") {
  LabelGrid l(2);
  l.set(1, 0, Label::Continuum1);
  l.set(0, 1, Label::Continuum2);
  const Grid2D g = label_grid(l);
  CHECK(g.values == std::vector<double>{0.0, 1.0, 2.0, 0.0});
}
