#include "stmc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace stmc {

namespace fs = std::filesystem;

std::string grid_to_csv(const Grid2D& grid) {
  std::string out;
  out.reserve(static_cast<std::size_t>(grid.nx) * grid.ny * 24);
  char buf[40];
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const double v = grid.at(i, j);
      if (std::isnan(v))
        std::snprintf(buf, sizeof buf, "nan");
      else
        std::snprintf(buf, sizeof buf, "%.17g", v);
      if (i) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Grid2D grid_from_csv(const std::string& text) {
  Grid2D g;
  std::istringstream in(text);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::stringstream ss(line);
    std::string cell;
    int count = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw IoError("csv row " + std::to_string(row) + ": cannot parse '" + cell + "'");
      g.values.push_back(v);
      ++count;
    }
    if (g.nx == 0)
      g.nx = count;
    else if (count != g.nx)
      throw IoError("csv row " + std::to_string(row) + " has " + std::to_string(count) + " values, expected " +
                    std::to_string(g.nx));
  }
  g.ny = row;
  return g;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_grid_csv(const fs::path& path, const Grid2D& grid) { write_text(path, grid_to_csv(grid)); }
Grid2D read_grid_csv(const fs::path& path) { return grid_from_csv(read_text(path)); }

Grid2D label_grid(const LabelGrid& labels) {
  Grid2D g{labels.n_cells(), labels.n_cells(), {}};
  g.values.reserve(labels.cells().size());
  for (Label l : labels.cells()) g.values.push_back(static_cast<double>(l));
  return g;
}

namespace {

std::string color(double s) {
  // Blue (0) through white (0.5) to red (1).
  s = std::clamp(s, 0.0, 1.0);
  double r, g, b;
  if (s < 0.5) {
    const double u = s / 0.5;
    r = 0.23 + u * (0.97 - 0.23);
    g = 0.30 + u * (0.97 - 0.30);
    b = 0.75 + u * (0.97 - 0.75);
  } else {
    const double u = (s - 0.5) / 0.5;
    r = 0.97 + u * (0.71 - 0.97);
    g = 0.97 + u * (0.02 - 0.97);
    b = 0.97 + u * (0.15 - 0.97);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace

std::string heatmap_svg(const Grid2D& grid, const HeatmapStyle& style) {
  if (grid.nx <= 0 || grid.ny <= 0 || grid.values.empty()) throw IoError("heatmap: empty grid");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : grid.values)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const bool any = std::isfinite(lo);
  if (!any) lo = hi = 0.0;
  const double span = hi - lo;

  const int px = std::max(1, style.cell_px);
  const int W = grid.nx * px, H = grid.ny * px;
  const int bar_x = W + 10, bar_w = 16, width = W + 110, height = H + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" shape-rendering=\"crispEdges\">\n";
  os << "<g id=\"cells\">\n";
  char num[40];
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      const double v = grid.at(i, j);
      const std::string fill = !std::isfinite(v) ? "#9a9a9a" : span > 0.0 ? color((v - lo) / span) : color(0.5);
      os << "<rect x=\"" << i * px << "\" y=\"" << (grid.ny - 1 - j) * px << "\" width=\"" << px << "\" height=\""
         << px << "\" fill=\"" << fill << "\"/>\n";
    }
  os << "</g>\n<g id=\"colorbar\">\n";
  const int steps = 32;
  for (int k = 0; k < steps; ++k) {
    const double s = span > 0.0 ? 1.0 - (k + 0.5) / steps : 0.5;
    os << "<line x1=\"" << bar_x << "\" x2=\"" << bar_x + bar_w << "\" y1=\"" << k * H / double(steps) << "\" y2=\""
       << k * H / double(steps) << "\" stroke=\"" << color(s) << "\" stroke-width=\"" << H / double(steps) + 1
       << "\"/>\n";
  }
  std::snprintf(num, sizeof num, "%.4g", hi);
  os << "<text x=\"" << bar_x + bar_w + 4 << "\" y=\"10\" font-size=\"10\">" << num << "</text>\n";
  std::snprintf(num, sizeof num, "%.4g", lo);
  os << "<text x=\"" << bar_x + bar_w + 4 << "\" y=\"" << H << "\" font-size=\"10\">" << num << "</text>\n";
  if (!(span > 0.0))
    os << "<text x=\"" << bar_x + bar_w + 4 << "\" y=\"" << H / 2 << "\" font-size=\"9\">"
       << (any ? "constant" : "no data") << "</text>\n";
  os << "</g>\n";
  os << "<text x=\"0\" y=\"" << H + 20 << "\" font-size=\"12\">" << escape(style.caption) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_heatmap(const fs::path& path, const Grid2D& grid, const HeatmapStyle& style) {
  write_text(path, heatmap_svg(grid, style));
}

}  // namespace stmc
