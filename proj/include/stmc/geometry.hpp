#pragma once
// Perforated two-continuum channel domain on a uniform fine grid.
//
// Cells are indexed (i, j) with i along x and j along y; cell (i, j) covers
// [i h, (i+1) h] x [j h, (j+1) h]. Label grids are stored row-major,
// index = j * n + i.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmc {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { Excluded = 0, Continuum1 = 1, Continuum2 = 2 };

inline constexpr int kNumContinua = 2;

/// Continuum index 0/1 of a non-excluded label.
inline int continuum_index(Label l) { return static_cast<int>(l) - 1; }
inline Label continuum_label(int index) { return static_cast<Label>(index + 1); }

enum class Orientation { Horizontal, Vertical };

/// A straight band of cells. Horizontal channels span all columns and
/// occupy rows [center - width/2, center - width/2 + width).
struct Channel {
  Orientation orientation = Orientation::Horizontal;
  int center = 0;
  int width = 1;

  bool operator==(const Channel&) const = default;
};

/// Half-open cell range [begin, end) of a channel after `reduction` cells of
/// total width loss, split evenly with the odd cell taken from the low side.
struct CellBand {
  int begin = 0;
  int end = 0;
  int width() const { return end - begin; }
};
CellBand channel_band(const Channel& c, int reduction);

struct GeometryConfig {
  int n_cells = 240;
  std::vector<Channel> thick_channels;
  std::vector<Channel> thin_channels;
  /// Width lost per time step, indexed by continuum (thick, thin).
  std::array<int, kNumContinua> shrink_rate{3, 1};
  int n_steps = 3;

  bool operator==(const GeometryConfig&) const = default;

  /// Desk-scale default on 240 cells: ten thick horizontal channels of
  /// width 11 (period 24) and nineteen thin vertical channels of width 5
  /// (period 12), all centred on cell 11 of their period. After three steps
  /// both families are two cells wide and straddle the 12-cell block lines.
  static GeometryConfig desk_default();
};

/// Throws GeometryError on out-of-range extents, nonpositive widths, or a
/// continuum whose channels are entirely covered by the other continuum.
void validate_config(const GeometryConfig& config);

class LabelGrid {
 public:
  LabelGrid() = default;
  explicit LabelGrid(int n_cells, Label fill = Label::Excluded)
      : n_(n_cells), cells_(static_cast<std::size_t>(n_cells) * n_cells, fill) {}

  int n_cells() const { return n_; }
  Label at(int i, int j) const { return cells_[static_cast<std::size_t>(j) * n_ + i]; }
  void set(int i, int j, Label l) { cells_[static_cast<std::size_t>(j) * n_ + i] = l; }
  const std::vector<Label>& cells() const { return cells_; }

  /// psi_c indicator of continuum index c (0-based) at cell (i, j).
  bool in_continuum(int i, int j, int c) const { return at(i, j) == continuum_label(c); }
  int count(Label l) const;

  bool operator==(const LabelGrid&) const = default;

 private:
  int n_ = 0;
  std::vector<Label> cells_;
};

/// Per-time-step label fields, levels 0..N.
struct DomainTimeline {
  int n_cells = 0;
  std::vector<LabelGrid> levels;

  int n_steps() const { return static_cast<int>(levels.size()) - 1; }
  const LabelGrid& at(int k) const { return levels.at(static_cast<std::size_t>(k)); }
};

/// Level-0 labels. Thick channels win at crossings.
DomainTimeline build_channel_lattice(const GeometryConfig& config);

/// Fills levels 1..N by eroding every channel to width w0 - k * rate. A cell
/// stays alive while any channel band still covers it and keeps its level-0
/// label; eroded cells become Excluded.
DomainTimeline evolve_domain(const DomainTimeline& timeline_at_0, const GeometryConfig& config);

/// Convenience: lattice followed by evolution.
DomainTimeline build_timeline(const GeometryConfig& config);

/// Axis-aligned half-open cell rectangle [i0, i1) x [j0, j1).
struct CellRect {
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;

  int nx() const { return i1 - i0; }
  int ny() const { return j1 - j0; }
  bool contains_cell(int i, int j) const { return i >= i0 && i < i1 && j >= j0 && j < j1; }
  bool contains(const CellRect& o) const {
    return o.i0 >= i0 && o.i1 <= i1 && o.j0 >= j0 && o.j1 <= j1;
  }
  bool operator==(const CellRect&) const = default;
};

struct BlockCount {
  int block = 0;
  int level = 0;
  std::array<int, kNumContinua> cells{};
};

struct ValidationFlag {
  int block = 0;
  int level = 0;
  int continuum = 0;
};

struct ValidationReport {
  std::vector<BlockCount> counts;
  std::vector<ValidationFlag> flags;
  bool ok() const { return flags.empty(); }
};

/// Counts continuum cells per block and level; flags empty (block, level,
/// continuum) triples. Blocks are given as cell rectangles.
ValidationReport validate_geometry(const DomainTimeline& timeline, const std::vector<CellRect>& blocks);

}  // namespace stmc
