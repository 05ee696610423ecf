#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "stac/frame.hpp"

namespace stac {

struct TileGrid {
  int width = 0;   // frame pixels
  int height = 0;
  int rows = 4;
  int cols = 6;
  int tile_width = 0;
  int tile_height = 0;

  int tile_count() const { return rows * cols; }
  int index(int row, int col) const { return row * cols + col; }
  PixelRect tile_rect(int tile) const;
};

// Tiles of ceil(width/cols) x ceil(height/rows); the last row/column absorbs the remainder.
TileGrid partition_tiles(int width, int height, int rows, int cols);

struct ObjectKey {
  int global_id = 0;
  int camera_id = 0;
  auto operator<=>(const ObjectKey&) const = default;
};

struct LabeledBox {
  int global_id = 0;
  int camera_id = 0;
  int t = 0;
  Box bbox;
};

using CoverageBits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct CoverageMatrix {
  std::vector<ObjectKey> objects;  // sorted
  int tile_count = 0;
  CoverageBits bits;  // objects x tiles

  std::size_t object_count() const { return objects.size(); }
};

// A[o][tile] = 1 iff the tile intersects (positive area) some bbox of object o.
CoverageMatrix build_coverage(const std::vector<LabeledBox>& boxes, const TileGrid& grid);

using TileSet = std::vector<int>;  // ascending tile indices

bool covers(const CoverageMatrix& a, const TileSet& tiles);

/// Minimum-cardinality cover by include-first depth-first search over tile
/// indices, seeded with the greedy size as an upper bound. Among minimum
/// covers the lexicographically smallest index set is returned.
TileSet solve_cover_exact(const CoverageMatrix& a);

// Classic greedy: most newly covered objects first, lowest index on ties.
TileSet solve_cover_greedy(const CoverageMatrix& a);

// Every tile intersecting any object's bbox.
TileSet full_cover(const CoverageMatrix& a);

// Horizontal runs per row, then vertical stacking of runs with identical column span.
std::vector<PixelRect> merge_tiles(const TileSet& selected, const TileGrid& grid);

enum class CoverMode { full_cover, min_cover_exact, min_cover_greedy };

struct RoiMask {
  int camera_id = 0;
  TileGrid grid;
  TileSet selected_tiles;
  std::vector<PixelRect> merged_rects;
  int t_begin = 0;  // steps the mask applies to, half-open
  int t_end = std::numeric_limits<int>::max();

  bool applies_to(int t) const { return t >= t_begin && t < t_end; }
};

RoiMask make_mask(int camera_id, const TileGrid& grid, TileSet tiles);

// Pixels inside merged_rects are copied; everything else becomes 0.
Frame apply_mask(const Frame& frame, const RoiMask& mask);

// Tiles intersecting a bbox.
TileSet tiles_for_box(const Box& bbox, const TileGrid& grid);

std::string to_string(CoverMode mode);
CoverMode parse_cover_mode(const std::string& s);

std::string masks_to_json(const std::vector<RoiMask>& masks);
std::vector<RoiMask> masks_from_json(const std::string& text);

}  // namespace stac
