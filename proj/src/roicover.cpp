#include "stac/roicover.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>

#include <json.hpp>

namespace stac {

namespace {

class Bits {
 public:
  explicit Bits(std::size_t n = 0) : n_(n), words_((n + 63) / 64, 0) {}
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  // |other \ this|
  std::size_t gain(const Bits& other) const {
    std::size_t c = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) c += static_cast<std::size_t>(std::popcount(other.words_[k] & ~words_[k]));
    return c;
  }
  Bits& operator|=(const Bits& o) {
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] |= o.words_[k];
    return *this;
  }
  bool full() const { return count() == n_; }

 private:
  std::size_t n_;
  std::vector<std::uint64_t> words_;
};

std::vector<Bits> tile_columns(const CoverageMatrix& a) {
  std::vector<Bits> cols(static_cast<std::size_t>(a.tile_count), Bits(a.object_count()));
  for (Eigen::Index o = 0; o < a.bits.rows(); ++o)
    for (Eigen::Index t = 0; t < a.bits.cols(); ++t)
      if (a.bits(o, t)) cols[static_cast<std::size_t>(t)].set(static_cast<std::size_t>(o));
  return cols;
}

void require_feasible(const CoverageMatrix& a) {
  for (Eigen::Index o = 0; o < a.bits.rows(); ++o)
    if (!a.bits.row(o).any()) {
      const auto& key = a.objects[static_cast<std::size_t>(o)];
      throw InfeasibleError("object (global_id " + std::to_string(key.global_id) + ", camera " +
                            std::to_string(key.camera_id) + ") has no covering tile");
    }
}

struct ExactSearch {
  const std::vector<Bits>& cols;
  std::vector<int> last_tile;  // highest tile index covering each object
  std::size_t objects;
  TileSet best;
  std::size_t best_size;
  TileSet chosen;

  void run(int i, const Bits& covered) {
    const std::size_t have = covered.count();
    if (have == objects) {
      if (chosen.size() < best_size) {
        best = chosen;
        best_size = chosen.size();
      }
      return;
    }
    const int n = static_cast<int>(cols.size());
    if (i >= n || chosen.size() + 1 >= best_size) return;
    for (std::size_t o = 0; o < objects; ++o)
      if (!covered.test(o) && last_tile[o] < i) return;
    std::size_t max_gain = 0;
    for (int t = i; t < n; ++t) max_gain = std::max(max_gain, covered.gain(cols[static_cast<std::size_t>(t)]));
    if (max_gain == 0) return;
    const std::size_t need = (objects - have + max_gain - 1) / max_gain;
    if (chosen.size() + need >= best_size) return;

    const Bits& col = cols[static_cast<std::size_t>(i)];
    if (covered.gain(col) > 0) {
      Bits next = covered;
      next |= col;
      chosen.push_back(i);
      run(i + 1, next);
      chosen.pop_back();
    }
    run(i + 1, covered);
  }
};

}  // namespace

PixelRect TileGrid::tile_rect(int tile) const {
  const int r = tile / cols, c = tile % cols;
  const int x0 = c * tile_width, y0 = r * tile_height;
  return make_rect(x0, y0, std::min(width, x0 + tile_width), std::min(height, y0 + tile_height));
}

TileGrid partition_tiles(int width, int height, int rows, int cols) {
  if (width < 1 || height < 1 || rows < 1 || cols < 1) throw ConfigError("tile grid dimensions must be >= 1");
  TileGrid g;
  g.width = width;
  g.height = height;
  g.rows = rows;
  g.cols = cols;
  g.tile_width = (width + cols - 1) / cols;
  g.tile_height = (height + rows - 1) / rows;
  if ((cols - 1) * g.tile_width >= width || (rows - 1) * g.tile_height >= height)
    throw ConfigError("tile grid " + std::to_string(cols) + "x" + std::to_string(rows) + " leaves empty tiles on a " +
                      std::to_string(width) + "x" + std::to_string(height) + " frame");
  return g;
}

TileSet tiles_for_box(const Box& bbox, const TileGrid& grid) {
  TileSet out;
  for (int k = 0; k < grid.tile_count(); ++k) {
    const PixelRect r = grid.tile_rect(k);
    const double ix = std::min<double>(r.max().x(), bbox.max().x()) - std::max<double>(r.min().x(), bbox.min().x());
    const double iy = std::min<double>(r.max().y(), bbox.max().y()) - std::max<double>(r.min().y(), bbox.min().y());
    if (ix > 0.0 && iy > 0.0) out.push_back(k);
  }
  return out;
}

CoverageMatrix build_coverage(const std::vector<LabeledBox>& boxes, const TileGrid& grid) {
  std::map<ObjectKey, std::vector<int>> hits;
  for (const auto& b : boxes) {
    auto& row = hits[{b.global_id, b.camera_id}];
    for (int tile : tiles_for_box(b.bbox, grid)) row.push_back(tile);
  }
  CoverageMatrix a;
  a.tile_count = grid.tile_count();
  a.bits = CoverageBits::Constant(static_cast<Eigen::Index>(hits.size()), a.tile_count, false);
  Eigen::Index o = 0;
  for (const auto& [key, tiles] : hits) {
    a.objects.push_back(key);
    for (int t : tiles) a.bits(o, t) = true;
    ++o;
  }
  return a;
}

bool covers(const CoverageMatrix& a, const TileSet& tiles) {
  for (Eigen::Index o = 0; o < a.bits.rows(); ++o) {
    bool ok = false;
    for (int t : tiles) ok = ok || (t >= 0 && t < a.tile_count && a.bits(o, t));
    if (!ok) return false;
  }
  return true;
}

TileSet solve_cover_greedy(const CoverageMatrix& a) {
  require_feasible(a);
  const auto cols = tile_columns(a);
  Bits covered(a.object_count());
  TileSet out;
  while (!covered.full()) {
    int best = -1;
    std::size_t best_gain = 0;
    for (int t = 0; t < a.tile_count; ++t) {
      const std::size_t g = covered.gain(cols[static_cast<std::size_t>(t)]);
      if (g > best_gain) {
        best_gain = g;
        best = t;
      }
    }
    covered |= cols[static_cast<std::size_t>(best)];
    out.push_back(best);
  }
  std::sort(out.begin(), out.end());
  return out;
}

TileSet solve_cover_exact(const CoverageMatrix& a) {
  const TileSet greedy = solve_cover_greedy(a);
  const auto cols = tile_columns(a);
  ExactSearch search{cols, std::vector<int>(a.object_count(), -1), a.object_count(), greedy, greedy.size() + 1, {}};
  for (Eigen::Index o = 0; o < a.bits.rows(); ++o)
    for (Eigen::Index t = 0; t < a.bits.cols(); ++t)
      if (a.bits(o, t)) search.last_tile[static_cast<std::size_t>(o)] = static_cast<int>(t);
  search.run(0, Bits(a.object_count()));
  return search.best;
}

TileSet full_cover(const CoverageMatrix& a) {
  TileSet out;
  for (int t = 0; t < a.tile_count; ++t)
    if (a.bits.rows() > 0 && a.bits.col(t).any()) out.push_back(t);
  return out;
}

std::vector<PixelRect> merge_tiles(const TileSet& selected, const TileGrid& grid) {
  std::vector<char> on(static_cast<std::size_t>(grid.tile_count()), 0);
  for (int t : selected) {
    if (t < 0 || t >= grid.tile_count()) throw ArgumentError("tile index " + std::to_string(t) + " outside grid");
    on[static_cast<std::size_t>(t)] = 1;
  }
  struct Open {
    int c0, c1, r0, r1;  // inclusive tile spans
  };
  std::vector<Open> done, open;
  for (int r = 0; r < grid.rows; ++r) {
    std::vector<Open> next;
    for (int c = 0; c < grid.cols;) {
      if (!on[static_cast<std::size_t>(grid.index(r, c))]) {
        ++c;
        continue;
      }
      int end = c;
      while (end + 1 < grid.cols && on[static_cast<std::size_t>(grid.index(r, end + 1))]) ++end;
      auto it = std::find_if(open.begin(), open.end(), [&](const Open& o) { return o.c0 == c && o.c1 == end; });
      if (it != open.end()) {
        Open grown = *it;
        grown.r1 = r;
        open.erase(it);
        next.push_back(grown);
      } else {
        next.push_back({c, end, r, r});
      }
      c = end + 1;
    }
    done.insert(done.end(), open.begin(), open.end());
    open = std::move(next);
  }
  done.insert(done.end(), open.begin(), open.end());
  std::sort(done.begin(), done.end(), [](const Open& a, const Open& b) { return std::tie(a.r0, a.c0) < std::tie(b.r0, b.c0); });

  std::vector<PixelRect> rects;
  for (const auto& o : done) {
    const PixelRect lo = grid.tile_rect(grid.index(o.r0, o.c0));
    const PixelRect hi = grid.tile_rect(grid.index(o.r1, o.c1));
    rects.push_back(PixelRect(lo.min(), hi.max()));
  }
  return rects;
}

RoiMask make_mask(int camera_id, const TileGrid& grid, TileSet tiles) {
  std::sort(tiles.begin(), tiles.end());
  tiles.erase(std::unique(tiles.begin(), tiles.end()), tiles.end());
  RoiMask m{camera_id, grid, tiles, {}};
  m.merged_rects = merge_tiles(m.selected_tiles, grid);
  return m;
}

Frame apply_mask(const Frame& frame, const RoiMask& mask) {
  if (frame.width() != mask.grid.width || frame.height() != mask.grid.height)
    throw ShapeError("apply_mask: mask grid does not match frame dimensions");
  Frame out(frame.camera_id, frame.t, frame.width(), frame.height(), 0);
  for (const auto& r : mask.merged_rects) {
    const Eigen::Vector2i s = r.max() - r.min();
    out.pixels.block(r.min().y(), r.min().x(), s.y(), s.x()) = frame.pixels.block(r.min().y(), r.min().x(), s.y(), s.x());
  }
  return out;
}

std::string to_string(CoverMode mode) {
  switch (mode) {
    case CoverMode::full_cover: return "full_cover";
    case CoverMode::min_cover_exact: return "min_cover_exact";
    case CoverMode::min_cover_greedy: return "min_cover_greedy";
  }
  return "?";
}

CoverMode parse_cover_mode(const std::string& s) {
  if (s == "full_cover") return CoverMode::full_cover;
  if (s == "min_cover_exact") return CoverMode::min_cover_exact;
  if (s == "min_cover_greedy") return CoverMode::min_cover_greedy;
  throw ConfigError("unknown cover mode '" + s + "'");
}

std::string masks_to_json(const std::vector<RoiMask>& masks) {
  using ojson = nlohmann::ordered_json;
  ojson arr = ojson::array();
  for (const auto& m : masks) {
    ojson j;
    j["camera_id"] = m.camera_id;
    j["grid"] = {{"width", m.grid.width}, {"height", m.grid.height}, {"rows", m.grid.rows}, {"cols", m.grid.cols}};
    j["selected_tiles"] = m.selected_tiles;
    j["t_begin"] = m.t_begin;
    j["t_end"] = m.t_end;
    j["merged_rects"] = ojson::array();
    for (const auto& r : m.merged_rects)
      j["merged_rects"].push_back({r.min().x(), r.min().y(), r.max().x(), r.max().y()});
    arr.push_back(std::move(j));
  }
  return arr.dump(1) + "\n";
}

std::vector<RoiMask> masks_from_json(const std::string& text) {
  std::vector<RoiMask> out;
  try {
    for (const auto& j : nlohmann::json::parse(text)) {
      const auto& g = j.at("grid");
      const TileGrid grid = partition_tiles(g.at("width"), g.at("height"), g.at("rows"), g.at("cols"));
      RoiMask m = make_mask(j.at("camera_id"), grid, j.at("selected_tiles").get<TileSet>());
      m.t_begin = j.value("t_begin", 0);
      m.t_end = j.value("t_end", std::numeric_limits<int>::max());
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed mask document: ") + e.what());
  }
  return out;
}

}  // namespace stac
