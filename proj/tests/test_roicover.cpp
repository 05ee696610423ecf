#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "stac/roicover.hpp"
#include "test_helpers.hpp"

using namespace stac;

namespace {

std::set<std::pair<int, int>> pixels_of(const std::vector<PixelRect>& rects) {
  std::set<std::pair<int, int>> out;
  for (const auto& r : rects)
    for (int y = r.min().y(); y < r.max().y(); ++y)
      for (int x = r.min().x(); x < r.max().x(); ++x) out.insert({x, y});
  return out;
}

std::vector<PixelRect> tile_rects(const TileSet& tiles, const TileGrid& g) {
  std::vector<PixelRect> out;
  for (int t : tiles) out.push_back(g.tile_rect(t));
  return out;
}

bool same_rects(const std::vector<PixelRect>& a, const std::vector<PixelRect>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].min() != b[i].min() || a[i].max() != b[i].max()) return false;
  return true;
}

CoverageMatrix from_rows(std::vector<std::vector<int>> rows, int tiles) {
  CoverageMatrix a;
  a.tile_count = tiles;
  a.bits = CoverageBits::Zero(static_cast<int>(rows.size()), tiles);
  for (std::size_t o = 0; o < rows.size(); ++o) {
    a.objects.push_back({static_cast<int>(o), 0});
    for (int t : rows[o]) a.bits(static_cast<int>(o), t) = true;
  }
  return a;
}

}  // namespace

TEST_CASE("partition_tiles") {
  const auto one = partition_tiles(37, 21, 1, 1);
  CHECK(one.tile_rect(0).min() == Eigen::Vector2i(0, 0));
  CHECK(one.tile_rect(0).max() == Eigen::Vector2i(37, 21));

  const auto hd = partition_tiles(1920, 1080, 4, 6);
  CHECK(hd.tile_width == 320);
  CHECK(hd.tile_height == 270);
  CHECK(hd.tile_rect(23).max() == Eigen::Vector2i(1920, 1080));

  const auto small = partition_tiles(10, 10, 3, 3);
  CHECK(small.tile_width == 4);
  CHECK(rect_area(small.tile_rect(0)) == 16);
  CHECK(small.tile_rect(2).sizes() == Eigen::Vector2i(2, 4));
  CHECK(small.tile_rect(8).sizes() == Eigen::Vector2i(2, 2));

  CHECK_THROWS_AS(partition_tiles(0, 10, 1, 1), ConfigError);
  CHECK_THROWS_AS(partition_tiles(10, 10, 0, 1), ConfigError);
}

TEST_CASE("tiles are disjoint and total") {
  for (int w : {1, 7, 31, 64, 100})
    for (int h : {1, 9, 48})
      for (int r : {1, 2, 3, 4})
        for (int c : {1, 3, 6}) {
          if (r > h || c > w) continue;
          TileGrid g;
          try {
            g = partition_tiles(w, h, r, c);
          } catch (const ConfigError&) {
            continue;  // the ceiling split would leave an empty last tile
          }
          long area = 0;
          for (int t = 0; t < g.tile_count(); ++t) area += rect_area(g.tile_rect(t));
          std::vector<PixelRect> all;
          for (int t = 0; t < g.tile_count(); ++t) all.push_back(g.tile_rect(t));
          CHECK(area == static_cast<long>(w) * h);
          CHECK(pixels_of(all).size() == static_cast<std::size_t>(w) * h);
        }
}

TEST_CASE("partition scales with the frame") {
  for (int k : {2, 3, 5}) {
    const auto a = partition_tiles(60, 40, 4, 6), b = partition_tiles(60 * k, 40 * k, 4, 6);
    for (int t = 0; t < a.tile_count(); ++t) {
      CHECK(b.tile_rect(t).min() == a.tile_rect(t).min() * k);
      CHECK(b.tile_rect(t).max() == a.tile_rect(t).max() * k);
    }
  }
}

TEST_CASE("build_coverage") {
  const auto g = partition_tiles(60, 40, 2, 3);  // 20x20 tiles
  CHECK(build_coverage({}, g).object_count() == 0);

  const auto inside = build_coverage({{7, 0, 0, make_box(2, 2, 10, 10)}}, g);
  REQUIRE(inside.object_count() == 1);
  CHECK(inside.bits.count() == 1);
  CHECK(inside.bits(0, 0));

  const auto junction = build_coverage({{7, 0, 0, make_box(15, 15, 25, 25)}}, g);
  CHECK(junction.bits.count() == 4);
  CHECK(full_cover(junction) == TileSet{0, 1, 3, 4});

  // Touching an edge is not an intersection.
  CHECK(build_coverage({{7, 0, 0, make_box(0, 0, 20, 20)}}, g).bits.count() == 1);

  // Rectangle-intersection oracle on random boxes.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 60);
  for (int k = 0; k < 200; ++k) {
    const double x0 = u(rng), x1 = u(rng), y0 = u(rng) * 2 / 3, y1 = u(rng) * 2 / 3;
    const Box b = make_box(std::min(x0, x1), std::min(y0, y1), std::max(x0, x1) + 0.5, std::max(y0, y1) + 0.5);
    const auto a = build_coverage({{1, 0, 0, b}, {1, 0, 1, b.translated(Eigen::Vector2d(3, 1))}}, g);
    for (int t = 0; t < g.tile_count(); ++t) {
      const PixelRect r = g.tile_rect(t);
      const Box tb = make_box(r.min().x(), r.min().y(), r.max().x(), r.max().y());
      const bool expected = box_area(tb.intersection(b)) > 0 ||
                            box_area(tb.intersection(b.translated(Eigen::Vector2d(3, 1)))) > 0;
      CHECK(a.bits(0, t) == expected);
    }
  }
}

TEST_CASE("cover solver examples") {
  CHECK(solve_cover_exact(from_rows({{4}}, 6)) == TileSet{4});
  CHECK(solve_cover_exact(from_rows({{1}, {3}}, 6)) == TileSet{1, 3});
  const auto forced = from_rows({{0}, {2}, {5}}, 6);
  CHECK(solve_cover_greedy(forced) == solve_cover_exact(forced));

  const auto textbook = from_rows({{0, 2}, {0, 1, 2}, {1, 2}}, 3);
  CHECK(solve_cover_greedy(textbook) == TileSet{2});
  CHECK(solve_cover_exact(textbook) == TileSet{2});

  // Greedy trap: the big tile covers most but the optimum is two disjoint tiles.
  const auto trap = from_rows({{0, 1}, {0, 1}, {0, 2}, {0, 2}, {2}, {1}}, 3);
  CHECK(solve_cover_exact(trap) == TileSet{1, 2});
  CHECK(solve_cover_greedy(trap).size() == 3);

  auto infeasible = from_rows({{0}, {}}, 3);
  infeasible.objects[1] = {42, 3};
  try {
    solve_cover_exact(infeasible);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
  CHECK_THROWS_AS(solve_cover_greedy(infeasible), InfeasibleError);
  CHECK(solve_cover_exact(from_rows({}, 4)).empty());
}

TEST_CASE("exact cover matches exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const int m = 1 + static_cast<int>(seed % 8), n = 1 + static_cast<int>((seed / 8) % 14);
    const auto a = test::random_cover_instance(seed, m, n, 0.1 + 0.05 * (seed % 5));
    const auto exact = solve_cover_exact(a);
    const auto greedy = solve_cover_greedy(a);
    CHECK(exact == test::brute_force_cover(a));
    CHECK(covers(a, greedy));
    CHECK(std::is_sorted(greedy.begin(), greedy.end()));
    CHECK(static_cast<double>(greedy.size()) <= exact.size() * (std::log(static_cast<double>(m)) + 1.0) + 1e-9);
  }
}

TEST_CASE("merge_tiles") {
  const auto g = partition_tiles(60, 40, 4, 6);
  TileSet all(24);
  std::iota(all.begin(), all.end(), 0);
  const auto whole = merge_tiles(all, g);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].min() == Eigen::Vector2i(0, 0));
  CHECK(whole[0].max() == Eigen::Vector2i(60, 40));

  CHECK(same_rects(merge_tiles({7}, g), {g.tile_rect(7)}));
  CHECK(merge_tiles({}, g).empty());

  const TileSet l_shape{0, 1, 6};
  const auto l = merge_tiles(l_shape, g);
  CHECK(l.size() == 2);
  CHECK(pixels_of(l) == pixels_of(tile_rects(l_shape, g)));

  // Random selections: same pixel set, disjoint rectangles, never more rects than tiles.
  std::mt19937_64 rng(4);
  std::bernoulli_distribution pick(0.5);
  for (int k = 0; k < 200; ++k) {
    const auto grid = partition_tiles(47 + k % 13, 31 + k % 7, 1 + k % 5, 1 + k % 7);
    TileSet s;
    for (int t = 0; t < grid.tile_count(); ++t)
      if (pick(rng)) s.push_back(t);
    const auto rects = merge_tiles(s, grid);
    long area = 0;
    for (const auto& r : rects) area += rect_area(r);
    const auto px = pixels_of(rects);
    CHECK(px == pixels_of(tile_rects(s, grid)));
    CHECK(static_cast<std::size_t>(area) == px.size());
    CHECK(rects.size() <= s.size());
  }
}

TEST_CASE("apply_mask") {
  const auto g = partition_tiles(40, 24, 2, 4);
  Frame f = test::random_frame(8, 40, 24);
  TileSet all(8);
  std::iota(all.begin(), all.end(), 0);
  CHECK(apply_mask(f, make_mask(0, g, all)) == f);
  CHECK((apply_mask(f, make_mask(0, g, {})).pixels == 0).all());

  const auto one = apply_mask(f, make_mask(0, g, {5}));
  const PixelRect r = g.tile_rect(5);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 40; ++x) {
      const bool in = r.contains(Eigen::Vector2i(x, y)) && x < r.max().x() && y < r.max().y();
      CHECK(one.pixels(y, x) == (in ? f.pixels(y, x) : 0));
    }

  std::mt19937_64 rng(12);
  std::bernoulli_distribution pick(0.4);
  for (int k = 0; k < 100; ++k) {
    const Frame src = test::random_frame(100 + k, 40, 24);
    TileSet s;
    for (int t = 0; t < 8; ++t)
      if (pick(rng)) s.push_back(t);
    const auto m = make_mask(0, g, s);
    const Frame once = apply_mask(src, m);
    CHECK(apply_mask(once, m) == once);
    CHECK((once.pixels <= src.pixels).all());
  }
  CHECK_THROWS_AS(apply_mask(test::random_frame(1, 41, 24), make_mask(0, g, all)), ShapeError);
}

TEST_CASE("full cover keeps every bbox inside the mask") {
  ScenarioConfig cfg;
  cfg.identity_count = 6;
  cfg.duration_steps = 50;
  const auto world = generate_scenario(cfg, 21);
  const auto gt = ground_truth(world);
  for (const auto& cam : world.cameras) {
    const auto grid = partition_tiles(cam.image_width, cam.image_height, 4, 6);
    std::vector<LabeledBox> boxes;
    for (const auto& r : gt)
      if (r.camera_id == cam.id) boxes.push_back({r.identity_id, r.camera_id, r.t, r.bbox});
    const auto mask = make_mask(cam.id, grid, full_cover(build_coverage(boxes, grid)));
    const auto px = pixels_of(mask.merged_rects);
    for (const auto& b : boxes)
      for (int y = static_cast<int>(b.bbox.min().y()); y < static_cast<int>(std::ceil(b.bbox.max().y())); ++y)
        for (int x = static_cast<int>(b.bbox.min().x()); x < static_cast<int>(std::ceil(b.bbox.max().x())); ++x)
          CHECK(px.count({x, y}) == 1);
    // Every object has at least one selected tile under each cover mode.
    const auto a = build_coverage(boxes, grid);
    if (a.object_count() == 0) continue;
    for (const auto& s : {full_cover(a), solve_cover_exact(a), solve_cover_greedy(a)}) CHECK(covers(a, s));
  }
}

TEST_CASE("masks JSON round-trips") {
  const auto g = partition_tiles(60, 40, 4, 6);
  auto m = make_mask(2, g, {0, 1, 6, 13});
  m.t_begin = 5;
  m.t_end = 9;
  const auto back = masks_from_json(masks_to_json({m, make_mask(3, g, {})}));
  REQUIRE(back.size() == 2);
  CHECK(back[0].selected_tiles == m.selected_tiles);
  CHECK(same_rects(back[0].merged_rects, m.merged_rects));
  CHECK(back[0].t_end == 9);
  CHECK(back[1].camera_id == 3);
  CHECK(back[1].applies_to(1000000));
  for (auto mode : {CoverMode::full_cover, CoverMode::min_cover_exact, CoverMode::min_cover_greedy})
    CHECK(parse_cover_mode(to_string(mode)) == mode);
}
