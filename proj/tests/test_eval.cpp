#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "stac/eval.hpp"
#include "test_helpers.hpp"

using namespace stac;

TEST_CASE("iou arithmetic") {
  const Box b = make_box(0, 0, 2, 2);
  CHECK(iou(b, b) == 1.0);
  CHECK(iou(b, make_box(5, 5, 6, 6)) == 0.0);
  CHECK(iou(b, make_box(2, 0, 4, 2)) == 0.0);
  CHECK(iou(b, make_box(1, 1, 3, 3)) == doctest::Approx(1.0 / 7.0));
  CHECK(iou(make_box(1, 1, 1, 3), b) == 0.0);
}

TEST_CASE("perfect tracking") {
  const auto gt = test::straight_tracks(2, 3, 10);
  const auto tr = test::tracklets_from(gt, [](const auto& r) { return 10 + r.identity_id; });
  const auto rep = mtta(tr, gt, EvalConfig{});
  CHECK(rep.mtta_pct == 100.0);
  CHECK(rep.id_switches == 0);
  CHECK(rep.id_map == std::map<int, int>{{0, 10}, {1, 11}, {2, 12}});
  CHECK(rep.per_camera_total.at(0) == 30);
}

TEST_CASE("one camera all correct, the other half correct") {
  const auto gt = test::straight_tracks(2, 1, 4);
  const auto tr = test::tracklets_from(gt, [](const auto& r) { return r.camera_id == 1 && r.t >= 2 ? 1 : 0; });
  const auto rep = mtta(tr, gt, EvalConfig{});
  CHECK(rep.mtta_pct == doctest::Approx(75.0));
  CHECK(rep.per_camera_correct.at(1) == 2);
  CHECK(rep.id_switches == 1);
}

TEST_CASE("merged identities map only one of them") {
  const auto gt = test::straight_tracks(1, 2, 5);
  const auto tr = test::tracklets_from(gt, [](const auto&) { return 0; });
  const auto rep = mtta(tr, gt, EvalConfig{});
  CHECK(rep.id_map.size() == 1);
  CHECK(rep.id_map.begin()->first == 0);  // tie goes to the lower GT id
  CHECK(rep.mtta_pct == doctest::Approx(50.0));
}

TEST_CASE("id switches") {
  const auto gt = test::straight_tracks(1, 1, 6);
  const auto alternating = test::tracklets_from(gt, [](const auto& r) { return r.t % 2; });
  CHECK(id_switches(alternating, gt) == 5);
  // A gap does not count when the same id resumes.
  const auto gap = test::tracklets_from(gt, [](const auto& r) { return r.t == 2 || r.t == 3 ? -1 : 0; });
  CHECK(id_switches(gap, gt) == 0);
  CHECK(mtta(gap, gt, EvalConfig{}).mtta_pct == doctest::Approx(400.0 / 6.0));
}

TEST_CASE("cameras without ground truth are excluded") {
  auto gt = test::straight_tracks(1, 1, 4);
  const auto tr = test::tracklets_from(gt, [](const auto&) { return 0; });
  // A prediction in camera 5, which has no GT at all.
  auto extra = tr;
  extra[0].observations.push_back({5, 0, make_box(0, 0, 10, 10), 99});
  const auto rep = mtta(extra, gt, EvalConfig{});
  CHECK(rep.mtta_pct == 100.0);
  CHECK(rep.per_camera_total.count(5) == 0);
  CHECK_THROWS_AS(mtta(tr, {}, EvalConfig{}), UndefinedMetricError);
}

TEST_CASE("degenerate prediction boxes are flagged") {
  const auto gt = test::straight_tracks(1, 1, 3);
  auto tr = test::tracklets_from(gt, [](const auto&) { return 0; });
  tr[0].observations[0].bbox = make_box(3, 3, 3, 9);
  const auto rep = mtta(tr, gt, EvalConfig{});
  CHECK(rep.degenerate_boxes == 1);
  CHECK(rep.per_camera_correct.at(0) == 2);
}

namespace {

std::vector<Tracklet> noisy_predictions(const std::vector<GroundTruthRecord>& gt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.2);
  std::bernoulli_distribution swap(0.15), drop(0.1);
  auto tr = test::tracklets_from(gt, [&](const auto& r) {
    if (drop(rng)) return -1;
    return swap(rng) ? (r.identity_id + 1) % 4 : r.identity_id;
  });
  for (auto& t : tr)
    for (auto& o : t.observations) {
      o.bbox.min() += Eigen::Vector2d(jitter(rng), jitter(rng));
      o.bbox.max() += Eigen::Vector2d(jitter(rng), jitter(rng));
    }
  return tr;
}

}  // namespace

TEST_CASE("MTTA is invariant under relabelling predicted ids") {
  const auto gt = test::straight_tracks(3, 4, 20);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto tr = noisy_predictions(gt, seed);
    const double base = mtta(tr, gt, EvalConfig{}).mtta_pct;
    std::vector<int> perm(4);
    std::iota(perm.begin(), perm.end(), 100);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed + 1000));
    auto relabelled = tr;
    for (auto& t : relabelled) t.global_id = perm[t.global_id];
    CHECK(mtta(relabelled, gt, EvalConfig{}).mtta_pct == doctest::Approx(base));
    CHECK(id_switches(relabelled, gt) == id_switches(tr, gt));
  }
}

TEST_CASE("MTTA does not rise with the IoU threshold") {
  const auto gt = test::straight_tracks(3, 4, 20);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto tr = noisy_predictions(gt, seed);
    double previous = 101.0;
    for (double th = 0.0; th <= 1.0; th += 0.05) {
      EvalConfig c;
      c.iou_threshold = th;
      const double m = mtta(tr, gt, c).mtta_pct;
      CHECK(m <= previous + 1e-9);
      CHECK(m >= 0.0);
      previous = m;
    }
  }
}

TEST_CASE("first-match mapping and config") {
  const auto gt = test::straight_tracks(1, 1, 4);
  // Starts on id 7 for one step, then 3 for the rest.
  const auto tr = test::tracklets_from(gt, [](const auto& r) { return r.t == 0 ? 7 : 3; });
  EvalConfig first;
  first.id_mapping = IdMapping::first_match;
  CHECK(mtta(tr, gt, first).mtta_pct == doctest::Approx(25.0));
  CHECK(mtta(tr, gt, EvalConfig{}).mtta_pct == doctest::Approx(75.0));
  EvalConfig bad;
  bad.iou_threshold = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_id_mapping(to_string(IdMapping::first_match)) == IdMapping::first_match);
}
