#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "stac/assignment.hpp"
#include "stac/associate.hpp"
#include "stac/union_find.hpp"
#include "test_helpers.hpp"

using namespace stac;

namespace {

Eigen::VectorXd unit(int dim, int axis) { return Eigen::VectorXd::Unit(dim, axis); }

Detection det(int cam, int t, int index) { return {cam, t, index, make_box(0, 0, 4, 4), 1.0, std::nullopt}; }

struct Observed {
  std::vector<Detection> dets;
  std::vector<Embedding> embs;
  std::vector<FrameRef> frames;
};

Observed observe(const WorldScenario& s, const PerceptConfig& pc) {
  Observed o;
  std::vector<FrameKey> keys;
  for (const auto& c : s.cameras)
    for (int t = 0; t < s.duration_steps; ++t) {
      keys.push_back({c.id, t, c.image_width, c.image_height});
      o.frames.push_back({c.id, t});
    }
  std::sort(o.frames.begin(), o.frames.end());
  o.dets = simulate_detections(ground_truth(s), keys, pc);
  o.embs = embed_all(o.dets, pc);
  return o;
}

PerceptConfig clean() {
  PerceptConfig pc;
  pc.confidence_threshold = 0.0;
  pc.embed_noise_sigma = 0.0;
  pc.camera_bias_sigma = 0.0;
  return pc;
}

// Switches of local labels along each identity's per-camera sequence.
int label_switches(const Observed& o, const LocalTracks& tracks) {
  std::map<std::pair<int, int>, int> last;
  int switches = 0;
  for (std::size_t i = 0; i < o.dets.size(); ++i) {
    const auto key = std::make_pair(o.dets[i].camera_id, *o.dets[i].true_identity);
    auto it = last.find(key);
    if (it != last.end() && it->second != tracks.label[i]) ++switches;
    last[key] = tracks.label[i];
  }
  return switches;
}

double brute_min_cost(const Eigen::MatrixXd& c) {
  // Enumerate injective maps from the smaller side into the larger one.
  const bool t = c.rows() > c.cols();
  const Eigen::MatrixXd m = t ? Eigen::MatrixXd(c.transpose()) : c;
  std::vector<int> cols(m.cols());
  std::iota(cols.begin(), cols.end(), 0);
  double best = 1e300;
  do {
    double s = 0;
    for (int i = 0; i < m.rows(); ++i) s += m(i, cols[i]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST_CASE("similarity and cosine arithmetic") {
  const auto e = unit(4, 0);
  std::vector<Embedding> cur{e, e, unit(4, 1)};
  std::vector<Embedding> ref{e, -e};
  const auto s = similarity_matrix(cur, ref);
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(0, 1) == doctest::Approx(-1.0));
  CHECK(s(2, 0) == doctest::Approx(1.0 - std::sqrt(2.0)));
  CHECK(s(2, 0) == doctest::Approx(-0.41421).epsilon(1e-5));
  CHECK_THROWS_AS(similarity_matrix(cur, std::vector<Embedding>{unit(3, 0)}), ShapeError);

  CHECK(cosine(e, e) == doctest::Approx(1.0));
  CHECK(cosine(e, unit(4, 2)) == 0.0);
  CHECK(cosine(e, (3.0 * e).eval()) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cosine(e, Eigen::VectorXd::Zero(4).eval()), NumericError);
  CHECK_THROWS_AS(cosine(e, unit(3, 0)), ShapeError);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd a(8), b(8);
    for (int i = 0; i < 8; ++i) a[i] = n(rng), b[i] = n(rng);
    a.normalize();
    b.normalize();
    CHECK(cosine(a, b) == doctest::Approx(1.0 - (a - b).squaredNorm() / 2.0));
  }
}

TEST_CASE("Hungarian solver matches permutation brute force") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int k = 0; k < 300; ++k) {
    const int r = 1 + k % 5, c = 1 + (k / 5) % 6;
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = u(rng);
    const auto a = solve_assignment(m);
    double total = 0;
    std::set<int> used;
    int pairs = 0;
    for (int i = 0; i < r; ++i)
      if (a[i] >= 0) {
        total += m(i, a[i]);
        CHECK(used.insert(a[i]).second);
        ++pairs;
      }
    CHECK(pairs == std::min(r, c));
    CHECK(total == doctest::Approx(brute_min_cost(m)));
  }
}

TEST_CASE("match_rows") {
  Eigen::MatrixXd s(2, 2);
  s << 0.9, 0.8, 0.85, 0.1;
  // Greedy grabs 0.9 first; optimal prefers 0.8 + 0.85.
  CHECK(match_rows(s, 0.5, Matching::greedy) == std::vector<int>{0, -1});
  CHECK(match_rows(s, 0.5, Matching::optimal) == std::vector<int>{1, 0});
  // Only strictly-above-threshold entries bind.
  CHECK(match_rows(s, 0.9, Matching::greedy) == std::vector<int>{-1, -1});
  Eigen::MatrixXd tie = Eigen::MatrixXd::Constant(2, 2, 0.8);
  CHECK(match_rows(tie, 0.5, Matching::greedy) == std::vector<int>{0, 1});
}

TEST_CASE("temporal association") {
  SUBCASE("one identity, one track") {
    auto world = test::static_world(10, {{50, 50}}, {test::identity_camera()});
    for (int t = 0; t < 10; ++t) world.identities[0].trajectory[t] = {30.0 + 2 * t, 50};
    const auto o = observe(world, clean());
    const auto tracks = associate_temporal(o.dets, o.embs, o.frames, AssocConfig{});
    CHECK(tracks.count() == 1);
    CHECK(o.dets.size() == 10);
  }
  SUBCASE("two identities, no switches") {
    const auto world = test::static_world(10, {{30, 50}, {70, 50}}, {test::identity_camera()});
    for (auto m : {Matching::greedy, Matching::optimal}) {
      AssocConfig ac;
      ac.matching = m;
      const auto o = observe(world, clean());
      const auto tracks = associate_temporal(o.dets, o.embs, o.frames, ac);
      CHECK(tracks.count() == 2);
      CHECK(label_switches(o, tracks) == 0);
    }
  }
  SUBCASE("heavy noise fragments a track") {
    const auto world = test::static_world(10, {{50, 50}}, {test::identity_camera()});
    auto pc = clean();
    pc.embed_noise_sigma = 1.0;  // expected distance ~ sqrt(2)/sqrt(2) > 0.35
    const auto o = observe(world, pc);
    const auto s = similarity_matrix(std::vector<Embedding>{o.embs[1]}, std::vector<Embedding>{o.embs[0]});
    REQUIRE(s(0, 0) < 0.65);
    CHECK(associate_temporal(o.dets, o.embs, o.frames, AssocConfig{}).count() >= 2);
  }
}

TEST_CASE("spatial association examples") {
  SUBCASE("one identity seen by two cameras") {
    const auto world = test::static_world(5, {{50, 50}}, {test::identity_camera(0), test::identity_camera(1)});
    const auto o = observe(world, clean());
    const auto tracks = associate_temporal(o.dets, o.embs, o.frames, AssocConfig{});
    CHECK(tracks.count() == 2);
    const auto g = associate_spatial(o.dets, o.embs, tracks, AssocConfig{});
    CHECK(g.global_count == 1);
  }
  SUBCASE("no co-temporal matches keeps local labels") {
    // Camera 1 sees the identity only after camera 0 lost it.
    auto c0 = test::identity_camera(0), c1 = test::identity_camera(1);
    c0.fov_polygon = {{0, 0}, {50, 0}, {50, 100}, {0, 100}};
    c1.fov_polygon = {{60, 0}, {100, 0}, {100, 100}, {60, 100}};
    auto world = test::static_world(10, {{0, 0}}, {c0, c1});
    for (int t = 0; t < 10; ++t) world.identities[0].trajectory[t] = {5.0 + 10 * t, 50};
    const auto o = observe(world, clean());
    const auto tracks = associate_temporal(o.dets, o.embs, o.frames, AssocConfig{});
    CHECK(associate_spatial(o.dets, o.embs, tracks, AssocConfig{}).global_count == tracks.count());
  }
  SUBCASE("transitive closure across three cameras") {
    const double a = 0.8;  // cos(A,B) = cos(B,C) = 0.8, cos(A,C) = 0.28
    Eigen::VectorXd ea = unit(3, 0);
    Eigen::VectorXd eb = a * unit(3, 0) + std::sqrt(1 - a * a) * unit(3, 1);
    Eigen::VectorXd ec = Eigen::Vector3d(2 * a * a - 1, 2 * a * std::sqrt(1 - a * a), 0);
    REQUIRE(cosine(ea, ec) < 0.7);
    const std::vector<Detection> dets{det(0, 0, 0), det(1, 0, 0), det(2, 0, 0)};
    const std::vector<Embedding> embs{ea, eb, ec};
    const auto tracks = associate_temporal(dets, embs, {{0, 0}, {1, 0}, {2, 0}}, AssocConfig{});
    const auto g = associate_spatial(dets, embs, tracks, AssocConfig{});
    CHECK(g.global_count == 1);
  }
}

TEST_CASE("union-find matches BFS components") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 30;
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<std::vector<int>> adj(n);
    UnionFind uf(n);
    for (int e = 0; e < n / 2 + k % 7; ++e) {
      const int a = pick(rng), b = pick(rng);
      adj[a].push_back(b);
      adj[b].push_back(a);
      uf.unite(a, b);
    }
    std::vector<int> comp(n, -1);
    for (int s = 0; s < n; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<int> stack{s};
      comp[s] = s;
      while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        for (int y : adj[x])
          if (comp[y] < 0) comp[y] = s, stack.push_back(y);
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(uf.connected(i, j) == (comp[i] == comp[j]));
  }
}

TEST_CASE("spatial partition properties on generated worlds") {
  ScenarioConfig cfg;
  cfg.identity_count = 5;
  cfg.duration_steps = 40;
  cfg.layout.camera_count = 3;
  cfg.layout.overlap = 0.6;
  PerceptConfig pc;
  pc.embed_noise_sigma = 0.3;
  pc.camera_bias_sigma = 0.3;
  pc.miss_rate = 0.1;
  pc.false_positive_rate = 0.2;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto world = generate_scenario(cfg, seed);
    pc.seed = seed;
    const auto o = observe(world, pc);
    const auto tracks = associate_temporal(o.dets, o.embs, o.frames, AssocConfig{});
    const auto g = associate_spatial(o.dets, o.embs, tracks, AssocConfig{});

    // Partition: every detection exactly once.
    std::vector<int> seen;
    for (const auto& part : partition_of(g)) seen.insert(seen.end(), part.begin(), part.end());
    std::sort(seen.begin(), seen.end());
    std::vector<int> all(o.dets.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(seen == all);

    // Global ids are numbered by first appearance.
    int next = 0;
    std::vector<std::size_t> order(g.detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      const auto& x = g.detections[a].det;
      const auto& y = g.detections[b].det;
      return std::tie(x.t, x.camera_id, x.index) < std::tie(y.t, y.camera_id, y.index);
    });
    for (auto i : order) {
      CHECK(g.detections[i].global_id <= next);
      if (g.detections[i].global_id == next) ++next;
    }
    CHECK(next == g.global_count);

    // Positive scaling leaves the cosine pathway's partition unchanged.
    for (double scale : {0.01, 3.0, 1e4}) {
      std::vector<Embedding> scaled;
      for (const auto& e : o.embs) scaled.push_back(scale * e);
      CHECK(partition_of(associate_spatial(o.dets, scaled, tracks, AssocConfig{})) == partition_of(g));
    }

    // Lowering the spatial threshold never adds global ids.
    int previous = 0;
    for (double th = 0.95; th >= 0.0; th -= 0.05) {
      AssocConfig ac;
      ac.spatial_threshold = th;
      const int count = associate_spatial(o.dets, o.embs, tracks, ac).global_count;
      if (previous > 0) CHECK(count <= previous);
      previous = count;
    }
  }
}

TEST_CASE("exact recovery with full overlap and clean embeddings") {
  ScenarioConfig cfg;
  cfg.identity_count = 3;
  cfg.duration_steps = 100;
  cfg.layout.camera_count = 2;
  cfg.layout.overlap = 1.0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto o = observe(generate_scenario(cfg, seed), clean());
    const auto tracks = associate_temporal(o.dets, o.embs, o.frames, AssocConfig{});
    CHECK(associate_spatial(o.dets, o.embs, tracks, AssocConfig{}).global_count == 3);
  }
}

TEST_CASE("tracklets conserve detections") {
  CHECK(build_tracklets(GlobalIdAssignment{}).empty());

  const std::vector<Detection> one{det(0, 0, 0)};
  const std::vector<Embedding> e1{unit(3, 0)};
  const auto single = associate_spatial(one, e1, associate_temporal(one, e1, {}, AssocConfig{}), AssocConfig{});
  const auto t1 = build_tracklets(single);
  REQUIRE(t1.size() == 1);
  CHECK(t1[0].observations.size() == 1);

  const auto world = test::static_world(6, {{30, 50}, {70, 50}}, {test::identity_camera(0), test::identity_camera(1)});
  const auto o = observe(world, clean());
  const auto g = associate_spatial(o.dets, o.embs, associate_temporal(o.dets, o.embs, o.frames, AssocConfig{}),
                                   AssocConfig{});
  const auto tracklets = build_tracklets(g);
  REQUIRE(tracklets.size() == 2);
  std::multiset<std::tuple<int, int, int>> from_tracklets, from_dets;
  for (const auto& tr : tracklets) {
    for (std::size_t i = 1; i < tr.observations.size(); ++i)
      CHECK(std::tie(tr.observations[i - 1].t, tr.observations[i - 1].camera_id) <=
            std::tie(tr.observations[i].t, tr.observations[i].camera_id));
    for (const auto& ob : tr.observations) from_tracklets.insert({ob.camera_id, ob.t, ob.embedding_ref});
  }
  for (std::size_t i = 0; i < o.dets.size(); ++i)
    from_dets.insert({o.dets[i].camera_id, o.dets[i].t, static_cast<int>(i)});
  CHECK(from_tracklets == from_dets);
  // Clean, well separated identities never put two observations in one (camera, t).
  for (const auto& tr : tracklets) {
    std::set<std::pair<int, int>> slots;
    for (const auto& ob : tr.observations) CHECK(slots.insert({ob.camera_id, ob.t}).second);
  }
}

TEST_CASE("assignment JSONL round-trips and config validation") {
  const auto world = test::static_world(4, {{30, 50}, {70, 50}}, {test::identity_camera(0), test::identity_camera(1)});
  const auto o = observe(world, clean());
  const auto g = associate_spatial(o.dets, o.embs, associate_temporal(o.dets, o.embs, o.frames, AssocConfig{}),
                                   AssocConfig{});
  const auto back = assignment_from_jsonl(to_jsonl(g));
  CHECK(back.global_count == g.global_count);
  CHECK(partition_of(back) == partition_of(g));
  CHECK(to_jsonl(back) == to_jsonl(g));

  AssocConfig ac;
  ac.spatial_threshold = 1.5;
  CHECK_THROWS_AS(ac.validate(), ConfigError);
  CHECK(parse_matching(to_string(Matching::optimal)) == Matching::optimal);
  CHECK_THROWS_AS(parse_matching("fast"), ConfigError);
}
