#include "stac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

namespace stac {

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// +1 for counter-clockwise, -1 for clockwise, 0 when not strictly convex.
int polygon_orientation(const Polygon& poly) {
  const std::size_t n = poly.size();
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d e0 = poly[(i + 1) % n] - poly[i];
    const Eigen::Vector2d e1 = poly[(i + 2) % n] - poly[(i + 1) % n];
    const double c = cross(e0, e1);
    if (c == 0.0) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return 0;
  }
  return sign;
}

}  // namespace

bool CameraModel::sees(const Eigen::Vector2d& p) const {
  const int orient = polygon_orientation(fov_polygon);
  const std::size_t n = fov_polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& a = fov_polygon[i];
    const Eigen::Vector2d& b = fov_polygon[(i + 1) % n];
    if (orient * cross(b - a, p - a) < 0.0) return false;
  }
  return true;
}

const CameraModel& WorldScenario::camera(int camera_id) const {
  for (const auto& c : cameras)
    if (c.id == camera_id) return c;
  throw LookupError("unknown camera id " + std::to_string(camera_id));
}

void validate(const CameraModel& camera) {
  if (camera.image_width < 1 || camera.image_height < 1)
    throw ConfigError("camera " + std::to_string(camera.id) + ": empty image");
  if (camera.world_to_image.leftCols<2>().determinant() == 0.0)
    throw ConfigError("camera " + std::to_string(camera.id) + ": singular world_to_image");
  if (camera.fov_polygon.size() < 3 || polygon_orientation(camera.fov_polygon) == 0)
    throw ConfigError("camera " + std::to_string(camera.id) + ": fov polygon must be convex with >= 3 vertices");
}

void validate(const WorldScenario& s) {
  if (!(s.arena_width > 0.0) || !(s.arena_height > 0.0)) throw ConfigError("arena must have positive area");
  if (s.duration_steps < 1) throw ConfigError("duration_steps must be >= 1");
  if (s.cameras.empty()) throw ConfigError("at least one camera is required");
  std::set<int> ids;
  for (const auto& c : s.cameras) {
    validate(c);
    if (!ids.insert(c.id).second) throw ConfigError("duplicate camera id " + std::to_string(c.id));
  }
  ids.clear();
  for (const auto& p : s.identities) {
    if (!ids.insert(p.id).second) throw ConfigError("duplicate identity id " + std::to_string(p.id));
    if (static_cast<int>(p.trajectory.size()) != s.duration_steps)
      throw ConfigError("identity " + std::to_string(p.id) + ": trajectory length != duration_steps");
    if (!(p.body_size.array() > 0.0).all()) throw ConfigError("identity body_size must be positive");
    for (const auto& q : p.trajectory)
      if (q.x() < 0.0 || q.y() < 0.0 || q.x() > s.arena_width || q.y() > s.arena_height)
        throw ConfigError("identity " + std::to_string(p.id) + ": trajectory leaves arena");
  }
}

std::vector<CameraModel> make_camera_strip(const CameraLayout& layout, double arena_width, double arena_height) {
  if (layout.camera_count < 1) throw ConfigError("camera_count must be >= 1");
  if (layout.overlap < 0.0 || layout.overlap > 1.0) throw ConfigError("overlap must be in [0,1]");
  const int n = layout.camera_count;
  const double strip = arena_width / (n - (n - 1) * layout.overlap);
  const double stride = strip * (1.0 - layout.overlap);
  std::vector<CameraModel> cams;
  for (int i = 0; i < n; ++i) {
    CameraModel c;
    c.id = i;
    c.image_width = layout.image_width;
    c.image_height = layout.image_height;
    const double x0 = i * stride;
    const double x1 = std::min(arena_width, x0 + strip);
    const double sx = layout.image_width / (x1 - x0);
    const double sy = layout.image_height / arena_height;
    // Odd cameras look from the opposite side: mirrored horizontally.
    if (i % 2 == 0) {
      c.world_to_image << sx, 0.0, -sx * x0, 0.0, sy, 0.0;
    } else {
      c.world_to_image << -sx, 0.0, sx * x1, 0.0, sy, 0.0;
    }
    c.fov_polygon = {{x0, 0.0}, {x1, 0.0}, {x1, arena_height}, {x0, arena_height}};
    cams.push_back(std::move(c));
  }
  return cams;
}

WorldScenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  if (!(config.arena_width > 0.0) || !(config.arena_height > 0.0))
    throw ConfigError("arena must have positive area");
  if (config.duration_steps < 1) throw ConfigError("duration_steps must be >= 1");
  if (config.identity_count < 0) throw ConfigError("identity_count must be >= 0");
  if (config.speed < 0.0) throw ConfigError("speed must be >= 0");
  if (config.pause_fraction < 0.0 || config.pause_fraction > 1.0) throw ConfigError("pause_fraction must be in [0,1]");
  if (config.turn_probability < 0.0 || config.turn_probability > 1.0)
    throw ConfigError("turn_probability must be in [0,1]");

  WorldScenario s;
  s.arena_width = config.arena_width;
  s.arena_height = config.arena_height;
  s.duration_steps = config.duration_steps;
  s.seed = seed;
  s.cameras = config.cameras.empty() ? make_camera_strip(config.layout, config.arena_width, config.arena_height)
                                     : config.cameras;

  const int T = config.duration_steps;
  std::vector<bool> paused(T, false);
  {
    std::mt19937_64 rng(derive_seed(seed, 0x70617573ULL));
    std::vector<int> steps;
    for (int t = 1; t < T; ++t) steps.push_back(t);
    std::shuffle(steps.begin(), steps.end(), rng);
    const auto k = static_cast<std::size_t>(std::lround(config.pause_fraction * (T - 1)));
    for (std::size_t i = 0; i < k && i < steps.size(); ++i) paused[steps[i]] = true;
  }

  for (int k = 0; k < config.identity_count; ++k) {
    std::mt19937_64 rng(derive_seed(seed, 0x1d, k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Identity p;
    p.id = k;
    p.appearance_seed = rng();
    const double scale = 1.0 + config.body_size_jitter * (2.0 * unit(rng) - 1.0);
    p.body_size = config.body_size * scale;

    Eigen::Vector2d pos(unit(rng) * config.arena_width, unit(rng) * config.arena_height);
    double heading = unit(rng) * 2.0 * std::numbers::pi;
    p.trajectory.reserve(T);
    p.trajectory.push_back(pos);
    for (int t = 1; t < T; ++t) {
      if (!paused[t]) {
        if (unit(rng) < config.turn_probability) heading = unit(rng) * 2.0 * std::numbers::pi;
        Eigen::Vector2d dir(std::cos(heading), std::sin(heading));
        Eigen::Vector2d next = pos + config.speed * dir;
        if (next.x() < 0.0 || next.x() > config.arena_width) dir.x() = -dir.x();
        if (next.y() < 0.0 || next.y() > config.arena_height) dir.y() = -dir.y();
        heading = std::atan2(dir.y(), dir.x());
        pos = next.cwiseMax(Eigen::Vector2d::Zero()).cwiseMin(Eigen::Vector2d(config.arena_width, config.arena_height));
      }
      p.trajectory.push_back(pos);
    }
    s.identities.push_back(std::move(p));
  }
  validate(s);
  return s;
}

std::optional<Box> project_to_camera(const CameraModel& camera, const Eigen::Vector2d& position,
                                     const Eigen::Vector2d& body_size, bool* fully_visible) {
  if (!camera.sees(position)) return std::nullopt;
  Box img;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      img.extend(camera.to_image(position + Eigen::Vector2d(sx * body_size.x(), sy * body_size.y())));
  Box rounded = make_box(std::round(img.min().x()), std::round(img.min().y()), std::round(img.max().x()),
                         std::round(img.max().y()));
  const Box frame = make_box(0, 0, camera.image_width, camera.image_height);
  if (fully_visible) *fully_visible = frame.contains(rounded);
  Box clipped = rounded.intersection(frame);
  if (clipped.isEmpty() || box_area(clipped) <= 0.0) return std::nullopt;
  return clipped;
}

std::uint8_t identity_intensity(std::uint64_t appearance_seed) {
  return static_cast<std::uint8_t>(160 + mix64(appearance_seed) % 96);
}

PixelRect painted_rect(const Box& bbox) {
  return make_rect(static_cast<int>(std::lround(bbox.min().x())), static_cast<int>(std::lround(bbox.min().y())),
                   static_cast<int>(std::lround(bbox.max().x())), static_cast<int>(std::lround(bbox.max().y())));
}

Frame render_background(const WorldScenario& scenario, int camera_id) {
  const CameraModel& cam = scenario.camera(camera_id);
  constexpr int kCell = 16;
  const int w = cam.image_width, h = cam.image_height;
  const int gw = w / kCell + 2, gh = h / kCell + 2;
  std::mt19937_64 rng(derive_seed(scenario.seed, 0xb6, camera_id));
  Eigen::ArrayXXd lattice(gh, gw);
  std::uniform_real_distribution<double> value(0.0, 111.0);
  for (int j = 0; j < gh; ++j)
    for (int i = 0; i < gw; ++i) lattice(j, i) = value(rng);

  Frame f(camera_id, 0, w, h);
  std::uniform_int_distribution<int> grain(0, 16);
  for (int y = 0; y < h; ++y) {
    const int gy = y / kCell;
    const double fy = static_cast<double>(y % kCell) / kCell;
    for (int x = 0; x < w; ++x) {
      const int gx = x / kCell;
      const double fx = static_cast<double>(x % kCell) / kCell;
      const double v = (1 - fy) * ((1 - fx) * lattice(gy, gx) + fx * lattice(gy, gx + 1)) +
                       fy * ((1 - fx) * lattice(gy + 1, gx) + fx * lattice(gy + 1, gx + 1));
      f.pixels(y, x) = static_cast<std::uint8_t>(std::min(kBackgroundMax, static_cast<int>(v) + grain(rng)));
    }
  }
  return f;
}

Frame render_frame(const WorldScenario& scenario, int camera_id, int t) {
  if (t < 0 || t >= scenario.duration_steps) throw LookupError("step " + std::to_string(t) + " out of range");
  const CameraModel& cam = scenario.camera(camera_id);
  Frame f = render_background(scenario, camera_id);
  f.t = t;
  for (const auto& p : scenario.identities) {
    const auto bbox = project_to_camera(cam, p.trajectory[t], p.body_size);
    if (!bbox) continue;
    const PixelRect r = painted_rect(*bbox);
    const Eigen::Vector2i s = r.max() - r.min();
    f.pixels.block(r.min().y(), r.min().x(), s.y(), s.x()).setConstant(identity_intensity(p.appearance_seed));
  }
  return f;
}

std::vector<GroundTruthRecord> ground_truth(const WorldScenario& scenario) {
  std::vector<GroundTruthRecord> out;
  std::vector<const CameraModel*> cams;
  for (const auto& c : scenario.cameras) cams.push_back(&c);
  std::sort(cams.begin(), cams.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const Identity*> people;
  for (const auto& p : scenario.identities) people.push_back(&p);
  std::sort(people.begin(), people.end(), [](auto* a, auto* b) { return a->id < b->id; });

  for (const auto* cam : cams)
    for (int t = 0; t < scenario.duration_steps; ++t)
      for (const auto* p : people) {
        bool full = false;
        if (auto bbox = project_to_camera(*cam, p->trajectory[t], p->body_size, &full))
          out.push_back({cam->id, t, p->id, *bbox, full});
      }
  return out;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson vec2(const Eigen::Vector2d& v) { return ojson::array({v.x(), v.y()}); }
Eigen::Vector2d vec2(const ojson& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::string serialize(const WorldScenario& s) {
  ojson j;
  j["format"] = "stac-scenario";
  j["version"] = 1;
  j["seed"] = s.seed;
  j["arena_width"] = s.arena_width;
  j["arena_height"] = s.arena_height;
  j["duration_steps"] = s.duration_steps;
  j["cameras"] = ojson::array();
  for (const auto& c : s.cameras) {
    ojson cj;
    cj["id"] = c.id;
    cj["image_width"] = c.image_width;
    cj["image_height"] = c.image_height;
    cj["world_to_image"] = ojson::array();
    for (int r = 0; r < 2; ++r)
      cj["world_to_image"].push_back(
          ojson::array({c.world_to_image(r, 0), c.world_to_image(r, 1), c.world_to_image(r, 2)}));
    cj["fov_polygon"] = ojson::array();
    for (const auto& v : c.fov_polygon) cj["fov_polygon"].push_back(vec2(v));
    j["cameras"].push_back(std::move(cj));
  }
  j["identities"] = ojson::array();
  for (const auto& p : s.identities) {
    ojson pj;
    pj["id"] = p.id;
    pj["appearance_seed"] = p.appearance_seed;
    pj["body_size"] = vec2(p.body_size);
    pj["trajectory"] = ojson::array();
    for (const auto& q : p.trajectory) pj["trajectory"].push_back(vec2(q));
    j["identities"].push_back(std::move(pj));
  }
  return j.dump(1) + "\n";
}

WorldScenario parse_scenario(const std::string& text) {
  WorldScenario s;
  try {
    const ojson j = ojson::parse(text);
    if (j.at("format") != "stac-scenario") throw ConfigError("not a scenario document");
    s.seed = j.at("seed").get<std::uint64_t>();
    s.arena_width = j.at("arena_width").get<double>();
    s.arena_height = j.at("arena_height").get<double>();
    s.duration_steps = j.at("duration_steps").get<int>();
    for (const auto& cj : j.at("cameras")) {
      CameraModel c;
      c.id = cj.at("id").get<int>();
      c.image_width = cj.at("image_width").get<int>();
      c.image_height = cj.at("image_height").get<int>();
      for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 3; ++k) c.world_to_image(r, k) = cj.at("world_to_image").at(r).at(k).get<double>();
      for (const auto& v : cj.at("fov_polygon")) c.fov_polygon.push_back(vec2(v));
      s.cameras.push_back(std::move(c));
    }
    for (const auto& pj : j.at("identities")) {
      Identity p;
      p.id = pj.at("id").get<int>();
      p.appearance_seed = pj.at("appearance_seed").get<std::uint64_t>();
      p.body_size = vec2(pj.at("body_size"));
      for (const auto& q : pj.at("trajectory")) p.trajectory.push_back(vec2(q));
      s.identities.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  validate(s);
  return s;
}

std::uint64_t scenario_hash(const WorldScenario& scenario) { return fnv1a(serialize(scenario)); }

}  // namespace stac
