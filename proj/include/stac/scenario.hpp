#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stac/common.hpp"
#include "stac/frame.hpp"

namespace stac {

using Affine2 = Eigen::Matrix<double, 2, 3>;
using Polygon = std::vector<Eigen::Vector2d>;

struct Identity {
  int id = 0;
  std::vector<Eigen::Vector2d> trajectory;
  Eigen::Vector2d body_size{2.0, 4.0};  // half-extents in world units
  std::uint64_t appearance_seed = 0;
};

struct CameraModel {
  int id = 0;
  int image_width = 192;
  int image_height = 108;
  Affine2 world_to_image = Affine2::Identity();
  Polygon fov_polygon;  // convex, world coordinates

  Eigen::Vector2d to_image(const Eigen::Vector2d& p) const {
    return world_to_image.leftCols<2>() * p + world_to_image.col(2);
  }
  bool sees(const Eigen::Vector2d& p) const;
};

struct WorldScenario {
  double arena_width = 100.0;
  double arena_height = 60.0;
  int duration_steps = 1;
  std::vector<Identity> identities;
  std::vector<CameraModel> cameras;
  std::uint64_t seed = 0;

  const CameraModel& camera(int camera_id) const;
};

struct GroundTruthRecord {
  int camera_id = 0;
  int t = 0;
  int identity_id = 0;
  Box bbox;
  bool fully_visible = true;
};

// Cameras laid out as vertical strips across the arena; neighbours share
// `overlap` of their width (1.0 = every camera sees the whole arena).
struct CameraLayout {
  int camera_count = 2;
  double overlap = 0.5;
  int image_width = 192;
  int image_height = 108;
};

struct ScenarioConfig {
  double arena_width = 100.0;
  double arena_height = 60.0;
  int duration_steps = 100;
  int identity_count = 3;
  Eigen::Vector2d body_size{2.0, 4.0};
  double body_size_jitter = 0.2;  // relative, uniform
  double speed = 1.0;             // world units per step
  double turn_probability = 0.1;
  double pause_fraction = 0.0;  // fraction of steps where nobody moves
  CameraLayout layout;
  std::vector<CameraModel> cameras;  // overrides layout when non-empty
};

void validate(const CameraModel& camera);
void validate(const WorldScenario& scenario);

std::vector<CameraModel> make_camera_strip(const CameraLayout& layout, double arena_width, double arena_height);

WorldScenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

std::optional<Box> project_to_camera(const CameraModel& camera, const Eigen::Vector2d& position,
                                     const Eigen::Vector2d& body_size, bool* fully_visible = nullptr);

// Intensity used to paint an identity; always brighter than any background pixel.
std::uint8_t identity_intensity(std::uint64_t appearance_seed);
inline constexpr int kBackgroundMax = 127;

Frame render_background(const WorldScenario& scenario, int camera_id);
Frame render_frame(const WorldScenario& scenario, int camera_id, int t);

// Sorted by (camera_id, t, identity_id).
std::vector<GroundTruthRecord> ground_truth(const WorldScenario& scenario);

// Pixel rectangle actually painted for a bbox by render_frame.
PixelRect painted_rect(const Box& bbox);

std::string serialize(const WorldScenario& scenario);
WorldScenario parse_scenario(const std::string& text);
std::uint64_t scenario_hash(const WorldScenario& scenario);

}  // namespace stac
