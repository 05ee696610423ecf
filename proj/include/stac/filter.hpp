#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stac/frame.hpp"

namespace stac {

// Mean SSIM over non-overlapping 8x8 windows (partial edge windows included),
// L = 255, C1 = (0.01 L)^2, C2 = (0.03 L)^2, population statistics per window.
double ssim(const Frame& a, const Frame& b);

// Mean over pixels of ((a - b) / 255)^2.
double nmse(const Frame& a, const Frame& b);

enum class FilterScope { within_camera, cross_camera, both };

struct FilterPolicy {
  double ssim_min = 0.30;
  double nmse_max = 0.146;
  double duplicate_ssim_min = 0.98;
  double duplicate_nmse_max = 0.0005;
  FilterScope scope = FilterScope::within_camera;

  void validate() const;
};

enum class DropReason { duplicate, dissimilar };

struct FrameRef {
  int camera_id = 0;
  int t = 0;
  auto operator<=>(const FrameRef&) const = default;
};

struct PairScore {
  FrameRef frame;
  FrameRef reference;
  double ssim = 0.0;
  double nmse = 0.0;
};

struct DroppedFrame {
  FrameRef frame;
  DropReason reason = DropReason::duplicate;
};

struct FilterReport {
  std::vector<FrameRef> kept;
  std::vector<DroppedFrame> dropped;
  std::vector<PairScore> pair_scores;

  bool is_kept(const FrameRef& f) const;
  double drop_fraction() const;
};

// Per-camera, time-ordered frame sequences keyed by camera id.
using CameraStreams = std::map<int, std::vector<Frame>>;

FilterReport filter_stream(const CameraStreams& frames, const FilterPolicy& policy);

std::string to_string(FilterScope scope);
FilterScope parse_filter_scope(const std::string& s);
std::string to_string(DropReason reason);

// camera_id,t,kept,reason,ssim,nmse; scores are against the frame's decisive reference.
std::string to_csv(const FilterReport& report);

}  // namespace stac
