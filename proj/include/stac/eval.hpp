#pragma once

#include <map>
#include <string>
#include <vector>

#include "stac/associate.hpp"
#include "stac/scenario.hpp"

namespace stac {

enum class IdMapping { optimal_bijective, first_match };

struct EvalConfig {
  double iou_threshold = 0.7;
  IdMapping id_mapping = IdMapping::optimal_bijective;

  void validate() const;
};

struct EvalReport {
  std::map<int, int> per_camera_correct;
  std::map<int, int> per_camera_total;
  double mtta_pct = 0.0;
  int id_switches = 0;
  std::map<int, int> id_map;  // ground-truth id -> global id
  int degenerate_boxes = 0;
};

// Zero-area boxes score 0 against anything.
double iou(const Box& a, const Box& b);

// Per-frame one-to-one pairing of a GT record with a prediction at IoU >= threshold.
struct FrameMatch {
  int camera_id = 0;
  int t = 0;
  int gt_id = 0;
  int global_id = 0;
  double iou = 0.0;
};

std::vector<FrameMatch> match_frames(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                                     double iou_threshold, int* degenerate = nullptr);

std::map<int, int> map_ids(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                           const EvalConfig& config);

/// Mean over cameras (with at least one GT record) of correct / total, in percent.
/// A GT record is correct when its frame match carries the mapped global id.
EvalReport mtta(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                const EvalConfig& config);

int id_switches(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                double iou_threshold = 0.7);

std::string to_json(const EvalReport& report);

std::string to_string(IdMapping m);
IdMapping parse_id_mapping(const std::string& s);

}  // namespace stac
