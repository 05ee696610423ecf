#include "stac/eval.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include <json.hpp>

#include "stac/assignment.hpp"

namespace stac {

namespace {

struct Prediction {
  Box bbox;
  int global_id;
};

}  // namespace

void EvalConfig::validate() const {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must lie in [0,1]");
}

double iou(const Box& a, const Box& b) {
  const double area_a = box_area(a), area_b = box_area(b);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double inter = box_area(a.intersection(b));
  return inter / (area_a + area_b - inter);
}

std::vector<FrameMatch> match_frames(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                                     double iou_threshold, int* degenerate) {
  std::map<std::pair<int, int>, std::vector<Prediction>> preds;  // (t, camera)
  std::map<std::pair<int, int>, std::vector<const GroundTruthRecord*>> truth;
  int bad = 0;
  for (const auto& tr : tracklets)
    for (const auto& o : tr.observations) {
      preds[{o.t, o.camera_id}].push_back({o.bbox, tr.global_id});
      if (box_area(o.bbox) <= 0.0) ++bad;
    }
  for (const auto& r : gt) {
    truth[{r.t, r.camera_id}].push_back(&r);
    if (box_area(r.bbox) <= 0.0) ++bad;
  }
  if (degenerate) *degenerate = bad;

  std::vector<FrameMatch> out;
  for (auto& [key, records] : truth) {
    std::stable_sort(records.begin(), records.end(), [](auto* a, auto* b) { return a->identity_id < b->identity_id; });
    auto it = preds.find(key);
    if (it == preds.end()) continue;
    const auto& p = it->second;
    std::vector<std::tuple<double, int, int>> pairs;
    for (int i = 0; i < static_cast<int>(records.size()); ++i)
      for (int j = 0; j < static_cast<int>(p.size()); ++j) {
        const double v = iou(records[i]->bbox, p[j].bbox);
        if (v >= iou_threshold && v > 0.0) pairs.emplace_back(v, i, j);
      }
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
    });
    std::vector<char> gt_used(records.size(), 0), pred_used(p.size(), 0);
    for (const auto& [v, i, j] : pairs) {
      if (gt_used[i] || pred_used[j]) continue;
      gt_used[i] = pred_used[j] = 1;
      out.push_back({key.second, key.first, records[i]->identity_id, p[j].global_id, v});
    }
  }
  return out;
}

namespace {

std::map<int, int> map_from_matches(const std::vector<FrameMatch>& matches, IdMapping mode) {
  std::map<int, int> id_map;
  if (mode == IdMapping::first_match) {
    std::set<int> taken;
    for (const auto& m : matches) {  // already (t, camera) ordered
      if (id_map.count(m.gt_id) || taken.count(m.global_id)) continue;
      id_map[m.gt_id] = m.global_id;
      taken.insert(m.global_id);
    }
    return id_map;
  }

  std::vector<int> gts, gids;
  for (const auto& m : matches) {
    gts.push_back(m.gt_id);
    gids.push_back(m.global_id);
  }
  std::sort(gts.begin(), gts.end());
  gts.erase(std::unique(gts.begin(), gts.end()), gts.end());
  std::sort(gids.begin(), gids.end());
  gids.erase(std::unique(gids.begin(), gids.end()), gids.end());
  if (gts.empty()) return id_map;

  Eigen::MatrixXd count = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gts.size()), static_cast<Eigen::Index>(gids.size()));
  for (const auto& m : matches) {
    const auto r = std::lower_bound(gts.begin(), gts.end(), m.gt_id) - gts.begin();
    const auto c = std::lower_bound(gids.begin(), gids.end(), m.global_id) - gids.begin();
    count(r, c) += 1.0;
  }
  const std::vector<int> assign = solve_assignment(-count);
  for (std::size_t r = 0; r < assign.size(); ++r)
    if (assign[r] >= 0 && count(static_cast<Eigen::Index>(r), assign[r]) > 0.0) id_map[gts[r]] = gids[static_cast<std::size_t>(assign[r])];
  return id_map;
}

}  // namespace

std::map<int, int> map_ids(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                           const EvalConfig& config) {
  config.validate();
  return map_from_matches(match_frames(tracklets, gt, config.iou_threshold), config.id_mapping);
}

EvalReport mtta(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt,
                const EvalConfig& config) {
  config.validate();
  EvalReport report;
  const auto matches = match_frames(tracklets, gt, config.iou_threshold, &report.degenerate_boxes);
  report.id_map = map_from_matches(matches, config.id_mapping);
  for (const auto& r : gt) {
    ++report.per_camera_total[r.camera_id];
    report.per_camera_correct[r.camera_id];
  }
  for (const auto& m : matches) {
    auto it = report.id_map.find(m.gt_id);
    if (it != report.id_map.end() && it->second == m.global_id) ++report.per_camera_correct[m.camera_id];
  }
  if (report.per_camera_total.empty()) throw UndefinedMetricError("MTTA undefined: no camera has ground truth");
  double sum = 0.0;
  for (const auto& [camera, total] : report.per_camera_total)
    sum += static_cast<double>(report.per_camera_correct[camera]) / static_cast<double>(total);
  report.mtta_pct = 100.0 * sum / static_cast<double>(report.per_camera_total.size());
  report.id_switches = id_switches(tracklets, gt, config.iou_threshold);
  return report;
}

int id_switches(const std::vector<Tracklet>& tracklets, const std::vector<GroundTruthRecord>& gt, double iou_threshold) {
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> seq;  // (camera, gt) -> (t, gid)
  for (const auto& m : match_frames(tracklets, gt, iou_threshold)) seq[{m.camera_id, m.gt_id}].emplace_back(m.t, m.global_id);
  int switches = 0;
  for (auto& [key, s] : seq) {
    std::sort(s.begin(), s.end());
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i].second != s[i - 1].second) ++switches;
  }
  return switches;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mtta_pct"] = r.mtta_pct;
  j["id_switches"] = r.id_switches;
  j["degenerate_boxes"] = r.degenerate_boxes;
  j["cameras"] = nlohmann::ordered_json::array();
  for (const auto& [camera, total] : r.per_camera_total)
    j["cameras"].push_back({{"camera_id", camera}, {"correct", r.per_camera_correct.at(camera)}, {"total", total}});
  j["id_map"] = nlohmann::ordered_json::array();
  for (const auto& [g, p] : r.id_map) j["id_map"].push_back({{"gt_id", g}, {"global_id", p}});
  return j.dump(1) + "\n";
}

std::string to_string(IdMapping m) { return m == IdMapping::optimal_bijective ? "optimal_bijective" : "first_match"; }

IdMapping parse_id_mapping(const std::string& s) {
  if (s == "optimal_bijective") return IdMapping::optimal_bijective;
  if (s == "first_match") return IdMapping::first_match;
  throw ConfigError("unknown id mapping '" + s + "'");
}

}  // namespace stac
