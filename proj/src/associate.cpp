#include "stac/associate.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "stac/assignment.hpp"
#include "stac/union_find.hpp"

namespace stac {

namespace {

Eigen::MatrixXd stack_rows(const std::vector<Embedding>& list, const std::vector<int>& refs) {
  if (refs.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(refs.size()), list[refs.front()].size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (list[refs[i]].size() != m.cols()) throw ShapeError("embedding dimensions differ");
    m.row(static_cast<Eigen::Index>(i)) = list[refs[i]].transpose();
  }
  return m;
}

void check_aligned(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings) {
  if (dets.size() != embeddings.size()) throw ArgumentError("detections and embeddings are not aligned");
}

}  // namespace

void AssocConfig::validate() const {
  for (double v : {temporal_threshold, spatial_threshold})
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("association thresholds must lie in [0,1]");
}

Eigen::MatrixXd similarity_matrix(const std::vector<Embedding>& current, const std::vector<Embedding>& reference) {
  std::vector<int> ci(current.size()), ri(reference.size());
  std::iota(ci.begin(), ci.end(), 0);
  std::iota(ri.begin(), ri.end(), 0);
  const Eigen::MatrixXd c = stack_rows(current, ci);
  const Eigen::MatrixXd r = stack_rows(reference, ri);
  if (c.rows() == 0 || r.rows() == 0) return Eigen::MatrixXd(c.rows(), r.rows());
  return similarity_matrix(c, r);
}

std::vector<int> match_rows(const Eigen::MatrixXd& s, double threshold, Matching matching) {
  std::vector<int> match(static_cast<std::size_t>(s.rows()), -1);
  if (s.rows() == 0 || s.cols() == 0) return match;

  if (matching == Matching::optimal) {
    const Eigen::MatrixXd gain = (s.array() > threshold).select(s, 0.0);
    const std::vector<int> raw = solve_assignment(-gain);
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (raw[i] >= 0 && s(static_cast<Eigen::Index>(i), raw[i]) > threshold) match[i] = raw[i];
    return match;
  }

  std::vector<std::tuple<double, int, int>> pairs;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (s(i, j) > threshold) pairs.emplace_back(s(i, j), static_cast<int>(i), static_cast<int>(j));
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<char> col_used(static_cast<std::size_t>(s.cols()), 0);
  for (const auto& [score, i, j] : pairs) {
    if (match[i] >= 0 || col_used[j]) continue;
    match[i] = j;
    col_used[j] = 1;
  }
  return match;
}

LocalTracks associate_temporal(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings,
                               const std::vector<FrameRef>& frames, const AssocConfig& config) {
  config.validate();
  check_aligned(dets, embeddings);

  // camera -> t -> detection refs (in index order)
  std::map<int, std::map<int, std::vector<int>>> grid;
  for (const auto& f : frames) grid[f.camera_id][f.t];
  for (std::size_t k = 0; k < dets.size(); ++k) grid[dets[k].camera_id][dets[k].t].push_back(static_cast<int>(k));
  for (auto& [camera, steps] : grid)
    for (auto& [t, refs] : steps)
      std::stable_sort(refs.begin(), refs.end(), [&](int a, int b) { return dets[a].index < dets[b].index; });

  LocalTracks tracks;
  tracks.label.assign(dets.size(), -1);
  for (const auto& [camera, steps] : grid) {
    const std::vector<int>* previous = nullptr;
    for (const auto& [t, refs] : steps) {
      std::vector<int> match(refs.size(), -1);
      if (previous && !previous->empty() && !refs.empty()) {
        const Eigen::MatrixXd s = similarity_matrix(stack_rows(embeddings, refs), stack_rows(embeddings, *previous));
        match = match_rows(s, config.temporal_threshold, config.matching);
      }
      for (std::size_t i = 0; i < refs.size(); ++i) {
        if (match[i] >= 0) {
          tracks.label[refs[i]] = tracks.label[(*previous)[match[i]]];
        } else {
          tracks.label[refs[i]] = tracks.count();
          tracks.track_camera.push_back(camera);
        }
      }
      previous = &refs;
    }
  }
  return tracks;
}

GlobalIdAssignment associate_spatial(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings,
                                     const LocalTracks& tracks, const AssocConfig& config) {
  config.validate();
  check_aligned(dets, embeddings);
  if (tracks.label.size() != dets.size()) throw ArgumentError("local tracks do not cover the detections");

  UnionFind components(static_cast<std::size_t>(tracks.count()));
  std::map<int, std::map<int, std::vector<int>>> by_time;  // t -> camera -> refs
  for (std::size_t k = 0; k < dets.size(); ++k) by_time[dets[k].t][dets[k].camera_id].push_back(static_cast<int>(k));

  for (const auto& [t, cams] : by_time)
    for (auto ci = cams.begin(); ci != cams.end(); ++ci)
      for (auto cj = std::next(ci); cj != cams.end(); ++cj)
        for (int a : ci->second)
          for (int b : cj->second)
            if (cosine(embeddings[a], embeddings[b]) > config.spatial_threshold)
              components.unite(static_cast<std::size_t>(tracks.label[a]), static_cast<std::size_t>(tracks.label[b]));

  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(dets[a].t, dets[a].camera_id, dets[a].index, a) <
           std::tie(dets[b].t, dets[b].camera_id, dets[b].index, b);
  });

  GlobalIdAssignment out;
  out.detections.resize(dets.size());
  std::map<std::size_t, int> root_to_global;
  for (int k : order) {
    const std::size_t root = components.find(static_cast<std::size_t>(tracks.label[k]));
    auto [it, inserted] = root_to_global.emplace(root, out.global_count);
    if (inserted) ++out.global_count;
    out.detections[k] = {dets[k], k, tracks.label[k], it->second};
  }
  return out;
}

std::vector<Tracklet> build_tracklets(const GlobalIdAssignment& assignment) {
  std::map<int, Tracklet> by_id;
  for (const auto& a : assignment.detections) {
    auto& tr = by_id[a.global_id];
    tr.global_id = a.global_id;
    tr.observations.push_back({a.det.camera_id, a.det.t, a.det.bbox, a.detection_ref});
  }
  std::vector<Tracklet> out;
  for (auto& [id, tr] : by_id) {
    std::stable_sort(tr.observations.begin(), tr.observations.end(), [](const auto& a, const auto& b) {
      return std::tie(a.t, a.camera_id) < std::tie(b.t, b.camera_id);
    });
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<std::vector<int>> partition_of(const GlobalIdAssignment& assignment) {
  std::map<int, std::vector<int>> groups;
  for (const auto& a : assignment.detections) groups[a.global_id].push_back(a.detection_ref);
  std::vector<std::vector<int>> out;
  for (auto& [id, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string to_jsonl(const GlobalIdAssignment& assignment) {
  using ojson = nlohmann::ordered_json;
  std::string out;
  for (const auto& a : assignment.detections) {
    ojson j;
    j["camera_id"] = a.det.camera_id;
    j["t"] = a.det.t;
    j["bbox"] = {a.det.bbox.min().x(), a.det.bbox.min().y(), a.det.bbox.max().x(), a.det.bbox.max().y()};
    j["global_id"] = a.global_id;
    j["index"] = a.det.index;
    j["detection_ref"] = a.detection_ref;
    j["local_track"] = a.local_track;
    j["confidence"] = a.det.confidence;
    j["true_identity"] = a.det.true_identity ? ojson(*a.det.true_identity) : ojson(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

GlobalIdAssignment assignment_from_jsonl(const std::string& text) {
  GlobalIdAssignment out;
  std::set<int> ids;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      AssignedDetection a;
      a.det.camera_id = j.at("camera_id");
      a.det.t = j.at("t");
      const auto& b = j.at("bbox");
      a.det.bbox = make_box(b.at(0), b.at(1), b.at(2), b.at(3));
      a.global_id = j.at("global_id");
      a.det.index = j.value("index", 0);
      a.detection_ref = j.value("detection_ref", static_cast<int>(out.detections.size()));
      a.local_track = j.value("local_track", 0);
      a.det.confidence = j.value("confidence", 1.0);
      if (j.contains("true_identity") && !j.at("true_identity").is_null()) a.det.true_identity = j.at("true_identity").get<int>();
      ids.insert(a.global_id);
      out.detections.push_back(a);
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("malformed assignment record: ") + e.what());
    }
  }
  out.global_count = static_cast<int>(ids.size());
  return out;
}

std::string to_string(Matching m) { return m == Matching::greedy ? "greedy" : "optimal"; }

Matching parse_matching(const std::string& s) {
  if (s == "greedy") return Matching::greedy;
  if (s == "optimal") return Matching::optimal;
  throw ConfigError("unknown matching '" + s + "'");
}

}  // namespace stac
