#pragma once

#include <string>
#include <vector>

#include "stac/filter.hpp"
#include "stac/percept.hpp"

namespace stac {

enum class Matching { greedy, optimal };

struct AssocConfig {
  double temporal_threshold = 0.65;  // on S = 1 - ||a - b||
  double spatial_threshold = 0.7;    // on cosine
  Matching matching = Matching::greedy;

  void validate() const;
};

/// S(i, j) = 1 - ||current_i - reference_j||, embeddings stored one per row.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> similarity_matrix(
    const Eigen::MatrixBase<DerivedA>& current, const Eigen::MatrixBase<DerivedB>& reference) {
  using Scalar = typename DerivedA::Scalar;
  if (current.rows() > 0 && reference.rows() > 0 && current.cols() != reference.cols())
    throw ShapeError("similarity_matrix: embedding dimensions differ");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> s(current.rows(), reference.rows());
  for (Eigen::Index i = 0; i < current.rows(); ++i)
    for (Eigen::Index j = 0; j < reference.rows(); ++j) s(i, j) = Scalar(1) - (current.row(i) - reference.row(j)).norm();
  return s;
}

Eigen::MatrixXd similarity_matrix(const std::vector<Embedding>& current, const std::vector<Embedding>& reference);

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: embedding dimensions differ");
  const auto na = a.norm();
  const auto nb = b.norm();
  if (na == 0 || nb == 0) throw NumericError("cosine: zero vector");
  return a.dot(b) / (na * nb);
}

// One-to-one matching of rows to columns over entries strictly above `threshold`.
// Greedy: descending similarity, ties to lower row then lower column.
std::vector<int> match_rows(const Eigen::MatrixXd& similarity, double threshold, Matching matching);

struct LocalTracks {
  std::vector<int> label;         // per detection, unique across cameras
  std::vector<int> track_camera;  // per label
  int count() const { return static_cast<int>(track_camera.size()); }
};

/// Intra-camera linking of each frame to the previous processed frame of the
/// same camera. `frames` lists processed frames (including ones without any
/// detection); frames that only appear in `dets` are added implicitly.
LocalTracks associate_temporal(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings,
                               const std::vector<FrameRef>& frames, const AssocConfig& config);

struct AssignedDetection {
  Detection det;
  int detection_ref = 0;  // position in the detection / embedding lists
  int local_track = 0;
  int global_id = 0;
};

struct GlobalIdAssignment {
  std::vector<AssignedDetection> detections;  // same order as the input detections
  int global_count = 0;
};

/// Cross-camera merge: every co-temporal detection pair from different cameras
/// with cosine > spatial_threshold links their local tracks; global ids are the
/// connected components, numbered by earliest (t, camera, index).
GlobalIdAssignment associate_spatial(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings,
                                     const LocalTracks& tracks, const AssocConfig& config);

struct TrackletObservation {
  int camera_id = 0;
  int t = 0;
  Box bbox;
  int embedding_ref = 0;
};

struct Tracklet {
  int global_id = 0;
  std::vector<TrackletObservation> observations;  // ordered by (t, camera_id)
};

std::vector<Tracklet> build_tracklets(const GlobalIdAssignment& assignment);

// Sorted-by-member partition of detection_refs, for comparing runs independent of id numbering.
std::vector<std::vector<int>> partition_of(const GlobalIdAssignment& assignment);

std::string to_jsonl(const GlobalIdAssignment& assignment);
GlobalIdAssignment assignment_from_jsonl(const std::string& text);

std::string to_string(Matching m);
Matching parse_matching(const std::string& s);

}  // namespace stac
