#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stac/scenario.hpp"

namespace stac {

using Embedding = Eigen::VectorXd;

struct Detection {
  int camera_id = 0;
  int t = 0;
  int index = 0;  // position within its (camera, t) frame
  Box bbox;
  double confidence = 1.0;
  std::optional<int> true_identity;  // evaluation only
};

// Frame the detector runs on; false positives need the frame extent.
struct FrameKey {
  int camera_id = 0;
  int t = 0;
  int width = 0;
  int height = 0;
};

struct PerceptConfig {
  double confidence_threshold = 0.45;
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;  // expected spurious detections per frame
  double bbox_jitter_sigma = 0.0;    // pixels, per corner coordinate
  double embed_noise_sigma = 0.05;
  double camera_bias_sigma = 0.1;
  int embed_dim = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Detector stand-in. Each ground-truth record is missed with probability
/// `miss_rate`, otherwise jittered, clipped and given a confidence drawn as
/// 1 - |N(0, 0.2)|; anything under `confidence_threshold` is discarded.
/// Every frame in `frames` also receives Poisson(false_positive_rate)
/// spurious boxes. Randomness is keyed per (camera, t, identity), so a
/// record's fate does not depend on which other frames are present.
///
/// Output is ordered by (camera_id, t, index).
std::vector<Detection> simulate_detections(const std::vector<GroundTruthRecord>& gt,
                                           const std::vector<FrameKey>& frames, const PerceptConfig& config);

inline std::vector<Detection> simulate_detections(const std::vector<GroundTruthRecord>& gt,
                                                  const PerceptConfig& config) {
  return simulate_detections(gt, {}, config);
}

// Closed-form probability that a true record survives miss + confidence gate.
double retention_probability(const PerceptConfig& config);

/// Embedding stand-in: normalize(p_k + camera_bias_sigma * b_cam + embed_noise_sigma * n)
/// where p_k is the identity prototype, b_cam a per-camera direction and n fresh noise.
/// b_cam and n have i.i.d. N(0, 1/dim) components so their norms concentrate at 1.
/// False positives get an independent random unit vector.
Embedding embed_detection(const Detection& det, const PerceptConfig& config);

Embedding identity_prototype(int identity, const PerceptConfig& config);

std::vector<Embedding> embed_all(const std::vector<Detection>& dets, const PerceptConfig& config);

// One JSON object per line: detection fields plus its embedding.
std::string to_jsonl(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings);
void from_jsonl(const std::string& text, std::vector<Detection>& dets, std::vector<Embedding>& embeddings);

}  // namespace stac
