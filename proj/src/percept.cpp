#include "stac/percept.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

namespace stac {

namespace {

constexpr double kConfidenceSigma = 0.2;

Eigen::VectorXd gaussian_vector(int dim, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

Eigen::VectorXd unit_vector(int dim, std::uint64_t seed) {
  Eigen::VectorXd v = gaussian_vector(dim, seed, 1.0);
  while (v.norm() == 0.0) v = gaussian_vector(dim, seed = mix64(seed), 1.0);
  return v.normalized();
}

double sample_confidence(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, kConfidenceSigma);
  return std::clamp(1.0 - std::abs(n(rng)), 0.0, 1.0);
}

Box clip_box(const Box& b, int width, int height) { return b.intersection(make_box(0, 0, width, height)); }

}  // namespace

void PerceptConfig::validate() const {
  for (double r : {confidence_threshold, miss_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("percept rates must lie in [0,1]");
  if (!(false_positive_rate >= 0.0)) throw ConfigError("false_positive_rate must be >= 0");
  for (double s : {bbox_jitter_sigma, embed_noise_sigma, camera_bias_sigma})
    if (!(s >= 0.0)) throw ConfigError("percept sigmas must be >= 0");
  if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
}

double retention_probability(const PerceptConfig& config) {
  // P(1 - |Z| sigma >= c) = P(|Z| <= (1 - c) / sigma)
  const double z = (1.0 - config.confidence_threshold) / kConfidenceSigma;
  return (1.0 - config.miss_rate) * std::erf(z / std::sqrt(2.0));
}

std::vector<Detection> simulate_detections(const std::vector<GroundTruthRecord>& gt,
                                           const std::vector<FrameKey>& frames, const PerceptConfig& config) {
  config.validate();
  std::map<std::pair<int, int>, std::vector<Detection>> per_frame;
  std::map<std::pair<int, int>, std::pair<int, int>> extent;
  for (const auto& f : frames) {
    per_frame[{f.camera_id, f.t}];
    extent[{f.camera_id, f.t}] = {f.width, f.height};
  }

  std::vector<const GroundTruthRecord*> ordered;
  for (const auto& r : gt) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) {
    return std::tie(a->camera_id, a->t, a->identity_id) < std::tie(b->camera_id, b->t, b->identity_id);
  });

  for (const auto* r : ordered) {
    std::mt19937_64 rng(derive_seed(config.seed, 0xde7, r->camera_id, r->t, r->identity_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < config.miss_rate) continue;
    Box b = r->bbox;
    if (config.bbox_jitter_sigma > 0.0) {
      std::normal_distribution<double> jitter(0.0, config.bbox_jitter_sigma);
      Eigen::Vector2d lo = b.min(), hi = b.max();
      lo.x() += jitter(rng);
      lo.y() += jitter(rng);
      hi.x() += jitter(rng);
      hi.y() += jitter(rng);
      b = Box(lo.cwiseMin(hi), lo.cwiseMax(hi));
      auto it = extent.find({r->camera_id, r->t});
      if (it != extent.end()) {
        b = clip_box(b, it->second.first, it->second.second);
      } else {
        b = Box(b.min().cwiseMax(Eigen::Vector2d::Zero()), b.max());
      }
    }
    const double confidence = sample_confidence(rng);
    if (box_area(b) <= 0.0) continue;
    if (confidence < config.confidence_threshold) continue;
    per_frame[{r->camera_id, r->t}].push_back({r->camera_id, r->t, 0, b, confidence, r->identity_id});
  }

  if (config.false_positive_rate > 0.0) {
    for (const auto& f : frames) {
      std::mt19937_64 rng(derive_seed(config.seed, 0xf9, f.camera_id, f.t));
      std::poisson_distribution<int> count(config.false_positive_rate);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const int n = count(rng);
      for (int k = 0; k < n; ++k) {
        const double w = 4.0 + unit(rng) * 0.15 * f.width;
        const double h = 4.0 + unit(rng) * 0.25 * f.height;
        const double x = unit(rng) * std::max(1.0, f.width - w);
        const double y = unit(rng) * std::max(1.0, f.height - h);
        const Box b = clip_box(make_box(x, y, x + w, y + h), f.width, f.height);
        const double confidence = sample_confidence(rng);
        if (box_area(b) <= 0.0 || confidence < config.confidence_threshold) continue;
        per_frame[{f.camera_id, f.t}].push_back({f.camera_id, f.t, 0, b, confidence, std::nullopt});
      }
    }
  }

  std::vector<Detection> out;
  for (auto& [key, dets] : per_frame) {
    for (std::size_t i = 0; i < dets.size(); ++i) {
      dets[i].index = static_cast<int>(i);
      out.push_back(dets[i]);
    }
  }
  return out;
}

Embedding identity_prototype(int identity, const PerceptConfig& config) {
  return unit_vector(config.embed_dim, derive_seed(config.seed, 0x9707, identity));
}

Embedding embed_detection(const Detection& det, const PerceptConfig& config) {
  const int dim = config.embed_dim;
  if (!det.true_identity) return unit_vector(dim, derive_seed(config.seed, 0xfa15e, det.camera_id, det.t, det.index));

  const double per_component = 1.0 / std::sqrt(static_cast<double>(dim));
  Embedding v = identity_prototype(*det.true_identity, config);
  if (config.camera_bias_sigma > 0.0)
    v += config.camera_bias_sigma * gaussian_vector(dim, derive_seed(config.seed, 0xb1a5, det.camera_id), per_component);
  if (config.embed_noise_sigma > 0.0)
    v += config.embed_noise_sigma *
         gaussian_vector(dim, derive_seed(config.seed, 0x9015e, det.camera_id, det.t, *det.true_identity), per_component);
  return v.normalized();
}

std::vector<Embedding> embed_all(const std::vector<Detection>& dets, const PerceptConfig& config) {
  std::vector<Embedding> out;
  out.reserve(dets.size());
  for (const auto& d : dets) out.push_back(embed_detection(d, config));
  return out;
}

std::string to_jsonl(const std::vector<Detection>& dets, const std::vector<Embedding>& embeddings) {
  using ojson = nlohmann::ordered_json;
  std::string out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    ojson j;
    j["camera_id"] = d.camera_id;
    j["t"] = d.t;
    j["index"] = d.index;
    j["bbox"] = {d.bbox.min().x(), d.bbox.min().y(), d.bbox.max().x(), d.bbox.max().y()};
    j["confidence"] = d.confidence;
    j["true_identity"] = d.true_identity ? ojson(*d.true_identity) : ojson(nullptr);
    if (i < embeddings.size())
      j["embedding"] = std::vector<double>(embeddings[i].data(), embeddings[i].data() + embeddings[i].size());
    out += j.dump();
    out += '\n';
  }
  return out;
}

void from_jsonl(const std::string& text, std::vector<Detection>& dets, std::vector<Embedding>& embeddings) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection d;
      d.camera_id = j.at("camera_id");
      d.t = j.at("t");
      d.index = j.at("index");
      const auto& b = j.at("bbox");
      d.bbox = make_box(b.at(0), b.at(1), b.at(2), b.at(3));
      d.confidence = j.at("confidence");
      if (!j.at("true_identity").is_null()) d.true_identity = j.at("true_identity").get<int>();
      dets.push_back(d);
      if (j.contains("embedding")) {
        const auto v = j.at("embedding").get<std::vector<double>>();
        embeddings.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("malformed detection record: ") + e.what());
    }
  }
}

}  // namespace stac
