#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stac/associate.hpp"
#include "stac/codec.hpp"
#include "stac/eval.hpp"
#include "stac/filter.hpp"
#include "stac/percept.hpp"
#include "stac/querysvc.hpp"
#include "stac/roicover.hpp"
#include "stac/scenario.hpp"

namespace stac {

enum class CodecModel { toy, analytic };

struct StageToggles {
  bool filter = true;
  bool compress = true;
  bool mask = true;
  CodecModel codec = CodecModel::toy;
};

struct RoiConfig {
  int rows = 4;
  int cols = 6;
  CoverMode cover = CoverMode::full_cover;
  int window_steps = 0;  // 0: one mask per camera over the whole sequence
};

// Bits-per-pixel budgets for the analytic size model.
struct AnalyticConfig {
  double raw_quality = 8.0;
  double compressed_quality = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  ScenarioConfig scenario;
  FilterPolicy filter;
  PerceptConfig percept;
  AssocConfig associate;
  RoiConfig roi;
  LinkModel link;
  EvalConfig eval;
  StageToggles stages;
  AnalyticConfig analytic;
  std::string output_dir = "stac-run";

  void validate() const;
};

nlohmann::ordered_json to_json(const PipelineConfig& config);
// Missing keys keep their defaults; unknown keys are a ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
std::uint64_t config_hash(const PipelineConfig& config);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineResult {
  PipelineConfig config;
  WorldScenario scenario;
  std::vector<GroundTruthRecord> ground_truth;  // surviving frames only
  std::vector<FrameRef> kept_frames;
  FilterReport filter;
  std::vector<Detection> detections;
  std::vector<Embedding> embeddings;
  LocalTracks local_tracks;
  GlobalIdAssignment assignment;
  std::vector<Tracklet> tracklets;
  std::vector<RoiMask> masks;
  std::map<int, std::vector<std::uint8_t>> streams;  // camera -> transmitted container
  TransmissionReport transmission;
  EvalReport eval;
  std::vector<MetadataRecord> metadata;
  std::vector<StageTiming> timings;
};

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> artifacts;        // name -> path
  std::map<std::string, std::string> artifact_hashes;  // name -> content hash
  std::vector<StageTiming> timings;
  std::optional<std::string> failed_stage;
  std::optional<std::string> failure;
  bool infeasible = false;
  std::string manifest_hash;

  bool ok() const { return !failed_stage.has_value(); }
};

/// Runs generate -> render -> filter -> compress -> detect -> embed ->
/// associate -> mask -> transmit -> evaluate -> index, honoring the toggles.
/// Throws the failing stage's error.
PipelineResult execute_pipeline(const PipelineConfig& config);

/// execute_pipeline plus artifact output into `out_dir`; every artifact is
/// written as soon as its stage finishes, so a failure leaves the earlier ones.
RunManifest run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

std::string to_json(const RunManifest& manifest);

// Dotted knob path (e.g. "associate.spatial_threshold") -> values.
using KnobRanges = std::vector<std::pair<std::string, std::vector<nlohmann::json>>>;

struct SweepRow {
  std::vector<nlohmann::json> knobs;
  double mtta_pct = 0.0;
  int id_switches = 0;
  int global_ids = 0;
  double drop_pct = 0.0;
  double bytes = 0.0;
  double kbps = 0.0;
  double utilization_pct = 0.0;
  std::optional<std::string> error;
};

PipelineConfig with_knob(const PipelineConfig& base, const std::string& path, const nlohmann::json& value);

// One pipeline run per cell of the cross product, on `workers` threads; rows in cell order.
std::vector<SweepRow> sweep(const PipelineConfig& base, const KnobRanges& knobs, unsigned workers = 0);
std::string sweep_csv(const KnobRanges& knobs, const std::vector<SweepRow>& rows);

std::string to_string(CodecModel m);

}  // namespace stac
