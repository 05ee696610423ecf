#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "stac/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kStageFailure = 2, kInfeasible = 3 };

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw stac::LookupError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path output_path(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative())
    if (const char* root = std::getenv("STAC_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

stac::PipelineConfig config_or_default(const std::string& path, const std::optional<std::uint64_t>& seed) {
  stac::PipelineConfig c = path.empty() ? stac::PipelineConfig{} : stac::load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

// kept=1 rows of a filter CSV
std::set<std::pair<int, int>> kept_from_csv(const std::string& csv) {
  std::set<std::pair<int, int>> kept;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cam, t, flag;
    std::getline(row, cam, ',');
    std::getline(row, t, ',');
    std::getline(row, flag, ',');
    if (flag == "1") kept.insert({std::stoi(cam), std::stoi(t)});
  }
  return kept;
}

std::pair<std::string, std::vector<nlohmann::json>> parse_knob(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw stac::ArgumentError("knob must look like path=v1,v2,...");
  std::pair<std::string, std::vector<nlohmann::json>> knob{spec.substr(0, eq), {}};
  std::istringstream in(spec.substr(eq + 1));
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      knob.second.push_back(nlohmann::json::parse(item));
    } catch (const nlohmann::json::parse_error&) {
      knob.second.push_back(item);
    }
  }
  if (knob.second.empty()) throw stac::ArgumentError("knob '" + knob.first + "' has an empty range");
  return knob;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stac: cross-camera tracking pipeline simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  auto* generate = app.add_subcommand("generate", "Generate a scenario and optionally render frames");
  bool pgm = false;
  generate->add_option("-c,--config", config_path, "Pipeline config (JSON)");
  generate->add_option("--seed", seed, "Override the config seed");
  generate->add_option("-o,--out", out_dir, "Output directory")->default_val("stac-scenario");
  generate->add_flag("--pgm", pgm, "Write every frame as PGM");

  auto* run = app.add_subcommand("run", "Run the full pipeline and write artifacts");
  run->add_option("-c,--config", config_path, "Pipeline config (JSON)");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("-o,--out", out_dir, "Output directory (defaults to config output_dir)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Cross-product sweep over config knobs");
  std::vector<std::string> knob_specs;
  std::string csv_path;
  unsigned workers = 0;
  sweep_cmd->add_option("-c,--config", config_path, "Base pipeline config (JSON)");
  sweep_cmd->add_option("--seed", seed, "Override the config seed");
  sweep_cmd->add_option("-k,--knob", knob_specs, "path=v1,v2,... e.g. associate.spatial_threshold=0.5,0.7")->required();
  sweep_cmd->add_option("-o,--out", csv_path, "CSV output file (stdout when omitted)");
  sweep_cmd->add_option("-j,--workers", workers, "Worker threads (0 = hardware concurrency)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate an assignment against scenario ground truth");
  std::string scenario_path, assignment_path, filter_csv;
  stac::EvalConfig eval_config;
  std::string mapping = "optimal_bijective";
  eval_cmd->add_option("--scenario", scenario_path, "scenario.json")->required();
  eval_cmd->add_option("--assignment", assignment_path, "assignment.jsonl")->required();
  eval_cmd->add_option("--filter", filter_csv, "filter.csv; restricts ground truth to kept frames");
  eval_cmd->add_option("--iou", eval_config.iou_threshold, "IoU threshold")->default_val(0.7);
  eval_cmd->add_option("--mapping", mapping, "optimal_bijective | first_match")->default_val("optimal_bijective");

  auto* query = app.add_subcommand("query", "Query a metadata record log");
  query->require_subcommand(1);
  std::string log_path, masks_path, query_scenario;
  std::size_t limit = static_cast<std::size_t>(-1);
  query->add_option("--log", log_path, "metadata.jsonl")->required();
  query->add_option("--masks", masks_path, "masks.json, enables tile evidence");
  query->add_option("--scenario", query_scenario, "scenario.json, enables evidence byte accounting");
  query->add_option("--limit", limit, "Maximum evidence entries");
  int global_id = 0, t_from = 0, t_to = 0;
  auto* q_app = query->add_subcommand("appearances", "How many times did a person appear?");
  q_app->add_option("--id", global_id, "Global id")->required();
  auto* q_distinct = query->add_subcommand("distinct", "How many distinct persons appeared in [from, to)?");
  q_distinct->add_option("--from", t_from, "First step")->required();
  q_distinct->add_option("--to", t_to, "One past the last step")->required();
  auto* q_first = query->add_subcommand("first-entry", "When did a person first appear?");
  q_first->add_option("--id", global_id, "Global id")->required();

  auto* report = app.add_subcommand("report", "Transmission arithmetic for a before/after pair of sizes");
  double before_kb = 0, after_kb = 0, duration = 0, uplink = 5000;
  report->add_option("--before-kb", before_kb, "Size before optimisation, KB (1000 bytes)")->required();
  report->add_option("--after-kb", after_kb, "Size after optimisation, KB")->required();
  report->add_option("--duration", duration, "Clip duration in seconds")->required();
  report->add_option("--uplink-kbps", uplink, "Uplink capacity")->default_val(5000);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*generate) {
      const auto config = config_or_default(config_path, seed);
      const auto scenario = stac::generate_scenario(config.scenario, config.seed);
      const auto dir = output_path(out_dir);
      std::filesystem::create_directories(dir);
      std::ofstream(dir / "scenario.json") << stac::serialize(scenario);
      if (pgm)
        for (const auto& cam : scenario.cameras)
          for (int t = 0; t < scenario.duration_steps; ++t)
            stac::write_pgm(dir / ("cam" + std::to_string(cam.id) + "_t" + std::to_string(t) + ".pgm"),
                            stac::render_frame(scenario, cam.id, t));
      std::cout << "scenario " << stac::hex64(stac::scenario_hash(scenario)) << " -> " << (dir / "scenario.json").string()
                << "\n";
      return kOk;
    }
    if (*run) {
      const auto config = config_or_default(config_path, seed);
      const auto dir = output_path(out_dir.empty() ? config.output_dir : out_dir);
      const auto manifest = stac::run_pipeline(config, dir);
      std::cout << stac::to_json(manifest);
      if (!manifest.ok()) return manifest.infeasible ? kInfeasible : kStageFailure;
      return kOk;
    }
    if (*sweep_cmd) {
      const auto config = config_or_default(config_path, seed);
      stac::KnobRanges knobs;
      for (const auto& spec : knob_specs) knobs.push_back(parse_knob(spec));
      const auto rows = stac::sweep(config, knobs, workers);
      const std::string csv = stac::sweep_csv(knobs, rows);
      if (csv_path.empty()) std::cout << csv;
      else std::ofstream(output_path(csv_path)) << csv;
      for (const auto& r : rows)
        if (r.error) return kStageFailure;
      return kOk;
    }
    if (*eval_cmd) {
      eval_config.id_mapping = stac::parse_id_mapping(mapping);
      const auto scenario = stac::parse_scenario(slurp(scenario_path));
      auto gt = stac::ground_truth(scenario);
      if (!filter_csv.empty()) {
        const auto kept = kept_from_csv(slurp(filter_csv));
        std::erase_if(gt, [&](const auto& r) { return !kept.count({r.camera_id, r.t}); });
      }
      const auto assignment = stac::assignment_from_jsonl(slurp(assignment_path));
      std::cout << stac::to_json(stac::mtta(stac::build_tracklets(assignment), gt, eval_config));
      return kOk;
    }
    if (*query) {
      stac::MetadataStore store = stac::MetadataStore::load(log_path);
      if (!masks_path.empty()) store.set_masks(stac::masks_from_json(slurp(masks_path)));
      stac::QueryOptions options;
      options.evidence_limit = limit;
      std::optional<stac::WorldScenario> scenario;
      if (!query_scenario.empty()) {
        scenario = stac::parse_scenario(slurp(query_scenario));
        options.frames = [&](int camera, int t) { return stac::render_frame(*scenario, camera, t); };
      }
      stac::QueryResult result;
      if (*q_app) result = stac::query_appearances(store, global_id, options);
      else if (*q_distinct) result = stac::query_distinct_count(store, t_from, t_to);
      else result = stac::query_first_entry(store, global_id);
      std::cout << stac::to_json(result);
      return kOk;
    }
    if (*report) {
      stac::LinkModel link;
      link.uplink_kbps = uplink;
      const auto before = stac::transmission_report({{"raw", before_kb * 1000.0}}, duration, link);
      const auto after = stac::transmission_report({{"raw", before_kb * 1000.0}, {"optimized", after_kb * 1000.0}}, duration, link);
      nlohmann::ordered_json j;
      j["before_kbps"] = before.bitrate_kbps;
      j["after_kbps"] = after.bitrate_kbps;
      j["size_reduction_pct"] = stac::reduction_pct(before_kb, after_kb);
      j["bitrate_reduction_pct"] = stac::reduction_pct(before.bitrate_kbps, after.bitrate_kbps);
      j["utilization_pct"] = after.utilization_pct;
      std::cout << j.dump(1) << "\n";
      return kOk;
    }
  } catch (const stac::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const stac::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const stac::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
