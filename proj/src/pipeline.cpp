#include "stac/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace stac {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

std::string to_string(CodecModel m) { return m == CodecModel::toy ? "toy" : "analytic"; }

namespace {

CodecModel parse_codec_model(const std::string& s) {
  if (s == "toy") return CodecModel::toy;
  if (s == "analytic") return CodecModel::analytic;
  throw ConfigError("unknown codec model '" + s + "'");
}

void reject_unknown(const json& given, const json& known, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
    if (value.is_object()) reject_unknown(value, known.at(key), where + key + ".");
  }
}

std::string json_pointer(const std::string& dotted) {
  std::string p = "/";
  for (char c : dotted) p += c == '.' ? '/' : c;
  return p;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

void PipelineConfig::validate() const {
  filter.validate();
  percept.validate();
  associate.validate();
  link.validate();
  eval.validate();
  if (roi.rows < 1 || roi.cols < 1) throw ConfigError("tile grid must be at least 1x1");
  if (roi.window_steps < 0) throw ConfigError("roi.window_steps must be >= 0");
  if (!(analytic.raw_quality > 0) || !(analytic.compressed_quality > 0))
    throw ConfigError("analytic qualities must be positive");
}

ojson to_json(const PipelineConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  const auto& s = c.scenario;
  j["scenario"] = {{"arena_width", s.arena_width},
                   {"arena_height", s.arena_height},
                   {"duration_steps", s.duration_steps},
                   {"identity_count", s.identity_count},
                   {"body_size", {s.body_size.x(), s.body_size.y()}},
                   {"body_size_jitter", s.body_size_jitter},
                   {"speed", s.speed},
                   {"turn_probability", s.turn_probability},
                   {"pause_fraction", s.pause_fraction},
                   {"cameras",
                    {{"count", s.layout.camera_count},
                     {"overlap", s.layout.overlap},
                     {"image_width", s.layout.image_width},
                     {"image_height", s.layout.image_height}}}};
  j["filter"] = {{"ssim_min", c.filter.ssim_min},
                 {"nmse_max", c.filter.nmse_max},
                 {"duplicate_ssim_min", c.filter.duplicate_ssim_min},
                 {"duplicate_nmse_max", c.filter.duplicate_nmse_max},
                 {"scope", to_string(c.filter.scope)}};
  j["percept"] = {{"confidence_threshold", c.percept.confidence_threshold},
                  {"miss_rate", c.percept.miss_rate},
                  {"false_positive_rate", c.percept.false_positive_rate},
                  {"bbox_jitter_sigma", c.percept.bbox_jitter_sigma},
                  {"embed_noise_sigma", c.percept.embed_noise_sigma},
                  {"camera_bias_sigma", c.percept.camera_bias_sigma},
                  {"embed_dim", c.percept.embed_dim},
                  {"seed", c.percept.seed}};
  j["associate"] = {{"temporal_threshold", c.associate.temporal_threshold},
                    {"spatial_threshold", c.associate.spatial_threshold},
                    {"matching", to_string(c.associate.matching)}};
  j["roi"] = {{"rows", c.roi.rows}, {"cols", c.roi.cols}, {"cover", to_string(c.roi.cover)}, {"window_steps", c.roi.window_steps}};
  j["link"] = {{"uplink_kbps", c.link.uplink_kbps}, {"fps", c.link.fps}};
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold}, {"id_mapping", to_string(c.eval.id_mapping)}};
  j["stages"] = {{"filter", c.stages.filter}, {"compress", c.stages.compress}, {"mask", c.stages.mask}, {"codec", to_string(c.stages.codec)}};
  j["analytic"] = {{"raw_quality", c.analytic.raw_quality}, {"compressed_quality", c.analytic.compressed_quality}};
  j["output_dir"] = c.output_dir;
  return j;
}

PipelineConfig config_from_json(const json& given) {
  const json defaults = json::parse(to_json(PipelineConfig{}).dump());
  reject_unknown(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);
  PipelineConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& s = j.at("scenario");
    c.scenario.arena_width = s.at("arena_width");
    c.scenario.arena_height = s.at("arena_height");
    c.scenario.duration_steps = s.at("duration_steps");
    c.scenario.identity_count = s.at("identity_count");
    c.scenario.body_size = Eigen::Vector2d(s.at("body_size").at(0).get<double>(), s.at("body_size").at(1).get<double>());
    c.scenario.body_size_jitter = s.at("body_size_jitter");
    c.scenario.speed = s.at("speed");
    c.scenario.turn_probability = s.at("turn_probability");
    c.scenario.pause_fraction = s.at("pause_fraction");
    const auto& cam = s.at("cameras");
    c.scenario.layout.camera_count = cam.at("count");
    c.scenario.layout.overlap = cam.at("overlap");
    c.scenario.layout.image_width = cam.at("image_width");
    c.scenario.layout.image_height = cam.at("image_height");
    const auto& f = j.at("filter");
    c.filter.ssim_min = f.at("ssim_min");
    c.filter.nmse_max = f.at("nmse_max");
    c.filter.duplicate_ssim_min = f.at("duplicate_ssim_min");
    c.filter.duplicate_nmse_max = f.at("duplicate_nmse_max");
    c.filter.scope = parse_filter_scope(f.at("scope"));
    const auto& p = j.at("percept");
    c.percept.confidence_threshold = p.at("confidence_threshold");
    c.percept.miss_rate = p.at("miss_rate");
    c.percept.false_positive_rate = p.at("false_positive_rate");
    c.percept.bbox_jitter_sigma = p.at("bbox_jitter_sigma");
    c.percept.embed_noise_sigma = p.at("embed_noise_sigma");
    c.percept.camera_bias_sigma = p.at("camera_bias_sigma");
    c.percept.embed_dim = p.at("embed_dim");
    c.percept.seed = p.at("seed");
    const auto& a = j.at("associate");
    c.associate.temporal_threshold = a.at("temporal_threshold");
    c.associate.spatial_threshold = a.at("spatial_threshold");
    c.associate.matching = parse_matching(a.at("matching"));
    const auto& r = j.at("roi");
    c.roi.rows = r.at("rows");
    c.roi.cols = r.at("cols");
    c.roi.cover = parse_cover_mode(r.at("cover"));
    c.roi.window_steps = r.at("window_steps");
    c.link.uplink_kbps = j.at("link").at("uplink_kbps");
    c.link.fps = j.at("link").at("fps");
    c.eval.iou_threshold = j.at("eval").at("iou_threshold");
    c.eval.id_mapping = parse_id_mapping(j.at("eval").at("id_mapping"));
    const auto& st = j.at("stages");
    c.stages.filter = st.at("filter");
    c.stages.compress = st.at("compress");
    c.stages.mask = st.at("mask");
    c.stages.codec = parse_codec_model(st.at("codec"));
    c.analytic.raw_quality = j.at("analytic").at("raw_quality");
    c.analytic.compressed_quality = j.at("analytic").at("compressed_quality");
    c.output_dir = j.at("output_dir");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

std::uint64_t config_hash(const PipelineConfig& config) {
  ojson j = to_json(config);
  j.erase("output_dir");
  return fnv1a(j.dump());
}

namespace {

using StageHook = std::function<void(const std::string& stage, const PipelineResult& result)>;

PipelineResult execute(const PipelineConfig& config, std::string& stage, const StageHook& hook) {
  config.validate();
  PipelineResult res;
  res.config = config;
  using clock = std::chrono::steady_clock;
  auto started = clock::now();
  auto begin = [&](const char* name) {
    stage = name;
    started = clock::now();
  };
  auto end = [&]() {
    res.timings.push_back({stage, std::chrono::duration<double>(clock::now() - started).count()});
    if (hook) hook(stage, res);
  };

  begin("generate");
  res.scenario = generate_scenario(config.scenario, config.seed);
  const int T = res.scenario.duration_steps;
  end();

  begin("render");
  CameraStreams frames;
  for (const auto& cam : res.scenario.cameras)
    for (int t = 0; t < T; ++t) frames[cam.id].push_back(render_frame(res.scenario, cam.id, t));
  end();

  begin("filter");
  if (config.stages.filter) {
    res.filter = filter_stream(frames, config.filter);
    res.kept_frames = res.filter.kept;
  } else {
    for (const auto& [camera, seq] : frames)
      for (const auto& f : seq) res.kept_frames.push_back({camera, f.t});
    res.filter.kept = res.kept_frames;
  }
  std::map<int, std::vector<Frame>> kept;
  for (const auto& ref : res.kept_frames) kept[ref.camera_id].push_back(frames.at(ref.camera_id)[ref.t]);
  end();

  begin("compress");
  std::map<int, double> compressed_bytes;
  if (config.stages.compress && config.stages.codec == CodecModel::toy)
    for (const auto& [camera, seq] : kept) compressed_bytes[camera] = static_cast<double>(stream_payload_bytes(seq));
  end();

  begin("detect");
  const auto gt_all = ground_truth(res.scenario);
  for (const auto& r : gt_all)
    if (res.filter.is_kept({r.camera_id, r.t})) res.ground_truth.push_back(r);
  std::vector<FrameKey> keys;
  for (const auto& ref : res.kept_frames) {
    const auto& cam = res.scenario.camera(ref.camera_id);
    keys.push_back({ref.camera_id, ref.t, cam.image_width, cam.image_height});
  }
  PerceptConfig percept = config.percept;
  percept.seed = derive_seed(config.seed, 0x9e2c, config.percept.seed);
  res.detections = simulate_detections(res.ground_truth, keys, percept);
  end();

  begin("embed");
  res.embeddings = embed_all(res.detections, percept);
  end();

  begin("associate");
  res.local_tracks = associate_temporal(res.detections, res.embeddings, res.kept_frames, config.associate);
  res.assignment = associate_spatial(res.detections, res.embeddings, res.local_tracks, config.associate);
  res.tracklets = build_tracklets(res.assignment);
  end();

  begin("mask");
  std::map<int, TileGrid> grids;
  for (const auto& cam : res.scenario.cameras)
    grids[cam.id] = partition_tiles(cam.image_width, cam.image_height, config.roi.rows, config.roi.cols);
  if (config.stages.mask) {
    const int window = config.roi.window_steps > 0 ? config.roi.window_steps : T;
    for (const auto& cam : res.scenario.cameras) {
      for (int t0 = 0; t0 < T; t0 += window) {
        std::vector<LabeledBox> boxes;
        for (const auto& a : res.assignment.detections)
          if (a.det.camera_id == cam.id && a.det.t >= t0 && a.det.t < t0 + window)
            boxes.push_back({a.global_id, cam.id, a.det.t, a.det.bbox});
        const CoverageMatrix cov = build_coverage(boxes, grids.at(cam.id));
        TileSet tiles;
        switch (config.roi.cover) {
          case CoverMode::full_cover: tiles = full_cover(cov); break;
          case CoverMode::min_cover_exact: tiles = solve_cover_exact(cov); break;
          case CoverMode::min_cover_greedy: tiles = solve_cover_greedy(cov); break;
        }
        RoiMask m = make_mask(cam.id, grids.at(cam.id), tiles);
        m.t_begin = t0;
        m.t_end = config.roi.window_steps > 0 ? t0 + window : std::numeric_limits<int>::max();
        res.masks.push_back(std::move(m));
      }
    }
  }
  end();

  begin("transmit");
  const double duration = T / config.link.fps;
  auto mask_for = [&](int camera, int t) -> const RoiMask* {
    for (const auto& m : res.masks)
      if (m.camera_id == camera && m.applies_to(t)) return &m;
    return nullptr;
  };
  double raw = 0, filtered = 0, compressed = 0, masked = 0;
  for (const auto& cam : res.scenario.cameras) {
    const double pixels = static_cast<double>(cam.image_width) * cam.image_height;
    const auto it = kept.find(cam.id);
    const std::vector<Frame> none;
    const auto& seq = it == kept.end() ? none : it->second;
    const double kept_fraction = static_cast<double>(seq.size()) / T;
    std::vector<Frame> out_frames;
    double masked_pixels = 0;
    for (const auto& f : seq) {
      const RoiMask* m = config.stages.mask ? mask_for(cam.id, f.t) : nullptr;
      out_frames.push_back(m ? apply_mask(f, *m) : f);
      if (m) {
        long area = 0;
        for (const auto& r : m->merged_rects) area += rect_area(r);
        masked_pixels += static_cast<double>(area);
      }
    }
    if (config.stages.codec == CodecModel::toy) {
      raw += pixels * T;
      filtered += pixels * static_cast<double>(seq.size());
      compressed += compressed_bytes[cam.id];
      if (config.stages.compress) {
        masked += static_cast<double>(stream_payload_bytes(out_frames));
        res.streams[cam.id] = encode_stream(out_frames);
      } else {
        masked += masked_pixels;
      }
    } else {
      const double raw_bytes = analytic_size(cam.image_width, cam.image_height, config.link.fps, duration, config.analytic.raw_quality);
      const double comp_bytes = analytic_size(cam.image_width, cam.image_height, config.link.fps, duration,
                                              config.analytic.compressed_quality) * kept_fraction;
      const double area_fraction = seq.empty() ? 0.0 : masked_pixels / (pixels * static_cast<double>(seq.size()));
      raw += raw_bytes;
      filtered += raw_bytes * kept_fraction;
      compressed += comp_bytes;
      masked += (config.stages.compress ? comp_bytes : raw_bytes * kept_fraction) * area_fraction;
    }
  }
  std::vector<std::pair<std::string, double>> stages = {{"raw", raw}};
  if (config.stages.filter) stages.emplace_back("filtered", filtered);
  if (config.stages.compress) stages.emplace_back("compressed", compressed);
  if (config.stages.mask) stages.emplace_back("masked", masked);
  res.transmission = transmission_report(stages, duration, config.link);
  end();

  begin("evaluate");
  if (!res.ground_truth.empty()) res.eval = mtta(res.tracklets, res.ground_truth, config.eval);
  end();

  begin("index");
  for (const auto& a : res.assignment.detections)
    res.metadata.push_back({a.global_id, a.det.camera_id, a.det.t, a.det.bbox, a.detection_ref,
                            tiles_for_box(a.det.bbox, grids.at(a.det.camera_id))});
  end();
  return res;
}

std::string eval_csv(const PipelineResult& res) {
  std::ostringstream out;
  out << "config_hash,seed,identities,cameras,filter,mask,mtta_pct,id_switches,global_ids\n";
  out << hex64(config_hash(res.config)) << ',' << res.config.seed << ',' << res.config.scenario.identity_count << ','
      << res.scenario.cameras.size() << ',' << res.config.stages.filter << ',' << res.config.stages.mask << ','
      << res.eval.mtta_pct << ',' << res.eval.id_switches << ',' << res.assignment.global_count << '\n';
  return out.str();
}

}  // namespace

PipelineResult execute_pipeline(const PipelineConfig& config) {
  std::string stage;
  return execute(config, stage, {});
}

RunManifest run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunManifest manifest;
  manifest.config_hash = hex64(config_hash(config));

  auto emit = [&](const std::string& name, const std::string& file, const std::string& bytes) {
    write_file(out_dir / file, bytes);
    manifest.artifacts[name] = (out_dir / file).string();
    manifest.artifact_hashes[name] = hex64(fnv1a(bytes));
  };
  emit("config", "config.json", to_json(config).dump(1) + "\n");

  auto hook = [&](const std::string& stage, const PipelineResult& r) {
    if (stage == "generate") emit("scenario", "scenario.json", serialize(r.scenario));
    if (stage == "filter") emit("filter", "filter.csv", to_csv(r.filter));
    if (stage == "embed") emit("detections", "detections.jsonl", to_jsonl(r.detections, r.embeddings));
    if (stage == "associate") emit("assignment", "assignment.jsonl", to_jsonl(r.assignment));
    if (stage == "mask") emit("masks", "masks.json", masks_to_json(r.masks));
    if (stage == "transmit") {
      for (const auto& [camera, bytes] : r.streams)
        emit("stream_cam" + std::to_string(camera), "stream_cam" + std::to_string(camera) + ".stcv",
             std::string(bytes.begin(), bytes.end()));
      emit("transmission", "transmission.json", to_json(r.transmission));
    }
    if (stage == "evaluate") {
      emit("eval", "eval.json", to_json(r.eval));
      emit("eval_csv", "eval.csv", eval_csv(r));
    }
    if (stage == "index") {
      MetadataStore store;
      store.ingest(r.metadata);
      emit("metadata", "metadata.jsonl", store.to_jsonl());
    }
    manifest.timings = r.timings;
  };

  std::string stage;
  try {
    execute(config, stage, hook);
  } catch (const InfeasibleError& e) {
    manifest.failed_stage = stage;
    manifest.failure = e.what();
    manifest.infeasible = true;
  } catch (const std::exception& e) {
    manifest.failed_stage = stage;
    manifest.failure = e.what();
  }

  std::string digest = manifest.config_hash;
  for (const auto& [name, h] : manifest.artifact_hashes) digest += "|" + name + ":" + h;
  if (manifest.failed_stage) digest += "|failed:" + *manifest.failed_stage;
  manifest.manifest_hash = hex64(fnv1a(digest));
  write_file(out_dir / "manifest.json", to_json(manifest));
  return manifest;
}

std::string to_json(const RunManifest& m) {
  ojson j;
  j["manifest_hash"] = m.manifest_hash;
  j["config_hash"] = m.config_hash;
  j["artifacts"] = ojson::object();
  for (const auto& [name, path] : m.artifacts) j["artifacts"][name] = {{"path", path}, {"hash", m.artifact_hashes.at(name)}};
  j["timings_s"] = ojson::object();
  for (const auto& t : m.timings) j["timings_s"][t.stage] = t.seconds;
  if (m.failed_stage) j["failure"] = {{"stage", *m.failed_stage}, {"message", *m.failure}, {"infeasible", m.infeasible}};
  return j.dump(1) + "\n";
}

PipelineConfig with_knob(const PipelineConfig& base, const std::string& path, const json& value) {
  json j = json::parse(to_json(base).dump());
  const json::json_pointer ptr(json_pointer(path));
  if (!j.contains(ptr)) throw ConfigError("unknown knob '" + path + "'");
  j[ptr] = value;
  return config_from_json(j);
}

std::vector<SweepRow> sweep(const PipelineConfig& base, const KnobRanges& knobs, unsigned workers) {
  if (knobs.empty()) throw ArgumentError("sweep needs at least one knob");
  std::size_t cells = 1;
  for (const auto& [name, values] : knobs) {
    if (values.empty()) throw ArgumentError("knob '" + name + "' has an empty range");
    cells *= values.size();
  }
  std::vector<SweepRow> rows(cells);
  std::vector<PipelineConfig> configs(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::size_t rest = cell;
    PipelineConfig c = base;
    std::vector<json> picked(knobs.size());
    for (std::size_t k = knobs.size(); k-- > 0;) {
      const auto& values = knobs[k].second;
      picked[k] = values[rest % values.size()];
      rest /= values.size();
    }
    for (std::size_t k = 0; k < knobs.size(); ++k) c = with_knob(c, knobs[k].first, picked[k]);
    rows[cell].knobs = picked;
    configs[cell] = c;
  }

  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t cell; (cell = next.fetch_add(1)) < cells;) {
      SweepRow& row = rows[cell];
      try {
        const PipelineResult r = execute_pipeline(configs[cell]);
        row.mtta_pct = r.eval.mtta_pct;
        row.id_switches = r.eval.id_switches;
        row.global_ids = r.assignment.global_count;
        row.drop_pct = 100.0 * r.filter.drop_fraction();
        row.bytes = r.transmission.total_bytes;
        row.kbps = r.transmission.bitrate_kbps;
        row.utilization_pct = r.transmission.utilization_pct;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cells));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return rows;
}

std::string sweep_csv(const KnobRanges& knobs, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  for (const auto& [name, values] : knobs) out << name << ',';
  out << "mtta_pct,id_switches,global_ids,drop_pct,bytes,kbps,utilization_pct,error\n";
  for (const auto& r : rows) {
    for (const auto& v : r.knobs) out << (v.is_string() ? v.get<std::string>() : v.dump()) << ',';
    out << r.mtta_pct << ',' << r.id_switches << ',' << r.global_ids << ',' << r.drop_pct << ',' << r.bytes << ','
        << r.kbps << ',' << r.utilization_pct << ',' << (r.error ? *r.error : "") << '\n';
  }
  return out.str();
}

}  // namespace stac
