#include "stac/querysvc.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stac/codec.hpp"

namespace stac {

namespace {

bool same_content(const MetadataRecord& a, const MetadataRecord& b) {
  return a.global_id == b.global_id && a.bbox.min() == b.bbox.min() && a.bbox.max() == b.bbox.max() &&
         a.tile_refs == b.tile_refs;
}

Frame crop(const Frame& f, const PixelRect& r) {
  const Eigen::Vector2i s = r.max() - r.min();
  Frame out(f.camera_id, f.t, s.x(), s.y());
  out.pixels = f.pixels.block(r.min().y(), r.min().x(), s.y(), s.x());
  return out;
}

}  // namespace

MetadataStore::MetadataStore() : state_(std::make_shared<const State>()) {}

std::shared_ptr<const MetadataStore::State> MetadataStore::snapshot() const {
  std::lock_guard lock(mu_);
  return state_;
}

void MetadataStore::ingest(const std::vector<MetadataRecord>& records) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<State>(*state_);
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.camera_id, r.t, r.embedding_ref);
    auto it = next->by_key.find(key);
    if (it != next->by_key.end()) {
      if (!same_content(next->records[it->second], r))
        throw IntegrityError("conflicting record for camera " + std::to_string(r.camera_id) + " t=" +
                             std::to_string(r.t) + " ref " + std::to_string(r.embedding_ref));
      continue;
    }
    const std::size_t pos = next->records.size();
    next->records.push_back(r);
    next->by_key.emplace(key, pos);
    next->by_global_id[r.global_id].push_back(pos);
    next->by_frame[{r.camera_id, r.t}].push_back(pos);
  }
  state_ = std::move(next);
}

void MetadataStore::set_masks(const std::vector<RoiMask>& masks) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<State>(*state_);
  for (const auto& m : masks) next->masks[m.camera_id] = m;
  state_ = std::move(next);
}

std::vector<MetadataRecord> MetadataStore::records_for(int global_id) const {
  const auto s = snapshot();
  std::vector<MetadataRecord> out;
  if (auto it = s->by_global_id.find(global_id); it != s->by_global_id.end())
    for (std::size_t k : it->second) out.push_back(s->records[k]);
  return out;
}

std::vector<MetadataRecord> MetadataStore::records_at(int camera_id, int t) const {
  const auto s = snapshot();
  std::vector<MetadataRecord> out;
  if (auto it = s->by_frame.find({camera_id, t}); it != s->by_frame.end())
    for (std::size_t k : it->second) out.push_back(s->records[k]);
  return out;
}

std::string MetadataStore::to_jsonl() const {
  using ojson = nlohmann::ordered_json;
  std::string out;
  for (const auto& r : snapshot()->records) {
    ojson j;
    j["global_id"] = r.global_id;
    j["camera_id"] = r.camera_id;
    j["t"] = r.t;
    j["bbox"] = {r.bbox.min().x(), r.bbox.min().y(), r.bbox.max().x(), r.bbox.max().y()};
    j["embedding_ref"] = r.embedding_ref;
    j["tile_refs"] = r.tile_refs;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<MetadataRecord> MetadataStore::parse_jsonl(const std::string& text) {
  std::vector<MetadataRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MetadataRecord r;
      r.global_id = j.at("global_id");
      r.camera_id = j.at("camera_id");
      r.t = j.at("t");
      const auto& b = j.at("bbox");
      r.bbox = make_box(b.at(0), b.at(1), b.at(2), b.at(3));
      r.embedding_ref = j.at("embedding_ref");
      r.tile_refs = j.at("tile_refs").get<TileSet>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("malformed metadata record: ") + e.what());
    }
  }
  return out;
}

void MetadataStore::save(const std::filesystem::path& log) const {
  std::ofstream out(log, std::ios::app);
  if (!out) throw Error("cannot open " + log.string());
  out << to_jsonl();
}

MetadataStore MetadataStore::load(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw LookupError("cannot open record log " + log.string());
  std::stringstream buf;
  buf << in.rdbuf();
  MetadataStore store;
  store.ingest(parse_jsonl(buf.str()));
  return store;
}

QueryResult query_appearances(const MetadataStore& store, int global_id, const QueryOptions& options) {
  const auto s = store.snapshot();
  QueryResult res;
  res.kind = QueryKind::appearances;
  auto it = s->by_global_id.find(global_id);
  if (it == s->by_global_id.end()) return res;
  res.value = static_cast<long>(it->second.size());

  std::vector<std::size_t> order = it->second;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(s->records[a].t, s->records[a].camera_id) < std::tie(s->records[b].t, s->records[b].camera_id);
  });
  for (std::size_t k : order) {
    if (res.evidence.size() >= options.evidence_limit) break;
    const auto& r = s->records[k];
    Evidence ev{r.camera_id, r.t, {}};
    if (auto m = s->masks.find(r.camera_id); m != s->masks.end()) {
      const auto& mask = m->second;
      for (int tile : r.tile_refs)
        if (std::binary_search(mask.selected_tiles.begin(), mask.selected_tiles.end(), tile))
          ev.tiles.push_back(mask.grid.tile_rect(tile));
    }
    if (options.frames && !ev.tiles.empty()) {
      const Frame f = options.frames(r.camera_id, r.t);
      for (const auto& rect : ev.tiles) res.bytes_transmitted += encode_frame(crop(f, rect)).payload.size();
    }
    res.evidence.push_back(std::move(ev));
  }
  return res;
}

QueryResult query_distinct_count(const MetadataStore& store, int t_begin, int t_end) {
  if (t_end < t_begin) throw ArgumentError("inverted step range");
  const auto s = store.snapshot();
  std::set<int> ids;
  for (const auto& r : s->records)
    if (r.t >= t_begin && r.t < t_end) ids.insert(r.global_id);
  QueryResult res;
  res.kind = QueryKind::distinct_count;
  res.value = static_cast<long>(ids.size());
  return res;
}

QueryResult query_first_entry(const MetadataStore& store, int global_id) {
  const auto s = store.snapshot();
  QueryResult res;
  res.kind = QueryKind::first_entry;
  auto it = s->by_global_id.find(global_id);
  if (it == s->by_global_id.end()) {
    res.found = false;
    return res;
  }
  const MetadataRecord* best = nullptr;
  for (std::size_t k : it->second) {
    const auto& r = s->records[k];
    if (!best || std::tie(r.t, r.camera_id) < std::tie(best->t, best->camera_id)) best = &r;
  }
  res.value = best->t;
  res.camera_id = best->camera_id;
  return res;
}

std::size_t full_frame_bytes(const std::vector<Evidence>& evidence, const FrameSource& frames) {
  std::set<std::pair<int, int>> seen;
  std::size_t total = 0;
  for (const auto& ev : evidence)
    if (seen.insert({ev.camera_id, ev.t}).second) total += encode_frame(frames(ev.camera_id, ev.t)).payload.size();
  return total;
}

std::string to_string(QueryKind kind) {
  switch (kind) {
    case QueryKind::appearances: return "appearances";
    case QueryKind::distinct_count: return "distinct_count";
    case QueryKind::first_entry: return "first_entry";
  }
  return "?";
}

std::string to_json(const QueryResult& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.kind);
  j["found"] = r.found;
  j["value"] = r.value;
  if (r.camera_id) j["camera_id"] = *r.camera_id;
  j["bytes_transmitted"] = r.bytes_transmitted;
  j["evidence"] = nlohmann::ordered_json::array();
  for (const auto& ev : r.evidence) {
    nlohmann::ordered_json e;
    e["camera_id"] = ev.camera_id;
    e["t"] = ev.t;
    e["tiles"] = nlohmann::ordered_json::array();
    for (const auto& rect : ev.tiles) e["tiles"].push_back({rect.min().x(), rect.min().y(), rect.max().x(), rect.max().y()});
    j["evidence"].push_back(std::move(e));
  }
  return j.dump(1) + "\n";
}

}  // namespace stac
