#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "stac/roicover.hpp"

namespace stac {

struct MetadataRecord {
  int global_id = 0;
  int camera_id = 0;
  int t = 0;
  Box bbox;
  int embedding_ref = 0;
  TileSet tile_refs;
};

enum class QueryKind { appearances, distinct_count, first_entry };

struct Evidence {
  int camera_id = 0;
  int t = 0;
  std::vector<PixelRect> tiles;
};

struct QueryResult {
  QueryKind kind = QueryKind::appearances;
  bool found = true;
  long value = 0;  // count, or first-entry timestamp
  std::optional<int> camera_id;
  std::vector<Evidence> evidence;
  std::size_t bytes_transmitted = 0;
};

// Renders the source frame for evidence byte accounting.
using FrameSource = std::function<Frame(int camera_id, int t)>;

struct QueryOptions {
  std::size_t evidence_limit = static_cast<std::size_t>(-1);
  FrameSource frames;  // optional; without it bytes_transmitted stays 0
};

/// Record store indexed by global id and by (camera, t). Ingest publishes a
/// new immutable snapshot, so concurrent readers see a whole batch or none of it.
/// Records are keyed by (camera_id, t, embedding_ref).
class MetadataStore {
 public:
  struct State {
    std::vector<MetadataRecord> records;
    std::map<std::tuple<int, int, int>, std::size_t> by_key;
    std::map<int, std::vector<std::size_t>> by_global_id;
    std::map<std::pair<int, int>, std::vector<std::size_t>> by_frame;
    std::map<int, RoiMask> masks;
  };

  MetadataStore();
  MetadataStore(MetadataStore&& other) noexcept : state_(other.snapshot()) {}
  MetadataStore& operator=(MetadataStore&& other) noexcept {
    auto s = other.snapshot();
    std::lock_guard lock(mu_);
    state_ = std::move(s);
    return *this;
  }

  // Throws IntegrityError, leaving the store untouched, when a key reappears with different content.
  void ingest(const std::vector<MetadataRecord>& records);
  void set_masks(const std::vector<RoiMask>& masks);

  std::shared_ptr<const State> snapshot() const;
  std::size_t size() const { return snapshot()->records.size(); }
  std::vector<MetadataRecord> records_for(int global_id) const;
  std::vector<MetadataRecord> records_at(int camera_id, int t) const;

  std::string to_jsonl() const;
  void save(const std::filesystem::path& log) const;
  static MetadataStore load(const std::filesystem::path& log);
  static std::vector<MetadataRecord> parse_jsonl(const std::string& text);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const State> state_;
};

QueryResult query_appearances(const MetadataStore& store, int global_id, const QueryOptions& options = {});
// Half-open step range [t_begin, t_end).
QueryResult query_distinct_count(const MetadataStore& store, int t_begin, int t_end);
QueryResult query_first_entry(const MetadataStore& store, int global_id);

// Payload bytes to send the given frames whole, for comparison with evidence bytes.
std::size_t full_frame_bytes(const std::vector<Evidence>& evidence, const FrameSource& frames);

std::string to_json(const QueryResult& result);
std::string to_string(QueryKind kind);

}  // namespace stac
