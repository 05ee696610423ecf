#include "stac/codec.hpp"

#include <cstring>

#include <json.hpp>

namespace stac {

namespace {

constexpr std::uint16_t kVersion = 1;

std::vector<std::uint8_t> intra_residuals(const Frame& f) {
  std::vector<std::uint8_t> r(f.size());
  const int w = f.width();
  for (int y = 0; y < f.height(); ++y) {
    std::uint8_t prev = 0;
    for (int x = 0; x < w; ++x) {
      const std::uint8_t p = f.pixels(y, x);
      r[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(p - prev);
      prev = p;
    }
  }
  return r;
}

std::vector<std::uint8_t> delta_residuals(const Frame& f, const Frame& ref) {
  std::vector<std::uint8_t> r(f.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = static_cast<std::uint8_t>(f.data()[k] - ref.data()[k]);
  return r;
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int k = 0; k < 2; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw DecodeError("stream truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& residuals) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < residuals.size();) {
    const std::uint8_t v = residuals[i];
    std::size_t j = i + 1;
    while (j < residuals.size() && residuals[j] == v) ++j;
    std::uint64_t run = j - i;
    out.push_back(v);
    do {
      std::uint8_t byte = run & 0x7f;
      run >>= 7;
      if (run) byte |= 0x80;
      out.push_back(byte);
    } while (run);
    i = j;
  }
  return out;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& payload, std::size_t expected) {
  if (payload.empty() && expected > 0) throw DecodeError("empty payload for a non-empty frame");
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::size_t i = 0;
  while (i < payload.size()) {
    const std::uint8_t v = payload[i++];
    std::uint64_t run = 0;
    int shift = 0;
    while (true) {
      if (i >= payload.size()) throw DecodeError("payload truncated inside a run length");
      if (shift > 56) throw DecodeError("run length overflow");
      const std::uint8_t byte = payload[i++];
      run |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      shift += 7;
      if (!(byte & 0x80)) break;
    }
    if (run == 0) throw DecodeError("zero-length run");
    if (out.size() + run > expected) throw DecodeError("payload decodes past the frame size");
    out.insert(out.end(), run, v);
  }
  if (out.size() != expected) throw DecodeError("payload truncated: " + std::to_string(out.size()) + " of " +
                                                std::to_string(expected) + " pixels");
  return out;
}

EncodedFrame encode_frame(const Frame& frame, const Frame* reference) {
  EncodedFrame enc;
  enc.camera_id = frame.camera_id;
  enc.t = frame.t;
  enc.width = frame.width();
  enc.height = frame.height();
  enc.checksum = frame_crc32(frame);
  enc.payload = rle_encode(intra_residuals(frame));
  if (reference) {
    require_same_shape(frame, *reference, "encode_frame");
    auto delta = rle_encode(delta_residuals(frame, *reference));
    if (delta.size() < enc.payload.size()) {
      enc.payload = std::move(delta);
      enc.mode = CodecMode::delta;
      enc.reference_t = reference->t;
    }
  }
  return enc;
}

Frame decode_frame(const EncodedFrame& enc, const Frame* reference, bool verify) {
  if (enc.width < 0 || enc.height < 0) throw DecodeError("negative frame dimensions");
  Frame f(enc.camera_id, enc.t, enc.width, enc.height);
  const auto residuals = rle_decode(enc.payload, f.size());
  if (enc.mode == CodecMode::intra) {
    for (int y = 0; y < enc.height; ++y) {
      std::uint8_t prev = 0;
      for (int x = 0; x < enc.width; ++x) {
        prev = static_cast<std::uint8_t>(prev + residuals[static_cast<std::size_t>(y) * enc.width + x]);
        f.pixels(y, x) = prev;
      }
    }
  } else {
    if (!reference) throw ProtocolError("delta frame at t=" + std::to_string(enc.t) + " decoded without a reference");
    require_same_shape(f, *reference, "decode_frame");
    for (std::size_t k = 0; k < residuals.size(); ++k)
      f.data()[k] = static_cast<std::uint8_t>(reference->data()[k] + residuals[k]);
  }
  if (verify && frame_crc32(f) != enc.checksum)
    throw ChecksumError("checksum mismatch at camera " + std::to_string(enc.camera_id) + " t=" + std::to_string(enc.t));
  return f;
}

std::vector<std::uint8_t> encode_stream(const std::vector<Frame>& frames) {
  std::vector<std::uint8_t> out = {'S', 'T', 'A', 'C'};
  put_u16(out, kVersion);
  const int w = frames.empty() ? 0 : frames.front().width();
  const int h = frames.empty() ? 0 : frames.front().height();
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(frames.empty() ? 0 : frames.front().camera_id));
  put_u32(out, static_cast<std::uint32_t>(frames.size()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0) require_same_shape(frames[i], frames.front(), "encode_stream");
    const EncodedFrame enc = encode_frame(frames[i], i > 0 ? &frames[i - 1] : nullptr);
    put_u8(out, static_cast<std::uint8_t>(enc.mode));
    put_u32(out, static_cast<std::uint32_t>(enc.t));
    put_u32(out, enc.mode == CodecMode::delta ? 1u : 0u);
    put_u32(out, static_cast<std::uint32_t>(enc.payload.size()));
    out.insert(out.end(), enc.payload.begin(), enc.payload.end());
    put_u32(out, enc.checksum);
  }
  return out;
}

std::vector<Frame> decode_stream(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  const auto magic = in.bytes(4);
  if (std::memcmp(magic.data(), "STAC", 4) != 0) throw DecodeError("bad stream magic");
  if (in.u16() != kVersion) throw DecodeError("unsupported stream version");
  const int w = static_cast<int>(in.u32());
  const int h = static_cast<int>(in.u32());
  const int camera = static_cast<int>(in.u32());
  const std::uint32_t count = in.u32();
  std::vector<Frame> frames;
  for (std::uint32_t i = 0; i < count; ++i) {
    EncodedFrame enc;
    enc.camera_id = camera;
    enc.width = w;
    enc.height = h;
    const std::uint8_t mode = in.u8();
    if (mode > 1) throw DecodeError("unknown frame mode");
    enc.mode = static_cast<CodecMode>(mode);
    enc.t = static_cast<int>(in.u32());
    const std::uint32_t offset = in.u32();
    enc.payload = in.bytes(in.u32());
    enc.checksum = in.u32();
    const Frame* ref = nullptr;
    if (enc.mode == CodecMode::delta) {
      if (offset == 0 || offset > frames.size()) throw ProtocolError("delta record references a missing frame");
      ref = &frames[frames.size() - offset];
      enc.reference_t = ref->t;
    }
    frames.push_back(decode_frame(enc, ref));
  }
  if (!in.done()) throw DecodeError("trailing bytes after last record");
  return frames;
}

std::size_t stream_payload_bytes(const std::vector<Frame>& frames) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < frames.size(); ++i)
    total += encode_frame(frames[i], i > 0 ? &frames[i - 1] : nullptr).payload.size();
  return total;
}

double analytic_size(double width, double height, double fps, double duration_s, double quality_factor) {
  if (!(width > 0) || !(height > 0) || !(fps > 0) || !(quality_factor > 0))
    throw ConfigError("analytic_size: width, height, fps and quality must be positive");
  if (!(duration_s >= 0)) throw ConfigError("analytic_size: duration must be >= 0");
  return width * height * fps * duration_s * quality_factor / 8.0;
}

double quality_for_size(double width, double height, double fps, double duration_s, double bytes) {
  if (!(duration_s > 0)) throw ConfigError("quality_for_size: duration must be positive");
  return bytes / analytic_size(width, height, fps, duration_s, 1.0);
}

void LinkModel::validate() const {
  if (!(uplink_kbps > 0)) throw ConfigError("uplink_kbps must be positive");
  if (!(fps > 0)) throw ConfigError("fps must be positive");
}

double TransmissionReport::stage_bytes(const std::string& stage) const {
  for (const auto& [name, bytes] : per_stage_bytes)
    if (name == stage) return bytes;
  throw LookupError("no stage '" + stage + "' in report");
}

double TransmissionReport::stage_kbps(const std::string& stage) const {
  return stac::bitrate_kbps(stage_bytes(stage), duration_s);
}

double bitrate_kbps(double bytes, double duration_s) {
  if (!(duration_s > 0)) throw ConfigError("bitrate requires a positive duration");
  return bytes * 8.0 / 1000.0 / duration_s;
}

double reduction_pct(double before, double after) {
  if (!(before > 0)) throw ArgumentError("reduction_pct: baseline must be positive");
  return 100.0 * (before - after) / before;
}

TransmissionReport transmission_report(const std::vector<std::pair<std::string, double>>& stages, double duration_s,
                                       const LinkModel& link) {
  link.validate();
  if (!(duration_s > 0)) throw ConfigError("transmission_report: duration must be positive");
  TransmissionReport r;
  r.per_stage_bytes = stages;
  r.duration_s = duration_s;
  r.total_bytes = stages.empty() ? 0.0 : stages.back().second;
  r.bitrate_kbps = bitrate_kbps(r.total_bytes, duration_s);
  r.utilization_pct = 100.0 * r.bitrate_kbps / link.uplink_kbps;
  return r;
}

std::string to_json(const TransmissionReport& r) {
  nlohmann::ordered_json j;
  j["total_bytes"] = r.total_bytes;
  j["duration_s"] = r.duration_s;
  j["bitrate_kbps"] = r.bitrate_kbps;
  j["utilization_pct"] = r.utilization_pct;
  j["per_stage_bytes"] = nlohmann::ordered_json::object();
  for (const auto& [name, bytes] : r.per_stage_bytes) j["per_stage_bytes"][name] = bytes;
  return j.dump(1) + "\n";
}

}  // namespace stac
