#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stac/frame.hpp"

namespace stac {

enum class CodecMode : std::uint8_t { intra = 0, delta = 1 };

struct EncodedFrame {
  int camera_id = 0;
  int t = 0;
  int width = 0;
  int height = 0;
  CodecMode mode = CodecMode::intra;
  std::optional<int> reference_t;
  std::uint32_t checksum = 0;  // crc32 of the source pixels
  std::vector<std::uint8_t> payload;
};

/// Lossless toy codec. Intra residuals use the left neighbour as predictor
/// (0 at the start of each row); delta residuals are pixel - reference, both
/// modulo 256. Residuals are run-length coded as (value byte, LEB128 run)
/// pairs. With a reference, the smaller of the two encodings is kept.
EncodedFrame encode_frame(const Frame& frame, const Frame* reference = nullptr);

inline EncodedFrame encode_frame(const Frame& frame, const std::optional<Frame>& reference) {
  return encode_frame(frame, reference ? &*reference : nullptr);
}

// Throws DecodeError on malformed payloads, ProtocolError when a delta frame
// has no reference, ChecksumError when `verify` is set and the crc differs.
Frame decode_frame(const EncodedFrame& enc, const Frame* reference = nullptr, bool verify = true);

// Raw run-length stage, exposed for tests.
std::vector<std::uint8_t> rle_encode(const std::vector<std::uint8_t>& residuals);
std::vector<std::uint8_t> rle_decode(const std::vector<std::uint8_t>& payload, std::size_t expected);

/// Stream container (little-endian):
///   "STAC" | u16 version=1 | u32 width | u32 height | i32 camera_id | u32 frame_count
///   per frame: u8 mode | u32 t | u32 reference_offset | u32 payload_len | payload | u32 crc32
/// reference_offset counts records back to the reference (0 for intra).
std::vector<std::uint8_t> encode_stream(const std::vector<Frame>& frames);
std::vector<Frame> decode_stream(const std::vector<std::uint8_t>& bytes);

// Sum of payload bytes when every frame is delta-coded against its predecessor where that helps.
std::size_t stream_payload_bytes(const std::vector<Frame>& frames);

/// Size model: bytes = width * height * fps * duration_s * bits_per_pixel / 8,
/// where the quality factor is the bits-per-pixel budget.
double analytic_size(double width, double height, double fps, double duration_s, double quality_factor);

// Quality factor at which analytic_size returns `bytes`.
double quality_for_size(double width, double height, double fps, double duration_s, double bytes);

struct LinkModel {
  double uplink_kbps = 5000.0;
  double fps = 30.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

struct TransmissionReport {
  double total_bytes = 0.0;
  double duration_s = 0.0;
  double bitrate_kbps = 0.0;
  double utilization_pct = 0.0;
  std::vector<std::pair<std::string, double>> per_stage_bytes;  // pipeline order

  double stage_bytes(const std::string& stage) const;
  double stage_kbps(const std::string& stage) const;
};

// kbps = bytes * 8 / 1000 / duration_s. KB and kbps are decimal.
double bitrate_kbps(double bytes, double duration_s);
double reduction_pct(double before, double after);

// The transmitted total is the last stage listed.
TransmissionReport transmission_report(const std::vector<std::pair<std::string, double>>& stages, double duration_s,
                                       const LinkModel& link);

std::string to_json(const TransmissionReport& report);

}  // namespace stac
