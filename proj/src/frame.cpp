#include "stac/frame.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

namespace stac {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void require_same_shape(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": frame dimensions differ (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
}

std::string to_pgm(const Frame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.data()), frame.size());
  return out;
}

Frame from_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw DecodeError("not a P5 8-bit PGM");
  in.get();
  Frame f(0, 0, w, h);
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size()));
  if (static_cast<std::size_t>(in.gcount()) != f.size()) throw DecodeError("truncated PGM raster");
  return f;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  const std::string bytes = to_pgm(frame);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t frame_crc32(const Frame& frame) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, frame.data(), static_cast<uInt>(frame.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace stac
