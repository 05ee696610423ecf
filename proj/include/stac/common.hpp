#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace stac {

// Axis-aligned rectangle in pixel coordinates, (x, y) = (min corner, max corner).
using Box = Eigen::AlignedBox2d;

// Integer pixel rectangle, half-open: [min, max).
using PixelRect = Eigen::AlignedBox2i;

inline Box make_box(double x_min, double y_min, double x_max, double y_max) {
  return Box(Eigen::Vector2d(x_min, y_min), Eigen::Vector2d(x_max, y_max));
}

inline PixelRect make_rect(int x0, int y0, int x1, int y1) {
  return PixelRect(Eigen::Vector2i(x0, y0), Eigen::Vector2i(x1, y1));
}

inline double box_area(const Box& b) {
  if (b.isEmpty()) return 0.0;
  const Eigen::Vector2d s = b.sizes();
  return s.x() * s.y();
}

inline long rect_area(const PixelRect& r) {
  const Eigen::Vector2i s = r.max() - r.min();
  if (s.x() <= 0 || s.y() <= 0) return 0;
  return static_cast<long>(s.x()) * s.y();
}

// Error taxonomy. Every library failure is one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class LookupError : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class ChecksumError : public DecodeError { using DecodeError::DecodeError; };
class ProtocolError : public Error { using Error::Error; };
class InfeasibleError : public Error { using Error::Error; };
class IntegrityError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ArgumentError : public Error { using Error::Error; };
class UndefinedMetricError : public Error { using Error::Error; };
class StageError : public Error { using Error::Error; };

// splitmix64 finalizer; used to derive independent RNG streams from a root seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Ts>
constexpr std::uint64_t derive_seed(std::uint64_t root, Ts... parts) {
  std::uint64_t h = mix64(root);
  ((h = mix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

// FNV-1a, 64-bit. Content hashing for determinism checks and manifests.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

}  // namespace stac
