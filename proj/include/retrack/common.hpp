// Copyright 2026 The retrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace retrack {

// ============================================================================
// Errors
// ============================================================================

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric argument is outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Two containers that must agree in size/shape do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A requested gaze/grid does not fit inside the phantom retina.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// The pose graph is disconnected (or otherwise not solvable).
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// Canonical feature space construction cannot proceed.
class SpaceConstructionError : public Error {
 public:
  using Error::Error;
};

/// A persisted file does not parse or carries an unsupported version.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ============================================================================
// Core value types
// ============================================================================

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

/// Pixel translation between two images (or image and canonical space).
struct Translation2D {
  double dx = 0.0;
  double dy = 0.0;

  Vec2 vec() const { return {dx, dy}; }
};

/// Gaze direction in degrees. yaw is horizontal (+right), pitch vertical (+up).
struct GazeAngle {
  double yaw = 0.0;
  double pitch = 0.0;
};

/// System calibration: pixel-per-degree ratios and the pupil-steering offset.
struct Calibration {
  double ppd_x = 40.18;
  double ppd_y = 40.17;
  GazeAngle steering_offset{0.0, 0.0};

  void validate() const {
    if (!(ppd_x > 0.0) || !(ppd_y > 0.0)) {
      throw ParameterError("Calibration: ppd must be positive");
    }
  }
};

inline constexpr int kDescriptorDim = 128;
using Descriptor = std::array<double, kDescriptorDim>;

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (int k = 0; k < kDescriptorDim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// ============================================================================
// Deterministic random numbers
// ============================================================================
//
// Self-contained generator (xoshiro256++ seeded via splitmix64) so that every
// simulation is reproducible from its seed regardless of standard-library
// internals.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<uint64_t, 4> s_{};
};

/// Stateless hash of (seed, x, y) to a uniform double in [0, 1). Used for
/// lattice value noise so texture lookups need no stored state.
inline double hash01(uint64_t seed, int64_t x, int64_t y) {
  uint64_t h = seed ^ (static_cast<uint64_t>(x) * 0x9E3779B97F4A7C15ull) ^
               (static_cast<uint64_t>(y) * 0xC2B2AE3D27D4EB4Full);
  h = splitmix64(h);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace retrack
