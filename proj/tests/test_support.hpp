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

#include <filesystem>
#include <string>

#include "retrack/common.hpp"
#include "retrack/image.hpp"

namespace retrack::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(RETRACK_TEST_FIXTURES) / name;
}

/// Random intensity field in [lo, hi].
inline ImageD random_field(Rng& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
  ImageD img(w, h);
  for (auto& v : img.pixels()) v = rng.uniform(lo, hi);
  return img;
}

/// Unit-norm descriptor whose distance to `base` is exactly `dist` (both unit
/// vectors in the plane spanned by two axes).
inline Descriptor descriptor_at_distance(int axis_a, int axis_b, double dist) {
  Descriptor d{};
  const double cos_t = 1.0 - 0.5 * dist * dist;  // ||u - v||^2 = 2 - 2 cos
  d[static_cast<size_t>(axis_a)] = cos_t;
  d[static_cast<size_t>(axis_b)] = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  return d;
}

inline Descriptor axis_descriptor(int axis) {
  Descriptor d{};
  d[static_cast<size_t>(axis)] = 1.0;
  return d;
}

}  // namespace retrack::test
