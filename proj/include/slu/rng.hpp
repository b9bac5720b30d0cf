// rng.hpp
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

#include <cmath>
#include <cstdint>

namespace slu {

// Splittable deterministic RNG (splitmix64 core). Standard-library
// distributions are implementation-defined, so all sampling goes through
// this class to keep runs reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), base_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform over [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t uniform(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Uniform over [0, 1) with 53 bits of precision.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform_real() < p; }

  // Standard normal via Box-Muller; second value cached.
  double gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform_real();
    } while (u1 <= 0.0);
    u2 = uniform_real();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream. Children with distinct ids never share state
  // with each other or with the parent's sequential draws.
  Rng split(std::uint64_t stream) const {
    std::uint64_t z = base_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t state_;
  std::uint64_t base_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace slu
