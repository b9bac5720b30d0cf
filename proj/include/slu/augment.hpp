// augment.hpp
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

#include <cstdint>
#include <optional>

#include "slu/corpus.hpp"
#include "slu/rng.hpp"

namespace slu {

struct AugmentConfig {
  // Synthesized-sample target. When unset, defaults to the size of the
  // input training split (doubles the data).
  std::optional<std::size_t> n_pairs;
  std::uint64_t seed = 0;
  std::string separator = ".";
  std::size_t max_attempts_per_pair = 100;
};

struct AugmentResult {
  Corpus corpus;             // originals first, synthesized after
  std::size_t synthesized = 0;
  std::size_t shortfall = 0;  // requested minus produced
};

// Concatenates two same-intent utterances with disjoint slot-type sets,
// separator token between them labeled "O".
Utterance pair_utterances(const Utterance& a, const Utterance& b,
                          const std::string& separator);

// Rejection-samples ordered parent pairs (uniform per draw, no ordered pair
// emitted twice) until cfg.n_pairs samples exist or attempts run out.
AugmentResult augment_corpus(const Corpus& train, const AugmentConfig& cfg);

}  // namespace slu
