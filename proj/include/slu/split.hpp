// split.hpp
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
#include <string>
#include <vector>

#include "slu/corpus.hpp"
#include "slu/rng.hpp"

namespace slu {

enum class SplitMode { NovelCombination, LengthGeneralization };

struct SplitConfig {
  SplitMode mode = SplitMode::NovelCombination;
  std::size_t k = 2;  // max slots per training utterance (length mode only)
  std::uint64_t seed = 0;
  bool oov_substitution = true;
};

// Audited outcome of a compositional split. `violations` must be empty for
// a valid split; the builder re-checks the guarantees exhaustively.
struct SplitReport {
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t train_combinations = 0;
  std::size_t test_combinations = 0;
  std::size_t substituted_spans = 0;
  std::size_t dropped_test = 0;
  std::vector<std::string> violations;
};

struct SplitResult {
  Corpus train;
  Corpus test;
  SplitReport report;
};

// Keeps only utterances whose slot-type set never occurs in the test side:
// training utterances with a >=2-type combination that appears in the test
// set are removed (single-slot utterances are always retained), then test
// utterances with <2 distinct types or with a combination still present in
// the filtered training set are dropped, and OOV slot values substituted.
SplitResult novel_combination_split(const Corpus& train, const Corpus& test,
                                    const SplitConfig& cfg);

// Restricts training to utterances with at most cfg.k slot instances, drops
// test utterances whose combination occurs in the filtered training set,
// then substitutes OOV slot values.
SplitResult length_split(const Corpus& train, const Corpus& test,
                         const SplitConfig& cfg);

// Replaces every slot span whose value is absent from the pool for its type
// with a uniformly drawn in-pool value of the same type. Labels are rewritten
// to match the replacement length. Increments *substituted per replaced span.
Utterance substitute_oov(const Utterance& u, const ValuePool& pool, Rng& rng,
                         std::size_t* substituted = nullptr);

std::string report_to_json(const SplitReport& report);
void write_split_result(const SplitResult& result, const std::filesystem::path& dir);

}  // namespace slu
