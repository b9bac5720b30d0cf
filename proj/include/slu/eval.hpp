// eval.hpp
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
#include <map>
#include <string>
#include <vector>

#include "slu/corpus.hpp"

namespace slu {

using LabelSeq = std::vector<std::string>;

// Lenient IOB repair applied to predictions before span extraction:
// a bare I-t (no preceding B-t/I-t of the same type) becomes B-t.
LabelSeq repair_prediction(const LabelSeq& labels);

// Micro-averaged F1 (percentage) over exact (type, start, end) span matches,
// CoNLL convention. Predictions are repaired first; golds are trusted.
double span_f1(const std::vector<LabelSeq>& predictions,
               const std::vector<LabelSeq>& golds);

double intent_accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& golds);

struct F1Bucket {
  double f1 = 0.0;
  std::size_t gold_spans = 0;
  std::size_t predicted_spans = 0;
  std::size_t correct_spans = 0;
  std::size_t utterances = 0;
};

// span_f1 restricted to utterances with gold slot_count == L, per L present.
std::map<std::size_t, double> f1_by_slot_count(const std::vector<LabelSeq>& predictions,
                                               const std::vector<LabelSeq>& golds);
std::map<std::size_t, F1Bucket> f1_buckets_by_slot_count(
    const std::vector<LabelSeq>& predictions, const std::vector<LabelSeq>& golds);

struct SeedMetric {
  std::uint64_t seed = 0;
  double slot_f1 = 0.0;
  double intent_acc = 0.0;
};

struct EvalResult {
  double slot_f1 = 0.0;
  double intent_acc = 0.0;
  std::map<std::size_t, F1Bucket> f1_by_slot_count;
  std::vector<SeedMetric> per_seed;  // filled by seed sweeps
  double slot_f1_mean = 0.0, slot_f1_std = 0.0;
  double intent_acc_mean = 0.0, intent_acc_std = 0.0;

  std::string to_json() const;
};

// Aggregates per-seed metrics into mean and sample standard deviation.
EvalResult aggregate_seed_metrics(const std::vector<SeedMetric>& per_seed);

}  // namespace slu
