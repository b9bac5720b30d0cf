// eval.cpp
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

#include "slu/eval.hpp"

#include <cmath>

#include "json.hpp"

namespace slu {

namespace {

struct SpanCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  double f1() const {
    if (predicted == 0 && gold == 0) return 0.0;
    if (correct == 0) return 0.0;
    double p = static_cast<double>(correct) / static_cast<double>(predicted);
    double r = static_cast<double>(correct) / static_cast<double>(gold);
    return 100.0 * 2.0 * p * r / (p + r);
  }
};

void count_spans(const LabelSeq& pred, const LabelSeq& gold, SpanCounts& counts) {
  static const std::vector<std::string> no_tokens;
  LabelSeq repaired = repair_prediction(pred);
  std::vector<SlotSpan> pred_spans = slot_spans_from_labels(repaired, no_tokens);
  std::vector<SlotSpan> gold_spans = slot_spans_from_labels(gold, no_tokens);
  counts.gold += gold_spans.size();
  counts.predicted += pred_spans.size();
  // Spans within one sequence are unique by start position, so a linear
  // merge over the sorted lists finds exact matches.
  std::size_t gi = 0;
  for (const SlotSpan& ps : pred_spans) {
    while (gi < gold_spans.size() && gold_spans[gi].start < ps.start) ++gi;
    if (gi < gold_spans.size() && gold_spans[gi].start == ps.start &&
        gold_spans[gi].end == ps.end && gold_spans[gi].slot_type == ps.slot_type) {
      ++counts.correct;
    }
  }
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw EvalError(EvalError::Kind::LengthMismatch,
                    std::string(what) + " count mismatch: " + std::to_string(a) +
                        " vs " + std::to_string(b));
  }
}

}  // namespace

LabelSeq repair_prediction(const LabelSeq& labels) {
  LabelSeq out = labels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::string& l = out[i];
    if (l == kOutsideLabel) continue;
    bool shaped = l.size() >= 3 && l[1] == '-' && (l[0] == 'B' || l[0] == 'I');
    if (!shaped) {
      l = kOutsideLabel;  // unparseable output counts as outside
      continue;
    }
    if (l[0] != 'I') continue;
    bool chained = i > 0 && out[i - 1].size() >= 3 &&
                   (out[i - 1][0] == 'B' || out[i - 1][0] == 'I') &&
                   slot_type_of_label(out[i - 1]) == slot_type_of_label(l);
    if (!chained) l = "B" + l.substr(1);
  }
  return out;
}

double span_f1(const std::vector<LabelSeq>& predictions,
               const std::vector<LabelSeq>& golds) {
  check_aligned(predictions.size(), golds.size(), "sequence");
  SpanCounts counts;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_aligned(predictions[i].size(), golds[i].size(), "token");
    count_spans(predictions[i], golds[i], counts);
  }
  return counts.f1();
}

double intent_accuracy(const std::vector<std::string>& predictions,
                       const std::vector<std::string>& golds) {
  check_aligned(predictions.size(), golds.size(), "intent");
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::map<std::size_t, F1Bucket> f1_buckets_by_slot_count(
    const std::vector<LabelSeq>& predictions, const std::vector<LabelSeq>& golds) {
  check_aligned(predictions.size(), golds.size(), "sequence");
  static const std::vector<std::string> no_tokens;
  std::map<std::size_t, SpanCounts> counts;
  std::map<std::size_t, std::size_t> utterances;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    check_aligned(predictions[i].size(), golds[i].size(), "token");
    std::size_t l = slot_spans_from_labels(golds[i], no_tokens).size();
    count_spans(predictions[i], golds[i], counts[l]);
    ++utterances[l];
  }
  std::map<std::size_t, F1Bucket> out;
  for (const auto& [l, c] : counts) {
    F1Bucket bucket;
    bucket.f1 = c.f1();
    bucket.gold_spans = c.gold;
    bucket.predicted_spans = c.predicted;
    bucket.correct_spans = c.correct;
    bucket.utterances = utterances[l];
    out[l] = bucket;
  }
  return out;
}

std::map<std::size_t, double> f1_by_slot_count(const std::vector<LabelSeq>& predictions,
                                               const std::vector<LabelSeq>& golds) {
  std::map<std::size_t, double> out;
  for (const auto& [l, bucket] : f1_buckets_by_slot_count(predictions, golds)) {
    out[l] = bucket.f1;
  }
  return out;
}

EvalResult aggregate_seed_metrics(const std::vector<SeedMetric>& per_seed) {
  EvalResult out;
  out.per_seed = per_seed;
  if (per_seed.empty()) return out;
  double n = static_cast<double>(per_seed.size());
  for (const SeedMetric& m : per_seed) {
    out.slot_f1_mean += m.slot_f1;
    out.intent_acc_mean += m.intent_acc;
  }
  out.slot_f1_mean /= n;
  out.intent_acc_mean /= n;
  if (per_seed.size() > 1) {
    double vf = 0.0, vi = 0.0;
    for (const SeedMetric& m : per_seed) {
      vf += (m.slot_f1 - out.slot_f1_mean) * (m.slot_f1 - out.slot_f1_mean);
      vi += (m.intent_acc - out.intent_acc_mean) * (m.intent_acc - out.intent_acc_mean);
    }
    out.slot_f1_std = std::sqrt(vf / (n - 1.0));
    out.intent_acc_std = std::sqrt(vi / (n - 1.0));
  }
  out.slot_f1 = out.slot_f1_mean;
  out.intent_acc = out.intent_acc_mean;
  return out;
}

std::string EvalResult::to_json() const {
  nlohmann::json j;
  j["slot_f1"] = slot_f1;
  j["intent_acc"] = intent_acc;
  if (!f1_by_slot_count.empty()) {
    nlohmann::json buckets = nlohmann::json::object();
    for (const auto& [l, b] : f1_by_slot_count) {
      nlohmann::json jb;
      jb["f1"] = b.f1;
      jb["gold_spans"] = b.gold_spans;
      jb["predicted_spans"] = b.predicted_spans;
      jb["correct_spans"] = b.correct_spans;
      jb["utterances"] = b.utterances;
      jb["empty"] = b.gold_spans == 0 && b.predicted_spans == 0;
      buckets[std::to_string(l)] = jb;
    }
    j["f1_by_slot_count"] = buckets;
  }
  if (!per_seed.empty()) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const SeedMetric& m : per_seed) {
      seeds.push_back({{"seed", m.seed}, {"slot_f1", m.slot_f1}, {"intent_acc", m.intent_acc}});
    }
    j["per_seed"] = seeds;
    j["slot_f1_mean"] = slot_f1_mean;
    j["slot_f1_std"] = slot_f1_std;
    j["intent_acc_mean"] = intent_acc_mean;
    j["intent_acc_std"] = intent_acc_std;
  }
  return j.dump(2);
}

}  // namespace slu
