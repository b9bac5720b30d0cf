// loss.cpp
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

#include "slu/loss.hpp"

#include <cmath>

#include "json.hpp"
#include "slu/corpus.hpp"

namespace slu {

namespace {

// logsumexp with max subtraction; returns CE and writes softmax into probs.
double cross_entropy(const double* logits, std::size_t n, int gold, double* probs) {
  double max_l = logits[0];
  for (std::size_t i = 1; i < n; ++i) max_l = std::max(max_l, logits[i]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - max_l);
    denom += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= denom;
  return std::log(denom) + max_l - logits[gold];
}

// Floored, renormalized copy of one attention row plus its raw sum.
struct SafeRow {
  std::vector<double> q;
  std::vector<double> log_q;
  double s = 0.0;  // sum of p + floor, the renormalizer
};

SafeRow make_safe_row(const AttentionStack& a, std::size_t h, std::size_t i,
                      double floor_) {
  SafeRow row;
  row.q.resize(a.n);
  row.log_q.resize(a.n);
  double s = 0.0;
  for (std::size_t j = 0; j < a.n; ++j) s += a.at(h, i, j) + floor_;
  row.s = s;
  for (std::size_t j = 0; j < a.n; ++j) {
    row.q[j] = (a.at(h, i, j) + floor_) / s;
    row.log_q[j] = std::log(row.q[j]);
  }
  return row;
}

}  // namespace

double intent_loss(const std::vector<std::vector<double>>& logits,
                   const std::vector<int>& gold,
                   std::vector<std::vector<double>>* d_logits) {
  const std::size_t batch = logits.size();
  if (batch == 0) return 0.0;
  if (d_logits) d_logits->assign(batch, {});
  double sum = 0.0;
  std::vector<double> probs;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = logits[b].size();
    probs.resize(n);
    sum += cross_entropy(logits[b].data(), n, gold[b], probs.data());
    if (d_logits) {
      (*d_logits)[b].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        (*d_logits)[b][i] = (probs[i] - (static_cast<int>(i) == gold[b] ? 1.0 : 0.0)) /
                            static_cast<double>(batch);
      }
    }
  }
  return sum / static_cast<double>(batch);
}

double slot_loss(const std::vector<std::vector<double>>& slot_logits,
                 const std::vector<std::vector<int>>& gold, int n_labels,
                 std::vector<std::vector<double>>* d_logits) {
  const std::size_t batch = slot_logits.size();
  if (d_logits) d_logits->assign(batch, {});
  std::size_t total_tokens = 0;
  for (const auto& labels : gold) total_tokens += labels.size();
  if (total_tokens == 0) return 0.0;

  double sum = 0.0;
  std::vector<double> probs(n_labels);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n_tok = gold[b].size();
    if (d_logits) (*d_logits)[b].assign(n_tok * n_labels, 0.0);
    for (std::size_t tok = 0; tok < n_tok; ++tok) {
      const double* logits = slot_logits[b].data() + tok * n_labels;
      sum += cross_entropy(logits, n_labels, gold[b][tok], probs.data());
      if (d_logits) {
        double* dl = (*d_logits)[b].data() + tok * n_labels;
        for (int i = 0; i < n_labels; ++i) {
          dl[i] = (probs[i] - (i == gold[b][tok] ? 1.0 : 0.0)) /
                  static_cast<double>(total_tokens);
        }
      }
    }
  }
  return sum / static_cast<double>(total_tokens);
}

RegularizerValue slot_pair_loss(std::span<const AttentionSample> batch,
                                const LossWeights& w,
                                std::vector<std::vector<double>>* d_attention) {
  RegularizerValue out;
  if (batch.empty()) return out;
  const std::size_t heads = batch.front().attention->n_heads;
  if (d_attention) {
    d_attention->assign(batch.size(), {});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      (*d_attention)[b].assign(batch[b].attention->p.size(), 0.0);
    }
  }

  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const AttentionStack& a = *batch[b].attention;
    const std::vector<std::string>& labels = *batch[b].row_labels;
    std::vector<std::size_t> slots;
    for (std::size_t r = 0; r < a.n; ++r) {
      if (!labels[r].empty() && labels[r] != kOutsideLabel) slots.push_back(r);
    }
    if (slots.size() < 2) continue;

    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<SafeRow> rows(slots.size());
      for (std::size_t s = 0; s < slots.size(); ++s)
        rows[s] = make_safe_row(a, h, slots[s], w.prob_floor);
      for (std::size_t si = 0; si < slots.size(); ++si) {
        for (std::size_t sj = 0; sj < slots.size(); ++sj) {
          if (si == sj) continue;
          if (labels[slots[si]] == labels[slots[sj]]) continue;
          if (h == 0) ++pairs;
          const SafeRow& qi = rows[si];
          const SafeRow& qj = rows[sj];
          double kl = 0.0;
          for (std::size_t k = 0; k < a.n; ++k)
            kl += qi.q[k] * (qi.log_q[k] - qj.log_q[k]);
          if (kl >= w.kl_cap) {
            sum += w.kl_cap;  // capped terms carry no gradient
            continue;
          }
          sum += kl;
          if (d_attention) {
            double* da = (*d_attention)[b].data();
            const std::size_t ri = slots[si], rj = slots[sj];
            for (std::size_t k = 0; k < a.n; ++k) {
              da[(h * a.n + ri) * a.n + k] +=
                  (qi.log_q[k] - qj.log_q[k] - kl) / qi.s;
              da[(h * a.n + rj) * a.n + k] += (1.0 - qi.q[k] / qj.q[k]) / qj.s;
            }
          }
        }
      }
    }
  }

  out.count = pairs;
  if (pairs == 0) return out;
  const double norm = static_cast<double>(heads) * static_cast<double>(pairs);
  out.value = sum / norm;
  if (d_attention) {
    for (auto& da : *d_attention)
      for (double& v : da) v /= norm;
  }
  return out;
}

RegularizerValue non_deg_loss(std::span<const AttentionSample> batch,
                              const LossWeights& w,
                              std::vector<std::vector<double>>* d_attention) {
  RegularizerValue out;
  if (batch.empty()) return out;
  const std::size_t heads = batch.front().attention->n_heads;
  if (d_attention) {
    d_attention->assign(batch.size(), {});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      (*d_attention)[b].assign(batch[b].attention->p.size(), 0.0);
    }
  }

  double sum = 0.0;
  std::size_t tokens = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const AttentionStack& a = *batch[b].attention;
    const std::vector<std::string>& labels = *batch[b].row_labels;
    for (std::size_t r = 0; r < a.n; ++r) {
      if (labels[r].empty() || labels[r] == kOutsideLabel) continue;
      ++tokens;
      for (std::size_t h = 0; h < heads; ++h) {
        SafeRow row = make_safe_row(a, h, r, w.prob_floor);
        double term = -row.log_q[r];
        if (term >= w.kl_cap) {
          sum += w.kl_cap;
          continue;
        }
        sum += term;
        if (d_attention) {
          double* da = (*d_attention)[b].data();
          for (std::size_t k = 0; k < a.n; ++k) {
            double delta = (k == r) ? 1.0 / row.q[r] : 0.0;
            da[(h * a.n + r) * a.n + k] += (1.0 - delta) / row.s;
          }
        }
      }
    }
  }

  out.count = tokens;
  if (tokens == 0) return out;
  const double norm = static_cast<double>(heads) * static_cast<double>(tokens);
  out.value = sum / norm;
  if (d_attention) {
    for (auto& da : *d_attention)
      for (double& v : da) v /= norm;
  }
  return out;
}

RegularizerValue slot_pair_loss(const AttentionStack& attention,
                                const std::vector<std::string>& row_labels,
                                const LossWeights& w) {
  AttentionSample sample{&attention, &row_labels};
  return slot_pair_loss(std::span<const AttentionSample>(&sample, 1), w);
}

RegularizerValue non_deg_loss(const AttentionStack& attention,
                              const std::vector<std::string>& row_labels,
                              const LossWeights& w) {
  AttentionSample sample{&attention, &row_labels};
  return non_deg_loss(std::span<const AttentionSample>(&sample, 1), w);
}

LossBreakdown combined_loss(double intent, double slot, double slot_pair, double non_deg,
                            const LossWeights& w, std::size_t n1, std::size_t n2) {
  LossBreakdown out;
  out.intent = intent;
  out.slot = slot;
  out.slot_pair = slot_pair;
  out.non_deg = non_deg;
  out.total = intent + w.lambda1 * slot - w.lambda2 * slot_pair - w.lambda3 * non_deg;
  out.n1 = n1;
  out.n2 = n2;
  return out;
}

std::string LossBreakdown::to_json_line(std::size_t step) const {
  nlohmann::json j;
  j["step"] = step;
  j["intent"] = intent;
  j["slot"] = slot;
  j["slot_pair"] = slot_pair;
  j["non_deg"] = non_deg;
  j["total"] = total;
  j["n1"] = n1;
  j["n2"] = n2;
  return j.dump();
}

}  // namespace slu
