// loss.hpp
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

#include <span>
#include <string>
#include <vector>

#include "slu/model.hpp"

namespace slu {

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.01;
  double lambda3 = 0.1;
  double kl_cap = 10.0;      // nats; bounds each maximized KL term
  double prob_floor = 1e-8;  // added to rows before renormalizing
};

struct LossBreakdown {
  double intent = 0.0;
  double slot = 0.0;
  double slot_pair = 0.0;
  double non_deg = 0.0;
  double total = 0.0;
  std::size_t n1 = 0;  // qualifying ordered slot pairs
  std::size_t n2 = 0;  // non-O tokens

  std::string to_json_line(std::size_t step) const;
};

// Cross-entropy of the gold intent, mean over the batch. When d_logits is
// non-null it receives softmax minus one-hot, scaled by 1/batch.
double intent_loss(const std::vector<std::vector<double>>& logits,
                   const std::vector<int>& gold,
                   std::vector<std::vector<double>>* d_logits = nullptr);

// Token-level cross-entropy averaged over all real tokens in the batch.
// slot_logits[b] is [n_b * n_labels]; gold[b] holds n_b label ids.
double slot_loss(const std::vector<std::vector<double>>& slot_logits,
                 const std::vector<std::vector<int>>& gold, int n_labels,
                 std::vector<std::vector<double>>* d_logits = nullptr);

// One utterance's final-layer attention plus per-row labels. Rows labeled ""
// (CLS, padding) never qualify for either regularizer.
struct AttentionSample {
  const AttentionStack* attention = nullptr;
  const std::vector<std::string>* row_labels = nullptr;  // size attention->n
};

struct RegularizerValue {
  double value = 0.0;
  std::size_t count = 0;  // pair or token count before the head factor
};

// Mean capped KL divergence between attention rows of differently labeled
// slot tokens, over ordered pairs and heads. Gradients (w.r.t. the raw
// attention probabilities) are written per sample when d_attention != null.
RegularizerValue slot_pair_loss(std::span<const AttentionSample> batch,
                                const LossWeights& w,
                                std::vector<std::vector<double>>* d_attention = nullptr);

// Mean capped -log P^h_i[i] over slot tokens and heads (finite orientation
// of the divergence from the self-indicator).
RegularizerValue non_deg_loss(std::span<const AttentionSample> batch,
                              const LossWeights& w,
                              std::vector<std::vector<double>>* d_attention = nullptr);

// Single-utterance conveniences.
RegularizerValue slot_pair_loss(const AttentionStack& attention,
                                const std::vector<std::string>& row_labels,
                                const LossWeights& w);
RegularizerValue non_deg_loss(const AttentionStack& attention,
                              const std::vector<std::string>& row_labels,
                              const LossWeights& w);

// total = intent + lambda1*slot - lambda2*slot_pair - lambda3*non_deg.
LossBreakdown combined_loss(double intent, double slot, double slot_pair, double non_deg,
                            const LossWeights& w, std::size_t n1 = 0, std::size_t n2 = 0);

}  // namespace slu
