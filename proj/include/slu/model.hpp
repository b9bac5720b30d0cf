// model.hpp
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
#include <vector>

#include "slu/errors.hpp"
#include "slu/rng.hpp"

namespace slu {

// Small post-layer-norm transformer encoder with joint intent and slot
// heads. All math is double precision; parameters live in one flat vector so
// the optimizer and finite-difference checks can treat them uniformly.
struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 256;
  int max_len = 64;  // real tokens; CLS is prepended on top of this
  int vocab_size = 0;
  int n_slot_labels = 0;
  int n_intents = 0;
  double dropout = 0.1;

  int d_head() const { return d_model / n_heads; }
  void validate() const;  // throws ModelError(InvalidConfig)
};

// Final-layer attention distributions, row-stochastic per head. Rows/columns
// cover the CLS position plus the real tokens of one sequence.
struct AttentionStack {
  std::size_t n_heads = 0;
  std::size_t n = 0;
  std::vector<double> p;  // [h][i][j]

  double at(std::size_t h, std::size_t i, std::size_t j) const {
    return p[(h * n + i) * n + j];
  }
  double& at(std::size_t h, std::size_t i, std::size_t j) {
    return p[(h * n + i) * n + j];
  }
};

struct ForwardOutput {
  std::vector<double> intent_logits;  // [n_intents]
  std::vector<double> slot_logits;    // [n_tokens * n_slot_labels], CLS excluded
  AttentionStack attention;           // pre-dropout, after masking and softmax
  std::size_t n_tokens = 0;
};

// Activations retained for the backward pass. One instance per forward call.
struct BatchCache {
  std::size_t batch = 0;
  std::size_t t_pad = 0;  // CLS + longest sequence in batch
  std::vector<int> ids;                  // [B * T]
  std::vector<std::size_t> valid;        // [B], CLS + n_tokens
  std::vector<double> emb_sum;           // [B*T*D] token + position embedding
  std::vector<double> emb_xhat;          // [B*T*D] embed layer-norm x-hat
  std::vector<double> emb_istd;          // [B*T]
  std::vector<std::uint8_t> emb_drop;    // [B*T*D] keep mask (empty in eval)
  struct LayerCache {
    std::vector<double> x_in;            // [B*T*D]
    std::vector<double> q, k, v;         // [B*T*D]
    std::vector<double> attn_p;          // [B*H*T*T] pre-dropout probabilities
    std::vector<std::uint8_t> attn_drop; // [B*H*T*T]
    std::vector<double> ctx;             // [B*T*D]
    std::vector<std::uint8_t> proj_drop; // [B*T*D]
    std::vector<double> attn_proj;       // [B*T*D] pre-dropout
    std::vector<double> ln1_xhat;        // [B*T*D]
    std::vector<double> ln1_istd;        // [B*T]
    std::vector<double> x_mid;           // [B*T*D]
    std::vector<double> ff_pre;          // [B*T*F]
    std::vector<double> ff_act;          // [B*T*F]
    std::vector<double> ff_out;          // [B*T*D] pre-dropout
    std::vector<std::uint8_t> ff_drop;   // [B*T*D]
    std::vector<double> ln2_xhat;        // [B*T*D]
    std::vector<double> ln2_istd;        // [B*T]
  };
  std::vector<LayerCache> layers;
  std::vector<double> x_final;           // [B*T*D]
  bool training = false;
};

// Gradients of the training objective w.r.t. the forward outputs.
struct BatchUpstream {
  std::vector<double> d_intent_logits;             // [B * n_intents]
  std::vector<std::vector<double>> d_slot_logits;  // per sample [n_b * n_slot_labels]
  // Per sample [H * (n_b+1) * (n_b+1)] gradients w.r.t. the final-layer
  // pre-dropout attention; empty vectors mean zero.
  std::vector<std::vector<double>> d_attention;
};

// Flat-parameter offsets; layout is fixed by the config.
struct ParamLayout {
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln1_g, ln1_b;
    std::size_t w1, b1, w2, b2;
    std::size_t ln2_g, ln2_b;
  };
  std::size_t tok_embed = 0, pos_embed = 0, ln_e_g = 0, ln_e_b = 0;
  std::vector<Layer> layers;
  std::size_t w_intent = 0, b_intent = 0, w_slot = 0, b_slot = 0;
  std::size_t total = 0;

  static ParamLayout build(const ModelConfig& cfg);
};

class Model {
 public:
  Model() = default;

  // Deterministic initialization: zero-mean weights scaled by layer width,
  // layer-norm gains 1, biases 0.
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t n_params() const { return params_.size(); }

  // token_ids hold real tokens only; a CLS index is prepended internally.
  // dropout_rng may be null (eval mode). cache may be null when no backward
  // pass will follow.
  std::vector<ForwardOutput> forward(const std::vector<std::vector<int>>& token_ids,
                                     bool training, Rng* dropout_rng,
                                     BatchCache* cache) const;

  // Accumulates d(loss)/d(params) into grad (sized n_params).
  void backward(const BatchCache& cache, const BatchUpstream& upstream,
                std::vector<double>& grad) const;

  // Used by checkpoint loading.
  static Model from_params(const ModelConfig& cfg, std::vector<double> params);

 private:
  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<double> params_;
};

// Token id conventions shared by vocabulary building and the model.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;

}  // namespace slu
