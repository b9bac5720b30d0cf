// model_test.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "slu/model.hpp"
#include "test_util.hpp"

using namespace slu;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.max_len = 8;
  cfg.vocab_size = 10;
  cfg.n_slot_labels = 5;
  cfg.n_intents = 3;
  cfg.dropout = 0.0;
  return cfg;
}

test::LossBatch tiny_batch() {
  test::LossBatch batch;
  // lengths 4 and 2: exercises padding alongside slot pairs
  batch.token_ids = {{3, 4, 5, 6}, {7, 8}};
  batch.gold_intents = {0, 2};
  batch.gold_labels = {{0, 1, 2, 0}, {3, 0}};
  batch.gold_label_strings = {{"O", "B-a", "B-b", "O"}, {"B-c", "O"}};
  return batch;
}

}  // namespace

TEST_CASE("init is deterministic and config is validated") {
  ModelConfig cfg = tiny_config();
  Model a = Model::init(cfg, 42);
  Model b = Model::init(cfg, 42);
  CHECK(a.params() == b.params());
  Model c = Model::init(cfg, 43);
  CHECK(a.params() != c.params());

  ModelConfig bad = cfg;
  bad.d_model = 12;
  bad.n_heads = 5;
  try {
    Model::init(bad, 1);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelError::Kind::InvalidConfig);
  }
}

TEST_CASE("parameter count matches the closed form") {
  ModelConfig cfg;
  cfg.vocab_size = 100;
  cfg.n_slot_labels = 9;
  cfg.n_intents = 4;
  Model m = Model::init(cfg, 1);
  // Independent closed-form count: embeddings, embed LN, per-layer
  // (4 projections + 2 LNs + FF), and both heads.
  std::size_t d = cfg.d_model, f = cfg.d_ff;
  std::size_t expected = 0;
  expected += cfg.vocab_size * d;        // token embeddings
  expected += (cfg.max_len + 1) * d;     // position embeddings (CLS slot)
  expected += 2 * d;                     // embedding layer norm
  expected += cfg.n_layers * (4 * (d * d + d)   // q,k,v,o projections
                              + 2 * d           // ln1
                              + d * f + f       // ff in
                              + f * d + d       // ff out
                              + 2 * d);         // ln2
  expected += d * cfg.n_intents + cfg.n_intents;
  expected += d * cfg.n_slot_labels + cfg.n_slot_labels;
  CHECK(m.n_params() == expected);
}

TEST_CASE("attention rows are stochastic on any input") {
  Model m = Model::init(tiny_config(), 7);
  Rng rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    std::vector<std::vector<int>> batch(1 + rng.uniform(3));
    for (auto& seq : batch) {
      seq.resize(1 + rng.uniform(6));
      for (int& id : seq) id = static_cast<int>(rng.uniform(10));
    }
    auto outs = m.forward(batch, false, nullptr, nullptr);
    for (const auto& out : outs) {
      const AttentionStack& a = out.attention;
      CHECK(a.n == out.n_tokens + 1);
      for (std::size_t h = 0; h < a.n_heads; ++h) {
        for (std::size_t i = 0; i < a.n; ++i) {
          double sum = 0.0;
          for (std::size_t j = 0; j < a.n; ++j) {
            double p = a.at(h, i, j);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            sum += p;
          }
          CHECK(std::abs(sum - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("single-token input gives 2x2 attention") {
  Model m = Model::init(tiny_config(), 7);
  auto outs = m.forward({{3}}, false, nullptr, nullptr);
  CHECK(outs[0].attention.n == 2);
  CHECK(outs[0].slot_logits.size() == 5);
  CHECK(outs[0].intent_logits.size() == 3);
}

TEST_CASE("padding invariance: outputs identical for real positions") {
  Model m = Model::init(tiny_config(), 9);
  std::vector<int> seq = {3, 4, 5};
  auto alone = m.forward({seq}, false, nullptr, nullptr);
  // batched next to a longer sequence => padded to its length
  auto padded = m.forward({seq, {6, 7, 8, 9, 3, 4}}, false, nullptr, nullptr);
  for (std::size_t i = 0; i < alone[0].intent_logits.size(); ++i) {
    CHECK(std::abs(alone[0].intent_logits[i] - padded[0].intent_logits[i]) < 1e-5);
  }
  for (std::size_t i = 0; i < alone[0].slot_logits.size(); ++i) {
    CHECK(std::abs(alone[0].slot_logits[i] - padded[0].slot_logits[i]) < 1e-5);
  }
  for (std::size_t i = 0; i < alone[0].attention.p.size(); ++i) {
    CHECK(std::abs(alone[0].attention.p[i] - padded[0].attention.p[i]) < 1e-5);
  }
}

TEST_CASE("batch outputs equal per-sample outputs") {
  Model m = Model::init(tiny_config(), 11);
  std::vector<std::vector<int>> batch = {{3, 4}, {5, 6, 7, 8}, {9}};
  auto together = m.forward(batch, false, nullptr, nullptr);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto single = m.forward({batch[b]}, false, nullptr, nullptr);
    CHECK(together[b].intent_logits == single[0].intent_logits);
    CHECK(together[b].slot_logits == single[0].slot_logits);
    CHECK(together[b].attention.p == single[0].attention.p);
  }
}

TEST_CASE("input validation") {
  Model m = Model::init(tiny_config(), 1);
  try {
    m.forward({{1, 2, 3, 4, 5, 6, 7, 8, 9}}, false, nullptr, nullptr);
    FAIL("expected SequenceTooLong");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelError::Kind::SequenceTooLong);
  }
  try {
    m.forward({{42}}, false, nullptr, nullptr);
    FAIL("expected IndexOutOfVocab");
  } catch (const ModelError& e) {
    CHECK(e.kind() == ModelError::Kind::IndexOutOfVocab);
  }
}

TEST_CASE("every parameter receives a finite gradient") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.1;
  Model m = Model::init(cfg, 5);
  test::LossBatch batch = tiny_batch();
  LossWeights w;

  // training-mode forward with dropout active
  Rng drop_rng(3);
  BatchCache cache;
  std::vector<ForwardOutput> outs = m.forward(batch.token_ids, true, &drop_rng, &cache);
  std::vector<std::vector<double>> intent_logits(outs.size()), slot_logits(outs.size());
  std::vector<AttentionStack> attention(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    intent_logits[i] = outs[i].intent_logits;
    slot_logits[i] = outs[i].slot_logits;
    attention[i] = outs[i].attention;
  }
  std::vector<std::vector<double>> d_intent, d_slot, d_sp, d_nd;
  intent_loss(intent_logits, batch.gold_intents, &d_intent);
  slot_loss(slot_logits, batch.gold_labels, cfg.n_slot_labels, &d_slot);
  std::vector<std::vector<std::string>> rows(outs.size());
  std::vector<AttentionSample> samples(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    rows[i].push_back("");
    for (const auto& l : batch.gold_label_strings[i]) rows[i].push_back(l);
    samples[i] = AttentionSample{&attention[i], &rows[i]};
  }
  slot_pair_loss(samples, w, &d_sp);
  non_deg_loss(samples, w, &d_nd);

  BatchUpstream up;
  up.d_intent_logits.assign(outs.size() * cfg.n_intents, 0.0);
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (int j = 0; j < cfg.n_intents; ++j)
      up.d_intent_logits[i * cfg.n_intents + j] = d_intent[i][j];
  up.d_slot_logits = d_slot;
  up.d_attention.resize(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    up.d_attention[i].assign(attention[i].p.size(), 0.0);
    for (std::size_t k = 0; k < attention[i].p.size(); ++k)
      up.d_attention[i][k] = -w.lambda2 * d_sp[i][k] - w.lambda3 * d_nd[i][k];
  }

  std::vector<double> grad(m.n_params(), 0.0);
  m.backward(cache, up, grad);
  for (double gv : grad) CHECK(std::isfinite(gv));
}

TEST_CASE("analytic gradients match central finite differences") {
  ModelConfig cfg = tiny_config();
  Model m = Model::init(cfg, 17);
  test::LossBatch batch = tiny_batch();
  LossWeights w;  // lambda1=1, lambda2=0.01, lambda3=0.1

  std::vector<double> analytic;
  test::objective_grad(m, batch, w, analytic);

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < m.n_params(); ++i) {
    double orig = m.params()[i];
    m.params()[i] = orig + h;
    double up = test::objective_total(m, batch, w);
    m.params()[i] = orig - h;
    double down = test::objective_total(m, batch, w);
    m.params()[i] = orig;
    double fd = (up - down) / (2.0 * h);
    double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / denom);
  }
  CHECK(max_rel <= 1e-3);
  MESSAGE("max relative error: ", max_rel);
}

TEST_CASE("training-mode gradient with dropout matches finite differences") {
  // With a fixed dropout mask the objective is still differentiable; replay
  // the same rng stream per evaluation.
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.2;
  Model m = Model::init(cfg, 23);
  test::LossBatch batch = tiny_batch();
  LossWeights w;

  auto total_with_mask = [&](Model& model) {
    Rng rng(77);
    BatchCache cache;
    auto outs = model.forward(batch.token_ids, true, &rng, &cache);
    std::vector<std::vector<double>> il(outs.size()), sl(outs.size());
    std::vector<AttentionStack> at(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) {
      il[i] = outs[i].intent_logits;
      sl[i] = outs[i].slot_logits;
      at[i] = outs[i].attention;
    }
    double li = intent_loss(il, batch.gold_intents, nullptr);
    double ls = slot_loss(sl, batch.gold_labels, cfg.n_slot_labels, nullptr);
    std::vector<std::vector<std::string>> rows(outs.size());
    std::vector<AttentionSample> samples(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) {
      rows[i].push_back("");
      for (const auto& l : batch.gold_label_strings[i]) rows[i].push_back(l);
      samples[i] = AttentionSample{&at[i], &rows[i]};
    }
    RegularizerValue sp = slot_pair_loss(samples, w);
    RegularizerValue nd = non_deg_loss(samples, w);
    return combined_loss(li, ls, sp.value, nd.value, w).total;
  };

  // analytic
  Rng rng(77);
  BatchCache cache;
  auto outs = m.forward(batch.token_ids, true, &rng, &cache);
  std::vector<std::vector<double>> il(outs.size()), sl(outs.size());
  std::vector<AttentionStack> at(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    il[i] = outs[i].intent_logits;
    sl[i] = outs[i].slot_logits;
    at[i] = outs[i].attention;
  }
  std::vector<std::vector<double>> d_intent, d_slot, d_sp, d_nd;
  intent_loss(il, batch.gold_intents, &d_intent);
  slot_loss(sl, batch.gold_labels, cfg.n_slot_labels, &d_slot);
  std::vector<std::vector<std::string>> rows(outs.size());
  std::vector<AttentionSample> samples(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    rows[i].push_back("");
    for (const auto& l : batch.gold_label_strings[i]) rows[i].push_back(l);
    samples[i] = AttentionSample{&at[i], &rows[i]};
  }
  slot_pair_loss(samples, w, &d_sp);
  non_deg_loss(samples, w, &d_nd);
  BatchUpstream up;
  up.d_intent_logits.assign(outs.size() * cfg.n_intents, 0.0);
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (int j = 0; j < cfg.n_intents; ++j)
      up.d_intent_logits[i * cfg.n_intents + j] = d_intent[i][j];
  up.d_slot_logits = d_slot;
  up.d_attention.resize(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    up.d_attention[i].assign(at[i].p.size(), 0.0);
    for (std::size_t k = 0; k < at[i].p.size(); ++k)
      up.d_attention[i][k] = -w.lambda2 * d_sp[i][k] - w.lambda3 * d_nd[i][k];
  }
  std::vector<double> analytic(m.n_params(), 0.0);
  m.backward(cache, up, analytic);

  const double h = 1e-5;
  double max_rel = 0.0;
  Rng pick(5);
  for (int probe = 0; probe < 200; ++probe) {
    std::size_t i = pick.uniform(m.n_params());
    double orig = m.params()[i];
    m.params()[i] = orig + h;
    double fup = total_with_mask(m);
    m.params()[i] = orig - h;
    double fdown = total_with_mask(m);
    m.params()[i] = orig;
    double fd = (fup - fdown) / (2.0 * h);
    double denom = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / denom);
  }
  CHECK(max_rel <= 1e-3);
}
