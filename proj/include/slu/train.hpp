// train.hpp
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
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "slu/augment.hpp"
#include "slu/corpus.hpp"
#include "slu/eval.hpp"
#include "slu/loss.hpp"
#include "slu/model.hpp"

namespace slu {

// Id maps derived from the training corpus. Ids 0/1/2 are PAD/UNK/CLS;
// label id 0 is "O". Unknown tokens map to UNK, unknown labels/intents to -1.
struct Vocab {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::vector<std::string> intents;
  std::unordered_map<std::string, int> token_ids;
  std::unordered_map<std::string, int> label_ids;
  std::unordered_map<std::string, int> intent_ids;

  static Vocab build(const Corpus& corpus);

  int token_id(const std::string& tok) const {
    auto it = token_ids.find(tok);
    return it == token_ids.end() ? kUnkId : it->second;
  }
  int label_id(const std::string& label) const {
    auto it = label_ids.find(label);
    return it == label_ids.end() ? -1 : it->second;
  }
  int intent_id(const std::string& intent) const {
    auto it = intent_ids.find(intent);
    return it == intent_ids.end() ? -1 : it->second;
  }
};

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 5e-5;
  int n_steps = 5000;
  std::uint64_t seed = 1;
  LossWeights weights;
  bool use_paired_training = false;
  AugmentConfig paired;
  int eval_every = 0;  // 0 = final evaluation only
};

// Per-step view handed to the optional callback; everything references the
// trainer's buffers for the current step.
struct TrainStepView {
  std::size_t step = 0;
  const LossBreakdown* breakdown = nullptr;
  const std::vector<std::vector<double>>* intent_logits = nullptr;
  const std::vector<std::vector<double>>* slot_logits = nullptr;
  const std::vector<int>* gold_intents = nullptr;
  const std::vector<std::vector<int>>* gold_labels = nullptr;
};
using StepCallback = std::function<void(const TrainStepView&)>;

struct TrainResult {
  Model model;
  Vocab vocab;
  std::vector<LossBreakdown> step_log;
  std::vector<std::pair<std::size_t, EvalResult>> periodic_evals;
  EvalResult final_eval;
  std::size_t synthesized = 0;  // paired-training samples added
};

// Joint training with Adam at a fixed learning rate. Model dimensions come
// from model_cfg; vocab sizes are filled in from the training corpus.
TrainResult train(const Corpus& train_corpus, const Corpus& eval_corpus,
                  ModelConfig model_cfg, const TrainConfig& train_cfg,
                  const StepCallback& callback = {});

struct Predictions {
  std::vector<LabelSeq> labels;
  std::vector<std::string> intents;
};

Predictions predict(const Model& model, const Vocab& vocab, const Corpus& corpus,
                    int batch_size = 64);

EvalResult evaluate(const Model& model, const Vocab& vocab, const Corpus& corpus);

// Trains one model per seed (optionally in parallel worker threads) and
// aggregates final metrics as mean +/- sample std.
EvalResult seed_sweep(const Corpus& train_corpus, const Corpus& eval_corpus,
                      const ModelConfig& model_cfg, const TrainConfig& base_cfg,
                      const std::vector<std::uint64_t>& seeds, int n_jobs = 1);

}  // namespace slu
