// train.cpp
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

#include "slu/train.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace slu {

namespace {

struct Encoded {
  std::vector<std::vector<int>> token_ids;
  std::vector<std::vector<int>> label_ids;
  std::vector<int> intent_ids;
};

Encoded encode_corpus(const Corpus& corpus, const Vocab& vocab) {
  Encoded enc;
  enc.token_ids.reserve(corpus.size());
  enc.label_ids.reserve(corpus.size());
  enc.intent_ids.reserve(corpus.size());
  for (const Utterance& u : corpus.utterances()) {
    std::vector<int> toks(u.tokens.size());
    std::vector<int> labs(u.slot_labels.size());
    for (std::size_t i = 0; i < u.tokens.size(); ++i) toks[i] = vocab.token_id(u.tokens[i]);
    for (std::size_t i = 0; i < u.slot_labels.size(); ++i)
      labs[i] = vocab.label_id(u.slot_labels[i]);
    enc.token_ids.push_back(std::move(toks));
    enc.label_ids.push_back(std::move(labs));
    enc.intent_ids.push_back(vocab.intent_id(u.intent));
  }
  return enc;
}

struct AdamState {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

}  // namespace

Vocab Vocab::build(const Corpus& corpus) {
  Vocab v;
  v.tokens = {kPadToken, kUnkToken, kClsToken};
  v.labels = {kOutsideLabel};
  for (std::size_t i = 0; i < v.tokens.size(); ++i) v.token_ids[v.tokens[i]] = i;
  v.label_ids[kOutsideLabel] = 0;
  for (const Utterance& u : corpus.utterances()) {
    for (const std::string& tok : u.tokens) {
      if (v.token_ids.emplace(tok, v.tokens.size()).second) v.tokens.push_back(tok);
    }
    for (const std::string& label : u.slot_labels) {
      if (v.label_ids.emplace(label, v.labels.size()).second) v.labels.push_back(label);
    }
    if (v.intent_ids.emplace(u.intent, v.intents.size()).second)
      v.intents.push_back(u.intent);
  }
  return v;
}

TrainResult train(const Corpus& train_corpus, const Corpus& eval_corpus,
                  ModelConfig model_cfg, const TrainConfig& train_cfg,
                  const StepCallback& callback) {
  if (train_corpus.empty()) {
    throw ModelError(ModelError::Kind::EmptyCorpus, "training corpus is empty");
  }

  TrainResult result;
  const Corpus* effective = &train_corpus;
  Corpus augmented;
  if (train_cfg.use_paired_training) {
    AugmentResult aug = augment_corpus(train_corpus, train_cfg.paired);
    result.synthesized = aug.synthesized;
    augmented = std::move(aug.corpus);
    effective = &augmented;
  }

  result.vocab = Vocab::build(*effective);
  model_cfg.vocab_size = static_cast<int>(result.vocab.tokens.size());
  model_cfg.n_slot_labels = static_cast<int>(result.vocab.labels.size());
  model_cfg.n_intents = static_cast<int>(result.vocab.intents.size());
  result.model = Model::init(model_cfg, train_cfg.seed);

  Encoded enc = encode_corpus(*effective, result.vocab);
  const std::size_t n = enc.token_ids.size();
  const std::size_t batch_size = std::max(1, train_cfg.batch_size);

  Rng root(train_cfg.seed);
  Rng shuffle_rng = root.split(1);
  Rng dropout_rng = root.split(2);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;  // forces a shuffle on the first step

  AdamState adam(result.model.n_params());
  std::vector<double> grad(result.model.n_params(), 0.0);
  BatchCache cache;
  const LossWeights& w = train_cfg.weights;
  const bool use_regularizers = w.lambda2 != 0.0 || w.lambda3 != 0.0;

  for (int step = 1; step <= train_cfg.n_steps; ++step) {
    if (cursor >= n) {
      for (std::size_t i = n; i > 1; --i) {
        std::size_t j = shuffle_rng.uniform(i);
        std::swap(order[i - 1], order[j]);
      }
      cursor = 0;
    }
    std::size_t take = std::min(batch_size, n - cursor);
    std::vector<std::vector<int>> batch_tokens(take);
    std::vector<std::vector<int>> batch_labels(take);
    std::vector<int> batch_intents(take);
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t idx = order[cursor + i];
      batch_tokens[i] = enc.token_ids[idx];
      batch_labels[i] = enc.label_ids[idx];
      batch_intents[i] = enc.intent_ids[idx];
    }
    cursor += take;

    std::vector<ForwardOutput> outputs =
        result.model.forward(batch_tokens, true, &dropout_rng, &cache);

    std::vector<std::vector<double>> intent_logits(take), slot_logits(take);
    std::vector<AttentionStack> attention(take);
    for (std::size_t i = 0; i < take; ++i) {
      intent_logits[i] = std::move(outputs[i].intent_logits);
      slot_logits[i] = std::move(outputs[i].slot_logits);
      attention[i] = std::move(outputs[i].attention);
    }

    BatchUpstream upstream;
    std::vector<std::vector<double>> d_intent, d_slot;
    double li = intent_loss(intent_logits, batch_intents, &d_intent);
    double ls = slot_loss(slot_logits, batch_labels, model_cfg.n_slot_labels, &d_slot);

    RegularizerValue sp, nd;
    if (use_regularizers) {
      std::vector<std::vector<std::string>> row_labels(take);
      std::vector<AttentionSample> samples(take);
      for (std::size_t i = 0; i < take; ++i) {
        row_labels[i].resize(batch_labels[i].size() + 1);
        row_labels[i][0] = "";  // CLS row never qualifies
        for (std::size_t tpos = 0; tpos < batch_labels[i].size(); ++tpos)
          row_labels[i][tpos + 1] = result.vocab.labels[batch_labels[i][tpos]];
        samples[i] = AttentionSample{&attention[i], &row_labels[i]};
      }
      std::vector<std::vector<double>> d_sp, d_nd;
      sp = slot_pair_loss(samples, w, &d_sp);
      nd = non_deg_loss(samples, w, &d_nd);
      upstream.d_attention.resize(take);
      for (std::size_t i = 0; i < take; ++i) {
        upstream.d_attention[i].assign(attention[i].p.size(), 0.0);
        for (std::size_t k = 0; k < attention[i].p.size(); ++k) {
          upstream.d_attention[i][k] = -w.lambda2 * d_sp[i][k] - w.lambda3 * d_nd[i][k];
        }
      }
    }

    LossBreakdown breakdown =
        combined_loss(li, ls, sp.value, nd.value, w, sp.count, nd.count);
    if (!std::isfinite(breakdown.total)) {
      throw ModelError(ModelError::Kind::DivergedLoss,
                       "non-finite loss at step " + std::to_string(step));
    }

    // d(total)/d(intent logits) = d_intent, /d(slot logits) = lambda1 * d_slot.
    upstream.d_intent_logits.resize(take * model_cfg.n_intents);
    for (std::size_t i = 0; i < take; ++i) {
      for (int j = 0; j < model_cfg.n_intents; ++j)
        upstream.d_intent_logits[i * model_cfg.n_intents + j] = d_intent[i][j];
    }
    upstream.d_slot_logits.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
      upstream.d_slot_logits[i].resize(d_slot[i].size());
      for (std::size_t k = 0; k < d_slot[i].size(); ++k)
        upstream.d_slot_logits[i][k] = w.lambda1 * d_slot[i][k];
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    result.model.backward(cache, upstream, grad);
    adam.step(result.model.params(), grad, train_cfg.learning_rate);

    result.step_log.push_back(breakdown);
    if (callback) {
      TrainStepView view;
      view.step = step;
      view.breakdown = &breakdown;
      view.intent_logits = &intent_logits;
      view.slot_logits = &slot_logits;
      view.gold_intents = &batch_intents;
      view.gold_labels = &batch_labels;
      callback(view);
    }
    if (train_cfg.eval_every > 0 && step % train_cfg.eval_every == 0 &&
        !eval_corpus.empty()) {
      result.periodic_evals.emplace_back(
          step, evaluate(result.model, result.vocab, eval_corpus));
    }
  }

  if (!eval_corpus.empty()) {
    result.final_eval = evaluate(result.model, result.vocab, eval_corpus);
  }
  return result;
}

Predictions predict(const Model& model, const Vocab& vocab, const Corpus& corpus,
                    int batch_size) {
  Predictions preds;
  preds.labels.reserve(corpus.size());
  preds.intents.reserve(corpus.size());
  const std::size_t bs = std::max(1, batch_size);
  std::vector<std::vector<int>> batch;
  std::size_t start = 0;
  while (start < corpus.size()) {
    std::size_t take = std::min(bs, corpus.size() - start);
    batch.assign(take, {});
    for (std::size_t i = 0; i < take; ++i) {
      const Utterance& u = corpus[start + i];
      batch[i].resize(u.tokens.size());
      for (std::size_t j = 0; j < u.tokens.size(); ++j)
        batch[i][j] = vocab.token_id(u.tokens[j]);
    }
    std::vector<ForwardOutput> outputs = model.forward(batch, false, nullptr, nullptr);
    for (std::size_t i = 0; i < take; ++i) {
      const ForwardOutput& out = outputs[i];
      LabelSeq labels(out.n_tokens);
      int n_labels = model.config().n_slot_labels;
      for (std::size_t tok = 0; tok < out.n_tokens; ++tok) {
        const double* logits = out.slot_logits.data() + tok * n_labels;
        int best = 0;
        for (int s = 1; s < n_labels; ++s)
          if (logits[s] > logits[best]) best = s;
        labels[tok] = vocab.labels[best];
      }
      preds.labels.push_back(std::move(labels));
      int best_intent = 0;
      for (int s = 1; s < model.config().n_intents; ++s)
        if (out.intent_logits[s] > out.intent_logits[best_intent]) best_intent = s;
      preds.intents.push_back(vocab.intents[best_intent]);
    }
    start += take;
  }
  return preds;
}

EvalResult evaluate(const Model& model, const Vocab& vocab, const Corpus& corpus) {
  Predictions preds = predict(model, vocab, corpus);
  std::vector<LabelSeq> golds;
  std::vector<std::string> gold_intents;
  golds.reserve(corpus.size());
  gold_intents.reserve(corpus.size());
  for (const Utterance& u : corpus.utterances()) {
    golds.push_back(u.slot_labels);
    gold_intents.push_back(u.intent);
  }
  EvalResult result;
  result.slot_f1 = span_f1(preds.labels, golds);
  result.intent_acc = intent_accuracy(preds.intents, gold_intents);
  result.f1_by_slot_count = f1_buckets_by_slot_count(preds.labels, golds);
  return result;
}

EvalResult seed_sweep(const Corpus& train_corpus, const Corpus& eval_corpus,
                      const ModelConfig& model_cfg, const TrainConfig& base_cfg,
                      const std::vector<std::uint64_t>& seeds, int n_jobs) {
  if (seeds.size() < 2) {
    throw EvalError(EvalError::Kind::InsufficientSamples,
                    "seed sweep needs at least 2 seeds");
  }
  std::vector<SeedMetric> metrics(seeds.size());
  const int jobs = std::max(1, n_jobs);
  std::size_t next = 0;
  while (next < seeds.size()) {
    std::size_t spawn = std::min<std::size_t>(jobs, seeds.size() - next);
    std::vector<std::thread> workers;
    workers.reserve(spawn);
    for (std::size_t wi = 0; wi < spawn; ++wi) {
      std::size_t idx = next + wi;
      workers.emplace_back([&, idx]() {
        TrainConfig cfg = base_cfg;
        cfg.seed = seeds[idx];
        // augmentation resamples per run, like every other seeded choice
        cfg.paired.seed = base_cfg.paired.seed + seeds[idx];
        TrainResult run = train(train_corpus, eval_corpus, model_cfg, cfg);
        metrics[idx] = SeedMetric{seeds[idx], run.final_eval.slot_f1,
                                  run.final_eval.intent_acc};
      });
    }
    for (auto& th : workers) th.join();
    next += spawn;
  }
  return aggregate_seed_metrics(metrics);
}

}  // namespace slu
