// model.cpp
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

#include "slu/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace slu {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

// C[M,N] = A[M,K] * B[K,N]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
void matmul_at_b(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

// C[M,K] += A[M,N] * B[K,N]^T
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / kSqrt2)); }

double gelu_grad(double x) {
  double phi = 0.5 * (1.0 + std::erf(x / kSqrt2));
  return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = g * (x - mean)/sqrt(var + eps) + b, per position.
void layer_norm_fwd(const double* x, const double* g, const double* b, double* y,
                    double* xhat, double* istd, std::size_t d) {
  double mean = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = x[i] - mean;
    var += diff * diff;
  }
  var /= static_cast<double>(d);
  double is = 1.0 / std::sqrt(var + kLnEps);
  *istd = is;
  for (std::size_t i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mean) * is;
    y[i] = g[i] * xhat[i] + b[i];
  }
}

// dx from dy; accumulates gain/bias grads.
void layer_norm_bwd(const double* dy, const double* xhat, double istd, const double* g,
                    double* dx, double* dg, double* db, std::size_t d) {
  double mean_dxh = 0.0, mean_dxh_xhat = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double dxh = dy[i] * g[i];
    mean_dxh += dxh;
    mean_dxh_xhat += dxh * xhat[i];
    dg[i] += dy[i] * xhat[i];
    db[i] += dy[i];
  }
  mean_dxh /= static_cast<double>(d);
  mean_dxh_xhat /= static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) {
    double dxh = dy[i] * g[i];
    dx[i] = istd * (dxh - mean_dxh - xhat[i] * mean_dxh_xhat);
  }
}

void apply_dropout(double* x, std::uint8_t* mask, std::size_t n, double p, Rng& rng) {
  double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) {
    bool keep = !rng.bernoulli(p);
    mask[i] = keep ? 1 : 0;
    x[i] = keep ? x[i] * scale : 0.0;
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_len < 1 ||
      vocab_size < 3 || n_slot_labels < 1 || n_intents < 1) {
    throw ModelError(ModelError::Kind::InvalidConfig, "model dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ModelError(ModelError::Kind::InvalidConfig,
                     "d_model (" + std::to_string(d_model) +
                         ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ModelError(ModelError::Kind::InvalidConfig, "dropout must be in [0, 1)");
  }
}

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
  ParamLayout lay;
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    std::size_t at = off;
    off += n;
    return at;
  };
  std::size_t d = cfg.d_model, f = cfg.d_ff;
  lay.tok_embed = take(static_cast<std::size_t>(cfg.vocab_size) * d);
  lay.pos_embed = take(static_cast<std::size_t>(cfg.max_len + 1) * d);
  lay.ln_e_g = take(d);
  lay.ln_e_b = take(d);
  lay.layers.resize(cfg.n_layers);
  for (auto& l : lay.layers) {
    l.wq = take(d * d);
    l.bq = take(d);
    l.wk = take(d * d);
    l.bk = take(d);
    l.wv = take(d * d);
    l.bv = take(d);
    l.wo = take(d * d);
    l.bo = take(d);
    l.ln1_g = take(d);
    l.ln1_b = take(d);
    l.w1 = take(d * f);
    l.b1 = take(f);
    l.w2 = take(f * d);
    l.b2 = take(d);
    l.ln2_g = take(d);
    l.ln2_b = take(d);
  }
  lay.w_intent = take(d * cfg.n_intents);
  lay.b_intent = take(cfg.n_intents);
  lay.w_slot = take(d * cfg.n_slot_labels);
  lay.b_slot = take(cfg.n_slot_labels);
  lay.total = off;
  return lay;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.layout_ = ParamLayout::build(cfg);
  m.params_.assign(m.layout_.total, 0.0);
  Rng rng(seed);

  double d = cfg.d_model, f = cfg.d_ff;
  auto fill_gauss = [&](std::size_t off, std::size_t n, double std) {
    for (std::size_t i = 0; i < n; ++i) m.params_[off + i] = rng.gaussian() * std;
  };
  auto fill_ones = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) m.params_[off + i] = 1.0;
  };
  double emb_std = 1.0 / std::sqrt(d);
  fill_gauss(m.layout_.tok_embed, static_cast<std::size_t>(cfg.vocab_size) * cfg.d_model,
             emb_std);
  fill_gauss(m.layout_.pos_embed, static_cast<std::size_t>(cfg.max_len + 1) * cfg.d_model,
             emb_std);
  fill_ones(m.layout_.ln_e_g, cfg.d_model);
  for (const auto& l : m.layout_.layers) {
    double attn_std = std::sqrt(2.0 / (d + d));
    fill_gauss(l.wq, cfg.d_model * cfg.d_model, attn_std);
    fill_gauss(l.wk, cfg.d_model * cfg.d_model, attn_std);
    fill_gauss(l.wv, cfg.d_model * cfg.d_model, attn_std);
    fill_gauss(l.wo, cfg.d_model * cfg.d_model, attn_std);
    fill_ones(l.ln1_g, cfg.d_model);
    fill_gauss(l.w1, static_cast<std::size_t>(cfg.d_model) * cfg.d_ff,
               std::sqrt(2.0 / (d + f)));
    fill_gauss(l.w2, static_cast<std::size_t>(cfg.d_ff) * cfg.d_model,
               std::sqrt(2.0 / (d + f)));
    fill_ones(l.ln2_g, cfg.d_model);
  }
  fill_gauss(m.layout_.w_intent, static_cast<std::size_t>(cfg.d_model) * cfg.n_intents,
             std::sqrt(2.0 / (d + cfg.n_intents)));
  fill_gauss(m.layout_.w_slot, static_cast<std::size_t>(cfg.d_model) * cfg.n_slot_labels,
             std::sqrt(2.0 / (d + cfg.n_slot_labels)));
  return m;
}

Model Model::from_params(const ModelConfig& cfg, std::vector<double> params) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.layout_ = ParamLayout::build(cfg);
  if (params.size() != m.layout_.total) {
    throw ModelError(ModelError::Kind::CheckpointFormat,
                     "parameter count mismatch: expected " +
                         std::to_string(m.layout_.total) + ", got " +
                         std::to_string(params.size()));
  }
  m.params_ = std::move(params);
  return m;
}

std::vector<ForwardOutput> Model::forward(const std::vector<std::vector<int>>& token_ids,
                                          bool training, Rng* dropout_rng,
                                          BatchCache* cache) const {
  const std::size_t batch = token_ids.size();
  const std::size_t d = cfg_.d_model;
  const std::size_t f = cfg_.d_ff;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dh = cfg_.d_head();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p_drop = training ? cfg_.dropout : 0.0;
  const bool drop = p_drop > 0.0 && dropout_rng != nullptr;

  std::size_t t_pad = 1;
  for (const auto& seq : token_ids) {
    if (static_cast<int>(seq.size()) > cfg_.max_len) {
      throw ModelError(ModelError::Kind::SequenceTooLong,
                       "sequence of " + std::to_string(seq.size()) +
                           " tokens exceeds max_len " + std::to_string(cfg_.max_len));
    }
    for (int id : seq) {
      if (id < 0 || id >= cfg_.vocab_size) {
        throw ModelError(ModelError::Kind::IndexOutOfVocab,
                         "token id " + std::to_string(id) + " outside vocab of size " +
                             std::to_string(cfg_.vocab_size));
      }
    }
    t_pad = std::max(t_pad, seq.size() + 1);
  }
  const std::size_t t = t_pad;
  const std::size_t bt = batch * t;

  BatchCache local;
  BatchCache& c = cache ? *cache : local;
  c = BatchCache{};
  c.batch = batch;
  c.t_pad = t;
  c.training = drop;
  c.ids.assign(bt, kPadId);
  c.valid.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    c.ids[b * t] = kClsId;
    for (std::size_t i = 0; i < token_ids[b].size(); ++i)
      c.ids[b * t + 1 + i] = token_ids[b][i];
    c.valid[b] = token_ids[b].size() + 1;
  }

  const double* par = params_.data();
  c.emb_sum.resize(bt * d);
  c.emb_xhat.resize(bt * d);
  c.emb_istd.resize(bt);
  std::vector<double> x(bt * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < t; ++i) {
      const double* tok = par + layout_.tok_embed + static_cast<std::size_t>(c.ids[b * t + i]) * d;
      const double* pos = par + layout_.pos_embed + i * d;
      double* dst = c.emb_sum.data() + (b * t + i) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] = tok[j] + pos[j];
      layer_norm_fwd(dst, par + layout_.ln_e_g, par + layout_.ln_e_b,
                     x.data() + (b * t + i) * d, c.emb_xhat.data() + (b * t + i) * d,
                     c.emb_istd.data() + (b * t + i), d);
    }
  }
  if (drop) {
    c.emb_drop.resize(bt * d);
    apply_dropout(x.data(), c.emb_drop.data(), bt * d, p_drop, *dropout_rng);
  }

  c.layers.resize(cfg_.n_layers);
  for (int layer = 0; layer < cfg_.n_layers; ++layer) {
    auto& lc = c.layers[layer];
    const auto& lp = layout_.layers[layer];
    lc.x_in = x;

    lc.q.resize(bt * d);
    lc.k.resize(bt * d);
    lc.v.resize(bt * d);
    matmul(x.data(), par + lp.wq, lc.q.data(), bt, d, d);
    matmul(x.data(), par + lp.wk, lc.k.data(), bt, d, d);
    matmul(x.data(), par + lp.wv, lc.v.data(), bt, d, d);
    for (std::size_t r = 0; r < bt; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        lc.q[r * d + j] += par[lp.bq + j];
        lc.k[r * d + j] += par[lp.bk + j];
        lc.v[r * d + j] += par[lp.bv + j];
      }
    }

    lc.attn_p.assign(batch * heads * t * t, 0.0);
    lc.ctx.assign(bt * d, 0.0);
    if (drop) lc.attn_drop.assign(batch * heads * t * t, 1);
    const double drop_scale = drop ? 1.0 / (1.0 - p_drop) : 1.0;
    std::vector<double> scores(t);
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t vb = c.valid[b];
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t head_off = h * dh;
        double* p_base = lc.attn_p.data() + ((b * heads + h) * t) * t;
        for (std::size_t i = 0; i < vb; ++i) {
          const double* qi = lc.q.data() + (b * t + i) * d + head_off;
          double max_s = -1e300;
          for (std::size_t j = 0; j < vb; ++j) {
            const double* kj = lc.k.data() + (b * t + j) * d + head_off;
            double s = 0.0;
            for (std::size_t cidx = 0; cidx < dh; ++cidx) s += qi[cidx] * kj[cidx];
            s *= inv_sqrt_dh;
            scores[j] = s;
            max_s = std::max(max_s, s);
          }
          double denom = 0.0;
          for (std::size_t j = 0; j < vb; ++j) {
            scores[j] = std::exp(scores[j] - max_s);
            denom += scores[j];
          }
          double* p_row = p_base + i * t;
          for (std::size_t j = 0; j < vb; ++j) p_row[j] = scores[j] / denom;
          // value aggregation uses the (possibly dropped) probabilities
          double* ctx_i = lc.ctx.data() + (b * t + i) * d + head_off;
          for (std::size_t j = 0; j < vb; ++j) {
            double w = p_row[j];
            if (drop) {
              bool keep = !dropout_rng->bernoulli(p_drop);
              lc.attn_drop[((b * heads + h) * t + i) * t + j] = keep ? 1 : 0;
              w = keep ? w * drop_scale : 0.0;
            }
            if (w == 0.0) continue;
            const double* vj = lc.v.data() + (b * t + j) * d + head_off;
            for (std::size_t cidx = 0; cidx < dh; ++cidx) ctx_i[cidx] += w * vj[cidx];
          }
        }
      }
    }

    lc.attn_proj.resize(bt * d);
    matmul(lc.ctx.data(), par + lp.wo, lc.attn_proj.data(), bt, d, d);
    for (std::size_t r = 0; r < bt; ++r)
      for (std::size_t j = 0; j < d; ++j) lc.attn_proj[r * d + j] += par[lp.bo + j];

    std::vector<double> res1 = lc.x_in;
    if (drop) {
      lc.proj_drop.resize(bt * d);
      std::vector<double> dropped = lc.attn_proj;
      apply_dropout(dropped.data(), lc.proj_drop.data(), bt * d, p_drop, *dropout_rng);
      for (std::size_t i = 0; i < bt * d; ++i) res1[i] += dropped[i];
    } else {
      for (std::size_t i = 0; i < bt * d; ++i) res1[i] += lc.attn_proj[i];
    }

    lc.ln1_xhat.resize(bt * d);
    lc.ln1_istd.resize(bt);
    lc.x_mid.resize(bt * d);
    for (std::size_t r = 0; r < bt; ++r) {
      layer_norm_fwd(res1.data() + r * d, par + lp.ln1_g, par + lp.ln1_b,
                     lc.x_mid.data() + r * d, lc.ln1_xhat.data() + r * d,
                     lc.ln1_istd.data() + r, d);
    }

    lc.ff_pre.resize(bt * f);
    matmul(lc.x_mid.data(), par + lp.w1, lc.ff_pre.data(), bt, d, f);
    for (std::size_t r = 0; r < bt; ++r)
      for (std::size_t j = 0; j < f; ++j) lc.ff_pre[r * f + j] += par[lp.b1 + j];
    lc.ff_act.resize(bt * f);
    for (std::size_t i = 0; i < bt * f; ++i) lc.ff_act[i] = gelu(lc.ff_pre[i]);
    lc.ff_out.resize(bt * d);
    matmul(lc.ff_act.data(), par + lp.w2, lc.ff_out.data(), bt, f, d);
    for (std::size_t r = 0; r < bt; ++r)
      for (std::size_t j = 0; j < d; ++j) lc.ff_out[r * d + j] += par[lp.b2 + j];

    std::vector<double> res2 = lc.x_mid;
    if (drop) {
      lc.ff_drop.resize(bt * d);
      std::vector<double> dropped = lc.ff_out;
      apply_dropout(dropped.data(), lc.ff_drop.data(), bt * d, p_drop, *dropout_rng);
      for (std::size_t i = 0; i < bt * d; ++i) res2[i] += dropped[i];
    } else {
      for (std::size_t i = 0; i < bt * d; ++i) res2[i] += lc.ff_out[i];
    }

    lc.ln2_xhat.resize(bt * d);
    lc.ln2_istd.resize(bt);
    for (std::size_t r = 0; r < bt; ++r) {
      layer_norm_fwd(res2.data() + r * d, par + lp.ln2_g, par + lp.ln2_b,
                     x.data() + r * d, lc.ln2_xhat.data() + r * d,
                     lc.ln2_istd.data() + r, d);
    }
  }
  c.x_final = x;

  std::vector<ForwardOutput> outputs(batch);
  const auto& final_attn = c.layers.back().attn_p;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t vb = c.valid[b];
    std::size_t n_tok = vb - 1;
    ForwardOutput& out = outputs[b];
    out.n_tokens = n_tok;

    out.intent_logits.assign(cfg_.n_intents, 0.0);
    const double* cls = x.data() + b * t * d;
    for (std::size_t j = 0; j < d; ++j) {
      double xv = cls[j];
      if (xv == 0.0) continue;
      const double* w = par + layout_.w_intent + j * cfg_.n_intents;
      for (int i = 0; i < cfg_.n_intents; ++i) out.intent_logits[i] += xv * w[i];
    }
    for (int i = 0; i < cfg_.n_intents; ++i) out.intent_logits[i] += par[layout_.b_intent + i];

    out.slot_logits.assign(n_tok * cfg_.n_slot_labels, 0.0);
    for (std::size_t tok = 0; tok < n_tok; ++tok) {
      const double* xv = x.data() + (b * t + 1 + tok) * d;
      double* logits = out.slot_logits.data() + tok * cfg_.n_slot_labels;
      for (std::size_t j = 0; j < d; ++j) {
        double v = xv[j];
        if (v == 0.0) continue;
        const double* w = par + layout_.w_slot + j * cfg_.n_slot_labels;
        for (int s = 0; s < cfg_.n_slot_labels; ++s) logits[s] += v * w[s];
      }
      for (int s = 0; s < cfg_.n_slot_labels; ++s) logits[s] += par[layout_.b_slot + s];
    }

    out.attention.n_heads = heads;
    out.attention.n = vb;
    out.attention.p.resize(heads * vb * vb);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < vb; ++i) {
        for (std::size_t j = 0; j < vb; ++j) {
          out.attention.at(h, i, j) = final_attn[((b * heads + h) * t + i) * t + j];
        }
      }
    }
  }
  return outputs;
}

void Model::backward(const BatchCache& c, const BatchUpstream& upstream,
                     std::vector<double>& grad) const {
  const std::size_t batch = c.batch;
  const std::size_t t = c.t_pad;
  const std::size_t d = cfg_.d_model;
  const std::size_t f = cfg_.d_ff;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dh = cfg_.d_head();
  const std::size_t bt = batch * t;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p_drop = cfg_.dropout;
  const bool drop = c.training;
  const double drop_scale = drop ? 1.0 / (1.0 - p_drop) : 1.0;

  if (grad.size() != layout_.total) grad.assign(layout_.total, 0.0);
  const double* par = params_.data();
  double* g = grad.data();

  std::vector<double> dx(bt * d, 0.0);

  // Output heads.
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t vb = c.valid[b];
    if (!upstream.d_intent_logits.empty()) {
      const double* dil = upstream.d_intent_logits.data() + b * cfg_.n_intents;
      const double* cls = c.x_final.data() + b * t * d;
      double* dcls = dx.data() + b * t * d;
      for (std::size_t j = 0; j < d; ++j) {
        const double* w = par + layout_.w_intent + j * cfg_.n_intents;
        double* gw = g + layout_.w_intent + j * cfg_.n_intents;
        double acc = 0.0;
        for (int i = 0; i < cfg_.n_intents; ++i) {
          acc += w[i] * dil[i];
          gw[i] += cls[j] * dil[i];
        }
        dcls[j] += acc;
      }
      for (int i = 0; i < cfg_.n_intents; ++i) g[layout_.b_intent + i] += dil[i];
    }
    if (b < upstream.d_slot_logits.size() && !upstream.d_slot_logits[b].empty()) {
      const std::vector<double>& dsl = upstream.d_slot_logits[b];
      for (std::size_t tok = 0; tok + 1 < vb; ++tok) {
        const double* dl = dsl.data() + tok * cfg_.n_slot_labels;
        const double* xv = c.x_final.data() + (b * t + 1 + tok) * d;
        double* dxv = dx.data() + (b * t + 1 + tok) * d;
        for (std::size_t j = 0; j < d; ++j) {
          const double* w = par + layout_.w_slot + j * cfg_.n_slot_labels;
          double* gw = g + layout_.w_slot + j * cfg_.n_slot_labels;
          double acc = 0.0;
          for (int s = 0; s < cfg_.n_slot_labels; ++s) {
            acc += w[s] * dl[s];
            gw[s] += xv[j] * dl[s];
          }
          dxv[j] += acc;
        }
        for (int s = 0; s < cfg_.n_slot_labels; ++s) g[layout_.b_slot + s] += dl[s];
      }
    }
  }

  std::vector<double> dres(bt * d);
  std::vector<double> dff_out(bt * d);
  std::vector<double> dff_act(bt * f);
  std::vector<double> dff_pre(bt * f);
  std::vector<double> dx_mid(bt * d);
  std::vector<double> dattn_proj(bt * d);
  std::vector<double> dctx(bt * d);
  std::vector<double> dq(bt * d), dk(bt * d), dv(bt * d);
  std::vector<double> drow(t);

  for (int layer = cfg_.n_layers - 1; layer >= 0; --layer) {
    const auto& lc = c.layers[layer];
    const auto& lp = layout_.layers[layer];

    // LN2 backward: dx holds d(x_out).
    std::fill(dres.begin(), dres.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        layer_norm_bwd(dx.data() + r * d, lc.ln2_xhat.data() + r * d, lc.ln2_istd[r],
                       par + lp.ln2_g, dres.data() + r * d, g + lp.ln2_g, g + lp.ln2_b, d);
      }
    }

    // Residual: res2 = x_mid + drop(ff_out).
    dx_mid = dres;
    std::fill(dff_out.begin(), dff_out.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < d; ++j) {
          double v = dres[r * d + j];
          if (drop) v = lc.ff_drop[r * d + j] ? v * drop_scale : 0.0;
          dff_out[r * d + j] = v;
        }
      }
    }

    // FF backward.
    std::fill(dff_act.begin(), dff_act.end(), 0.0);
    matmul_a_bt(dff_out.data(), par + lp.w2, dff_act.data(), bt, d, f);
    matmul_at_b(lc.ff_act.data(), dff_out.data(), g + lp.w2, bt, f, d);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < d; ++j) g[lp.b2 + j] += dff_out[r * d + j];
      }
    }
    for (std::size_t i = 0; i < bt * f; ++i)
      dff_pre[i] = dff_act[i] * gelu_grad(lc.ff_pre[i]);
    matmul_a_bt(dff_pre.data(), par + lp.w1, dx_mid.data(), bt, f, d);
    matmul_at_b(lc.x_mid.data(), dff_pre.data(), g + lp.w1, bt, d, f);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < f; ++j) g[lp.b1 + j] += dff_pre[r * f + j];
      }
    }

    // LN1 backward.
    std::fill(dres.begin(), dres.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        layer_norm_bwd(dx_mid.data() + r * d, lc.ln1_xhat.data() + r * d, lc.ln1_istd[r],
                       par + lp.ln1_g, dres.data() + r * d, g + lp.ln1_g, g + lp.ln1_b, d);
      }
    }

    // Residual: res1 = x_in + drop(attn_proj). dres feeds both paths; dx
    // becomes d(x_in) for this layer.
    dx = dres;
    std::fill(dattn_proj.begin(), dattn_proj.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < d; ++j) {
          double v = dres[r * d + j];
          if (drop) v = lc.proj_drop[r * d + j] ? v * drop_scale : 0.0;
          dattn_proj[r * d + j] = v;
        }
      }
    }

    // Output projection backward.
    std::fill(dctx.begin(), dctx.end(), 0.0);
    matmul_a_bt(dattn_proj.data(), par + lp.wo, dctx.data(), bt, d, d);
    matmul_at_b(lc.ctx.data(), dattn_proj.data(), g + lp.wo, bt, d, d);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < d; ++j) g[lp.bo + j] += dattn_proj[r * d + j];
      }
    }

    // Attention backward.
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    const bool final_layer = layer == cfg_.n_layers - 1;
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t vb = c.valid[b];
      const std::vector<double>* dattn_ext = nullptr;
      if (final_layer && b < upstream.d_attention.size() &&
          !upstream.d_attention[b].empty()) {
        dattn_ext = &upstream.d_attention[b];
      }
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t head_off = h * dh;
        const double* p_base = lc.attn_p.data() + ((b * heads + h) * t) * t;
        for (std::size_t i = 0; i < vb; ++i) {
          const double* p_row = p_base + i * t;
          const double* dctx_i = dctx.data() + (b * t + i) * d + head_off;
          // dP through the value path (includes attention dropout), plus the
          // external contribution on the pre-dropout distribution.
          for (std::size_t j = 0; j < vb; ++j) {
            const double* vj = lc.v.data() + (b * t + j) * d + head_off;
            double dot = 0.0;
            for (std::size_t cidx = 0; cidx < dh; ++cidx) dot += dctx_i[cidx] * vj[cidx];
            double dpd = dot;
            double w_used = p_row[j];
            if (drop) {
              bool keep = lc.attn_drop[((b * heads + h) * t + i) * t + j] != 0;
              // dV uses the dropped weight; the value-path dP is mask-scaled.
              w_used = keep ? w_used * drop_scale : 0.0;
              dpd = keep ? dpd * drop_scale : 0.0;
            }
            if (w_used != 0.0) {
              double* dvj = dv.data() + (b * t + j) * d + head_off;
              for (std::size_t cidx = 0; cidx < dh; ++cidx)
                dvj[cidx] += w_used * dctx_i[cidx];
            }
            if (dattn_ext) dpd += (*dattn_ext)[(h * vb + i) * vb + j];
            drow[j] = dpd;
          }
          // Softmax backward on row i.
          double sum_dp_p = 0.0;
          for (std::size_t j = 0; j < vb; ++j) sum_dp_p += drow[j] * p_row[j];
          const double* qi = lc.q.data() + (b * t + i) * d + head_off;
          double* dqi = dq.data() + (b * t + i) * d + head_off;
          for (std::size_t j = 0; j < vb; ++j) {
            double ds = p_row[j] * (drow[j] - sum_dp_p) * inv_sqrt_dh;
            if (ds == 0.0) continue;
            const double* kj = lc.k.data() + (b * t + j) * d + head_off;
            double* dkj = dk.data() + (b * t + j) * d + head_off;
            for (std::size_t cidx = 0; cidx < dh; ++cidx) {
              dqi[cidx] += ds * kj[cidx];
              dkj[cidx] += ds * qi[cidx];
            }
          }
        }
      }
    }

    // Q/K/V projections backward (accumulate into d(x_in) held in dx).
    matmul_a_bt(dq.data(), par + lp.wq, dx.data(), bt, d, d);
    matmul_a_bt(dk.data(), par + lp.wk, dx.data(), bt, d, d);
    matmul_a_bt(dv.data(), par + lp.wv, dx.data(), bt, d, d);
    matmul_at_b(lc.x_in.data(), dq.data(), g + lp.wq, bt, d, d);
    matmul_at_b(lc.x_in.data(), dk.data(), g + lp.wk, bt, d, d);
    matmul_at_b(lc.x_in.data(), dv.data(), g + lp.wv, bt, d, d);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < c.valid[b]; ++i) {
        std::size_t r = b * t + i;
        for (std::size_t j = 0; j < d; ++j) {
          g[lp.bq + j] += dq[r * d + j];
          g[lp.bk + j] += dk[r * d + j];
          g[lp.bv + j] += dv[r * d + j];
        }
      }
    }
  }

  // Embedding dropout, layer norm, and the embedding tables.
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < c.valid[b]; ++i) {
      std::size_t r = b * t + i;
      double* dxi = dx.data() + r * d;
      if (drop) {
        for (std::size_t j = 0; j < d; ++j)
          dxi[j] = c.emb_drop[r * d + j] ? dxi[j] * drop_scale : 0.0;
      }
      std::vector<double> demb(d, 0.0);
      layer_norm_bwd(dxi, c.emb_xhat.data() + r * d, c.emb_istd[r], par + layout_.ln_e_g,
                     demb.data(), g + layout_.ln_e_g, g + layout_.ln_e_b, d);
      double* gtok = g + layout_.tok_embed + static_cast<std::size_t>(c.ids[r]) * d;
      double* gpos = g + layout_.pos_embed + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        gtok[j] += demb[j];
        gpos[j] += demb[j];
      }
    }
  }
}

}  // namespace slu
