#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tnmt/common.hpp"
#include "tnmt/tensor.hpp"

namespace tnmt::model {

struct ModelConfig {
  int n_layers = 2;   // 6 at full scale; toy default 2
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_len = 64;
  double dropout = 0.3;            // attention / FFN / sublayer output
  double embedding_dropout = 0.2;
  double label_smoothing = 0.1;
  bool tie_embeddings = true;

  void validate() const {
    if (vocab_size <= 0) throw Error("config", "vocab_size must be positive");
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_len < 1)
      throw Error("config", "model dimensions must be positive");
    if (d_model % n_heads != 0)
      throw Error("config", "d_model must be divisible by n_heads");
    auto rate_ok = [](double r) { return r >= 0.0 && r < 1.0; };
    if (!rate_ok(dropout) || !rate_ok(embedding_dropout) ||
        !rate_ok(label_smoothing))
      throw Error("config", "dropout/smoothing rates must be in [0,1)");
  }
};

// Scaled dot-product attention over head-batched tensors.
// q,k,v: [N, Lq|Lk, d_head]; mask: N*Lq*Lk disallowed-key flags.
template <typename T>
TensorPtr<T> attention(Tape<T>& tape, const TensorPtr<T>& q,
                       const TensorPtr<T>& k, const TensorPtr<T>& v,
                       const std::vector<std::uint8_t>& mask,
                       double attn_dropout = 0.0) {
  std::size_t d_head = q->shape.back();
  auto scores = tape.scale(tape.bmm_nt(q, k), T(1.0 / std::sqrt(double(d_head))));
  auto probs = tape.masked_softmax_lastdim(scores, mask);
  probs = tape.dropout(probs, attn_dropout);
  return tape.bmm(probs, v);
}

template <typename T>
struct LayerParams {
  // self attention
  TensorPtr<T> wq, wk, wv, wo;
  TensorPtr<T> ln1_g, ln1_b;
  // cross attention (decoder only)
  TensorPtr<T> cq, ck, cv, co;
  TensorPtr<T> lnc_g, lnc_b;
  // feed forward
  TensorPtr<T> w1, b1, w2, b2;
  TensorPtr<T> ln2_g, ln2_b;
};

template <typename T>
class Transformer {
 public:
  ModelConfig cfg;

  Transformer(ModelConfig config, Rng& init_rng) : cfg(config) {
    cfg.validate();
    std::size_t d = cfg.d_model, v = cfg.vocab_size, ff = cfg.d_ff;
    embeddings_ = init({v, d}, init_rng);
    if (!cfg.tie_embeddings) out_proj_ = init({d, v}, init_rng);
    build_pos_table();
    for (int l = 0; l < cfg.n_layers; ++l) {
      enc_.push_back(make_layer(d, ff, false, init_rng));
      dec_.push_back(make_layer(d, ff, true, init_rng));
    }
  }

  std::vector<std::pair<std::string, TensorPtr<T>>> named_params() {
    std::vector<std::pair<std::string, TensorPtr<T>>> out;
    out.emplace_back("embeddings", embeddings_);
    if (out_proj_) out.emplace_back("out_proj", out_proj_);
    auto add_layer = [&](const std::string& pfx, LayerParams<T>& L,
                         bool cross) {
      out.emplace_back(pfx + ".wq", L.wq);
      out.emplace_back(pfx + ".wk", L.wk);
      out.emplace_back(pfx + ".wv", L.wv);
      out.emplace_back(pfx + ".wo", L.wo);
      out.emplace_back(pfx + ".ln1_g", L.ln1_g);
      out.emplace_back(pfx + ".ln1_b", L.ln1_b);
      if (cross) {
        out.emplace_back(pfx + ".cq", L.cq);
        out.emplace_back(pfx + ".ck", L.ck);
        out.emplace_back(pfx + ".cv", L.cv);
        out.emplace_back(pfx + ".co", L.co);
        out.emplace_back(pfx + ".lnc_g", L.lnc_g);
        out.emplace_back(pfx + ".lnc_b", L.lnc_b);
      }
      out.emplace_back(pfx + ".w1", L.w1);
      out.emplace_back(pfx + ".b1", L.b1);
      out.emplace_back(pfx + ".w2", L.w2);
      out.emplace_back(pfx + ".b2", L.b2);
      out.emplace_back(pfx + ".ln2_g", L.ln2_g);
      out.emplace_back(pfx + ".ln2_b", L.ln2_b);
    };
    for (int l = 0; l < cfg.n_layers; ++l)
      add_layer("enc." + std::to_string(l), enc_[l], false);
    for (int l = 0; l < cfg.n_layers; ++l)
      add_layer("dec." + std::to_string(l), dec_[l], true);
    return out;
  }

  // ---- training forward ----

  // Padded batch; tgt_in starts with bos per row, tgt_out is tgt_in shifted
  // left with eos appended, pad-filled.
  struct Batch {
    std::size_t B = 0, Ls = 0, Lt = 0;
    std::vector<int> src, tgt_in, tgt_out;  // [B*Ls], [B*Lt], [B*Lt]
    int pad_id = 0;
  };

  TensorPtr<T> forward_loss(Tape<T>& tape, const Batch& batch) {
    if (batch.B == 0) throw Error("data", "empty batch");
    auto logits = forward_logits(tape, batch);
    return tape.cross_entropy_label_smoothed(logits, batch.tgt_out,
                                             cfg.label_smoothing, batch.pad_id);
  }

  TensorPtr<T> forward_logits(Tape<T>& tape, const Batch& batch) {
    check_ids(batch.src, batch.Ls);
    check_ids(batch.tgt_in, batch.Lt);
    auto src_pad = pad_flags(batch.src, batch.pad_id);
    auto ctx = encoder_forward(tape, batch.src, batch.B, batch.Ls, src_pad);
    auto tgt_pad = pad_flags(batch.tgt_in, batch.pad_id);
    return decoder_forward(tape, batch.tgt_in, batch.B, batch.Lt, tgt_pad, ctx,
                           batch.Ls, src_pad);
  }

  // ---- inference ----

  struct Encoded {
    TensorPtr<T> ctx;  // [1*Ls, d]
    std::vector<std::uint8_t> pad;
    std::size_t len = 0;
  };

  Encoded encode(const std::vector<int>& src_ids) {
    if (src_ids.empty()) throw Error("data", "empty source");
    if (src_ids.size() > static_cast<std::size_t>(cfg.max_len))
      throw Error("data", "source longer than max_len");
    Tape<T> tape;
    tape.grad_enabled = false;
    std::vector<std::uint8_t> pad(src_ids.size(), 0);
    Encoded e;
    e.ctx = encoder_forward(tape, src_ids, 1, src_ids.size(), pad);
    e.pad = pad;
    e.len = src_ids.size();
    return e;
  }

  // Next-token log-probabilities for a batch of same-length prefixes over one
  // encoded source. Each prefix must start with bos.
  std::vector<std::vector<T>> step_logprobs(
      const Encoded& enc, const std::vector<std::vector<int>>& prefixes) {
    if (prefixes.empty() || prefixes[0].empty())
      throw Error("data", "decode_step needs a non-empty prefix");
    std::size_t B = prefixes.size(), Lt = prefixes[0].size();
    std::vector<int> tgt;
    tgt.reserve(B * Lt);
    for (const auto& p : prefixes) {
      if (p.size() != Lt) throw Error("shape", "prefix lengths differ");
      tgt.insert(tgt.end(), p.begin(), p.end());
    }
    Tape<T> tape;
    tape.grad_enabled = false;

    // replicate the encoded context (and its pad flags) across the batch
    auto ctx = make_tensor<T>({B * enc.len, (std::size_t)cfg.d_model});
    std::vector<std::uint8_t> src_pad(B * enc.len);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(enc.ctx->data->begin(), enc.ctx->data->end(),
                ctx->data->begin() + b * enc.ctx->size());
      std::copy(enc.pad.begin(), enc.pad.end(),
                src_pad.begin() + b * enc.len);
    }
    std::vector<std::uint8_t> tgt_pad(B * Lt, 0);
    auto logits = decoder_forward(tape, tgt, B, Lt, tgt_pad, ctx, enc.len,
                                  src_pad);
    // last position of each row, log-softmaxed
    std::size_t V = cfg.vocab_size;
    std::vector<std::vector<T>> out(B, std::vector<T>(V));
    for (std::size_t b = 0; b < B; ++b) {
      const T* x = logits->ptr() + ((b + 1) * Lt - 1) * V;
      T mx = x[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, x[v]);
      T z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(x[v] - mx);
      T logz = std::log(z) + mx;
      for (std::size_t v = 0; v < V; ++v) out[b][v] = x[v] - logz;
    }
    return out;
  }

  // Distribution over the vocabulary for the next token after tgt_prefix.
  std::vector<T> decode_step(const std::vector<int>& tgt_prefix,
                             const Encoded& enc) {
    auto lp = step_logprobs(enc, {tgt_prefix});
    std::vector<T> probs(lp[0].size());
    for (std::size_t v = 0; v < probs.size(); ++v)
      probs[v] = std::exp(lp[0][v]);
    return probs;
  }

  Rng& dropout_rng() { return dropout_rng_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_.reseed(seed); }

  // ---- shared forward pieces (public for the causality tests) ----

  TensorPtr<T> encoder_forward(Tape<T>& tape, const std::vector<int>& src,
                               std::size_t B, std::size_t Ls,
                               const std::vector<std::uint8_t>& src_pad) {
    auto x = embed(tape, src, Ls);
    auto self_mask = key_mask(B, Ls, Ls, src_pad, false, nullptr);
    for (auto& L : enc_) {
      x = sublayer_attn(tape, x, x, L.wq, L.wk, L.wv, L.wo, L.ln1_g, L.ln1_b,
                        B, Ls, Ls, self_mask);
      x = sublayer_ffn(tape, x, L);
    }
    return x;
  }

  TensorPtr<T> decoder_forward(Tape<T>& tape, const std::vector<int>& tgt,
                               std::size_t B, std::size_t Lt,
                               const std::vector<std::uint8_t>& tgt_pad,
                               const TensorPtr<T>& ctx, std::size_t Ls,
                               const std::vector<std::uint8_t>& src_pad) {
    auto x = embed(tape, tgt, Lt);
    auto causal = key_mask(B, Lt, Lt, tgt_pad, true, nullptr);
    auto cross = key_mask(B, Lt, Ls, src_pad, false, &tgt_pad);
    for (auto& L : dec_) {
      x = sublayer_attn(tape, x, x, L.wq, L.wk, L.wv, L.wo, L.ln1_g, L.ln1_b,
                        B, Lt, Lt, causal);
      x = sublayer_attn(tape, x, ctx, L.cq, L.ck, L.cv, L.co, L.lnc_g, L.lnc_b,
                        B, Lt, Ls, cross);
      x = sublayer_ffn(tape, x, L);
    }
    // output projection; tied mode reuses the embedding matrix
    if (cfg.tie_embeddings)
      return tape.matmul(x, tape.transpose2d(embeddings_));
    return tape.matmul(x, out_proj_);
  }

 private:
  TensorPtr<T> embeddings_;
  TensorPtr<T> out_proj_;  // null when tied
  TensorPtr<T> pos_table_;
  std::vector<LayerParams<T>> enc_, dec_;
  Rng dropout_rng_{0};

  TensorPtr<T> init(std::vector<std::size_t> shape, Rng& rng) {
    auto t = make_tensor<T>(shape, true);
    double scale = std::sqrt(6.0 / double(shape[0] + shape.back()));
    for (auto& v : *t->data) v = T(rng.uniform(-scale, scale));
    return t;
  }

  LayerParams<T> make_layer(std::size_t d, std::size_t ff, bool cross,
                            Rng& rng) {
    LayerParams<T> L;
    L.wq = init({d, d}, rng);
    L.wk = init({d, d}, rng);
    L.wv = init({d, d}, rng);
    L.wo = init({d, d}, rng);
    L.ln1_g = ones({d});
    L.ln1_b = make_tensor<T>({d}, true);
    if (cross) {
      L.cq = init({d, d}, rng);
      L.ck = init({d, d}, rng);
      L.cv = init({d, d}, rng);
      L.co = init({d, d}, rng);
      L.lnc_g = ones({d});
      L.lnc_b = make_tensor<T>({d}, true);
    }
    L.w1 = init({d, ff}, rng);
    L.b1 = make_tensor<T>({ff}, true);
    L.w2 = init({ff, d}, rng);
    L.b2 = make_tensor<T>({d}, true);
    L.ln2_g = ones({d});
    L.ln2_b = make_tensor<T>({d}, true);
    return L;
  }

  TensorPtr<T> ones(std::vector<std::size_t> shape) {
    auto t = make_tensor<T>(shape, true);
    std::fill(t->data->begin(), t->data->end(), T(1));
    return t;
  }

  void build_pos_table() {
    std::size_t L = cfg.max_len, d = cfg.d_model;
    pos_table_ = make_tensor<T>({L, d});
    for (std::size_t p = 0; p < L; ++p)
      for (std::size_t i = 0; i < d; ++i) {
        double angle = double(p) / std::pow(10000.0, 2.0 * (i / 2) / double(d));
        (*pos_table_->data)[p * d + i] =
            T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
  }

  void check_ids(const std::vector<int>& ids, std::size_t L) {
    if (L > static_cast<std::size_t>(cfg.max_len))
      throw Error("data", "sequence longer than max_len (" +
                              std::to_string(L) + " > " +
                              std::to_string(cfg.max_len) + ")");
    for (int id : ids)
      if (id < 0 || id >= cfg.vocab_size)
        throw Error("data", "token id out of vocabulary: " + std::to_string(id));
  }

  TensorPtr<T> embed(Tape<T>& tape, const std::vector<int>& ids,
                     std::size_t L) {
    std::size_t B = ids.size() / L, d = cfg.d_model;
    auto x = tape.scale(tape.embedding(embeddings_, ids),
                        T(std::sqrt(double(d))));
    // add positions; constant tensor built per batch
    auto pos = make_tensor<T>({B * L, d});
    for (std::size_t b = 0; b < B; ++b)
      std::copy(pos_table_->data->begin(), pos_table_->data->begin() + L * d,
                pos->data->begin() + b * L * d);
    x = tape.add(x, pos);
    return tape.dropout(x, cfg.embedding_dropout);
  }

  // disallowed-key flags for [B*H, Lq, Lk]
  std::vector<std::uint8_t> key_mask(std::size_t B, std::size_t Lq,
                                     std::size_t Lk,
                                     const std::vector<std::uint8_t>& key_pad,
                                     bool causal,
                                     const std::vector<std::uint8_t>* q_pad) {
    std::size_t H = cfg.n_heads;
    std::vector<std::uint8_t> mask(B * H * Lq * Lk, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t q = 0; q < Lq; ++q)
        for (std::size_t k = 0; k < Lk; ++k) {
          bool dis = key_pad[b * Lk + k] || (causal && k > q);
          // pad queries attend only to themselves; keeps rows valid without
          // touching real positions
          if (q_pad && (*q_pad)[b * Lq + q]) dis = k != 0;
          if (dis)
            for (std::size_t h = 0; h < H; ++h)
              mask[((b * H + h) * Lq + q) * Lk + k] = 1;
        }
    return mask;
  }

  TensorPtr<T> sublayer_attn(Tape<T>& tape, const TensorPtr<T>& x,
                             const TensorPtr<T>& kv, const TensorPtr<T>& wq,
                             const TensorPtr<T>& wk, const TensorPtr<T>& wv,
                             const TensorPtr<T>& wo, const TensorPtr<T>& ln_g,
                             const TensorPtr<T>& ln_b, std::size_t B,
                             std::size_t Lq, std::size_t Lk,
                             const std::vector<std::uint8_t>& mask) {
    std::size_t H = cfg.n_heads;
    auto q = tape.split_heads(tape.matmul(x, wq), B, Lq, H);
    auto k = tape.split_heads(tape.matmul(kv, wk), B, Lk, H);
    auto v = tape.split_heads(tape.matmul(kv, wv), B, Lk, H);
    auto heads = attention(tape, q, k, v, mask, cfg.dropout);
    auto merged = tape.matmul(tape.merge_heads(heads, B, Lq, H), wo);
    merged = tape.dropout(merged, cfg.dropout);
    // post-norm residual
    return tape.layer_norm(tape.add(x, merged), ln_g, ln_b, T(1e-5));
  }

  TensorPtr<T> sublayer_ffn(Tape<T>& tape, const TensorPtr<T>& x,
                            LayerParams<T>& L) {
    auto h = tape.relu(tape.add_bias(tape.matmul(x, L.w1), L.b1));
    h = tape.dropout(h, cfg.dropout);
    h = tape.add_bias(tape.matmul(h, L.w2), L.b2);
    h = tape.dropout(h, cfg.dropout);
    return tape.layer_norm(tape.add(x, h), L.ln2_g, L.ln2_b, T(1e-5));
  }

 public:
  std::vector<std::uint8_t> pad_flags(const std::vector<int>& ids,
                                      int pad_id) const {
    std::vector<std::uint8_t> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = ids[i] == pad_id;
    return out;
  }
};

}  // namespace tnmt::model
