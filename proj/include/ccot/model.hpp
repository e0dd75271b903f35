#pragma once

#include "ccot/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ccot {

struct ModelConfig {
  int vocab_size = 64;
  int hidden_dim = 128;
  int num_layers = 8;
  int num_heads = 4;
  int head_dim = 32;
  int ffn_hidden = 512;
  int max_seq_len = 192;
  double rope_theta = 10000.0;
  bool tied_head = false;
  std::string pos_scheme = "rotary";

  void validate() const {
    if (hidden_dim != num_heads * head_dim)
      throw std::invalid_argument("config: hidden_dim != num_heads * head_dim");
    if (num_layers < 2) throw std::invalid_argument("config: need at least 2 layers");
    if (vocab_size < 4) throw std::invalid_argument("config: vocabulary too small for specials");
    if (head_dim % 2 != 0) throw std::invalid_argument("config: head_dim must be even for rotary");
  }
};

// Precomputed rotary tables, one row per absolute position.
template <typename T>
struct RopeTable {
  int head_dim = 0;
  Tensor<T> cos_t, sin_t;  // max_len x head_dim/2

  static RopeTable make(const ModelConfig& cfg) {
    RopeTable t;
    t.head_dim = cfg.head_dim;
    int64_t half = cfg.head_dim / 2;
    int64_t len = cfg.max_seq_len;
    t.cos_t = Tensor<T>({len, half});
    t.sin_t = Tensor<T>({len, half});
    for (int64_t p = 0; p < len; ++p) {
      for (int64_t i = 0; i < half; ++i) {
        double freq = std::pow(cfg.rope_theta, -2.0 * static_cast<double>(i) / cfg.head_dim);
        t.cos_t.at(p, i) = static_cast<T>(std::cos(p * freq));
        t.sin_t.at(p, i) = static_cast<T>(std::sin(p * freq));
      }
    }
    return t;
  }
};

// Base weights (theta). Pre-norm blocks with rotary attention and a SwiGLU
// feed-forward, LM head optionally tied to the embedding.
template <typename T>
struct ModelParams {
  struct Block {
    Tensor<T> att_norm, wq, wk, wv, wo;
    Tensor<T> ffn_norm, w1, w2, w3;
  };
  ModelConfig cfg;
  Tensor<T> emb;         // V x d
  std::vector<Block> blocks;
  Tensor<T> final_norm;  // d
  Tensor<T> head;        // d x V (unused when tied)

  static ModelParams random_init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    Rng rng(seed);
    int64_t d = cfg.hidden_dim, f = cfg.ffn_hidden, v = cfg.vocab_size;
    T w_std = T(0.02);
    T res_std = w_std / static_cast<T>(std::sqrt(2.0 * cfg.num_layers));
    p.emb = Tensor<T>({v, d});
    fill_normal(p.emb, rng, w_std);
    p.blocks.resize(static_cast<size_t>(cfg.num_layers));
    for (auto& b : p.blocks) {
      b.att_norm = Tensor<T>::full({d}, T(1));
      b.wq = Tensor<T>({d, d});
      b.wk = Tensor<T>({d, d});
      b.wv = Tensor<T>({d, d});
      b.wo = Tensor<T>({d, d});
      fill_normal(b.wq, rng, w_std);
      fill_normal(b.wk, rng, w_std);
      fill_normal(b.wv, rng, w_std);
      fill_normal(b.wo, rng, res_std);
      b.ffn_norm = Tensor<T>::full({d}, T(1));
      b.w1 = Tensor<T>({d, f});
      b.w2 = Tensor<T>({f, d});
      b.w3 = Tensor<T>({d, f});
      fill_normal(b.w1, rng, w_std);
      fill_normal(b.w2, rng, res_std);
      fill_normal(b.w3, rng, w_std);
    }
    p.final_norm = Tensor<T>::full({d}, T(1));
    if (!cfg.tied_head) {
      p.head = Tensor<T>({d, v});
      fill_normal(p.head, rng, w_std);
    }
    return p;
  }

  void for_each_named(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    fn("emb", emb);
    for (size_t i = 0; i < blocks.size(); ++i) {
      std::string pre = "blocks." + std::to_string(i) + ".";
      fn(pre + "att_norm", blocks[i].att_norm);
      fn(pre + "wq", blocks[i].wq);
      fn(pre + "wk", blocks[i].wk);
      fn(pre + "wv", blocks[i].wv);
      fn(pre + "wo", blocks[i].wo);
      fn(pre + "ffn_norm", blocks[i].ffn_norm);
      fn(pre + "w1", blocks[i].w1);
      fn(pre + "w2", blocks[i].w2);
      fn(pre + "w3", blocks[i].w3);
    }
    fn("final_norm", final_norm);
    if (!cfg.tied_head) fn("head", head);
  }
};

// Embedding lookup: one row per token. Rotary position information is applied
// inside attention, not here.
template <typename T>
Tensor<T> embed_tokens(const ModelParams<T>& p, const std::vector<int>& ids) {
  int64_t d = p.cfg.hidden_dim;
  Tensor<T> out({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= p.cfg.vocab_size)
      throw std::invalid_argument("embed: token id " + std::to_string(ids[i]) + " out of vocabulary");
    std::copy(p.emb.data.begin() + ids[i] * d, p.emb.data.begin() + (ids[i] + 1) * d,
              out.data.begin() + static_cast<int64_t>(i) * d);
  }
  return out;
}

template <typename T>
void rmsnorm_rows(Tensor<T>& x, const Tensor<T>& gain, T eps = T(1e-5)) {
  int64_t r = x.rows(), d = x.cols();
  for (int64_t i = 0; i < r; ++i) {
    T* row = x.data.data() + i * d;
    T ms = T(0);
    for (int64_t j = 0; j < d; ++j) ms += row[j] * row[j];
    ms /= T(d);
    T inv = T(1) / std::sqrt(ms + eps);
    for (int64_t j = 0; j < d; ++j) row[j] = row[j] * inv * gain.data[static_cast<size_t>(j)];
  }
}

template <typename T>
void rope_rows(Tensor<T>& x, int n_heads, int64_t pos0, const RopeTable<T>& tab) {
  int64_t r = x.rows(), d = x.cols();
  int64_t hd = d / n_heads, half = hd / 2;
  for (int64_t i = 0; i < r; ++i) {
    const T* c = tab.cos_t.data.data() + (pos0 + i) * half;
    const T* s = tab.sin_t.data.data() + (pos0 + i) * half;
    T* row = x.data.data() + i * d;
    for (int64_t h = 0; h < n_heads; ++h) {
      T* hr = row + h * hd;
      for (int64_t p = 0; p < half; ++p) {
        T x0 = hr[2 * p], x1 = hr[2 * p + 1];
        hr[2 * p] = x0 * c[p] - x1 * s[p];
        hr[2 * p + 1] = x0 * s[p] + x1 * c[p];
      }
    }
  }
}

// Logits for one final-layer state: final norm, then head (tied = embedding^T).
template <typename T>
Tensor<T> head_logits(const ModelParams<T>& p, const Tensor<T>& state) {
  Tensor<T> x = state;
  if (x.rank() == 1) x.shape = {1, x.shape[0]};
  rmsnorm_rows(x, p.final_norm);
  Tensor<T> logits({x.rows(), p.cfg.vocab_size});
  if (p.cfg.tied_head)
    matmul_acc(logits, x, p.emb, T(1), false, true);
  else
    matmul_acc(logits, x, p.head, T(1), false, false);
  return logits;
}

// Probability distribution over the vocabulary; rows sum to 1.
template <typename T>
Tensor<T> head_dist(const ModelParams<T>& p, const Tensor<T>& state) {
  return softmax_rows(head_logits(p, state));
}

enum class SampleMode { Greedy, Categorical };

// Greedy breaks ties toward the lowest index; categorical draws by inverse CDF
// so results are reproducible under a seeded Rng.
template <typename T>
int sample_next(const Tensor<T>& dist, SampleMode mode, Rng* rng = nullptr) {
  int64_t n = dist.numel();
  if (n == 0) throw std::invalid_argument("sample: empty distribution");
  if (mode == SampleMode::Greedy) {
    int best = 0;
    T bv = dist.data[0];
    for (int64_t i = 1; i < n; ++i) {
      if (dist.data[static_cast<size_t>(i)] > bv) {
        bv = dist.data[static_cast<size_t>(i)];
        best = static_cast<int>(i);
      }
    }
    return best;
  }
  if (!rng) throw std::invalid_argument("sample: categorical mode needs an rng");
  double u = rng->uniform();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += static_cast<double>(dist.data[static_cast<size_t>(i)]);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

}  // namespace ccot
