#pragma once

#include "ccot/adapters.hpp"

namespace ccot {

// Hidden states for one forward span: states[0] is the block input (the
// embeddings or carried vectors), states[l] the output of block l.
template <typename T>
struct LayeredStates {
  std::vector<Tensor<T>> states;  // num_layers+1 entries, each span x d
  int64_t span() const { return states.empty() ? 0 : states[0].rows(); }
  const Tensor<T>& layer(int l) const { return states[static_cast<size_t>(l)]; }
};

// Per-layer attention cache of rotated keys and values, preallocated to the
// model's maximum sequence length. Keys and values from all weight sets share
// one cache: attention is causal over everything that came before, no matter
// which segment produced it.
template <typename T>
struct KVCache {
  std::vector<Tensor<T>> K, V;
  int64_t len = 0;

  static KVCache make(const ModelConfig& cfg) {
    KVCache c;
    c.K.resize(static_cast<size_t>(cfg.num_layers));
    c.V.resize(static_cast<size_t>(cfg.num_layers));
    for (int l = 0; l < cfg.num_layers; ++l) {
      c.K[static_cast<size_t>(l)] = Tensor<T>({cfg.max_seq_len, cfg.hidden_dim});
      c.V[static_cast<size_t>(l)] = Tensor<T>({cfg.max_seq_len, cfg.hidden_dim});
    }
    return c;
  }
  void reset() { len = 0; }
  void truncate(int64_t new_len) {
    if (new_len > len) throw std::invalid_argument("cache: cannot truncate forward");
    len = new_len;
  }
};

// Bundle of everything a forward pass needs.
template <typename T>
struct EngineModel {
  const ModelParams<T>* base = nullptr;
  const LoraAdapter<T>* phi = nullptr;
  const LoraAdapter<T>* psi = nullptr;
  const RopeTable<T>* rope = nullptr;

  const LoraAdapter<T>* adapter_for(WeightSet s) const {
    if (s == WeightSet::Phi) return phi;
    if (s == WeightSet::Psi) return psi;
    return nullptr;
  }
};

namespace detail {

// y[rows b..e) = x[b..e) * W (+ scaling * (x A) B when adapted)
template <typename T>
void project_segment(Tensor<T>& y, const Tensor<T>& x, int64_t b, int64_t e,
                     const Tensor<T>& w, const typename LoraAdapter<T>::Pair* lora, T scaling) {
  int64_t in_d = x.cols();
  int64_t out_d = w.cols();
  detail::CMapRM<T> mx(x.data.data() + b * in_d, e - b, in_d);
  detail::MapRM<T> my(y.data.data() + b * out_d, e - b, out_d);
  detail::CMapRM<T> mw(w.data.data(), in_d, out_d);
  my.noalias() = mx * mw;
  if (lora) {
    detail::CMapRM<T> ma(lora->A.data.data(), in_d, lora->A.cols());
    detail::CMapRM<T> mb(lora->B.data.data(), lora->B.rows(), out_d);
    my.noalias() += scaling * ((mx * ma) * mb);
  }
}

}  // namespace detail

// Routed forward over a new span of raw block inputs. Each position is
// projected with its segment's weight set; attention attends causally over
// the shared cache plus the new span. Returns hidden states at every layer
// and extends the cache in place.
template <typename T>
LayeredStates<T> routed_forward(const EngineModel<T>& m, const Tensor<T>& inputs,
                                const SegmentRouting& routing, KVCache<T>& cache) {
  const ModelParams<T>& p = *m.base;
  int64_t s = inputs.rows();
  int64_t d = p.cfg.hidden_dim;
  int64_t past = cache.len;
  if (past + s > p.cfg.max_seq_len) throw std::invalid_argument("forward: sequence overflow");
  validate_routing(routing, s);

  int heads = p.cfg.num_heads;
  int64_t hd = p.cfg.head_dim;
  T att_scale = T(1) / std::sqrt(static_cast<T>(hd));

  LayeredStates<T> out;
  out.states.reserve(static_cast<size_t>(p.cfg.num_layers) + 1);
  out.states.push_back(inputs);

  Tensor<T> h = inputs;
  Tensor<T> q({s, d}), k({s, d}), v({s, d}), att({s, d}), proj({s, d});
  for (int layer = 0; layer < p.cfg.num_layers; ++layer) {
    const auto& blk = p.blocks[static_cast<size_t>(layer)];
    Tensor<T> xn = h;
    rmsnorm_rows(xn, blk.att_norm);

    for (const Segment& seg : routing) {
      if (seg.end == seg.begin) continue;
      const LoraAdapter<T>* ad = m.adapter_for(seg.set);
      const typename LoraAdapter<T>::Layer* al =
          ad ? &ad->layers[static_cast<size_t>(layer)] : nullptr;
      T sc = ad ? ad->scaling : T(0);
      detail::project_segment(q, xn, seg.begin, seg.end, blk.wq, al ? &al->q : nullptr, sc);
      detail::project_segment(k, xn, seg.begin, seg.end, blk.wk, al ? &al->k : nullptr, sc);
      detail::project_segment(v, xn, seg.begin, seg.end, blk.wv, al ? &al->v : nullptr, sc);
    }
    rope_rows(q, heads, past, *m.rope);
    rope_rows(k, heads, past, *m.rope);

    Tensor<T>& ck = cache.K[static_cast<size_t>(layer)];
    Tensor<T>& cv = cache.V[static_cast<size_t>(layer)];
    std::copy(k.data.begin(), k.data.end(), ck.data.begin() + past * d);
    std::copy(v.data.begin(), v.data.end(), cv.data.begin() + past * d);

    std::fill(att.data.begin(), att.data.end(), T(0));
    std::vector<T> w(static_cast<size_t>(past + s));
    for (int h_i = 0; h_i < heads; ++h_i) {
      int64_t off = h_i * hd;
      for (int64_t i = 0; i < s; ++i) {
        const T* qi = q.data.data() + i * d + off;
        int64_t klen = past + i + 1;  // causal span
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < klen; ++j) {
          const T* kj = ck.data.data() + j * d + off;
          T dot = T(0);
          for (int64_t e = 0; e < hd; ++e) dot += qi[e] * kj[e];
          dot *= att_scale;
          w[static_cast<size_t>(j)] = dot;
          mx = std::max(mx, dot);
        }
        T sum = T(0);
        for (int64_t j = 0; j < klen; ++j) {
          T e = std::exp(w[static_cast<size_t>(j)] - mx);
          w[static_cast<size_t>(j)] = e;
          sum += e;
        }
        T* arow = att.data.data() + i * d + off;
        for (int64_t j = 0; j < klen; ++j) {
          T wt = w[static_cast<size_t>(j)] / sum;
          const T* vj = cv.data.data() + j * d + off;
          for (int64_t e = 0; e < hd; ++e) arow[e] += wt * vj[e];
        }
      }
    }

    for (const Segment& seg : routing) {
      if (seg.end == seg.begin) continue;
      const LoraAdapter<T>* ad = m.adapter_for(seg.set);
      const typename LoraAdapter<T>::Layer* al =
          ad ? &ad->layers[static_cast<size_t>(layer)] : nullptr;
      detail::project_segment(proj, att, seg.begin, seg.end, blk.wo, al ? &al->o : nullptr,
                              ad ? ad->scaling : T(0));
    }
    add_inplace(h, proj);

    Tensor<T> fn = h;
    rmsnorm_rows(fn, blk.ffn_norm);
    Tensor<T> gate = matmul(fn, blk.w1);
    Tensor<T> up = matmul(fn, blk.w3);
    for (size_t i = 0; i < gate.data.size(); ++i) {
      T x = gate.data[i];
      gate.data[i] = x / (T(1) + std::exp(-x)) * up.data[i];
    }
    Tensor<T> down = matmul(gate, blk.w2);
    add_inplace(h, down);

    out.states.push_back(h);
  }
  cache.len = past + s;
  return out;
}

// Plain forward: everything under the base weights.
template <typename T>
LayeredStates<T> forward_all(const EngineModel<T>& m, const Tensor<T>& embeds, KVCache<T>& cache) {
  return routed_forward(m, embeds, single_segment(embeds.rows(), WeightSet::Theta), cache);
}

}  // namespace ccot
