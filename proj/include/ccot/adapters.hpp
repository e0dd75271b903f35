#pragma once

#include "ccot/model.hpp"

namespace ccot {

// Weight-set ids for segment routing: the base weights and the two adapter
// stacks layered on top of them.
enum class WeightSet { Theta = 0, Phi = 1, Psi = 2 };

inline const char* weight_set_name(WeightSet w) {
  switch (w) {
    case WeightSet::Theta: return "theta";
    case WeightSet::Phi: return "phi";
    case WeightSet::Psi: return "psi";
  }
  return "?";
}

// Low-rank adapter over the attention projections (q, k, v, o) of every
// layer. B matrices start at zero, so a fresh adapter is an exact no-op.
// `trainable` is the per-layer freeze mask consulted by the optimizer and by
// the training graphs.
template <typename T>
struct LoraAdapter {
  struct Pair {
    Tensor<T> A;  // in x rank
    Tensor<T> B;  // rank x out
  };
  struct Layer {
    Pair q, k, v, o;
  };

  int rank = 0;
  T scaling = T(2);  // fixed project-wide constant
  std::vector<Layer> layers;
  std::vector<uint8_t> trainable;

  static LoraAdapter init(const ModelConfig& cfg, int rank, uint64_t seed) {
    LoraAdapter a;
    a.rank = rank;
    Rng rng(seed);
    int64_t d = cfg.hidden_dim;
    a.layers.resize(static_cast<size_t>(cfg.num_layers));
    for (auto& l : a.layers) {
      for (Pair* p : {&l.q, &l.k, &l.v, &l.o}) {
        p->A = Tensor<T>({d, rank});
        fill_normal(p->A, rng, T(0.02));
        p->B = Tensor<T>({rank, d});  // zeros
      }
    }
    a.trainable.assign(static_cast<size_t>(cfg.num_layers), 1);
    return a;
  }

  int num_layers() const { return static_cast<int>(layers.size()); }

  // Restrict optimizer updates to `range` (inclusive indices of adapted
  // blocks, 0-based). An empty range is accepted as a no-op.
  void set_trainable(const std::vector<int>& range) {
    std::fill(trainable.begin(), trainable.end(), 0);
    for (int i : range) {
      if (i < 0 || i >= num_layers())
        throw std::invalid_argument("set_trainable: layer out of range");
      trainable[static_cast<size_t>(i)] = 1;
    }
  }

  void for_each_named(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    for (size_t i = 0; i < layers.size(); ++i) {
      std::string pre = "layers." + std::to_string(i) + ".";
      Layer& l = layers[i];
      fn(pre + "q.A", l.q.A);
      fn(pre + "q.B", l.q.B);
      fn(pre + "k.A", l.k.A);
      fn(pre + "k.B", l.k.B);
      fn(pre + "v.A", l.v.A);
      fn(pre + "v.B", l.v.B);
      fn(pre + "o.A", l.o.A);
      fn(pre + "o.B", l.o.B);
    }
  }

  uint64_t layer_checksum(int layer) const {
    const Layer& l = layers[static_cast<size_t>(layer)];
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Pair* p : {&l.q, &l.k, &l.v, &l.o}) {
      h = fnv1a(p->A.data.data(), p->A.data.size() * sizeof(T), h);
      h = fnv1a(p->B.data.data(), p->B.data.size() * sizeof(T), h);
    }
    return h;
  }
};

// One contiguous stretch of positions computed under a single weight set.
struct Segment {
  int64_t begin = 0;  // relative to the new span
  int64_t end = 0;    // exclusive
  WeightSet set = WeightSet::Theta;
};
using SegmentRouting = std::vector<Segment>;

inline SegmentRouting single_segment(int64_t len, WeightSet set) {
  return {Segment{0, len, set}};
}

inline void validate_routing(const SegmentRouting& routing, int64_t span) {
  int64_t pos = 0;
  for (const Segment& s : routing) {
    if (s.begin != pos || s.end < s.begin)
      throw std::invalid_argument("routing: segments must be contiguous and ordered");
    pos = s.end;
  }
  if (pos != span) throw std::invalid_argument("routing: uncovered position");
}

}  // namespace ccot
