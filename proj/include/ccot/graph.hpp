#pragma once

#include "ccot/tensor.hpp"

#include <functional>
#include <limits>
#include <unordered_map>

namespace ccot {

// Define-by-run reverse-mode tape over Tensor<T>. Nodes are created in
// evaluation order; backward() replays them exactly once in reverse creation
// order, so gradient accumulation is deterministic. Parameters are leaves
// keyed by an integer identity; parameters that never enter the graph simply
// have zero gradient.
template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* ext = nullptr;
    Tensor<T> grad;
    bool needs_grad = false;
    int param_id = -1;
    std::function<void(Graph&)> back;
  };

  const Tensor<T>& val(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.ext ? *n.ext : n.own;
  }
  Tensor<T>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor<T>(val(id).shape);
    return n.grad;
  }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // ---- leaves ----

  int constant(Tensor<T> v) {
    return push(std::move(v), nullptr, false, -1, {});
  }
  int constant_ref(const Tensor<T>* v) {
    return push(Tensor<T>{}, v, false, -1, {});
  }
  // Differentiable leaf. One node per param id so gradients accumulate in place.
  int param(const Tensor<T>* v, int param_id) {
    auto it = param_nodes_.find(param_id);
    if (it != param_nodes_.end()) return it->second;
    int id = push(Tensor<T>{}, v, true, param_id, {});
    param_nodes_[param_id] = id;
    return id;
  }

  // ---- elementwise and linear ops ----

  int add(int a, int b) {
    Tensor<T> out = val(a);
    add_inplace(out, val(b));
    return unary_binary(std::move(out), a, b, [](Graph& g, int a, int b, int self) {
      const Tensor<T>& go = g.grad(self);
      if (g.needs_grad(a)) add_inplace(g.grad(a), go);
      if (g.needs_grad(b)) add_inplace(g.grad(b), go);
    });
  }

  int mul(int a, int b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("graph mul: shape mismatch");
    Tensor<T> out = va;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    return unary_binary(std::move(out), a, b, [](Graph& g, int a, int b, int self) {
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& va = g.val(a);
      const Tensor<T>& vb = g.val(b);
      if (g.needs_grad(a)) {
        Tensor<T>& ga = g.grad(a);
        for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * vb.data[i];
      }
      if (g.needs_grad(b)) {
        Tensor<T>& gb = g.grad(b);
        for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * va.data[i];
      }
    });
  }

  int scale(int a, T s) {
    Tensor<T> out = val(a);
    for (T& v : out.data) v *= s;
    return unary_binary(std::move(out), a, -1, [s](Graph& g, int a, int, int self) {
      if (g.needs_grad(a)) add_inplace(g.grad(a), g.grad(self), s);
    });
  }

  int matmul(int a, int b) {
    Tensor<T> out = ccot::matmul(val(a), val(b));
    return unary_binary(std::move(out), a, b, [](Graph& g, int a, int b, int self) {
      const Tensor<T>& go = g.grad(self);
      if (g.needs_grad(a)) matmul_acc(g.grad(a), go, g.val(b), T(1), false, true);
      if (g.needs_grad(b)) matmul_acc(g.grad(b), g.val(a), go, T(1), true, false);
    });
  }

  // y = a * b^T  (used by tied LM heads)
  int matmul_nt(int a, int b) {
    Tensor<T> out({val(a).rows(), val(b).rows()});
    matmul_acc(out, val(a), val(b), T(1), false, true);
    return unary_binary(std::move(out), a, b, [](Graph& g, int a, int b, int self) {
      const Tensor<T>& go = g.grad(self);
      if (g.needs_grad(a)) matmul_acc(g.grad(a), go, g.val(b), T(1), false, false);
      if (g.needs_grad(b)) matmul_acc(g.grad(b), go, g.val(a), T(1), true, false);
    });
  }

  int silu(int a) {
    const Tensor<T>& va = val(a);
    Tensor<T> out = va;
    for (T& v : out.data) {
      T s = T(1) / (T(1) + std::exp(-v));
      v = v * s;
    }
    return unary_binary(std::move(out), a, -1, [](Graph& g, int a, int, int self) {
      if (!g.needs_grad(a)) return;
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& va = g.val(a);
      Tensor<T>& ga = g.grad(a);
      for (size_t i = 0; i < va.data.size(); ++i) {
        T x = va.data[i];
        T s = T(1) / (T(1) + std::exp(-x));
        ga.data[i] += go.data[i] * (s + x * s * (T(1) - s));
      }
    });
  }

  // Row-wise RMS norm with learned gain: y_r = x_r / sqrt(mean(x_r^2) + eps) * gain
  int rmsnorm(int x, int gain, T eps) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vg = val(gain);
    int64_t r = vx.rows(), d = vx.cols();
    if (vg.numel() != d) throw std::invalid_argument("rmsnorm: gain size mismatch");
    Tensor<T> out = vx;
    Tensor<T> inv_rms({r});
    for (int64_t i = 0; i < r; ++i) {
      T ms = T(0);
      const T* row = vx.data.data() + i * d;
      for (int64_t j = 0; j < d; ++j) ms += row[j] * row[j];
      ms /= T(d);
      T inv = T(1) / std::sqrt(ms + eps);
      inv_rms[i] = inv;
      T* orow = out.data.data() + i * d;
      for (int64_t j = 0; j < d; ++j) orow[j] = row[j] * inv * vg.data[static_cast<size_t>(j)];
    }
    return unary_binary(std::move(out), x, gain,
                        [inv_rms, eps](Graph& g, int x, int gain, int self) {
      const Tensor<T>& go = g.grad(self);
      const Tensor<T>& vx = g.val(x);
      const Tensor<T>& vg = g.val(gain);
      int64_t r = vx.rows(), d = vx.cols();
      for (int64_t i = 0; i < r; ++i) {
        const T* row = vx.data.data() + i * d;
        const T* grow = go.data.data() + i * d;
        T inv = inv_rms[i];
        if (g.needs_grad(x)) {
          // y_j = x_j * inv * g_j, inv depends on all x
          T dot = T(0);
          for (int64_t j = 0; j < d; ++j) dot += grow[j] * vg.data[static_cast<size_t>(j)] * row[j];
          T coef = dot * inv * inv * inv / T(d);
          T* gx = g.grad(x).data.data() + i * d;
          for (int64_t j = 0; j < d; ++j)
            gx[j] += grow[j] * vg.data[static_cast<size_t>(j)] * inv - coef * row[j];
        }
        if (g.needs_grad(gain)) {
          Tensor<T>& gg = g.grad(gain);
          for (int64_t j = 0; j < d; ++j) gg.data[static_cast<size_t>(j)] += grow[j] * row[j] * inv;
        }
      }
    });
  }

  // Rotary rotation applied head-wise; pos0 is the absolute position of row 0.
  // cos/sin tables are (max_len x head_dim/2).
  int rope(int x, int n_heads, int64_t pos0, const Tensor<T>* cos_t, const Tensor<T>* sin_t) {
    const Tensor<T>& vx = val(x);
    int64_t r = vx.rows(), d = vx.cols();
    int64_t hd = d / n_heads;
    int64_t half = hd / 2;
    Tensor<T> out = vx;
    for (int64_t i = 0; i < r; ++i) {
      const T* c = cos_t->data.data() + (pos0 + i) * half;
      const T* s = sin_t->data.data() + (pos0 + i) * half;
      T* row = out.data.data() + i * d;
      for (int64_t h = 0; h < n_heads; ++h) {
        T* hr = row + h * hd;
        for (int64_t p = 0; p < half; ++p) {
          T x0 = hr[2 * p], x1 = hr[2 * p + 1];
          hr[2 * p] = x0 * c[p] - x1 * s[p];
          hr[2 * p + 1] = x0 * s[p] + x1 * c[p];
        }
      }
    }
    return unary_binary(std::move(out), x, -1,
                        [n_heads, pos0, cos_t, sin_t](Graph& g, int x, int, int self) {
      if (!g.needs_grad(x)) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& gx = g.grad(x);
      int64_t r = go.rows(), d = go.cols();
      int64_t hd = d / n_heads, half = hd / 2;
      for (int64_t i = 0; i < r; ++i) {
        const T* c = cos_t->data.data() + (pos0 + i) * half;
        const T* s = sin_t->data.data() + (pos0 + i) * half;
        const T* grow = go.data.data() + i * d;
        T* gxr = gx.data.data() + i * d;
        for (int64_t h = 0; h < n_heads; ++h) {
          const T* ghr = grow + h * hd;
          T* gxh = gxr + h * hd;
          for (int64_t p = 0; p < half; ++p) {
            // transpose of the rotation: rotate by -angle
            T g0 = ghr[2 * p], g1 = ghr[2 * p + 1];
            gxh[2 * p] += g0 * c[p] + g1 * s[p];
            gxh[2 * p + 1] += -g0 * s[p] + g1 * c[p];
          }
        }
      }
    });
  }

  // Fused causal multi-head attention over a single span. q, k, v are
  // (n x d) with heads laid out contiguously. Softmax weights are cached
  // per head for the backward pass.
  int attention(int q, int k, int v, int n_heads) {
    const Tensor<T>& vq = val(q);
    const Tensor<T>& vk = val(k);
    const Tensor<T>& vv = val(v);
    int64_t n = vq.rows(), d = vq.cols();
    int64_t hd = d / n_heads;
    T scale = T(1) / std::sqrt(static_cast<T>(hd));
    auto probs = std::make_shared<std::vector<Tensor<T>>>();
    probs->reserve(static_cast<size_t>(n_heads));
    Tensor<T> out({n, d});
    for (int h = 0; h < n_heads; ++h) {
      Tensor<T> p({n, n});
      for (int64_t i = 0; i < n; ++i) {
        const T* qi = vq.data.data() + i * d + h * hd;
        // causal: only keys j <= i
        T mx = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j <= i; ++j) {
          const T* kj = vk.data.data() + j * d + h * hd;
          T dot = T(0);
          for (int64_t e = 0; e < hd; ++e) dot += qi[e] * kj[e];
          dot *= scale;
          p.at(i, j) = dot;
          mx = std::max(mx, dot);
        }
        T sum = T(0);
        for (int64_t j = 0; j <= i; ++j) {
          T e = std::exp(p.at(i, j) - mx);
          p.at(i, j) = e;
          sum += e;
        }
        T* orow = out.data.data() + i * d + h * hd;
        for (int64_t j = 0; j <= i; ++j) {
          T w = p.at(i, j) / sum;
          p.at(i, j) = w;
          const T* vj = vv.data.data() + j * d + h * hd;
          for (int64_t e = 0; e < hd; ++e) orow[e] += w * vj[e];
        }
      }
      probs->push_back(std::move(p));
    }
    int self = push(std::move(out), nullptr, needs_grad(q) || needs_grad(k) || needs_grad(v), -1, {});
    if (nodes_[static_cast<size_t>(self)].needs_grad) {
      nodes_[static_cast<size_t>(self)].back = [q, k, v, n_heads, probs, self](Graph& g) {
        const Tensor<T>& go = g.grad(self);
        const Tensor<T>& vq = g.val(q);
        const Tensor<T>& vk = g.val(k);
        const Tensor<T>& vv = g.val(v);
        int64_t n = vq.rows(), d = vq.cols();
        int64_t hd = d / n_heads;
        T scale = T(1) / std::sqrt(static_cast<T>(hd));
        bool nq = g.needs_grad(q), nk = g.needs_grad(k), nv = g.needs_grad(v);
        for (int h = 0; h < n_heads; ++h) {
          const Tensor<T>& p = (*probs)[static_cast<size_t>(h)];
          for (int64_t i = 0; i < n; ++i) {
            const T* goi = go.data.data() + i * d + h * hd;
            // dP[i][j] = dot(go_i, v_j); dS = P * (dP - sum_j dP*P)
            T acc = T(0);
            std::vector<T> dp(static_cast<size_t>(i) + 1);
            for (int64_t j = 0; j <= i; ++j) {
              const T* vj = vv.data.data() + j * d + h * hd;
              T dot = T(0);
              for (int64_t e = 0; e < hd; ++e) dot += goi[e] * vj[e];
              dp[static_cast<size_t>(j)] = dot;
              acc += dot * p.at(i, j);
            }
            for (int64_t j = 0; j <= i; ++j) {
              T w = p.at(i, j);
              T ds = w * (dp[static_cast<size_t>(j)] - acc) * scale;
              if (nv) {
                T* gv = g.grad(v).data.data() + j * d + h * hd;
                for (int64_t e = 0; e < hd; ++e) gv[e] += w * goi[e];
              }
              if (nq) {
                T* gq = g.grad(q).data.data() + i * d + h * hd;
                const T* kj = vk.data.data() + j * d + h * hd;
                for (int64_t e = 0; e < hd; ++e) gq[e] += ds * kj[e];
              }
              if (nk) {
                T* gk = g.grad(k).data.data() + j * d + h * hd;
                const T* qi = vq.data.data() + i * d + h * hd;
                for (int64_t e = 0; e < hd; ++e) gk[e] += ds * qi[e];
              }
            }
          }
        }
      };
    }
    return self;
  }

  // ---- row assembly ----

  int slice(int a, int64_t begin, int64_t end) {
    Tensor<T> out = slice_rows(val(a), begin, end);
    return unary_binary(std::move(out), a, -1, [begin](Graph& g, int a, int, int self) {
      if (!g.needs_grad(a)) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& ga = g.grad(a);
      int64_t c = go.cols();
      for (int64_t i = 0; i < go.rows(); ++i)
        for (int64_t j = 0; j < c; ++j) ga.at(begin + i, j) += go.at(i, j);
    });
  }

  int concat(const std::vector<int>& parts) {
    std::vector<const Tensor<T>*> vs;
    vs.reserve(parts.size());
    for (int p : parts) vs.push_back(&val(p));
    Tensor<T> out = concat_rows(vs);
    bool ng = false;
    for (int p : parts) ng = ng || needs_grad(p);
    int self = push(std::move(out), nullptr, ng, -1, {});
    if (ng) {
      nodes_[static_cast<size_t>(self)].back = [parts, self](Graph& g) {
        const Tensor<T>& go = g.grad(self);
        int64_t r = 0, c = go.cols();
        for (int p : parts) {
          int64_t pr = g.val(p).rows();
          if (g.needs_grad(p)) {
            Tensor<T>& gp = g.grad(p);
            for (int64_t i = 0; i < pr; ++i)
              for (int64_t j = 0; j < c; ++j) gp.at(i, j) += go.at(r + i, j);
          }
          r += pr;
        }
      };
    }
    return self;
  }

  // Repeat a single row (1 x d or d) k times; gradient sums over rows.
  int broadcast_row(int a, int64_t k) {
    const Tensor<T>& va = val(a);
    int64_t d = va.numel();
    Tensor<T> out({k, d});
    for (int64_t i = 0; i < k; ++i)
      std::copy(va.data.begin(), va.data.end(), out.data.begin() + i * d);
    return unary_binary(std::move(out), a, -1, [](Graph& g, int a, int, int self) {
      if (!g.needs_grad(a)) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& ga = g.grad(a);
      int64_t d = ga.numel();
      for (int64_t i = 0; i < go.rows(); ++i)
        for (int64_t j = 0; j < d; ++j) ga.data[static_cast<size_t>(j)] += go.at(i, j);
    });
  }

  // Gather rows of an embedding table; backward scatter-adds into the table.
  int embed_rows(int table, const std::vector<int>& ids) {
    const Tensor<T>& tab = val(table);
    int64_t d = tab.cols();
    Tensor<T> out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tab.rows())
        throw std::invalid_argument("embed: token id out of vocabulary");
      std::copy(tab.data.begin() + ids[i] * d, tab.data.begin() + (ids[i] + 1) * d,
                out.data.begin() + static_cast<int64_t>(i) * d);
    }
    return unary_binary(std::move(out), table, -1, [ids](Graph& g, int table, int, int self) {
      if (!g.needs_grad(table)) return;
      const Tensor<T>& go = g.grad(self);
      Tensor<T>& gt = g.grad(table);
      int64_t d = go.cols();
      for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t j = 0; j < d; ++j) gt.at(ids[i], j) += go.at(static_cast<int64_t>(i), j);
    });
  }

  // ---- losses (scalar outputs) ----

  // Summed token cross entropy: rows with target < 0 are ignored.
  int cross_entropy_sum(int logits, const std::vector<int>& targets) {
    const Tensor<T>& lg = val(logits);
    int64_t r = lg.rows(), c = lg.cols();
    if (static_cast<int64_t>(targets.size()) != r)
      throw std::invalid_argument("cross_entropy: target count mismatch");
    auto soft = std::make_shared<Tensor<T>>(softmax_rows(lg));
    T loss = T(0);
    for (int64_t i = 0; i < r; ++i) {
      if (targets[static_cast<size_t>(i)] < 0) continue;
      T p = soft->at(i, targets[static_cast<size_t>(i)]);
      loss -= std::log(std::max(p, std::numeric_limits<T>::min()));
    }
    Tensor<T> out({1});
    out[0] = loss;
    (void)c;
    return unary_binary(std::move(out), logits, -1,
                        [targets, soft](Graph& g, int logits, int, int self) {
      if (!g.needs_grad(logits)) return;
      T up = g.grad(self)[0];
      Tensor<T>& gl = g.grad(logits);
      int64_t r = gl.rows(), c = gl.cols();
      for (int64_t i = 0; i < r; ++i) {
        int t = targets[static_cast<size_t>(i)];
        if (t < 0) continue;
        for (int64_t j = 0; j < c; ++j) {
          T delta = (j == t) ? T(1) : T(0);
          gl.at(i, j) += up * (soft->at(i, j) - delta);
        }
      }
    });
  }

  // MSE(pred, gold) / (var(gold) + eps) for one vector (or one row).
  int scaled_mse(int pred, const Tensor<T>& gold, T eps) {
    const Tensor<T>& vp = val(pred);
    if (vp.numel() != gold.numel()) throw std::invalid_argument("scaled_mse: size mismatch");
    T denom = variance(gold) + eps;
    T m = T(0);
    for (size_t i = 0; i < vp.data.size(); ++i) {
      T d = vp.data[i] - gold.data[i];
      m += d * d;
    }
    int64_t n = vp.numel();
    m /= T(n);
    Tensor<T> out({1});
    out[0] = m / denom;
    return unary_binary(std::move(out), pred, -1,
                        [gold, denom, n](Graph& g, int pred, int, int self) {
      if (!g.needs_grad(pred)) return;
      T up = g.grad(self)[0];
      const Tensor<T>& vp = g.val(pred);
      Tensor<T>& gp = g.grad(pred);
      T coef = up * T(2) / (T(n) * denom);
      for (size_t i = 0; i < vp.data.size(); ++i)
        gp.data[i] += coef * (vp.data[i] - gold.data[i]);
    });
  }

  // Summed binary cross entropy with logits.
  int bce_logits_sum(int logits, const std::vector<T>& labels) {
    const Tensor<T>& lg = val(logits);
    if (static_cast<size_t>(lg.numel()) != labels.size())
      throw std::invalid_argument("bce: label count mismatch");
    T loss = T(0);
    for (size_t i = 0; i < labels.size(); ++i) {
      T x = lg.data[i], y = labels[i];
      loss += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    Tensor<T> out({1});
    out[0] = loss;
    return unary_binary(std::move(out), logits, -1,
                        [labels](Graph& g, int logits, int, int self) {
      if (!g.needs_grad(logits)) return;
      T up = g.grad(self)[0];
      const Tensor<T>& lg = g.val(logits);
      Tensor<T>& gl = g.grad(logits);
      for (size_t i = 0; i < labels.size(); ++i) {
        T s = T(1) / (T(1) + std::exp(-lg.data[i]));
        gl.data[i] += up * (s - labels[i]);
      }
    });
  }

  int add_scalars(const std::vector<int>& xs) {
    T acc = T(0);
    for (int x : xs) acc += val(x)[0];
    Tensor<T> out({1});
    out[0] = acc;
    bool ng = false;
    for (int x : xs) ng = ng || needs_grad(x);
    int self = push(std::move(out), nullptr, ng, -1, {});
    if (ng) {
      nodes_[static_cast<size_t>(self)].back = [xs, self](Graph& g) {
        T up = g.grad(self)[0];
        for (int x : xs)
          if (g.needs_grad(x)) g.grad(x)[0] += up;
      };
    }
    return self;
  }

  // ---- execution ----

  void backward(int loss) {
    if (val(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grad(loss)[0] = T(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.back || !n.needs_grad) continue;
      if (n.grad.numel() == 0) continue;  // not on any path to the loss
      n.back(*this);
    }
  }

  // Gradient for a parameter id; zero tensor if the parameter was unused.
  Tensor<T> param_grad(int param_id) const {
    auto it = param_nodes_.find(param_id);
    if (it == param_nodes_.end()) return Tensor<T>{};
    const Node& n = nodes_[static_cast<size_t>(it->second)];
    if (n.grad.numel() == 0) return Tensor<T>(val(it->second).shape);
    return n.grad;
  }
  const std::unordered_map<int, int>& param_nodes() const { return param_nodes_; }

 private:
  int push(Tensor<T> own, const Tensor<T>* ext, bool needs, int pid,
           std::function<void(Graph&)> back) {
    Node n;
    n.own = std::move(own);
    n.ext = ext;
    n.needs_grad = needs;
    n.param_id = pid;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <typename F>
  int unary_binary(Tensor<T> out, int a, int b, F&& fn) {
    bool ng = needs_grad(a) || (b >= 0 && needs_grad(b));
    int self = push(std::move(out), nullptr, ng, -1, {});
    if (ng) {
      nodes_[static_cast<size_t>(self)].back = [a, b, self, fn](Graph& g) { fn(g, a, b, self); };
    }
    return self;
  }

  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
};

// Central-difference gradient check. `build` constructs a fresh graph from the
// current parameter values and returns the scalar loss node. Returns the max
// over all parameter coordinates of
//   |analytic - central| / (|analytic| + |central| + 1e-12),
// or +inf when the objective is non-finite.
template <typename T>
double grad_check(const std::function<int(Graph<T>&)>& build,
                  const std::vector<Tensor<T>*>& params, double eps) {
  if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("grad_check: eps out of range");
  Graph<T> g;
  int loss = build(g);
  if (!g.val(loss).all_finite()) return std::numeric_limits<double>::infinity();
  g.backward(loss);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.size());
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T> gr = g.param_grad(static_cast<int>(pi));
    if (gr.numel() == 0) gr = Tensor<T>(params[pi]->shape);
    analytic.push_back(std::move(gr));
  }

  auto eval = [&]() -> double {
    Graph<T> h;
    int l = build(h);
    return static_cast<double>(h.val(l)[0]);
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>* p = params[pi];
    for (size_t i = 0; i < p->data.size(); ++i) {
      T saved = p->data[i];
      p->data[i] = saved + static_cast<T>(eps);
      double fp = eval();
      p->data[i] = saved - static_cast<T>(eps);
      double fm = eval();
      p->data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) return std::numeric_limits<double>::infinity();
      double num = (fp - fm) / (2.0 * eps);
      double ana = static_cast<double>(analytic[pi].data[i]);
      double err = std::abs(ana - num) / (std::abs(ana) + std::abs(num) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ccot
