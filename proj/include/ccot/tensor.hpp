#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccot {

// Dense row-major tensor. Rank is dynamic but nearly all kernels operate on
// rank-1 vectors and rank-2 matrices.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      if (e < 0) throw std::invalid_argument("tensor: negative extent");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor row(const std::vector<T>& v) {
    return Tensor({1, static_cast<int64_t>(v.size())}, v);
  }
  static Tensor vec(std::vector<T> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    int64_t r = static_cast<int64_t>(rows.size());
    int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    Tensor t({r, c});
    int64_t i = 0;
    for (const auto& row : rows) {
      if (static_cast<int64_t>(row.size()) != c)
        throw std::invalid_argument("tensor: ragged rows");
      for (const T& v : row) t.data[static_cast<size_t>(i++)] = v;
    }
    return t;
  }
  static Tensor identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : -1); }
  int64_t cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : -1); }

  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

namespace detail {
template <typename T>
using EigenRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<EigenRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const EigenRM<T>>;

template <typename T>
CMapRM<T> as_matrix(const Tensor<T>& t) {
  if (t.rank() == 1) return CMapRM<T>(t.data.data(), 1, t.shape[0]);
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + t.shape_str());
  return CMapRM<T>(t.data.data(), t.shape[0], t.shape[1]);
}
template <typename T>
MapRM<T> as_matrix(Tensor<T>& t) {
  if (t.rank() == 1) return MapRM<T>(t.data.data(), 1, t.shape[0]);
  if (t.rank() != 2) throw std::invalid_argument("expected rank-2 tensor, got " + t.shape_str());
  return MapRM<T>(t.data.data(), t.shape[0], t.shape[1]);
}
}  // namespace detail

// C = A (m x k) * B (k x n)
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto ma = detail::as_matrix(a);
  auto mb = detail::as_matrix(b);
  if (ma.cols() != mb.rows())
    throw std::invalid_argument("matmul: inner extents differ, " + a.shape_str() + " x " + b.shape_str());
  Tensor<T> c({ma.rows(), mb.cols()});
  detail::as_matrix(c).noalias() = ma * mb;
  return c;
}

// C += alpha * A * B, with A optionally transposed.
template <typename T>
void matmul_acc(Tensor<T>& c, const Tensor<T>& a, const Tensor<T>& b, T alpha,
                bool trans_a = false, bool trans_b = false) {
  auto ma = detail::as_matrix(a);
  auto mb = detail::as_matrix(b);
  auto mc = detail::as_matrix(c);
  if (!trans_a && !trans_b)
    mc.noalias() += alpha * (ma * mb);
  else if (trans_a && !trans_b)
    mc.noalias() += alpha * (ma.transpose() * mb);
  else if (!trans_a && trans_b)
    mc.noalias() += alpha * (ma * mb.transpose());
  else
    mc.noalias() += alpha * (ma.transpose() * mb.transpose());
}

// Row-wise softmax with max subtraction. Rows sum to 1 for any finite input.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& m) {
  Tensor<T> out = m;
  int64_t r = m.rows(), c = m.cols();
  if (r < 0) throw std::invalid_argument("softmax_rows: expected matrix");
  for (int64_t i = 0; i < r; ++i) {
    T* row = out.data.data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int64_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  auto ma = detail::as_matrix(a);
  Tensor<T> out({ma.cols(), ma.rows()});
  detail::as_matrix(out) = ma.transpose();
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b, T alpha = T(1)) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += alpha * b.data[i];
}

template <typename T>
Tensor<T> concat_rows(const std::vector<const Tensor<T>*>& parts) {
  int64_t rows = 0, cols = -1;
  for (const auto* p : parts) {
    if (p->numel() == 0) continue;
    if (cols < 0) cols = p->cols();
    if (p->cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p->rows();
  }
  if (cols < 0) cols = 0;
  Tensor<T> out({rows, cols});
  int64_t r = 0;
  for (const auto* p : parts) {
    if (p->numel() == 0) continue;
    std::copy(p->data.begin(), p->data.end(), out.data.begin() + r * cols);
    r += p->rows();
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int64_t begin, int64_t end) {
  if (a.rank() != 2 || begin < 0 || end < begin || end > a.shape[0])
    throw std::invalid_argument("slice_rows: bad range");
  Tensor<T> out({end - begin, a.shape[1]});
  std::copy(a.data.begin() + begin * a.shape[1], a.data.begin() + end * a.shape[1], out.data.begin());
  return out;
}

template <typename T>
Tensor<T> get_row(const Tensor<T>& a, int64_t i) {
  Tensor<T> out({a.shape[1]});
  std::copy(a.data.begin() + i * a.shape[1], a.data.begin() + (i + 1) * a.shape[1], out.data.begin());
  return out;
}

// Population variance across all entries (the per-vector sigma^2 of the scaled loss).
template <typename T>
T variance(const Tensor<T>& v) {
  int64_t n = v.numel();
  if (n == 0) return T(0);
  T mean = std::accumulate(v.data.begin(), v.data.end(), T(0)) / T(n);
  T acc = T(0);
  for (const T& x : v.data) acc += (x - mean) * (x - mean);
  return acc / T(n);
}

template <typename T>
T mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  T acc = T(0);
  for (size_t i = 0; i < a.data.size(); ++i) {
    T d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / T(a.numel());
}

// Deterministic RNG helpers. Distribution shapes are implemented by hand so
// results do not depend on the standard library build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive range
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(gen_() % span);
  }
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do { u1 = uniform(); } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, T stddev) {
  for (T& v : t.data) v = static_cast<T>(rng.normal()) * stddev;
}

// FNV-1a over raw bytes; used for checkpoint digests and freeze checksums.
inline uint64_t fnv1a(const void* ptr, size_t bytes, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(ptr);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
uint64_t checksum(const Tensor<T>& t) {
  return fnv1a(t.data.data(), t.data.size() * sizeof(T));
}

}  // namespace ccot
