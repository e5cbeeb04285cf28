#pragma once

// Dense order-k tensors stored row-major, plus the multilinear contractions
// every algorithm in the library is built from.
//
//   contract_all(T, {v1..vk})        = sum T[i1..ik] v1[i1] ... vk[ik]
//   contract_leave_one(T, a, {...})  = vector over axis a, all other axes contracted
//   contract_leave_two(T, a, b, v)   = matrix over axes (a, b), order-3 only
//
// A tensor flagged symmetric has equal dims and is bitwise invariant under
// index permutation. Library constructors that produce symmetric tensors
// (symmetrize, symmetric_rank_one, axpy of symmetric operands) compute one
// value per permutation orbit and copy it to every member, so the flag is exact.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tpca/error.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

class DenseTensor;

namespace detail {
struct TensorAccess;
}

/// Small row-major dense matrix (slices of order-3 tensors).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vector apply(std::span<const double> x) const {
    detail::require<DimensionError>(x.size() == cols, "Matrix::apply: length mismatch");
    Vector y(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += data[i * cols + j] * x[j];
      y[i] = s;
    }
    return y;
  }
};

class DenseTensor {
 public:
  using Dims = std::vector<std::size_t>;

  /// General tensor. Requires order >= 3, positive dims, finite entries, and
  /// entries.size() == product(dims).
  DenseTensor(Dims dims, std::vector<double> entries) : dims_(std::move(dims)), data_(std::move(entries)) {
    validate();
  }

  /// Tensor that the caller asserts is symmetric; verified exactly.
  static DenseTensor symmetric(Dims dims, std::vector<double> entries);

  static DenseTensor zeros(Dims dims) {
    const std::size_t count = checked_count(dims);
    return DenseTensor(std::move(dims), std::vector<double>(count, 0.0));
  }

  std::size_t order() const noexcept { return dims_.size(); }
  const Dims& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const double> entries() const noexcept { return data_; }
  const std::vector<std::size_t>& strides() const noexcept { return strides_; }
  bool is_symmetric() const noexcept { return symmetric_; }

  bool has_equal_dims() const noexcept {
    return std::all_of(dims_.begin(), dims_.end(), [&](std::size_t d) { return d == dims_.front(); });
  }

  std::size_t offset(std::span<const std::size_t> idx) const {
    detail::require<DimensionError>(idx.size() == order(), "DenseTensor: index arity mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      detail::require<DimensionError>(idx[a] < dims_[a], "DenseTensor: index out of range");
      off += idx[a] * strides_[a];
    }
    return off;
  }

  double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
  double operator()(std::initializer_list<std::size_t> idx) const {
    return at(std::span<const std::size_t>(idx.begin(), idx.size()));
  }

 private:
  friend struct detail::TensorAccess;

  struct Trusted {};
  DenseTensor(Trusted, Dims dims, std::vector<double> entries, bool symmetric)
      : dims_(std::move(dims)), data_(std::move(entries)), symmetric_(symmetric) {
    compute_strides();
  }

  static std::size_t checked_count(const Dims& dims) {
    detail::require<DimensionError>(dims.size() >= 3, "DenseTensor: order must be at least 3");
    std::size_t count = 1;
    for (std::size_t d : dims) {
      detail::require<DimensionError>(d > 0, "DenseTensor: dimensions must be positive");
      count *= d;
    }
    return count;
  }

  void validate() {
    const std::size_t count = checked_count(dims_);
    detail::require<DimensionError>(data_.size() == count,
                                    "DenseTensor: entry count " + std::to_string(data_.size()) +
                                        " does not match product of dims " + std::to_string(count));
    detail::require<NonFiniteError>(all_finite(data_), "DenseTensor: entries must be finite");
    compute_strides();
  }

  void compute_strides() {
    strides_.assign(dims_.size(), 1);
    for (std::size_t a = dims_.size(); a-- > 1;) strides_[a - 1] = strides_[a] * dims_[a];
  }

  Dims dims_;
  std::vector<double> data_;
  std::vector<std::size_t> strides_;
  bool symmetric_ = false;
};

namespace detail {

struct TensorAccess {
  static DenseTensor make(DenseTensor::Dims dims, std::vector<double> entries, bool symmetric) {
    return DenseTensor(DenseTensor::Trusted{}, std::move(dims), std::move(entries), symmetric);
  }
};

/// Visits every nondecreasing index tuple (one representative per
/// permutation orbit) of an order-k tensor with side n.
template <class F>
void for_each_orbit(std::size_t n, std::size_t k, F&& fn) {
  std::vector<std::size_t> idx(k, 0);
  for (;;) {
    fn(std::span<const std::size_t>(idx));
    std::size_t a = k;
    while (a > 0 && idx[a - 1] == n - 1) --a;
    if (a == 0) return;
    const std::size_t next = idx[a - 1] + 1;
    for (std::size_t b = a - 1; b < k; ++b) idx[b] = next;
  }
}

/// Calls fn(offset) for each distinct permutation of a sorted index tuple.
template <class F>
void for_each_permutation_offset(std::span<const std::size_t> sorted_idx, std::span<const std::size_t> strides,
                                 F&& fn) {
  std::array<std::size_t, 8> p{};
  const std::size_t k = sorted_idx.size();
  require<Unsupported>(k <= p.size(), "symmetric tensors of order above 8 are not supported");
  std::copy(sorted_idx.begin(), sorted_idx.end(), p.begin());
  do {
    std::size_t off = 0;
    for (std::size_t a = 0; a < k; ++a) off += p[a] * strides[a];
    fn(off);
  } while (std::next_permutation(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k)));
}

/// Contracts `axis` of a raw row-major array with v. Returns the reduced array
/// and shrinks dims in place.
inline std::vector<double> contract_axis(std::span<const double> data, std::vector<std::size_t>& dims,
                                         std::size_t axis, std::span<const double> v) {
  const std::size_t len = dims[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
  for (std::size_t a = axis + 1; a < dims.size(); ++a) inner *= dims[a];
  std::vector<double> out(outer * inner, 0.0);
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const double* row = data.data() + o * len;
      double s = 0.0;
      for (std::size_t l = 0; l < len; ++l) s += row[l] * v[l];
      out[o] = s;
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = out.data() + o * inner;
      for (std::size_t l = 0; l < len; ++l) {
        const double* src = data.data() + (o * len + l) * inner;
        const double w = v[l];
        for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in] * w;
      }
    }
  }
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

inline std::size_t factorial(std::size_t k) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace detail

inline DenseTensor DenseTensor::symmetric(Dims dims, std::vector<double> entries) {
  DenseTensor t(std::move(dims), std::move(entries));
  detail::require<DimensionError>(t.has_equal_dims(), "DenseTensor::symmetric: dims must be equal");
  const auto& st = t.strides_;
  detail::for_each_orbit(t.dims_[0], t.order(), [&](std::span<const std::size_t> idx) {
    std::size_t base = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) base += idx[a] * st[a];
    const double ref = t.data_[base];
    detail::for_each_permutation_offset(idx, st, [&](std::size_t off) {
      if (t.data_[off] != ref) throw InvalidArgument("DenseTensor::symmetric: entries are not permutation invariant");
    });
  });
  t.symmetric_ = true;
  return t;
}

/// Sum over all index tuples of T[i1..ik] v1[i1] ... vk[ik].
inline double contract_all(const DenseTensor& t, std::span<const Vector> vs) {
  detail::require<DimensionError>(vs.size() == t.order(), "contract_all: need one vector per axis");
  for (std::size_t a = 0; a < vs.size(); ++a)
    detail::require<DimensionError>(vs[a].size() == t.dim(a),
                                    "contract_all: vector " + std::to_string(a) + " length mismatch");
  std::vector<std::size_t> dims = t.dims();
  std::vector<double> cur(t.entries().begin(), t.entries().end());
  for (std::size_t a = t.order(); a-- > 0;) cur = detail::contract_axis(cur, dims, a, vs[a]);
  const double r = cur[0];
  detail::require<NonFiniteError>(std::isfinite(r), "contract_all: non-finite result");
  return r;
}

/// T(v, v, ..., v).
inline double contract_power(const DenseTensor& t, std::span<const double> v) {
  std::vector<Vector> vs(t.order(), Vector(v.begin(), v.end()));
  return contract_all(t, vs);
}

/// Vector over `axis`; `vs` holds one vector per remaining axis, in axis order.
inline Vector contract_leave_one(const DenseTensor& t, std::size_t axis, std::span<const Vector> vs) {
  detail::require<DimensionError>(axis < t.order(), "contract_leave_one: axis out of range");
  detail::require<DimensionError>(vs.size() + 1 == t.order(), "contract_leave_one: need order-1 vectors");
  std::vector<std::size_t> dims = t.dims();
  std::vector<double> cur(t.entries().begin(), t.entries().end());
  // Contract from the last axis down so earlier axis positions stay valid.
  for (std::size_t a = t.order(); a-- > 0;) {
    if (a == axis) continue;
    const std::size_t vi = a < axis ? a : a - 1;
    detail::require<DimensionError>(vs[vi].size() == t.dim(a),
                                    "contract_leave_one: vector for axis " + std::to_string(a) + " length mismatch");
    cur = detail::contract_axis(cur, dims, a, vs[vi]);
  }
  return cur;
}

/// T(:, v, ..., v) with the free index on `axis`.
inline Vector contract_power_leave_one(const DenseTensor& t, std::span<const double> v, std::size_t axis = 0) {
  std::vector<Vector> vs(t.order() - 1, Vector(v.begin(), v.end()));
  return contract_leave_one(t, axis, vs);
}

/// Order-3 slice matrix: entry (i, j) = sum_l T[..i..j..l..] v[l] with i on
/// axis_a and j on axis_b.
inline Matrix contract_leave_two(const DenseTensor& t, std::size_t axis_a, std::size_t axis_b,
                                 std::span<const double> v) {
  if (t.order() != 3) throw Unsupported("contract_leave_two: only order-3 tensors are supported");
  detail::require<DimensionError>(axis_a < 3 && axis_b < 3 && axis_a != axis_b,
                                  "contract_leave_two: held axes must be two distinct axes");
  const std::size_t c = 3 - axis_a - axis_b;
  detail::require<DimensionError>(v.size() == t.dim(c), "contract_leave_two: vector length mismatch");
  std::vector<std::size_t> dims = t.dims();
  std::vector<double> cur = detail::contract_axis(t.entries(), dims, c, v);
  // cur is laid out as (min(a,b), max(a,b)).
  Matrix m(t.dim(axis_a), t.dim(axis_b));
  const bool transpose = axis_a > axis_b;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = transpose ? cur[j * m.rows + i] : cur[i * m.cols + j];
  return m;
}

/// Average over all k! index permutations. Requires equal dims.
inline DenseTensor symmetrize(const DenseTensor& t) {
  detail::require<DimensionError>(t.has_equal_dims(), "symmetrize: all axis dimensions must be equal");
  const std::size_t k = t.order();
  detail::require<Unsupported>(k <= 8, "symmetrize: orders above 8 are not supported");
  const std::size_t n = t.dim(0);
  const auto& st = t.strides();
  const auto src = t.entries();
  std::vector<double> out(t.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(detail::factorial(k));
  std::array<std::size_t, 8> perm{};
  detail::for_each_orbit(n, k, [&](std::span<const std::size_t> idx) {
    std::iota(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k), std::size_t{0});
    double sum = 0.0;
    do {
      std::size_t off = 0;
      for (std::size_t a = 0; a < k; ++a) off += idx[perm[a]] * st[a];
      sum += src[off];
    } while (std::next_permutation(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k)));
    const double value = sum * inv;
    detail::for_each_permutation_offset(idx, st, [&](std::size_t off) { out[off] = value; });
  });
  return detail::TensorAccess::make(t.dims(), std::move(out), true);
}

/// scale * v1 (x) v2 (x) ... (x) vk.
inline DenseTensor rank_one(double scale, std::span<const Vector> vs) {
  detail::require<DimensionError>(vs.size() >= 3, "rank_one: order must be at least 3");
  DenseTensor::Dims dims;
  for (const auto& v : vs) dims.push_back(v.size());
  std::vector<double> cur{scale};
  for (const auto& v : vs) {
    std::vector<double> next(cur.size() * v.size());
    for (std::size_t o = 0; o < cur.size(); ++o)
      for (std::size_t i = 0; i < v.size(); ++i) next[o * v.size() + i] = cur[o] * v[i];
    cur = std::move(next);
  }
  return DenseTensor(std::move(dims), std::move(cur));
}

/// scale * v^{(x)k}, bitwise symmetric.
inline DenseTensor symmetric_rank_one(double scale, std::span<const double> v, std::size_t k) {
  detail::require<DimensionError>(k >= 3, "symmetric_rank_one: order must be at least 3");
  detail::require<DimensionError>(!v.empty(), "symmetric_rank_one: empty vector");
  const std::size_t n = v.size();
  DenseTensor::Dims dims(k, n);
  std::vector<std::size_t> st(k, 1);
  for (std::size_t a = k; a-- > 1;) st[a - 1] = st[a] * n;
  std::size_t count = 1;
  for (std::size_t a = 0; a < k; ++a) count *= n;
  std::vector<double> out(count);
  detail::for_each_orbit(n, k, [&](std::span<const std::size_t> idx) {
    double value = scale;
    for (std::size_t i : idx) value *= v[i];
    detail::for_each_permutation_offset(idx, st, [&](std::size_t off) { out[off] = value; });
  });
  detail::require<NonFiniteError>(all_finite(out), "symmetric_rank_one: non-finite entries");
  return detail::TensorAccess::make(std::move(dims), std::move(out), true);
}

/// y + alpha * x, entrywise. Symmetric when both operands are.
inline DenseTensor axpy(double alpha, const DenseTensor& x, const DenseTensor& y) {
  detail::require<DimensionError>(x.dims() == y.dims(), "axpy: dims mismatch");
  std::vector<double> out(y.entries().begin(), y.entries().end());
  const auto xs = x.entries();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * xs[i];
  detail::require<NonFiniteError>(all_finite(out), "axpy: non-finite entries");
  return detail::TensorAccess::make(y.dims(), std::move(out), x.is_symmetric() && y.is_symmetric());
}

inline double inner(const DenseTensor& a, const DenseTensor& b) {
  detail::require<DimensionError>(a.dims() == b.dims(), "inner: dims mismatch");
  return dot(a.entries(), b.entries());
}

inline double frobenius_norm(const DenseTensor& t) { return norm(t.entries()); }

/// FNV-1a over dims and entry bytes; used to confirm paired inputs.
inline std::uint64_t content_hash(const DenseTensor& t) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (std::size_t d : t.dims()) {
    const std::uint64_t d64 = d;
    mix(&d64, sizeof d64);
  }
  mix(t.entries().data(), t.entries().size() * sizeof(double));
  return h;
}

}  // namespace tpca
