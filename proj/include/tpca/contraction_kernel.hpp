#pragma once

// Precomputed operator v -> T(:, v, ..., v) used by every iteration engine.
//
// The tensor is laid out as a row matrix R (one row per free index i) and the
// input is lifted to a feature vector f(v), so that T(:,v,...,v) = R f(v):
//
//   symmetric T : columns are the nondecreasing (k-1)-tuples c, with
//                 f_c = multinomial(c) * prod_{j in c} v_j (about half the
//                 work and memory of the full layout for k = 3)
//   general T   : columns are all (k-1)-tuples, f = v^{(x)(k-1)}
//
// Each output entry is accumulated in kLanes interleaved partial sums over
// the column index (lane l takes columns = l mod kLanes), in column order,
// and the lanes are reduced in a fixed tree. That arithmetic depends only on
// the row and the feature vector, never on how many vectors share a batch
// or where they sit in it, so apply() and apply_batch() agree bitwise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"

namespace tpca {

namespace detail {

inline double madd(double a, double b, double c) {
#if defined(__FMA__)
  return std::fma(a, b, c);
#else
  return a * b + c;
#endif
}

}  // namespace detail

struct KernelWorkspace {
  std::vector<double> features;
};

class LeaveOneKernel {
 public:
  static constexpr std::size_t kLanes = 8;
  static constexpr std::size_t kRowTile = 4;
  static constexpr std::size_t kColTile = 4;

  /// Symmetric tensors use the packed layout; others the full layout. The
  /// free index is always axis 0 and every axis must have the same length.
  explicit LeaveOneKernel(const DenseTensor& t) : n_(t.dim(0)), order_(t.order()), packed_(t.is_symmetric()) {
    detail::require<DimensionError>(t.has_equal_dims(), "LeaveOneKernel: all axis dimensions must be equal");
    rows_padded_ = (n_ + kRowTile - 1) / kRowTile * kRowTile;
    const auto entries = t.entries();
    const auto& st = t.strides();
    if (packed_) {
      std::vector<std::size_t> sorted;
      detail::for_each_orbit(n_, order_ - 1, [&](std::span<const std::size_t> idx) {
        double w = static_cast<double>(detail::factorial(order_ - 1));
        std::size_t run = 1;
        for (std::size_t a = 1; a < idx.size(); ++a) {
          run = idx[a] == idx[a - 1] ? run + 1 : 1;
          w /= static_cast<double>(run);
        }
        weights_.push_back(w);
        for (std::size_t j : idx) combos_.push_back(static_cast<std::uint32_t>(j));
      });
      columns_ = weights_.size();
    } else {
      columns_ = t.size() / n_;
    }
    columns_padded_ = (columns_ + kLanes - 1) / kLanes * kLanes;
    rows_.assign(rows_padded_ * columns_padded_, 0.0);
    if (packed_) {
      const std::size_t km1 = order_ - 1;
      for (std::size_t i = 0; i < n_; ++i) {
        double* dst = rows_.data() + i * columns_padded_;
        for (std::size_t c = 0; c < columns_; ++c) {
          std::size_t off = i * st[0];
          for (std::size_t a = 0; a < km1; ++a) off += combos_[c * km1 + a] * st[a + 1];
          dst[c] = entries[off];
        }
      }
    } else {
      for (std::size_t i = 0; i < n_; ++i)
        std::copy_n(entries.data() + i * columns_, columns_, rows_.data() + i * columns_padded_);
    }
  }

  std::size_t dim() const noexcept { return n_; }
  std::size_t order() const noexcept { return order_; }
  bool packed() const noexcept { return packed_; }

  /// y = T(:, v, ..., v).
  void apply(std::span<const double> v, std::span<double> y, KernelWorkspace& ws) const {
    detail::require<DimensionError>(v.size() == n_ && y.size() == n_, "LeaveOneKernel::apply: length mismatch");
    ws.features.resize(columns_padded_);
    lift(v, ws.features.data(), 1, 0);
    double out[kRowTile];
    for (std::size_t r0 = 0; r0 < rows_padded_; r0 += kRowTile) {
      tile<1>(ws.features.data(), 1, r0, 0, out, 1);
      for (std::size_t r = 0; r < kRowTile && r0 + r < n_; ++r) y[r0 + r] = out[r];
    }
  }

  Vector apply(std::span<const double> v) const {
    KernelWorkspace ws;
    Vector y(n_);
    apply(v, y, ws);
    return y;
  }

  /// ys[b] = T(:, vs[b], ..., vs[b]) for every b.
  void apply_batch(std::span<const double* const> vs, std::span<double* const> ys, KernelWorkspace& ws) const {
    detail::require<DimensionError>(vs.size() == ys.size(), "LeaveOneKernel::apply_batch: size mismatch");
    const std::size_t count = vs.size();
    if (count == 0) return;
    const std::size_t width = (count + kColTile - 1) / kColTile * kColTile;
    ws.features.resize(columns_padded_ * width);
    for (std::size_t b = 0; b < count; ++b) lift(std::span<const double>(vs[b], n_), ws.features.data(), width, b);
    for (std::size_t b = count; b < width; ++b) lift({}, ws.features.data(), width, b);
    double out[kRowTile * kColTile];
    for (std::size_t r0 = 0; r0 < rows_padded_; r0 += kRowTile) {
      for (std::size_t c0 = 0; c0 < width; c0 += kColTile) {
        tile<kColTile>(ws.features.data(), width, r0, c0, out, kColTile);
        for (std::size_t c = 0; c < kColTile && c0 + c < count; ++c)
          for (std::size_t r = 0; r < kRowTile && r0 + r < n_; ++r) ys[c0 + c][r0 + r] = out[r * kColTile + c];
      }
    }
  }

  /// Bytes held by the row matrix.
  std::size_t footprint_bytes() const noexcept { return rows_.size() * sizeof(double); }

 private:
  // Writes f(v) into column `col` of a feature block laid out [blk][col][lane],
  // zero padded. An empty v writes an all-zero column.
  void lift(std::span<const double> v, double* feats, std::size_t width, std::size_t col) const {
    auto at = [&](std::size_t p) -> double& { return feats[((p / kLanes) * width + col) * kLanes + p % kLanes]; };
    for (std::size_t c = v.empty() ? 0 : columns_; c < columns_padded_; ++c) at(c) = 0.0;
    if (v.empty()) return;
    if (packed_ && order_ == 3) {
      std::size_t c = 0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double vj = v[j];
        for (std::size_t l = j; l < n_; ++l, ++c) at(c) = weights_[c] * vj * v[l];
      }
    } else if (packed_) {
      const std::size_t km1 = order_ - 1;
      for (std::size_t c = 0; c < columns_; ++c) {
        double f = weights_[c];
        for (std::size_t a = 0; a < km1; ++a) f *= v[combos_[c * km1 + a]];
        at(c) = f;
      }
    } else {
      std::vector<double> cur{1.0};
      for (std::size_t a = 0; a + 1 < order_; ++a) {
        std::vector<double> next(cur.size() * n_);
        for (std::size_t o = 0; o < cur.size(); ++o)
          for (std::size_t i = 0; i < n_; ++i) next[o * n_ + i] = cur[o] * v[i];
        cur = std::move(next);
      }
      for (std::size_t c = 0; c < columns_; ++c) at(c) = cur[c];
    }
  }

  static_assert(kLanes == 8, "lane reduction below is written for 8 lanes");

  template <std::size_t C>
  void tile(const double* feats, std::size_t width, std::size_t r0, std::size_t c0, double* out,
            std::size_t out_stride) const {
    double acc[kRowTile][C][kLanes] = {};
    const std::size_t blocks = columns_padded_ / kLanes;
    const double* base = rows_.data() + r0 * columns_padded_;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      const double* f = feats + (blk * width + c0) * kLanes;
      for (std::size_t r = 0; r < kRowTile; ++r) {
        const double* p = base + r * columns_padded_ + blk * kLanes;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t l = 0; l < kLanes; ++l) acc[r][c][l] = detail::madd(p[l], f[c * kLanes + l], acc[r][c][l]);
      }
    }
    for (std::size_t r = 0; r < kRowTile; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const auto& a = acc[r][c];
        out[r * out_stride + c] = ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
      }
  }

  std::size_t n_;
  std::size_t order_;
  bool packed_;
  std::size_t rows_padded_ = 0;
  std::size_t columns_ = 0;
  std::size_t columns_padded_ = 0;
  std::vector<double> rows_;
  std::vector<double> weights_;
  std::vector<std::uint32_t> combos_;
};

}  // namespace tpca
