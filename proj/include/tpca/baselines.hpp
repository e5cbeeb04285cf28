#pragma once

// Reference recovery methods:
//   naive_pi_recover    a few random starts, consecutive-iterate stopping,
//                       logarithmic iteration budget
//   unfolding_recover   leading left singular vector of an n x n^(k-1) unfolding

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "tpca/contraction_kernel.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/power_methods.hpp"
#include "tpca/rng.hpp"
#include "tpca/smpi.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

struct NaivePiOptions {
  std::size_t n_init = 5;
  /// 0 selects ceil(log_factor * ln n).
  std::size_t max_iter = 0;
  double log_factor = 5.0;
  double eps = 1e-6;
  std::optional<Vector> ground_truth;
};

inline std::size_t naive_pi_budget(std::size_t n, const NaivePiOptions& opt) {
  if (opt.max_iter) return opt.max_iter;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt.log_factor * std::log(double(n)))));
}

/// Best of n_init short runs, each stopped when |<v_{j-1}, v_j>| >= 1 - eps
/// or after the logarithmic budget. The stop reason of a converged trial
/// is reported as lag_converged (a lag of one).
inline RecoveryResult naive_pi_recover(const DenseTensor& t, std::uint64_t master_seed, const NaivePiOptions& opt = {}) {
  detail::require(opt.n_init >= 1, "naive_pi_recover: n_init must be at least 1");
  detail::require(opt.eps > 0.0 && opt.eps < 1.0, "naive_pi_recover: eps must lie in (0, 1)");
  detail::require<DimensionError>(t.has_equal_dims(), "naive_pi_recover: tensor axes must have equal dimension");
  const LeaveOneKernel kernel = t.is_symmetric() ? LeaveOneKernel(t) : LeaveOneKernel(symmetrize(t));
  const std::size_t n = kernel.dim();
  const std::size_t budget = naive_pi_budget(n, opt);

  std::vector<TrialResult> trials;
  KernelWorkspace ws;
  Vector y(n);
  for (std::size_t trial = 0; trial < opt.n_init; ++trial) {
    TrialResult r;
    r.trial = trial;
    r.init_seed = trial_seed(master_seed, trial);
    try {
      Vector v = trial_init(master_seed, trial, n);
      std::size_t j = 0;
      while (j < budget) {
        kernel.apply(v, y, ws);
        Vector next = normalize_step(y);
        ++j;
        const bool close = std::abs(dot(next, v)) >= 1.0 - opt.eps;
        v = std::move(next);
        if (close) {
          r.stop_reason = StopReason::lag_converged;
          break;
        }
      }
      kernel.apply(v, y, ws);
      r.objective = dot(v, y);
      r.iterations_used = j;
      if (opt.ground_truth) r.correlation = dot(v, *opt.ground_truth);
      r.final_vector = std::move(v);
    } catch (const Error& e) {
      r.error = e.what();
    }
    trials.push_back(std::move(r));
  }
  IterationConfig echo;
  echo.m_iter = budget;
  echo.lag = 1;
  echo.eps = opt.eps;
  return assemble_recovery(std::move(trials), opt.n_init, echo, master_seed);
}

struct UnfoldingOptions {
  std::size_t max_iter = 1000;
  double tol = 1e-10;
  /// Seed of the deterministic start vector.
  std::uint64_t start_seed = 0x5eed;
};

struct UnfoldingResult {
  Vector estimate;
  /// Estimated top eigenvalue of M M^T (squared top singular value).
  double eigenvalue = 0.0;
  /// ||M M^T w - lambda w|| at termination.
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Set when the iteration cap was reached before convergence.
  bool warning = false;
};

namespace detail {

// Unfolding of `axis` against the remaining axes in their original order, row-major.
inline std::vector<double> unfold(const DenseTensor& t, std::size_t axis) {
  const std::size_t n = t.dim(axis);
  const std::size_t cols = t.size() / n;
  if (axis == 0) return std::vector<double>(t.entries().begin(), t.entries().end());
  std::vector<double> m(t.size());
  const auto& dims = t.dims();
  std::vector<std::size_t> idx(t.order(), 0);
  const auto entries = t.entries();
  for (std::size_t off = 0; off < t.size(); ++off) {
    std::size_t col = 0;
    for (std::size_t a = 0; a < t.order(); ++a)
      if (a != axis) col = col * dims[a] + idx[a];
    m[idx[axis] * cols + col] = entries[off];
    for (std::size_t a = t.order(); a-- > 0;) {
      if (++idx[a] < dims[a]) break;
      idx[a] = 0;
    }
  }
  return m;
}

}  // namespace detail

/// Leading left singular vector of the unfolding along `axis`, by power
/// iteration w <- M M^T w with matrix-free products. The sign is chosen to
/// maximize T(v,...,v).
inline UnfoldingResult unfolding_recover(const DenseTensor& t, std::size_t axis = 0, const UnfoldingOptions& opt = {}) {
  detail::require<DimensionError>(t.has_equal_dims(), "unfolding_recover: tensor axes must have equal dimension");
  detail::require<DimensionError>(axis < t.order(), "unfolding_recover: axis out of range");
  const std::size_t n = t.dim(axis);
  const std::size_t cols = t.size() / n;
  const std::vector<double> m = detail::unfold(t, axis);
  std::vector<double> u(cols);
  Vector y(n);
  auto mmt = [&](const Vector& w, Vector& out) {
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w[i];
      const double* row = m.data() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) u[c] += wi * row[c];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = dot(std::span<const double>(m.data() + i * cols, cols), u);
  };

  UnfoldingResult res;
  Rng rng(opt.start_seed);
  Vector w = rng.unit_vector(n);
  for (res.iterations = 0; res.iterations < opt.max_iter;) {
    mmt(w, y);
    Vector next = normalize_step(y);
    ++res.iterations;
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff += (next[i] - w[i]) * (next[i] - w[i]);
    w = std::move(next);
    if (std::sqrt(diff) <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.warning = !res.converged;
  mmt(w, y);
  res.eigenvalue = dot(w, y);
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) r2 += (y[i] - res.eigenvalue * w[i]) * (y[i] - res.eigenvalue * w[i]);
  res.residual = std::sqrt(r2);

  Vector neg(w.size());
  std::transform(w.begin(), w.end(), neg.begin(), [](double x) { return -x; });
  res.estimate = contract_power(t, neg) > contract_power(t, w) ? std::move(neg) : std::move(w);
  return res;
}

}  // namespace tpca
