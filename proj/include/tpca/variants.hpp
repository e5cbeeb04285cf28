#pragma once

// Variants of multiple power iteration:
//   asymmetric_recover  rank-one spike u (x) w (x) z with unequal axis lengths,
//                       by alternating block updates (order 3)
//   cp_decompose        low-rank symmetric CP by sequential deflation

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tpca/contraction_kernel.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/power_methods.hpp"
#include "tpca/rng.hpp"
#include "tpca/smpi.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

// ---------------------------------------------------------------------------
// Asymmetric spike

struct AsymmetricOptions {
  std::size_t m_init = 0;  ///< 0 selects 10 * mean dimension
  std::size_t m_iter = 0;  ///< 0 selects 10 * mean dimension
  std::size_t lag = 0;     ///< 0 selects the mean dimension
  double eps = 1e-6;
  /// Stop a trial once every block passes the lag test.
  bool early_stop = true;
  /// Fresh initializations tried before a degenerate trial is given up.
  std::size_t max_reseeds = 8;
};

struct AsymmetricTrial {
  std::size_t trial = 0;
  std::uint64_t init_seed = 0;
  std::array<Vector, 3> axes;
  double objective = -std::numeric_limits<double>::infinity();
  std::size_t sweeps = 0;
  StopReason stop_reason = StopReason::budget_exhausted;
  std::size_t reseeds = 0;
  bool ok = false;
};

struct AsymmetricRecovery {
  std::array<Vector, 3> axes;
  double objective = 0.0;
  std::vector<AsymmetricTrial> per_trial;
  std::size_t selected_trial = 0;
  std::size_t total_reseeds = 0;
};

namespace detail {

inline std::size_t mean_dim(const DenseTensor& t) {
  const auto& d = t.dims();
  return std::max<std::size_t>(1, (std::accumulate(d.begin(), d.end(), std::size_t{0}) + d.size() / 2) / d.size());
}

// Initial block vectors: axes of equal length share one draw.
inline std::array<Vector, 3> asymmetric_init(const DenseTensor::Dims& dims, std::uint64_t seed) {
  Rng rng(seed);
  std::array<Vector, 3> v;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < a; ++b)
      if (dims[b] == dims[a]) {
        v[a] = v[b];
        break;
      }
    if (v[a].empty()) v[a] = rng.unit_vector(dims[a]);
  }
  return v;
}

inline Vector block_update(const DenseTensor& t, std::size_t axis, const std::array<Vector, 3>& v) {
  std::array<Vector, 2> others;
  for (std::size_t a = 0, o = 0; a < 3; ++a)
    if (a != axis) others[o++] = v[a];
  return normalize_step(contract_leave_one(t, axis, others));
}

}  // namespace detail

/// One alternating run: v_a <- T(:,v_b,v_c), v_b <- T(v_a,:,v_c), v_c <- T(v_a,v_b,:),
/// each normalized, repeated for at most m_iter sweeps.
inline AsymmetricTrial asymmetric_trial(const DenseTensor& t, std::array<Vector, 3> v, std::size_t m_iter,
                                        std::size_t lag, double eps, bool early_stop) {
  AsymmetricTrial tr;
  std::vector<std::array<Vector, 3>> ring(lag + 1);
  ring[0] = v;
  std::size_t j = 0;
  while (j < m_iter) {
    for (std::size_t a = 0; a < 3; ++a) v[a] = detail::block_update(t, a, v);
    ++j;
    ring[j % ring.size()] = v;
    if (early_stop && j > lag) {
      const auto& old = ring[(j - lag) % ring.size()];
      bool converged = true;
      for (std::size_t a = 0; a < 3 && converged; ++a) converged = std::abs(dot(old[a], v[a])) >= 1.0 - eps;
      if (converged) {
        tr.stop_reason = StopReason::lag_converged;
        break;
      }
    }
  }
  if (!early_stop && j > lag) {
    const auto& old = ring[(j - lag) % ring.size()];
    bool converged = true;
    for (std::size_t a = 0; a < 3 && converged; ++a) converged = std::abs(dot(old[a], v[a])) >= 1.0 - eps;
    if (converged) tr.stop_reason = StopReason::lag_converged;
  }
  tr.sweeps = j;
  tr.objective = contract_all(t, std::span<const Vector>(v));
  tr.axes = std::move(v);
  tr.ok = true;
  return tr;
}

inline AsymmetricRecovery asymmetric_recover(const DenseTensor& t, std::uint64_t master_seed,
                                             const AsymmetricOptions& opt = {}) {
  detail::require<DimensionError>(t.order() == 3, "asymmetric_recover: order-3 tensors only");
  const std::size_t nbar = detail::mean_dim(t);
  const std::size_t m_init = opt.m_init ? opt.m_init : 10 * nbar;
  const std::size_t m_iter = opt.m_iter ? opt.m_iter : 10 * nbar;
  const std::size_t lag = opt.lag ? opt.lag : nbar;
  detail::require(lag < m_iter, "asymmetric_recover: lag must be smaller than m_iter");
  detail::require(opt.eps > 0.0 && opt.eps < 1.0, "asymmetric_recover: eps must lie in (0, 1)");

  AsymmetricRecovery res;
  std::optional<std::size_t> best;
  for (std::size_t trial = 0; trial < m_init; ++trial) {
    AsymmetricTrial tr;
    tr.trial = trial;
    for (std::size_t attempt = 0; attempt <= opt.max_reseeds; ++attempt) {
      const std::uint64_t seed =
          attempt == 0 ? trial_seed(master_seed, trial) : derive_seed(master_seed, trial, attempt);
      try {
        tr = asymmetric_trial(t, detail::asymmetric_init(t.dims(), seed), m_iter, lag, opt.eps, opt.early_stop);
        tr.init_seed = seed;
        tr.reseeds = attempt;
        break;
      } catch (const DegenerateDirection&) {
        tr.reseeds = attempt + 1;
      }
    }
    tr.trial = trial;
    res.total_reseeds += tr.reseeds;
    if (tr.ok && (!best || tr.objective > res.per_trial[*best].objective)) best = trial;
    res.per_trial.push_back(std::move(tr));
  }
  if (!best) throw DegenerateDirection("asymmetric_recover: every trial degenerated");
  res.selected_trial = *best;
  res.axes = res.per_trial[*best].axes;
  res.objective = res.per_trial[*best].objective;
  return res;
}

// ---------------------------------------------------------------------------
// CP decomposition by deflation

/// T - alpha * v^(x)k; symmetric input stays flagged symmetric.
inline DenseTensor deflate(const DenseTensor& t, std::span<const double> v, double alpha) {
  detail::require<DimensionError>(t.has_equal_dims() && v.size() == t.dim(0), "deflate: vector length mismatch");
  detail::require(is_unit(v), "deflate: vector must have unit norm");
  if (t.is_symmetric()) return axpy(-alpha, symmetric_rank_one(1.0, v, t.order()), t);
  const std::vector<Vector> vs(t.order(), Vector(v.begin(), v.end()));
  return axpy(-alpha, rank_one(1.0, vs), t);
}

struct CpOptions {
  std::size_t m_init = 0;  ///< 0 selects 10 n
  std::size_t m_iter = 0;  ///< 0 selects 10 n
  std::size_t lag = 0;     ///< 0 selects n
  double eps = 1e-6;
  /// Accepted vectors closer than this (absolute inner product) are merged.
  double duplicate_corr = 0.99;
};

struct CpComponent {
  Vector vector;
  /// Coefficient <T^i, v^(x)k> removed at deflation.
  double alpha = 0.0;
  /// alpha / sqrt(n).
  double beta_hat = 0.0;
  /// T(v,...,v) on the original tensor.
  double objective = 0.0;
  std::size_t trial = 0;
};

struct CpLogEntry {
  std::size_t trial = 0;
  bool accepted = false;
  std::size_t iterations = 0;
  double alpha = 0.0;
  std::string error;
};

struct CpResult {
  std::vector<CpComponent> spikes;
  DenseTensor residual;
  std::vector<CpLogEntry> log;
  std::size_t accepted = 0;
  std::size_t merged = 0;
  /// Fewer than p distinct accepted vectors were found.
  bool shortfall = false;
};

inline CpResult cp_decompose(const DenseTensor& input, std::size_t p, std::uint64_t master_seed,
                             const CpOptions& opt = {}) {
  detail::require(p >= 1, "cp_decompose: rank must be at least 1");
  detail::require<DimensionError>(input.has_equal_dims(), "cp_decompose: tensor axes must have equal dimension");
  const DenseTensor t = input.is_symmetric() ? input : symmetrize(input);
  const std::size_t n = t.dim(0);
  const std::size_t m_init = opt.m_init ? opt.m_init : 10 * n;
  IterationConfig cfg;
  cfg.m_iter = opt.m_iter ? opt.m_iter : 10 * n;
  cfg.lag = opt.lag ? opt.lag : n;
  cfg.eps = opt.eps;
  cfg.validate();

  DenseTensor residual = t;
  std::optional<LeaveOneKernel> kernel(std::in_place, residual);
  std::vector<CpComponent> found;
  std::vector<CpLogEntry> log;
  for (std::size_t trial = 0; trial < m_init; ++trial) {
    CpLogEntry entry;
    entry.trial = trial;
    try {
      const Trajectory tr = run_iteration(*kernel, trial_init(master_seed, trial, n), cfg);
      entry.iterations = tr.iterations_used;
      if (tr.stop_reason == StopReason::lag_converged) {
        const Vector& v = tr.final_vector;
        const double alpha = contract_power(residual, v);
        residual = deflate(residual, v, alpha);
        kernel.emplace(residual);
        entry.accepted = true;
        entry.alpha = alpha;
        found.push_back(CpComponent{v, alpha, alpha / std::sqrt(static_cast<double>(n)), contract_power(t, v), trial});
      }
    } catch (const Error& e) {
      entry.error = e.what();
    }
    log.push_back(std::move(entry));
  }

  CpResult res{{}, residual, std::move(log), found.size(), 0, false};
  // Merge near-duplicates, keeping the higher objective on the original tensor.
  std::vector<CpComponent> distinct;
  for (auto& c : found) {
    auto dup = std::find_if(distinct.begin(), distinct.end(), [&](const CpComponent& d) {
      return std::abs(dot(d.vector, c.vector)) > opt.duplicate_corr;
    });
    if (dup == distinct.end()) {
      distinct.push_back(std::move(c));
    } else {
      ++res.merged;
      if (c.objective > dup->objective) *dup = std::move(c);
    }
  }
  // The subset objective is a sum over members, so the best size-p subset is the top p.
  std::stable_sort(distinct.begin(), distinct.end(),
                   [](const CpComponent& a, const CpComponent& b) { return a.objective > b.objective; });
  if (distinct.size() > p) distinct.resize(p);
  res.shortfall = distinct.size() < p;
  res.spikes = std::move(distinct);
  return res;
}

}  // namespace tpca
