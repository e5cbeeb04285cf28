#pragma once

// Selective multiple power iteration: many random starts, each run to the
// lag stopping rule, then maximum-likelihood selection by T(v,...,v).

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tpca/contraction_kernel.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/power_methods.hpp"
#include "tpca/rng.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t init_seed = 0;
  Vector final_vector;
  double objective = -std::numeric_limits<double>::infinity();
  std::size_t iterations_used = 0;
  StopReason stop_reason = StopReason::budget_exhausted;
  /// Signed <final_vector, v0>; set only when ground truth was supplied.
  std::optional<double> correlation;
  /// Present when the run recorded its trajectory.
  std::optional<Trajectory> trajectory;
  /// Non-empty when the trial failed (degenerate direction and the like).
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct RecoveryResult {
  Vector estimate;
  double objective = 0.0;
  std::vector<TrialResult> per_trial;
  std::size_t selected_trial = 0;
  std::size_t failed_trials = 0;
  // Configuration echo.
  std::size_t m_init = 0;
  IterationConfig config;
  std::uint64_t master_seed = 0;
};

struct SmpiOptions {
  /// Worker threads; results do not depend on this.
  std::size_t threads = 1;
  /// Trials advanced together through the batched kernel.
  std::size_t batch_width = 16;
  /// Planted vector, used only to fill TrialResult::correlation.
  std::optional<Vector> ground_truth;
};

/// Seed of the initialization stream of trial t.
inline std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial) { return derive_seed(master_seed, trial); }

/// Uniform unit vector drawn from the trial's stream.
inline Vector trial_init(std::uint64_t master_seed, std::size_t trial, std::size_t n) {
  Rng rng(trial_seed(master_seed, trial));
  return rng.unit_vector(n);
}

/// Index and copy of the candidate maximizing T(v,...,v); ties go to the lowest index.
inline std::pair<std::size_t, Vector> select_best(std::span<const Vector> candidates, const DenseTensor& t) {
  detail::require(!candidates.empty(), "select_best: empty candidate list");
  std::size_t best = 0;
  double best_obj = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double obj = contract_power(t, candidates[i]);
    if (obj > best_obj) {
      best_obj = obj;
      best = i;
    }
  }
  return {best, candidates[best]};
}

/// Runs trials [0, m_init) on a prepared kernel and returns them in trial order.
inline std::vector<TrialResult> run_trials(const LeaveOneKernel& kernel, std::size_t m_init, const IterationConfig& cfg,
                                           std::uint64_t master_seed, const SmpiOptions& opt = {}) {
  const std::size_t n = kernel.dim();
  std::vector<TrialResult> trials(m_init);
  auto init = [&](std::size_t t) { return trial_init(master_seed, t, n); };
  auto done = [&](std::size_t t, TrialOutcome out) {
    TrialResult& r = trials[t];
    r.trial = t;
    r.init_seed = trial_seed(master_seed, t);
    if (!out.trajectory) {
      r.error = out.error;
      return;
    }
    Trajectory& tr = *out.trajectory;
    r.final_vector = tr.final_vector;
    r.objective = tr.final_objective();
    r.iterations_used = tr.iterations_used;
    r.stop_reason = tr.stop_reason;
    if (opt.ground_truth) r.correlation = dot(r.final_vector, *opt.ground_truth);
    if (cfg.record_trajectory) r.trajectory = std::move(tr);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.threads, m_init));
  if (workers == 1) {
    run_lockstep(kernel, 0, m_init, init, cfg, done, opt.batch_width);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = m_init * w / workers, hi = m_init * (w + 1) / workers;
      pool.emplace_back([&, lo, hi] { run_lockstep(kernel, lo, hi, init, cfg, done, opt.batch_width); });
    }
  }
  return trials;
}

/// Selects the best successful trial and assembles the result.
inline RecoveryResult assemble_recovery(std::vector<TrialResult> trials, std::size_t m_init, const IterationConfig& cfg,
                                        std::uint64_t master_seed) {
  RecoveryResult res;
  res.m_init = m_init;
  res.config = cfg;
  res.master_seed = master_seed;
  std::optional<std::size_t> best;
  for (const auto& r : trials) {
    if (!r.ok()) {
      ++res.failed_trials;
      continue;
    }
    if (!best || r.objective > trials[*best].objective) best = r.trial;
  }
  if (!best) throw DegenerateDirection("smpi_recover: every trial degenerated");
  res.selected_trial = *best;
  res.estimate = trials[*best].final_vector;
  res.objective = trials[*best].objective;
  res.per_trial = std::move(trials);
  return res;
}

/// Non-symmetric input is symmetrized first, so the variant in cfg is immaterial.
inline RecoveryResult smpi_recover(const DenseTensor& t, std::size_t m_init, const IterationConfig& cfg,
                                   std::uint64_t master_seed, const SmpiOptions& opt = {}) {
  detail::require(m_init >= 1, "smpi_recover: m_init must be at least 1");
  detail::require<DimensionError>(t.has_equal_dims(), "smpi_recover: tensor axes must have equal dimension");
  cfg.validate();
  const LeaveOneKernel kernel = t.is_symmetric() ? LeaveOneKernel(t) : LeaveOneKernel(symmetrize(t));
  return assemble_recovery(run_trials(kernel, m_init, cfg, master_seed, opt), m_init, cfg, master_seed);
}

struct SuccessStats {
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_corr = 0.9;
  double p = 0.0;

  /// Starts needed to succeed at least once with probability r:
  /// ceil(ln(1-r) / ln(1-p)); infinity when p = 0, 1 when p = 1.
  double m_for_rate(double r) const {
    detail::require(r > 0.0 && r < 1.0, "m_for_rate: rate must lie in (0, 1)");
    if (p <= 0.0) return std::numeric_limits<double>::infinity();
    if (p >= 1.0) return 1.0;
    // The small slack keeps exact integer ratios from rounding up.
    return std::max(1.0, std::ceil(std::log1p(-r) / std::log1p(-p) - 1e-9));
  }
};

/// Success fraction over trials carrying a correlation; failed trials count as misses.
inline SuccessStats success_stats(std::span<const TrialResult> results, double success_corr = 0.9) {
  detail::require(success_corr > 0.0 && success_corr < 1.0, "success_stats: success_corr must lie in (0, 1)");
  SuccessStats s;
  s.success_corr = success_corr;
  for (const auto& r : results) {
    if (r.ok() && !r.correlation) throw InvalidArgument("success_stats: trial without ground-truth correlation");
    ++s.trials;
    if (r.ok() && std::abs(*r.correlation) >= success_corr) ++s.successes;
  }
  s.p = s.trials ? static_cast<double>(s.successes) / static_cast<double>(s.trials) : 0.0;
  return s;
}

/// Same statistic from a bare fraction.
inline SuccessStats success_stats_from_fraction(double p) {
  detail::require(p >= 0.0 && p <= 1.0, "success_stats: p must lie in [0, 1]");
  SuccessStats s;
  s.p = p;
  return s;
}

}  // namespace tpca
