#pragma once

// Single-trajectory tensor power iteration with the lag stopping rule.
//
// Indexing: v_0 is the initial vector, v_j the j-th iterate. The run stops at
// the first j > lag with |<v_{j-lag}, v_j>| >= 1 - eps, or after m_iter
// steps. There is deliberately no consecutive-iterate stopping criterion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpca/contraction_kernel.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

enum class Variant { simple, symmetrized };
enum class StopReason { lag_converged, budget_exhausted };

inline const char* to_string(StopReason r) {
  return r == StopReason::lag_converged ? "lag_converged" : "budget_exhausted";
}
inline const char* to_string(Variant v) { return v == Variant::simple ? "simple" : "symmetrized"; }

struct IterationConfig {
  std::size_t m_iter = 1000;
  std::size_t lag = 100;
  double eps = 1e-6;
  bool record_trajectory = false;
  Variant variant = Variant::symmetrized;

  /// m_iter = 10 n, lag = n.
  static IterationConfig defaults_for(std::size_t n) {
    IterationConfig c;
    c.m_iter = 10 * n;
    c.lag = n;
    return c;
  }

  void validate() const {
    detail::require(m_iter >= 1, "IterationConfig: m_iter must be positive");
    detail::require(lag >= 1, "IterationConfig: lag must be positive");
    detail::require(lag < m_iter, "IterationConfig: lag must be smaller than m_iter");
    detail::require(eps > 0.0 && eps < 1.0, "IterationConfig: eps must lie in (0, 1)");
  }
};

struct Trajectory {
  /// Stored iterates (every `stride`-th plus the last); empty unless recorded.
  std::vector<Vector> iterates;
  /// Iteration index j of each stored iterate.
  std::vector<std::size_t> iterate_index;
  /// objectives[j-1] = T(v_j, ..., v_j) for j = 1..iterations_used.
  std::vector<double> objectives;
  StopReason stop_reason = StopReason::budget_exhausted;
  std::size_t iterations_used = 0;
  Vector final_vector;

  double final_objective() const { return objectives.empty() ? 0.0 : objectives.back(); }
};

/// Thinning stride used when recording: 1 up to 10^4 steps, else ceil(m_iter / 10^4).
inline std::size_t thinning_stride(std::size_t m_iter) {
  constexpr std::size_t cap = 10000;
  return m_iter > cap ? (m_iter + cap - 1) / cap : 1;
}

/// Returns y / ||y||, throwing DegenerateDirection when ||y|| < 1e-300.
inline Vector normalize_step(std::span<const double> y) {
  const double nrm = norm(y);
  if (!std::isfinite(nrm)) throw NonFiniteError("power step produced a non-finite vector");
  if (nrm < 1e-300) throw DegenerateDirection("power step: contraction vanished (||T(:,v,v)|| < 1e-300)");
  Vector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] / nrm;
  return out;
}

namespace detail {
inline void require_unit(std::span<const double> v, const char* who) {
  require(is_unit(v), std::string(who) + ": input vector must have unit norm");
}

inline void require_equal_dims_for_power(const DenseTensor& t, std::span<const double> v, const char* who) {
  require<DimensionError>(t.has_equal_dims(), std::string(who) + ": tensor axes must have equal dimension");
  require<DimensionError>(v.size() == t.dim(0), std::string(who) + ": vector length does not match tensor");
}
}  // namespace detail

/// v <- T(:,v,...,v) / ||T(:,v,...,v)||.
inline Vector power_step(const DenseTensor& t, std::span<const double> v) {
  detail::require_equal_dims_for_power(t, v, "power_step");
  detail::require_unit(v, "power_step");
  return normalize_step(contract_power_leave_one(t, v, 0));
}

/// Normalized sum of the k single-axis contractions. Reduces to power_step
/// for tensors flagged symmetric.
inline Vector symmetrized_power_step(const DenseTensor& t, std::span<const double> v) {
  if (t.is_symmetric()) return power_step(t, v);
  detail::require_equal_dims_for_power(t, v, "symmetrized_power_step");
  detail::require_unit(v, "symmetrized_power_step");
  Vector acc(v.size(), 0.0);
  for (std::size_t a = 0; a < t.order(); ++a) {
    const Vector y = contract_power_leave_one(t, v, a);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += y[i];
  }
  return normalize_step(acc);
}

/// g = -T(:,v,...,v) + T(v,...,v) v, the sphere-projected gradient of -T(v,...,v).
inline Vector projected_gradient(const DenseTensor& t, std::span<const double> v) {
  detail::require_equal_dims_for_power(t, v, "projected_gradient");
  const Vector y = contract_power_leave_one(t, v, 0);
  const double obj = dot(v, y);
  Vector g(v.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -y[i] + obj * v[i];
  return g;
}

/// Incremental state of one run. Feed it y = T(:,v,...,v) for the current
/// vector until done(); after the stop rule fires it asks for one more
/// contraction to evaluate the final objective.
class IterationState {
 public:
  IterationState(std::span<const double> v_init, const IterationConfig& cfg)
      : cfg_(cfg), stride_(thinning_stride(cfg.m_iter)), ring_(cfg.lag + 1), current_(v_init.begin(), v_init.end()) {
    cfg_.validate();
    detail::require_unit(v_init, "run_iteration");
    ring_[0] = current_;
    traj_.objectives.reserve(std::min<std::size_t>(cfg.m_iter, 1 << 16));
    if (cfg_.record_trajectory) record(0);
  }

  std::span<const double> current() const noexcept { return current_; }
  bool done() const noexcept { return done_; }
  std::size_t iteration() const noexcept { return j_; }

  void advance(std::span<const double> y) {
    if (done_) return;
    if (j_ >= 1) traj_.objectives.push_back(dot(current_, y));
    if (pending_final_) {
      done_ = true;
      return;
    }
    current_ = normalize_step(y);
    ++j_;
    ring_[j_ % ring_.size()] = current_;
    if (cfg_.record_trajectory && j_ % stride_ == 0) record(j_);
    if (j_ > cfg_.lag && std::abs(dot(ring_[(j_ - cfg_.lag) % ring_.size()], current_)) >= 1.0 - cfg_.eps) {
      finish(StopReason::lag_converged);
    } else if (j_ >= cfg_.m_iter) {
      finish(StopReason::budget_exhausted);
    }
  }

  Trajectory take() {
    detail::require(done_, "IterationState::take: run not finished");
    traj_.final_vector = current_;
    return std::move(traj_);
  }

 private:
  void record(std::size_t j) {
    traj_.iterates.push_back(current_);
    traj_.iterate_index.push_back(j);
  }

  void finish(StopReason r) {
    traj_.stop_reason = r;
    traj_.iterations_used = j_;
    if (cfg_.record_trajectory && (traj_.iterate_index.empty() || traj_.iterate_index.back() != j_)) record(j_);
    pending_final_ = true;
  }

  IterationConfig cfg_;
  std::size_t stride_;
  std::vector<Vector> ring_;
  Vector current_;
  Trajectory traj_;
  std::size_t j_ = 0;
  bool pending_final_ = false;
  bool done_ = false;
};

/// Runs one trajectory against a prepared kernel (the kernel defines the map).
inline Trajectory run_iteration(const LeaveOneKernel& kernel, std::span<const double> v_init,
                                const IterationConfig& cfg) {
  detail::require<DimensionError>(v_init.size() == kernel.dim(), "run_iteration: vector length does not match tensor");
  IterationState st(v_init, cfg);
  KernelWorkspace ws;
  Vector y(kernel.dim());
  while (!st.done()) {
    kernel.apply(st.current(), y, ws);
    st.advance(y);
  }
  return st.take();
}

/// Kernel realizing cfg.variant on T: the tensor itself for the simple
/// variant or symmetric input, its symmetrization otherwise (same direction
/// as the k-term sum at every step).
inline LeaveOneKernel make_kernel(const DenseTensor& t, Variant variant) {
  if (variant == Variant::symmetrized && !t.is_symmetric()) return LeaveOneKernel(symmetrize(t));
  return LeaveOneKernel(t);
}

inline Trajectory run_iteration(const DenseTensor& t, std::span<const double> v_init, const IterationConfig& cfg) {
  cfg.validate();
  detail::require_equal_dims_for_power(t, v_init, "run_iteration");
  return run_iteration(make_kernel(t, cfg.variant), v_init, cfg);
}

/// Outcome of one trial in a batched run: a trajectory or the error text.
struct TrialOutcome {
  std::optional<Trajectory> trajectory;
  std::string error;
};

/// Runs trials [first, last) in lockstep, `width` at a time, refilling slots
/// as trials finish. init(t) supplies v_init for trial t; done(t, outcome)
/// receives each finished trial. Every trial gets bitwise the same result
/// as a lone run_iteration call on the same kernel.
inline void run_lockstep(const LeaveOneKernel& kernel, std::size_t first, std::size_t last,
                         const std::function<Vector(std::size_t)>& init, const IterationConfig& cfg,
                         const std::function<void(std::size_t, TrialOutcome)>& done, std::size_t width = 16) {
  cfg.validate();
  width = std::max<std::size_t>(width, 1);
  struct Slot {
    std::size_t trial;
    IterationState state;
  };
  std::vector<Slot> slots;
  std::size_t next = first;
  auto refill = [&] {
    while (slots.size() < width && next < last) {
      const std::size_t t = next++;
      try {
        Vector v = init(t);
        detail::require<DimensionError>(v.size() == kernel.dim(), "run_lockstep: init vector length mismatch");
        slots.push_back(Slot{t, IterationState(v, cfg)});
      } catch (const Error& e) {
        done(t, TrialOutcome{std::nullopt, e.what()});
      }
    }
  };
  KernelWorkspace ws;
  std::vector<Vector> ys;
  std::vector<const double*> in;
  std::vector<double*> out;
  refill();
  while (!slots.empty()) {
    ys.resize(slots.size(), Vector(kernel.dim()));
    in.clear();
    out.clear();
    for (std::size_t s = 0; s < slots.size(); ++s) {
      in.push_back(slots[s].state.current().data());
      out.push_back(ys[s].data());
    }
    kernel.apply_batch(in, out, ws);
    std::vector<Slot> keep;
    keep.reserve(slots.size());
    for (std::size_t s = 0; s < slots.size(); ++s) {
      try {
        slots[s].state.advance(ys[s]);
      } catch (const Error& e) {
        done(slots[s].trial, TrialOutcome{std::nullopt, e.what()});
        continue;
      }
      if (slots[s].state.done())
        done(slots[s].trial, TrialOutcome{slots[s].state.take(), {}});
      else
        keep.push_back(std::move(slots[s]));
    }
    slots = std::move(keep);
    refill();
  }
}

}  // namespace tpca
