#pragma once

// Instruments for looking inside a recovery run: the noise/signal split of
// the power-iteration direction, the plateau formula, escapes from
// stagnation windows, and threshold scaling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/power_methods.hpp"
#include "tpca/vector_ops.hpp"

namespace tpca {

struct GradientSplit {
  Vector g_noise;   ///< Z(:,v,...,v)
  Vector g_signal;  ///< s <v,v0>^(k-1) v0
  /// <g_noise / ||g_noise||, v0>.
  double noise_corr = 0.0;
  /// <g_noise, v0> / ||g_signal||; infinite when g_signal vanishes.
  double ratio = 0.0;
};

inline GradientSplit gradient_split(const DenseTensor& z, double s, std::span<const double> v0,
                                    std::span<const double> v) {
  detail::require<DimensionError>(z.has_equal_dims() && v.size() == z.dim(0) && v0.size() == z.dim(0),
                                  "gradient_split: dimension mismatch");
  GradientSplit g;
  g.g_noise = contract_power_leave_one(z, v, 0);
  const double c = dot(v, v0);
  const double coef = s * std::pow(c, static_cast<double>(z.order() - 1));
  g.g_signal.resize(v0.size());
  for (std::size_t i = 0; i < v0.size(); ++i) g.g_signal[i] = coef * v0[i];
  const double gn = norm(g.g_noise), gs = norm(g.g_signal), proj = dot(g.g_noise, v0);
  g.noise_corr = gn > 0.0 ? proj / gn : 0.0;
  g.ratio = gs > 0.0 ? proj / gs : std::copysign(std::numeric_limits<double>::infinity(), proj);
  return g;
}

/// <Z(:,v,...,v) / ||Z(:,v,...,v)||, v0>.
inline double plateau_statistic(const DenseTensor& z, std::span<const double> v, std::span<const double> v0) {
  return dot(normalized(contract_power_leave_one(z, v, 0)), v0);
}

/// Value of the plateau statistic implied at a fixed point v = T(:,v,v)/t
/// with c = <v,v0>, t = ||T(:,v,...,v)|| and signal scale s:
///   c (t - s c^(k-2)) / sqrt(t^2 + s^2 c^(2k-2) - 2 s c^k t),
/// which for k = 3 is c (t - s c) / sqrt(t^2 + s^2 c^4 - 2 s c^3 t).
inline double plateau_predicted(double c, double t, double s, std::size_t k = 3) {
  detail::require(k >= 3, "plateau_predicted: order must be at least 3");
  const double ck2 = std::pow(c, static_cast<double>(k - 2));
  const double radicand = t * t + s * s * ck2 * ck2 * c * c - 2.0 * s * ck2 * c * c * t;
  if (!(radicand > 1e-12 * t * t))
    throw SingularCase("plateau_predicted: noise gradient vanishes (noiseless fixed point)");
  return c * (t - s * ck2) / std::sqrt(radicand);
}

// ---------------------------------------------------------------------------
// Transverse spectrum of the slice matrix T(:,:,m)

struct SymmetricEigen {
  std::vector<double> values;      ///< ascending
  std::vector<Vector> vectors;     ///< vectors[i] pairs with values[i]
  bool converged = false;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (the symmetric
/// part is used if the input is not exactly symmetric).
inline SymmetricEigen jacobi_eigen(const Matrix& input, std::size_t max_sweeps = 100) {
  detail::require<DimensionError>(input.rows == input.cols, "jacobi_eigen: matrix must be square");
  const std::size_t n = input.rows;
  Matrix a(n, n), v(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    v(i, i) = 1.0;
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  }
  SymmetricEigen out;
  double scale = 0.0;
  for (double x : a.data) scale = std::max(scale, std::abs(x));
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-14 * std::max(scale, 1e-300) || scale == 0.0) {
      out.converged = true;
      break;
    }
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  for (std::size_t i : order) {
    out.values.push_back(a(i, i));
    Vector col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v(k, i);
    out.vectors.push_back(std::move(col));
  }
  return out;
}

struct TransverseSpectrum {
  /// Largest-magnitude eigenvalue of P T(:,:,m) P on the complement of m.
  double lambda1 = 0.0;
  Vector w_lambda1;
  /// Smallest eigenvalue on the complement of m and its eigenvector.
  double lambda_min = 0.0;
  Vector w_min;
  bool reliable = false;
};

/// Spectrum of the slice matrix T(:,:,m) restricted to the subspace
/// orthogonal to m (order-3 tensors).
inline TransverseSpectrum transverse_spectrum(const DenseTensor& t, std::span<const double> m) {
  detail::require<DimensionError>(t.order() == 3, "transverse_spectrum: order-3 tensors only");
  const Matrix a = contract_leave_two(t, 0, 1, m);
  const std::size_t n = a.rows;
  // B = P A P with P = I - m m^T; m itself becomes a null direction.
  const Vector am = a.apply(m);
  Vector atm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) atm[j] += a(i, j) * m[i];
  const double mam = dot(m, am);
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) b(i, j) = a(i, j) - m[i] * atm[j] - am[i] * m[j] + m[i] * m[j] * mam;
  const SymmetricEigen eig = jacobi_eigen(b);
  TransverseSpectrum out;
  out.reliable = eig.converged;
  // Drop the eigenpair aligned with m.
  std::size_t skip = 0;
  double best_align = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double al = std::abs(dot(eig.vectors[i], m));
    if (al > best_align) {
      best_align = al;
      skip = i;
    }
  }
  bool have = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == skip) continue;
    if (!have || eig.values[i] < out.lambda_min) {
      out.lambda_min = eig.values[i];
      out.w_min = eig.vectors[i];
    }
    if (!have || std::abs(eig.values[i]) > std::abs(out.lambda1)) {
      out.lambda1 = eig.values[i];
      out.w_lambda1 = eig.vectors[i];
    }
    have = true;
  }
  return out;
}

/// 2 |lambda1| > T(m,m,m): a nearby start is pushed away by power iteration.
inline bool escape_condition(double lambda1, double objective) { return 2.0 * std::abs(lambda1) > objective; }

// ---------------------------------------------------------------------------
// Escape analysis

struct EscapeOptions {
  /// Consecutive iterates closer than this (Euclidean) count as stagnating.
  double stagnation_tol = 1e-3;
  /// Minimum number of stagnating steps forming a window.
  std::size_t window = 20;
};

struct EscapeEvent {
  std::size_t start = 0;  ///< first iteration index of the window
  std::size_t end = 0;    ///< last iteration index of the window
  Vector m;               ///< normalized mean iterate over the window
  double lambda1 = 0.0;
  double lambda_min = 0.0;
  double objective = 0.0;  ///< T(m,m,m)
  bool unstable = false;   ///< escape_condition(lambda1, objective)
  /// |<(v_{e+1} - v_e) / ||.||, w_min>| for the step leaving the window.
  double alignment = 0.0;
  bool reliable = false;
};

/// Stagnation windows of a densely recorded trajectory, excluding a window
/// that runs to the end of the trajectory (the converged state).
inline std::vector<EscapeEvent> escape_analysis(const DenseTensor& t, const Trajectory& traj,
                                                const EscapeOptions& opt = {}) {
  detail::require(opt.window >= 1 && opt.stagnation_tol > 0.0, "escape_analysis: invalid options");
  const auto& it = traj.iterates;
  const auto& idx = traj.iterate_index;
  detail::require(!it.empty() && it.size() == idx.size(), "escape_analysis: trajectory has no recorded iterates");
  for (std::size_t i = 0; i < idx.size(); ++i)
    detail::require(idx[i] == i, "escape_analysis: trajectory must be recorded densely");

  const std::size_t last = it.size() - 1;
  auto step = [&](std::size_t j) {  // distance between iterate j-1 and j
    double d = 0.0;
    for (std::size_t i = 0; i < it[j].size(); ++i) d += (it[j][i] - it[j - 1][i]) * (it[j][i] - it[j - 1][i]);
    return std::sqrt(d);
  };
  std::vector<EscapeEvent> events;
  std::size_t j = 1;
  while (j <= last) {
    if (step(j) >= opt.stagnation_tol) {
      ++j;
      continue;
    }
    const std::size_t run_start = j;
    while (j <= last && step(j) < opt.stagnation_tol) ++j;
    // Steps run_start..j-1 are small; the window spans iterates run_start-1 .. j-1.
    const std::size_t steps = j - run_start;
    if (steps < opt.window || j > last) continue;
    EscapeEvent ev;
    ev.start = run_start - 1;
    ev.end = j - 1;
    Vector mean(it[0].size(), 0.0);
    for (std::size_t q = ev.start; q <= ev.end; ++q)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += it[q][i];
    ev.m = normalized(mean);
    ev.objective = contract_power(t, ev.m);
    const TransverseSpectrum sp = transverse_spectrum(t, ev.m);
    ev.lambda1 = sp.lambda1;
    ev.lambda_min = sp.lambda_min;
    ev.unstable = escape_condition(ev.lambda1, ev.objective);
    ev.reliable = sp.reliable;
    Vector d(mean.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = it[ev.end + 1][i] - it[ev.end][i];
    const double dn = norm(d);
    ev.alignment = dn > 0.0 && !sp.w_min.empty() ? std::abs(dot(d, sp.w_min)) / dn : 0.0;
    events.push_back(std::move(ev));
  }
  return events;
}

// ---------------------------------------------------------------------------
// Threshold scaling

/// Log-log slope (ln beta2 - ln beta1) / (ln n2 - ln n1).
inline double empirical_alpha(double beta1, double n1, double beta2, double n2) {
  detail::require(beta1 > 0.0 && beta2 > 0.0 && n1 > 0.0 && n2 > 0.0, "empirical_alpha: inputs must be positive");
  detail::require(n1 != n2, "empirical_alpha: n1 and n2 must differ");
  return (std::log(beta2) - std::log(beta1)) / (std::log(n2) - std::log(n1));
}

/// Piecewise-linear target correlation curve beta -> corr, flat beyond the ends.
class ReferenceCurve {
 public:
  ReferenceCurve() = default;
  ReferenceCurve(std::vector<double> betas, std::vector<double> corrs) : beta_(std::move(betas)), corr_(std::move(corrs)) {
    detail::require(!beta_.empty() && beta_.size() == corr_.size(), "ReferenceCurve: need matching nonempty columns");
    detail::require(std::is_sorted(beta_.begin(), beta_.end()) &&
                        std::adjacent_find(beta_.begin(), beta_.end()) == beta_.end(),
                    "ReferenceCurve: betas must be strictly increasing");
  }

  static ReferenceCurve constant(double corr) { return ReferenceCurve({0.0}, {corr}); }

  double operator()(double beta) const {
    detail::require(!beta_.empty(), "ReferenceCurve: empty curve");
    if (beta <= beta_.front()) return corr_.front();
    if (beta >= beta_.back()) return corr_.back();
    const auto hi = std::upper_bound(beta_.begin(), beta_.end(), beta) - beta_.begin();
    const auto lo = hi - 1;
    const double w = (beta - beta_[lo]) / (beta_[hi] - beta_[lo]);
    return corr_[lo] + w * (corr_[hi] - corr_[lo]);
  }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& corrs() const noexcept { return corr_; }

 private:
  std::vector<double> beta_, corr_;
};

/// Correlation produced by an algorithm on the instance (n, beta, seed).
using CorrelationProbe = std::function<double(std::size_t n, double beta, std::uint64_t seed)>;

/// Smallest grid beta whose mean correlation over seeds exceeds
/// 0.95 * target(beta); nullopt when no grid point qualifies.
inline std::optional<double> empirical_threshold(const CorrelationProbe& algorithm, std::size_t n,
                                                 std::span<const double> beta_grid,
                                                 const std::function<double(double)>& target,
                                                 std::span<const std::uint64_t> seeds) {
  detail::require(!seeds.empty(), "empirical_threshold: need at least one seed");
  detail::require(std::is_sorted(beta_grid.begin(), beta_grid.end()), "empirical_threshold: grid must be increasing");
  for (double beta : beta_grid) {
    double sum = 0.0;
    for (std::uint64_t s : seeds) sum += algorithm(n, beta, s);
    if (sum / static_cast<double>(seeds.size()) > 0.95 * target(beta)) return beta;
  }
  return std::nullopt;
}

}  // namespace tpca
