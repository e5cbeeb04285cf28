#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tpca/error.hpp"

namespace tpca {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require<DimensionError>(a.size() == b.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Returns a/|a|. Throws DegenerateDirection when |a| < floor.
inline Vector normalized(std::span<const double> a, double floor = 1e-300) {
  const double nrm = norm(a);
  if (!std::isfinite(nrm)) throw NonFiniteError("normalized: non-finite norm");
  if (nrm < floor) throw DegenerateDirection("normalized: vector norm below " + std::to_string(floor));
  Vector out(a.begin(), a.end());
  for (double& x : out) x /= nrm;
  return out;
}

inline bool is_unit(std::span<const double> v, double tol = 1e-10) {
  return std::abs(norm(v) - 1.0) <= tol;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace tpca
