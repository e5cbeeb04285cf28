#pragma once

// Spiked tensor model:  T = Z + sum_l s_l * v_l1 (x) ... (x) v_lk
// with s_l = sqrt(mean axis dimension) * beta_l.
//
// Draw order from Rng(seed): all noise entries (row-major), then for each
// spike its axis vectors (one shared vector when the spike is symmetric).

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "tpca/dense_tensor.hpp"
#include "tpca/error.hpp"
#include "tpca/rng.hpp"

namespace tpca {

struct Spike {
  /// One unit vector per axis. For a symmetric spike all entries are equal.
  std::vector<Vector> axes;
  double beta = 0.0;
  /// Coefficient of the rank-one term in the observation.
  double scale = 0.0;

  const Vector& vector() const { return axes.front(); }
};

struct SpikedInstance {
  DenseTensor tensor;
  DenseTensor noise;
  std::vector<Spike> spikes;
  std::uint64_t seed = 0;
  bool symmetric_noise = false;

  /// Rank-one coefficient of the first spike.
  double signal_scale() const { return spikes.empty() ? 0.0 : spikes.front().scale; }
  const Vector& planted() const { return spikes.front().vector(); }
};

struct SpikeOptions {
  /// Symmetrize Z before adding the spikes.
  bool symmetric_noise = false;
  std::size_t num_spikes = 1;
  /// Draw a separate unit vector for every axis (forced on when dims differ).
  bool independent_axes = false;
  /// Gram-Schmidt each symmetric spike against the previous ones.
  bool orthogonal_spikes = false;
};

/// sqrt(mean(dims)) * beta.
inline double signal_scale_for(const DenseTensor::Dims& dims, double beta) {
  const double mean =
      std::accumulate(dims.begin(), dims.end(), 0.0, [](double acc, std::size_t d) { return acc + double(d); }) /
      static_cast<double>(dims.size());
  return std::sqrt(mean) * beta;
}

inline SpikedInstance generate_spiked(const DenseTensor::Dims& dims, double beta, std::uint64_t seed,
                                      const SpikeOptions& opt = {}) {
  detail::require(beta >= 0.0 && std::isfinite(beta), "generate_spiked: beta must be finite and >= 0");
  detail::require(opt.num_spikes >= 1, "generate_spiked: need at least one spike");
  DenseTensor zeros = DenseTensor::zeros(dims);  // validates dims
  const std::size_t k = dims.size();
  const bool equal_dims = zeros.has_equal_dims();
  detail::require<DimensionError>(opt.num_spikes == 1 || equal_dims,
                                  "generate_spiked: multiple spikes require equal dims");
  detail::require<DimensionError>(!opt.symmetric_noise || equal_dims,
                                  "generate_spiked: symmetric noise requires equal dims");
  const bool independent = opt.independent_axes || !equal_dims;
  detail::require(!(opt.orthogonal_spikes && independent),
                  "generate_spiked: orthogonal spikes are only supported for symmetric spikes");
  detail::require<DimensionError>(!opt.orthogonal_spikes || opt.num_spikes <= dims[0],
                                  "generate_spiked: more orthogonal spikes than dimensions");

  Rng rng(seed);
  std::vector<double> z(zeros.size());
  rng.fill_normal(z);
  DenseTensor noise(dims, std::move(z));
  if (opt.symmetric_noise) noise = symmetrize(noise);

  const double scale = signal_scale_for(dims, beta);
  std::vector<Spike> spikes;
  DenseTensor tensor = noise;
  for (std::size_t l = 0; l < opt.num_spikes; ++l) {
    Spike sp;
    sp.beta = beta;
    sp.scale = scale;
    if (independent) {
      for (std::size_t a = 0; a < k; ++a) sp.axes.push_back(rng.unit_vector(dims[a]));
      tensor = axpy(scale, rank_one(1.0, sp.axes), tensor);
    } else {
      Vector v = rng.unit_vector(dims[0]);
      if (opt.orthogonal_spikes) {
        for (;;) {
          for (const auto& prev : spikes) {
            const double c = dot(v, prev.vector());
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * prev.vector()[i];
          }
          if (norm(v) > 1e-8) break;
          v = rng.unit_vector(dims[0]);
        }
        v = normalized(v);
      }
      sp.axes.assign(k, v);
      tensor = axpy(1.0, symmetric_rank_one(scale, v, k), tensor);
    }
    spikes.push_back(std::move(sp));
  }
  return SpikedInstance{std::move(tensor), std::move(noise), std::move(spikes), seed, opt.symmetric_noise};
}

/// Equal-dims convenience: n^k tensor.
inline SpikedInstance generate_spiked(std::size_t n, std::size_t k, double beta, std::uint64_t seed,
                                      const SpikeOptions& opt = {}) {
  return generate_spiked(DenseTensor::Dims(k, n), beta, seed, opt);
}

/// Signed correlation <estimate, planted vector of the first spike on axis 0>.
inline double correlation(std::span<const double> estimate, const SpikedInstance& inst) {
  return dot(estimate, inst.planted());
}

}  // namespace tpca
