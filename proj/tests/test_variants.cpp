#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "tpca/smpi.hpp"
#include "tpca/spiked_model.hpp"
#include "tpca/variants.hpp"

using namespace tpca;

TEST(Asymmetric, NoiselessRankOneConvergesWithinThreeSweeps) {
  oracle::Gen g(1);
  for (const DenseTensor::Dims& d : {DenseTensor::Dims{3, 5, 7}, DenseTensor::Dims{6, 6, 4}}) {
    const Vector a = g.unit(d[0]), b = g.unit(d[1]), c = g.unit(d[2]);
    const std::vector<Vector> vs{a, b, c};
    const DenseTensor t = rank_one(4.0, vs);
    const AsymmetricTrial tr = asymmetric_trial(t, detail::asymmetric_init(d, 11), 3, 1, 1e-6, false);
    ASSERT_TRUE(tr.ok);
    EXPECT_NEAR(std::abs(oracle::dot(tr.axes[0], a)), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(oracle::dot(tr.axes[1], b)), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(oracle::dot(tr.axes[2], c)), 1.0, 1e-10);
    EXPECT_NEAR(std::abs(tr.objective), 4.0, 1e-10);
  }
}

TEST(Asymmetric, RecoverPlantedUnequalDims) {
  const SpikedInstance inst = generate_spiked(DenseTensor::Dims{8, 10, 12}, 6.0, 5);
  AsymmetricOptions opt;
  opt.m_init = 20;
  const AsymmetricRecovery r = asymmetric_recover(inst.tensor, 9, opt);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_GT(std::abs(oracle::dot(r.axes[a], inst.spikes[0].axes[a])), 0.9);
  EXPECT_EQ(r.per_trial.size(), 20u);
  for (const auto& tr : r.per_trial) EXPECT_LE(tr.objective, r.objective);
  EXPECT_EQ(r.total_reseeds, 0u);
}

TEST(Asymmetric, SymmetricSpikeObjectiveCrossCheck) {
  const std::size_t n = 12;
  SpikeOptions so;
  so.symmetric_noise = true;
  const SpikedInstance inst = generate_spiked(n, 3, 2.5, 31, so);
  AsymmetricOptions opt;
  opt.m_init = 30;
  const AsymmetricRecovery a = asymmetric_recover(inst.tensor, 4, opt);
  const RecoveryResult s = smpi_recover(inst.tensor, 30, IterationConfig::defaults_for(n), 4);
  // The free maximization over three blocks bounds the symmetric one from above.
  EXPECT_GE(a.objective, s.objective - 1e-9);
  EXPECT_LT(a.objective - s.objective, 0.05 * s.objective);
}

TEST(Asymmetric, DegenerateTrialsAreReseededThenDropped) {
  AsymmetricOptions opt;
  opt.m_init = 2;
  opt.max_reseeds = 3;
  const DenseTensor zero = DenseTensor::zeros({3, 4, 5});
  EXPECT_THROW(asymmetric_recover(zero, 1, opt), DegenerateDirection);
  EXPECT_THROW(asymmetric_recover(DenseTensor::zeros({2, 2, 2, 2}), 1, opt), DimensionError);
}

TEST(Asymmetric, Deterministic) {
  const SpikedInstance inst = generate_spiked(DenseTensor::Dims{5, 6, 7}, 1.5, 3);
  AsymmetricOptions opt;
  opt.m_init = 5;
  const AsymmetricRecovery a = asymmetric_recover(inst.tensor, 8, opt), b = asymmetric_recover(inst.tensor, 8, opt);
  EXPECT_EQ(a.axes, b.axes);
  EXPECT_EQ(a.selected_trial, b.selected_trial);
}

TEST(Deflate, RankOneToZero) {
  oracle::Gen g(2);
  const Vector v = g.unit(4);
  const DenseTensor t = symmetric_rank_one(2.5, v, 3);
  const DenseTensor z = deflate(t, v, 2.5);
  for (double x : z.entries()) EXPECT_NEAR(x, 0.0, 1e-12);
  EXPECT_TRUE(z.is_symmetric());
}

TEST(Deflate, MatchesLoopOracle) {
  oracle::Gen g(3);
  for (int rep = 0; rep < 20; ++rep) {
    const DenseTensor t({2, 2, 2}, g.normals(8));
    const Vector v = g.unit(2);
    const double alpha = g.normal();
    const DenseTensor d = deflate(t, v, alpha);
    const auto ref = oracle::deflate(t.dims(), std::vector<double>(t.entries().begin(), t.entries().end()), v, alpha);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(d.entries()[i], ref[i], 1e-12);
  }
}

TEST(Deflate, Preconditions) {
  EXPECT_THROW(deflate(DenseTensor::zeros({2, 2, 2}), Vector{1.0, 1.0}, 1.0), InvalidArgument);
  EXPECT_THROW(deflate(DenseTensor::zeros({2, 2, 2}), Vector{1.0, 0.0, 0.0}, 1.0), DimensionError);
}

TEST(CpDecompose, RankOneNoiselessExact) {
  oracle::Gen g(4);
  const std::size_t n = 8;
  const Vector v0 = g.unit(n);
  const DenseTensor t = symmetric_rank_one(5.0, v0, 3);
  CpOptions opt;
  opt.m_init = 3;
  const CpResult r = cp_decompose(t, 1, 2, opt);
  ASSERT_EQ(r.spikes.size(), 1u);
  EXPECT_FALSE(r.shortfall);
  EXPECT_NEAR(oracle::dot(r.spikes[0].vector, v0), 1.0, 1e-10);
  EXPECT_NEAR(r.spikes[0].alpha, 5.0, 1e-10);
  EXPECT_DOUBLE_EQ(r.spikes[0].beta_hat, r.spikes[0].alpha / std::sqrt(double(n)));
  for (double x : r.residual.entries()) EXPECT_NEAR(x, 0.0, 1e-10);
}

TEST(CpDecompose, TwoOrthogonalSpikes) {
  SpikeOptions so;
  so.num_spikes = 2;
  so.orthogonal_spikes = true;
  so.symmetric_noise = true;
  const std::size_t n = 20;
  const SpikedInstance inst = generate_spiked(n, 3, 10.0, 12, so);
  CpOptions opt;
  opt.m_init = 40;
  const CpResult r = cp_decompose(inst.tensor, 2, 6, opt);
  ASSERT_EQ(r.spikes.size(), 2u);
  for (const auto& sp : inst.spikes) {
    double best = 0.0;
    for (const auto& c : r.spikes) best = std::max(best, std::abs(oracle::dot(c.vector, sp.vector())));
    EXPECT_GT(best, 0.99);
  }
  for (const auto& c : r.spikes) EXPECT_NEAR(c.beta_hat, 10.0, 0.5);
  for (const auto& e : r.log)
    if (e.accepted) EXPECT_GT(e.iterations, 0u);
}

TEST(CpDecompose, ShortfallOnZeroTensor) {
  CpOptions opt;
  opt.m_init = 3;
  const CpResult r = cp_decompose(DenseTensor::zeros({4, 4, 4}), 2, 1, opt);
  EXPECT_TRUE(r.shortfall);
  EXPECT_TRUE(r.spikes.empty());
  for (const auto& e : r.log) EXPECT_FALSE(e.error.empty());
}

TEST(CpDecompose, ReturnedComponentsAreDistinct) {
  const SpikedInstance inst = generate_spiked(10, 3, 6.0, 2, SpikeOptions{true});
  CpOptions opt;
  opt.m_init = 15;
  const CpResult r = cp_decompose(inst.tensor, 3, 1, opt);
  EXPECT_EQ(r.accepted, static_cast<std::size_t>(std::count_if(r.log.begin(), r.log.end(), [](const CpLogEntry& e) {
              return e.accepted;
            })));
  EXPECT_LE(r.spikes.size(), 3u);
  for (std::size_t i = 0; i < r.spikes.size(); ++i)
    for (std::size_t j = i + 1; j < r.spikes.size(); ++j)
      EXPECT_LE(std::abs(oracle::dot(r.spikes[i].vector, r.spikes[j].vector)), 0.99);
  EXPECT_GT(std::abs(oracle::dot(r.spikes[0].vector, inst.planted())), 0.95);
}
