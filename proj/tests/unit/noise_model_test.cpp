#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <random>

#include "sirpdoa/errors.hpp"
#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/numerics.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa {
namespace {

const TextureParams kK(TextureKind::Gamma, 1.6, 2.0);
const TextureParams kT(TextureKind::InverseGamma, 1.1, 2.0);

SpeckleCovariance working_q() { return normalize_trace(build_speckle_covariance(6).matrix()); }

TEST(TexturePdf, ExponentialSpecialCase) {
  EXPECT_NEAR(texture_pdf({TextureKind::Gamma, 1.0, 1.0}, 0.5), std::exp(-0.5), 1e-15);
}

TEST(TexturePdf, IntegratesToOne) {
  boost::math::quadrature::exp_sinh<double> integrator;
  for (auto kind : {TextureKind::Gamma, TextureKind::InverseGamma}) {
    for (double a : {1.6, 1.1}) {
      const TextureParams p(kind, a, 2.0);
      const double mass = integrator.integrate([&](double t) { return texture_pdf(p, t); });
      EXPECT_NEAR(mass, 1.0, 1e-6) << to_string(kind) << " a=" << a;
    }
  }
}

TEST(TexturePdf, InverseGammaChangeOfVariables) {
  for (double tau : {0.05, 0.7, 3.0, 40.0}) {
    const double lhs = texture_pdf({TextureKind::InverseGamma, 1.1, 2.0}, tau);
    const double rhs = texture_pdf({TextureKind::Gamma, 1.1, 0.5}, 1.0 / tau) / (tau * tau);
    EXPECT_NEAR(lhs, rhs, 1e-13 * rhs);
  }
}

TEST(TexturePdf, RejectsNonPositive) {
  EXPECT_THROW(log_texture_pdf(kK, 0.0), DomainError);
  EXPECT_THROW(TextureParams(TextureKind::Gamma, -1.0, 2.0), DomainError);
  EXPECT_THROW(TextureParams(TextureKind::Gamma, 1.0, 0.0), DomainError);
}

TEST(TextureMean, KnownValues) {
  EXPECT_DOUBLE_EQ(texture_mean(kK), 3.2);
  EXPECT_NEAR(texture_mean(kT), 20.0, 1e-12);
  EXPECT_DOUBLE_EQ(texture_mean({TextureKind::Gamma, 1.0, 1.0}), 1.0);
  EXPECT_THROW(texture_mean({TextureKind::InverseGamma, 1.0, 2.0}), DomainError);
}

TEST(SampleTextures, GammaMeanAndSupport) {
  const auto taus = sample_textures(kK, 1000000, 17);
  double sum = 0.0;
  for (double t : taus) {
    ASSERT_GT(t, 0.0);
    sum += t;
  }
  EXPECT_NEAR(sum / static_cast<double>(taus.size()), 3.2, 0.03);
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  return d;
}

TEST(SampleTextures, InverseGammaIsReciprocalGamma) {
  const std::size_t n = 100000;
  const auto inv = sample_textures(kT, n, 3);
  std::mt19937_64 rng(99);
  std::gamma_distribution<double> g(1.1, 0.5);
  std::vector<double> ref(n);
  for (double& v : ref) v = 1.0 / g(rng);
  // Critical value at alpha = 0.001 is 1.95 * sqrt(2/n).
  EXPECT_LT(ks_statistic(inv, ref), 1.95 * std::sqrt(2.0 / n));
}

TEST(SpeckleCovariance, ReferenceEntries) {
  const CMatrix q = build_speckle_covariance(6).matrix();
  EXPECT_NEAR(std::abs(q(0, 0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(q(1, 0) - Complex(0.0, 0.9)), 0.0, 1e-15);
  for (int m = 0; m < 6; ++m) {
    for (int n = 0; n < 6; ++n) EXPECT_EQ(q(m, n), std::conj(q(n, m)));
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(q);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_NEAR(build_speckle_covariance(6).trace(), 6.0, 1e-12);
}

TEST(SpeckleCovariance, RejectsNonHermitian) {
  CMatrix q = CMatrix::Identity(3, 3);
  q(0, 1) = 0.5;
  EXPECT_THROW(SpeckleCovariance{q}, DomainError);
}

TEST(SampleNoise, DespeckledCovarianceMatchesQ) {
  const SpeckleCovariance q = working_q();
  const std::size_t t = 100000;
  const NoiseBlock nb = sample_noise(kK, q, t, 8);
  CMatrix cov = CMatrix::Zero(6, 6);
  for (std::size_t k = 0; k < t; ++k) {
    const CVector v = nb.noise.col(static_cast<Eigen::Index>(k)) / std::sqrt(nb.textures[k]);
    cov += v * v.adjoint();
  }
  cov /= static_cast<double>(t);
  EXPECT_LT((cov - q.matrix()).norm() / q.matrix().norm(), 0.02);
}

TEST(SampleNoise, PowerMomentMatchesTextureMean) {
  const SpeckleCovariance q = working_q();
  const std::size_t t = 100000;
  const NoiseBlock nb = sample_noise(kK, q, t, 9);
  const double power = nb.noise.colwise().squaredNorm().sum() / static_cast<double>(t);
  EXPECT_NEAR(power / (texture_mean(kK) * 6.0), 1.0, 0.02);
}

TEST(SampleSpeckle, UnitTextureIsGaussian) {
  const std::size_t t = 100000;
  Rng rng(10);
  const CMatrix s = sample_speckle(SpeckleCovariance(CMatrix::Identity(4, 4)), t, rng);
  const Eigen::ArrayXd re = s.row(0).real().transpose().array();
  const double var = re.square().mean();
  const double kurt = re.pow(4).mean() / (var * var) - 3.0;
  EXPECT_NEAR(var, 0.5, 0.01);
  EXPECT_NEAR(kurt, 0.0, 0.08);
}

TEST(SampleNoise, RequiresNormalizedTrace) {
  EXPECT_THROW(sample_noise(kK, SpeckleCovariance(2.0 * CMatrix::Identity(3, 3)), 5, 1),
               ConfigError);
}

TEST(Snr, DefinitionAndScaling) {
  const SpeckleCovariance q = working_q();
  // T * E{tau} * N = 10 * 20 * 6 gives 0 dB for the t-noise working point.
  SourceWaveforms s(CMatrix::Constant(2, 10, Complex(std::sqrt(60.0), 0.0)));
  EXPECT_NEAR(s.total_power(), 1200.0, 1e-9);
  EXPECT_NEAR(compute_snr(s, kT, q), 1.0, 1e-12);
  const SourceWaveforms doubled(2.0 * s.matrix());
  EXPECT_NEAR(compute_snr(doubled, kT, q), 4.0, 1e-12);
}

TEST(Snr, ScaleRoundTripPreservesPhase) {
  const SpeckleCovariance q = working_q();
  SourceWaveforms s(CMatrix::Constant(2, 10, Complex(0.3, -0.4)));
  s = SourceWaveforms(s.matrix() + CMatrix::Identity(2, 10));
  const SourceWaveforms s10 = scale_waveforms_to_snr(s, db_to_snr(10.0), kK, q);
  const SourceWaveforms s0 = scale_waveforms_to_snr(s, db_to_snr(0.0), kK, q);
  EXPECT_NEAR(snr_to_db(compute_snr(s10, kK, q)), 10.0, 1e-12);
  const double ratio = s10.matrix().norm() / s0.matrix().norm();
  EXPECT_NEAR(ratio, std::sqrt(10.0), 1e-12);
  EXPECT_LT((s10.matrix() / ratio - s0.matrix()).norm(), 1e-12);
  EXPECT_THROW(scale_waveforms_to_snr(s, -1.0, kK, q), DomainError);
}

TEST(ParseTextureKind, Aliases) {
  EXPECT_EQ(parse_texture_kind("K"), TextureKind::Gamma);
  EXPECT_EQ(parse_texture_kind("t"), TextureKind::InverseGamma);
  EXPECT_THROW(parse_texture_kind("weibull"), ConfigError);
}

}  // namespace
}  // namespace sirpdoa
