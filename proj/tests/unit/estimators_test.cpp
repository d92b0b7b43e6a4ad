#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <random>

#include "sirpdoa/errors.hpp"
#include "sirpdoa/estimators.hpp"
#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/oracle.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa {
namespace {

const ArrayGeometry kGeom = ArrayGeometry::uniform_linear(6);

DoaVector doas(std::vector<double> deg) { return DoaVector::from_degrees(deg); }

CMatrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  CMatrix m(r, c);
  for (auto& v : m.reshaped()) {
    const double re = nd(rng);
    v = Complex(re, nd(rng));
  }
  return m;
}

CMatrix random_pd(Eigen::Index n, Rng& rng) {
  const CMatrix b = random_matrix(n, n, rng);
  return b * b.adjoint() + CMatrix::Identity(n, n);
}

SpeckleCovariance working_q() { return normalize_trace(build_speckle_covariance(6).matrix()); }

struct Scene {
  DoaVector theta;
  SourceWaveforms s;
  Snapshots x;
  std::vector<double> taus;
};

Scene make_scene(const TextureParams& p, double snr_db, std::uint64_t seed, std::size_t t = 10) {
  const DoaVector theta = doas({30.0, 60.0});
  const SpeckleCovariance q = working_q();
  const SourceWaveforms raw = generate_waveforms(2, t, derive_seed(seed, Stream::kWaveforms), 1.0);
  const SourceWaveforms s = scale_waveforms_to_snr(raw, db_to_snr(snr_db), p, q);
  const NoiseBlock nb = sample_noise(p, q, t, derive_seed(seed, Stream::kNoise));
  return Scene{theta, s, synthesize(kGeom, theta, s, nb.noise), nb.textures};
}

TEST(ConditionalLl, NoiselessIdentity) {
  const DoaVector theta = doas({30.0, 60.0});
  const SourceWaveforms s = generate_waveforms(2, 10, 1, 1.0);
  const Snapshots x = synthesize(kGeom, theta, s, CMatrix::Zero(6, 10));
  const std::vector<double> ones(10, 1.0);
  const double ll = conditional_log_likelihood(x, kGeom, theta, s,
                                               hermitian_factor(CMatrix::Identity(6, 6)), ones);
  EXPECT_NEAR(ll, -60.0 * std::log(kPi), 1e-9);
}

TEST(ConditionalLl, MatchesDirectEvaluation) {
  Rng rng(2);
  const ArrayGeometry g3 = ArrayGeometry::uniform_linear(3);
  for (int k = 0; k < 20; ++k) {
    const DoaVector theta = doas({-20.0 + k});
    const SourceWaveforms s(random_matrix(1, 2, rng));
    const CMatrix q = random_pd(3, rng);
    const Snapshots x(random_matrix(3, 2, rng));
    const std::vector<double> taus{0.3 + 0.1 * k, 2.5};
    const double got = conditional_log_likelihood(x, g3, theta, s, hermitian_factor(q), taus);
    const double want =
        oracle::conditional_ll_direct(x.matrix(), steering_matrix(g3, theta), s.matrix(), q, taus);
    EXPECT_NEAR(got, want, 1e-10 * std::abs(want));
  }
}

TEST(ConditionalLl, TextureScaling) {
  Rng rng(3);
  const Scene sc = make_scene({TextureKind::Gamma, 1.6, 2.0}, 5.0, 4);
  const HermitianFactor f = hermitian_factor(working_q());
  const double c = 3.7;
  std::vector<double> scaled = sc.taus;
  for (double& t : scaled) t *= c;
  const CMatrix r = residuals(sc.x, kGeom, sc.theta, sc.s);
  double rho = 0.0;
  for (Eigen::Index t = 0; t < r.cols(); ++t) {
    rho += (f.inv_sqrt * r.col(t)).squaredNorm() / sc.taus[static_cast<std::size_t>(t)];
  }
  const double base = conditional_log_likelihood(sc.x, kGeom, sc.theta, sc.s, f, sc.taus);
  const double moved = conditional_log_likelihood(sc.x, kGeom, sc.theta, sc.s, f, scaled);
  EXPECT_NEAR(moved - base, -60.0 * std::log(c) - (1.0 / c - 1.0) * rho, 1e-9 * std::abs(base));
}

TEST(JointLl, AddsLogPrior) {
  const Scene sc = make_scene({TextureKind::Gamma, 1.6, 2.0}, 5.0, 5);
  const SpeckleCovariance q = working_q();
  EstimatorState st{0, sc.theta, sc.s, q, sc.taus, 1.0, 1.0};
  const double lc =
      conditional_log_likelihood(sc.x, kGeom, sc.theta, sc.s, hermitian_factor(q), sc.taus);
  double tau_sum = 0.0;
  for (double t : sc.taus) tau_sum += t;
  EXPECT_NEAR(joint_log_likelihood(sc.x, kGeom, st, TextureKind::Gamma) - lc, -tau_sum, 1e-9);

  st.shape_a = 1.1;
  st.scale_b = 2.0;
  double prior = 0.0;
  for (double t : sc.taus) prior += log_texture_pdf({TextureKind::InverseGamma, 1.1, 2.0}, t);
  EXPECT_NEAR(joint_log_likelihood(sc.x, kGeom, st, TextureKind::InverseGamma), lc + prior,
              1e-9 * std::abs(lc));
  st.shape_a.reset();
  EXPECT_THROW(joint_log_likelihood(sc.x, kGeom, st, TextureKind::Gamma), DomainError);
}

TEST(TauMl, ZeroResidualAndIdentity) {
  const DoaVector theta = doas({30.0});
  const CVector s = CVector::Constant(1, Complex(0.7, 0.2));
  const CVector x = steering_matrix(kGeom, theta) * s;
  const CMatrix id = CMatrix::Identity(6, 6);
  EXPECT_NEAR(estimate_tau_ml(x, kGeom, theta, s, id), 0.0, 1e-28);
  Rng rng(6);
  const CVector r = random_matrix(6, 1, rng);
  EXPECT_NEAR(estimate_tau_ml(x + r, kGeom, theta, s, id), r.squaredNorm() / 6.0, 1e-12);
}

TEST(TauMap, ZeroResidualBranches) {
  EXPECT_NEAR(tau_map_from_quadratic(0.0, 6, 1.1, 2.0, TextureKind::InverseGamma), 2.0 / 8.1,
              1e-15);
  EXPECT_EQ(tau_map_from_quadratic(0.0, 6, 1.6, 2.0, TextureKind::Gamma), 0.0);
  // Above N+1 the K branch stays positive with zero residual.
  EXPECT_NEAR(tau_map_from_quadratic(0.0, 6, 9.0, 2.0, TextureKind::Gamma), 4.0, 1e-14);
}

TEST(ClosedForms, AgreeWithBruteForceOracles) {
  for (const auto& name : oracle::suite_names()) {
    const auto r = oracle::run_suite(name, name == "waveforms" ? 20 : 100, 77);
    EXPECT_TRUE(r.passed) << name << " max error " << r.max_error;
  }
}

TEST(UpdateQMl, OrthogonalResiduals) {
  // T = N residuals along the standard basis with equal norms.
  const DoaVector theta = doas({20.0});
  const SourceWaveforms s(CMatrix::Zero(1, 6));
  const Snapshots x(CMatrix(2.0 * CMatrix::Identity(6, 6)));
  const CMatrix q = update_q_ml(x, kGeom, theta, s, CMatrix::Identity(6, 6));
  EXPECT_LT((q - CMatrix::Identity(6, 6)).norm(), 1e-14);
  EXPECT_NEAR(q.trace().real(), 6.0, 1e-14);
}

TEST(UpdateQ, HermitianAndCompositions) {
  Rng rng(8);
  const DoaVector theta = doas({-10.0, 40.0});
  for (int k = 0; k < 20; ++k) {
    const Snapshots x(random_matrix(6, 10, rng));
    const SourceWaveforms s(random_matrix(2, 10, rng, 0.3));
    const CMatrix q_inv = random_pd(6, rng).inverse();
    const CMatrix ml = update_q_ml(x, kGeom, theta, s, q_inv);
    EXPECT_LT((ml - ml.adjoint()).norm(), 1e-12 * ml.norm());

    for (auto kind : {TextureKind::Gamma, TextureKind::InverseGamma}) {
      const CMatrix map = update_q_map(x, kGeom, theta, s, q_inv, 1.6, 2.0, kind);
      EXPECT_LT((map - map.adjoint()).norm(), 1e-12 * map.norm());
      std::vector<double> taus;
      for (Eigen::Index t = 0; t < 10; ++t) {
        taus.push_back(estimate_tau_map(x.matrix().col(t), kGeom, theta, s.matrix().col(t), q_inv,
                                        1.6, 2.0, kind));
      }
      const CMatrix comp = update_q_given_tau(x, kGeom, theta, s, taus);
      EXPECT_LT((map - comp).norm(), 1e-10 * comp.norm());
    }

    // t branch in the b -> 0 limit is the ML update rescaled by N / (a + N + 1).
    const double a = 1.1;
    const CMatrix t0 =
        update_q_map(x, kGeom, theta, s, q_inv, a, 1e-300, TextureKind::InverseGamma);
    EXPECT_LT((ml - (6.0 / (a + 7.0)) * t0).norm(), 1e-12 * ml.norm());
  }
}

TEST(UpdateQMl, DegenerateResidual) {
  const DoaVector theta = doas({30.0});
  const SourceWaveforms s(CMatrix::Ones(1, 3));
  const Snapshots x(steering_matrix(kGeom, theta) * s.matrix());
  EXPECT_THROW(update_q_ml(x, kGeom, theta, s, CMatrix::Identity(6, 6)), DegenerateResidualError);
}

TEST(Waveforms, NoiselessRecoveryAndScalarLs) {
  Rng rng(9);
  const DoaVector theta = doas({30.0, 60.0});
  const SourceWaveforms s(random_matrix(2, 10, rng));
  const Snapshots x = synthesize(kGeom, theta, s, CMatrix::Zero(6, 10));
  const SourceWaveforms got = estimate_waveforms(x, kGeom, theta, hermitian_factor(random_pd(6, rng)));
  EXPECT_LT((got.matrix() - s.matrix()).norm(), 1e-10);

  const DoaVector one = doas({-25.0});
  const Snapshots y(random_matrix(6, 4, rng));
  const CVector a = steering_vector(kGeom, one[0]);
  const SourceWaveforms ls =
      estimate_waveforms(y, kGeom, one, hermitian_factor(CMatrix::Identity(6, 6)));
  const CMatrix want = a.adjoint() * y.matrix() / a.squaredNorm();
  EXPECT_LT((ls.matrix() - want).norm(), 1e-12);
}

TEST(EstimateB, ConstantTextures) {
  const std::vector<double> ones(20, 1.0);
  EXPECT_NEAR(estimate_b(ones, 1.6, TextureKind::Gamma), 1.0 / 1.6, 1e-14);
  const std::vector<double> c(20, 2.5);
  EXPECT_NEAR(estimate_b(c, 1.1, TextureKind::InverseGamma), 1.1 * 2.5, 1e-13);
}

TEST(EstimateB, RecoversScaleFromDraws) {
  const auto taus = sample_textures({TextureKind::Gamma, 1.6, 2.0}, 10000, 31);
  EXPECT_NEAR(estimate_b(taus, 1.6, TextureKind::Gamma) / 2.0, 1.0, 0.05);
}

TEST(EstimateA, ShapeEquationRoot) {
  // ln(mean) - mean(ln) = 0.6 for this two-point sample.
  const double d = 0.6;
  // Solve cosh-type identity: with values e^{u}, e^{-u}: ln(cosh u) = d.
  const double u = std::acosh(std::exp(d));
  const std::vector<double> taus{std::exp(u), std::exp(-u)};
  const ShapeEstimate a = estimate_a(taus, TextureKind::Gamma);
  EXPECT_FALSE(a.clamped);
  auto f = [d](double x) { return std::log(x) - boost::math::digamma(x) - d; };
  boost::math::tools::eps_tolerance<double> tol(50);
  const auto bracket = boost::math::tools::bisect(f, 1e-3, 1e3, tol);
  const double want = 0.5 * (bracket.first + bracket.second);
  EXPECT_NEAR(a.value, want, 1e-9 * want);
  EXPECT_NEAR(a.value, 0.96598, 1e-4);
}

TEST(EstimateA, EqualTexturesClamp) {
  const std::vector<double> same(10, 3.0);
  const ShapeEstimate a = estimate_a(same, TextureKind::Gamma);
  EXPECT_TRUE(a.clamped);
  EXPECT_EQ(a.value, 1e3);
}

TEST(EstimateA, RecoversShapeFromDraws) {
  for (auto kind : {TextureKind::Gamma, TextureKind::InverseGamma}) {
    const double a_true = kind == TextureKind::Gamma ? 1.6 : 1.1;
    const auto taus = sample_textures({kind, a_true, 2.0}, 10000, 32);
    EXPECT_NEAR(estimate_a(taus, kind).value / a_true, 1.0, 0.10) << to_string(kind);
  }
}

TEST(EstimateTheta, NoiselessAndWeightInvariance) {
  const SpeckleCovariance q = working_q();
  const HermitianFactor f = hermitian_factor(q);
  const DoaVector theta = doas({30.0, 60.0});
  const SourceWaveforms s = generate_waveforms(2, 10, 12, 1.0);
  const Snapshots x = synthesize(kGeom, theta, s, CMatrix::Zero(6, 10));
  const std::vector<double> ones(10, 1.0);
  const DoaVector got = estimate_theta(x, kGeom, ones, f, 2, GridSpec{});
  EXPECT_LT(rad_to_deg(got.max_abs_difference(theta)), 0.01);

  const Scene sc = make_scene({TextureKind::Gamma, 1.6, 2.0}, 10.0, 13);
  const DoaVector w1 = estimate_theta(sc.x, kGeom, sc.taus, f, 2, GridSpec{});
  std::vector<double> scaled = sc.taus;
  for (double& t : scaled) t *= 64.0;
  EXPECT_EQ(estimate_theta(sc.x, kGeom, scaled, f, 2, GridSpec{}), w1);
}

TEST(EstimateTheta, SingleSourceMatchesFineScan) {
  Rng rng(14);
  const std::vector<double> ones(10, 1.0);
  const HermitianFactor id = hermitian_factor(CMatrix::Identity(6, 6));
  const Snapshots x = synthesize(kGeom, doas({30.0}), generate_waveforms(1, 10, 15, 100.0),
                                 random_matrix(6, 10, rng, std::sqrt(0.5)));
  const DoaVector got = estimate_theta(x, kGeom, ones, id, 1, GridSpec{});
  double best = 0.0;
  double best_v = INFINITY;
  for (double deg = -89.99; deg < 90.0; deg += 0.01) {
    const double v = theta_objective(x, kGeom, ones, id, std::vector<double>{deg_to_rad(deg)});
    if (v < best_v) {
      best_v = v;
      best = deg;
    }
  }
  EXPECT_NEAR(rad_to_deg(got[0]), best, 0.01);
}

TEST(Cmle, NoiselessAndSameCodePath) {
  const DoaVector theta = doas({30.0, 60.0});
  const Snapshots x0 =
      synthesize(kGeom, theta, generate_waveforms(2, 10, 16, 1.0), CMatrix::Zero(6, 10));
  EXPECT_LT(rad_to_deg(cmle(x0, kGeom, 2, GridSpec{}).max_abs_difference(theta)), 0.01);

  const Scene sc = make_scene({TextureKind::InverseGamma, 1.1, 2.0}, 10.0, 17);
  const std::vector<double> ones(10, 1.0);
  EXPECT_EQ(cmle(sc.x, kGeom, 2, GridSpec{}),
            estimate_theta(sc.x, kGeom, ones, hermitian_factor(CMatrix::Identity(6, 6)), 2,
                           GridSpec{}));
}

TEST(Cmle, GaussianRmseBelowOneDegree) {
  const SpeckleCovariance id(CMatrix::Identity(6, 6));
  const TextureParams unit(TextureKind::Gamma, 1.0, 1.0);  // only used for the SNR scale
  const DoaVector theta = doas({30.0, 60.0});
  double sq = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    Rng rng(derive_seed(18, {k}));
    const SourceWaveforms raw = generate_waveforms(2, 10, derive_seed(19, {k}), 1.0);
    const SourceWaveforms s = scale_waveforms_to_snr(raw, db_to_snr(20.0), unit, id);
    const Snapshots x = synthesize(kGeom, theta, s, sample_speckle(id, 10, rng));
    const DoaVector got = cmle(x, kGeom, 2, GridSpec{});
    for (std::size_t i = 0; i < 2; ++i) sq += std::pow(rad_to_deg(got[i] - theta[i]), 2);
  }
  EXPECT_LT(std::sqrt(sq / 200.0), 1.0);
}

TEST(Imle, IterationZeroIsCmle) {
  for (std::uint64_t k = 0; k < 5; ++k) {
    const Scene sc = make_scene({TextureKind::Gamma, 1.6, 2.0}, 10.0, 20 + k);
    EXPECT_EQ(imle(sc.x, kGeom, 2).theta_trace.front(), cmle(sc.x, kGeom, 2, GridSpec{}));
  }
}

TEST(Imle, NoiselessConvergesToTruth) {
  const DoaVector theta = doas({30.0, 60.0});
  const Snapshots x =
      synthesize(kGeom, theta, generate_waveforms(2, 10, 21, 1.0), CMatrix::Zero(6, 10));
  const EstimateReport r = imle(x, kGeom, 2);
  EXPECT_LE(r.iterations_used, 2u);
  EXPECT_LT(rad_to_deg(r.final_state.theta.max_abs_difference(theta)), 0.01);
}

bool hermitian_pd_trace(const CMatrix& q) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(q);
  return (q - q.adjoint()).norm() <= 1e-12 * q.norm() &&
         std::abs(q.trace().real() - 6.0) <= 6e-12 && es.eigenvalues().minCoeff() > 0.0;
}

TEST(Iterative, MonotoneTracesAndValidSpeckle) {
  for (std::uint64_t k = 0; k < 30; ++k) {
    const bool k_noise = k % 2 == 0;
    const TextureParams p(k_noise ? TextureKind::Gamma : TextureKind::InverseGamma,
                          k_noise ? 1.6 : 1.1, 2.0);
    const Scene sc = make_scene(p, 5.0 * static_cast<double>(k % 5), 40 + k);
    const EstimateReport ml = imle(sc.x, kGeom, 2);
    const EstimateReport map = imape(sc.x, kGeom, 2, p.kind, IterationOptions{}, k);
    for (const auto* r : {&ml, &map}) {
      for (std::size_t i = 1; i < r->ll_trace.size(); ++i) {
        EXPECT_GE(r->ll_trace[i], r->ll_trace[i - 1] - 1e-8) << "seed " << k << " iter " << i;
      }
      EXPECT_TRUE(hermitian_pd_trace(r->final_state.q_normalized.matrix()));
    }
    EXPECT_TRUE(map.final_state.shape_a.has_value());
  }
}

TEST(Imle, ScaleEquivariance) {
  const Scene sc = make_scene({TextureKind::Gamma, 1.6, 2.0}, 10.0, 60);
  const double c = 5.0;
  const EstimateReport r1 = imle(sc.x, kGeom, 2);
  const EstimateReport r2 = imle(Snapshots(c * sc.x.matrix()), kGeom, 2);
  EXPECT_LT(r1.final_state.theta.max_abs_difference(r2.final_state.theta), 1e-9);
  EXPECT_LT((r2.final_state.waveforms.matrix() - c * r1.final_state.waveforms.matrix()).norm(),
            1e-6 * c * r1.final_state.waveforms.matrix().norm());
  for (std::size_t t = 0; t < 10; ++t) {
    EXPECT_NEAR(r2.final_state.taus[t], c * c * r1.final_state.taus[t],
                1e-6 * c * c * r1.final_state.taus[t]);
  }
}

TEST(Imape, IterationZeroUsesInitialTextures) {
  const Scene sc = make_scene({TextureKind::InverseGamma, 1.1, 2.0}, 10.0, 61);
  const std::uint64_t seed = 5;
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> init(10);
  for (double& t : init) t = std::max(std::abs(normal(rng)), kTextureFloor);
  const EstimateReport r = imape(sc.x, kGeom, 2, TextureKind::InverseGamma, IterationOptions{}, seed);
  EXPECT_EQ(r.theta_trace.front(),
            estimate_theta(sc.x, kGeom, init, hermitian_factor(CMatrix::Identity(6, 6)), 2,
                           GridSpec{}));
}

TEST(Imape, ZeroResidualTexturesStayPositive) {
  const DoaVector theta = doas({30.0, 60.0});
  const Snapshots x =
      synthesize(kGeom, theta, generate_waveforms(2, 10, 62, 1.0), CMatrix::Zero(6, 10));
  for (auto kind : {TextureKind::Gamma, TextureKind::InverseGamma}) {
    const EstimateReport r = imape(x, kGeom, 2, kind, IterationOptions{}, 3);
    for (double t : r.final_state.taus) {
      EXPECT_GT(t, 0.0);
      EXPECT_TRUE(std::isfinite(t));
    }
    EXPECT_LT(rad_to_deg(r.final_state.theta.max_abs_difference(theta)), 0.01);
  }
}

TEST(Iterative, RejectsBadProblems) {
  const Snapshots x(CMatrix::Ones(6, 4));
  EXPECT_THROW(imle(x, kGeom, 6), ConfigError);
  EXPECT_THROW(imle(x, ArrayGeometry::uniform_linear(5), 2), DimensionError);
  IterationOptions bad;
  bad.q_step = 0.0;
  EXPECT_THROW(imle(x, kGeom, 2, bad), ConfigError);
}

}  // namespace
}  // namespace sirpdoa
