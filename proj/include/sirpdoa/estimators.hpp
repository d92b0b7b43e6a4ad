#pragma once

// DOA estimators under compound-Gaussian noise:
//   cmle  - conventional ML assuming spatially white Gaussian noise
//   imle  - iterative ML with per-snapshot textures and speckle covariance
//   imape - iterative MAP that also fits the texture prior (a, b)

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/numerics.hpp"
#include "sirpdoa/signal_model.hpp"

namespace sirpdoa {

/// Floor applied to estimated textures before they are used as weights.
inline constexpr double kTextureFloor = 1e-10;

struct EstimatorState {
  std::size_t iteration = 0;
  DoaVector theta;
  SourceWaveforms waveforms;
  SpeckleCovariance q_normalized;
  std::vector<double> taus;
  std::optional<double> shape_a;
  std::optional<double> scale_b;
};

struct StopCriterion {
  std::size_t max_iterations = 10;
  double theta_tolerance = 1e-4;  // radians, max-abs change between iterations
};

struct IterationOptions {
  StopCriterion stop;
  GridSpec grid;
  /// Step length beta of the speckle update: Q <- (1-beta) Q_prev + beta Q_closed_form,
  /// followed by trace normalization. beta = 1 is the bare closed-form update,
  /// which is rank deficient (rank <= N-M) once s(t) has been fitted.
  double q_step = 0.2;
  /// Applications of the closed-form speckle update per outer iteration.
  std::size_t q_inner_repeats = 1;
  /// Halve q_step until the likelihood concentrated over tau does not decrease.
  bool q_monotone_guard = true;
};

struct EstimateReport {
  EstimatorState final_state;
  std::vector<DoaVector> theta_trace;
  /// Conditional LL (imle) or joint LL (imape) of the state at each iteration.
  std::vector<double> ll_trace;
  std::size_t iterations_used = 0;
  std::size_t floored_taus = 0;
  std::size_t shape_clamps = 0;
  std::size_t q_step_halvings = 0;
};

struct ShapeEstimate {
  double value = 0.0;
  bool clamped = false;
};

/// Residual block X - A(theta) S.
CMatrix residuals(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                  const SourceWaveforms& s);

/// L_C = -TN ln(pi) - T ln|Q| - N sum ln tau - sum rho^H rho / tau,
/// rho(t) = Q^{-1/2} (x(t) - A s(t)).
double conditional_log_likelihood(const Snapshots& x, const ArrayGeometry& geom,
                                  const DoaVector& theta, const SourceWaveforms& s,
                                  const HermitianFactor& q, std::span<const double> taus);

/// L_J = L_C + sum_t ln p(tau(t); a, b). Requires state.shape_a and state.scale_b.
double joint_log_likelihood(const Snapshots& x, const ArrayGeometry& geom,
                            const EstimatorState& state, TextureKind kind);

/// r^H Q^{-1} r / N.
double estimate_tau_ml(const CVector& x_t, const ArrayGeometry& geom, const DoaVector& theta,
                       const CVector& s_t, const CMatrix& q_inv);

/// Texture maximizing the per-snapshot joint likelihood for the given prior.
double estimate_tau_map(const CVector& x_t, const ArrayGeometry& geom, const DoaVector& theta,
                        const CVector& s_t, const CMatrix& q_inv, double a, double b,
                        TextureKind kind);

/// Closed-form texture maps from the quadratic form q = r^H Q^{-1} r.
double tau_ml_from_quadratic(double quadratic, std::size_t sensors);
double tau_map_from_quadratic(double quadratic, std::size_t sensors, double a, double b,
                              TextureKind kind);

/// Speckle estimate for known textures: (1/T) sum r r^H / tau(t).
CMatrix update_q_given_tau(const Snapshots& x, const ArrayGeometry& geom,
                           const DoaVector& theta, const SourceWaveforms& s,
                           std::span<const double> taus);

/// (N/T) sum r r^H / (r^H Q_prev^{-1} r). Unnormalized.
CMatrix update_q_ml(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                    const SourceWaveforms& s, const CMatrix& q_prev_inv);

/// Speckle estimate with the MAP textures substituted. Unnormalized.
CMatrix update_q_map(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                     const SourceWaveforms& s, const CMatrix& q_prev_inv, double a, double b,
                     TextureKind kind);

/// s(t) = (A~^H A~)^{-1} A~^H x~(t) with A~ = Q^{-1/2} A, x~ = Q^{-1/2} x.
SourceWaveforms estimate_waveforms(const Snapshots& x, const ArrayGeometry& geom,
                                   const DoaVector& theta, const HermitianFactor& q);

/// Scale b maximizing the texture likelihood for a fixed shape a.
double estimate_b(std::span<const double> taus, double a, TextureKind kind);

/// Shape a from ln a - Psi(a) = rhs, with b profiled out. Roots outside the
/// bracket are clamped to the nearest edge and flagged.
ShapeEstimate estimate_a(std::span<const double> taus, TextureKind kind, double lo = 1e-3,
                         double hi = 1e3);

/// argmin over theta of sum_t ||P_perp(A~(theta)) x~(t)||^2 / tau(t).
DoaVector estimate_theta(const Snapshots& x, const ArrayGeometry& geom,
                         std::span<const double> taus, const HermitianFactor& q,
                         std::size_t sources, const GridSpec& grid,
                         std::span<const DoaVector> hints = {});

/// The weighted whitened objective minimized by estimate_theta, exposed for tests.
double theta_objective(const Snapshots& x, const ArrayGeometry& geom,
                       std::span<const double> taus, const HermitianFactor& q,
                       std::span<const double> angles);

/// Conventional ML: estimate_theta with tau = 1 and Q = I.
DoaVector cmle(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
               const GridSpec& grid);

EstimateReport imle(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
                    const IterationOptions& options = {});

/// `seed` drives the random texture initialization |N(0,1)|.
EstimateReport imape(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
                     TextureKind kind, const IterationOptions& options, std::uint64_t seed);

}  // namespace sirpdoa
