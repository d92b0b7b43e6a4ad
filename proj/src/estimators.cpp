#include "sirpdoa/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "sirpdoa/errors.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa {

namespace {

double floored(double tau) { return std::max(tau, kTextureFloor); }

void check_taus(std::span<const double> taus, std::size_t snapshots) {
  if (taus.size() != snapshots) {
    throw DimensionError("texture vector length must equal the snapshot count");
  }
  for (double t : taus) {
    if (!(t > 0) || !std::isfinite(t)) {
      throw DomainError("textures must be positive and finite");
    }
  }
}

double quadratic_form(const CVector& r, const CMatrix& q_inv) {
  return std::max(0.0, r.dot(q_inv * r).real());
}

// Whitened, texture-weighted data: column t is Q^{-1/2} x(t) / sqrt(tau(t)).
CMatrix weighted_whitened(const Snapshots& x, std::span<const double> taus,
                          const HermitianFactor& q) {
  CMatrix xw = q.inv_sqrt * x.matrix();
  for (Eigen::Index t = 0; t < xw.cols(); ++t) {
    xw.col(t) /= std::sqrt(floored(taus[static_cast<std::size_t>(t)]));
  }
  return xw;
}

// sum_t rho^H rho / tau evaluated for the least-squares s(t) at `angles`.
class ThetaObjective {
 public:
  ThetaObjective(const Snapshots& x, const ArrayGeometry& geom, std::span<const double> taus,
                 const HermitianFactor& q)
      : geom_(geom), w_(q.inv_sqrt), xw_(weighted_whitened(x, taus, q)) {}

  double operator()(std::span<const double> angles) const {
    detail::fill_steering_matrix(geom_, angles, a_);
    a_ = w_ * a_;
    try {
      return projection_residual(a_, xw_);
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // Grid-tuple scoring through Gram matrices of the whitened grid steering
  // vectors: residual = ||Xw||^2 - tr(G^{-1} C), G = A~^H A~, C = A~^H Xw Xw^H A~.
  GridTupleObjective coarse(const GridSpec& grid) {
    const std::vector<double> pts = grid.points();
    CMatrix ag;
    detail::fill_steering_matrix(geom_, pts, ag);
    ag = w_ * ag;
    gram_ = ag.adjoint() * ag;
    CMatrix y = ag.adjoint() * xw_;
    cross_ = y * y.adjoint();
    total_ = xw_.squaredNorm();
    return [this](std::span<const std::size_t> idx) { return coarse_score(idx); };
  }

 private:
  double coarse_score(std::span<const std::size_t> idx) const {
    const auto i = static_cast<Eigen::Index>(idx[0]);
    if (idx.size() == 1) {
      return total_ - cross_(i, i).real() / gram_(i, i).real();
    }
    if (idx.size() == 2) {
      const auto j = static_cast<Eigen::Index>(idx[1]);
      const double g11 = gram_(i, i).real();
      const double g22 = gram_(j, j).real();
      const Complex g12 = gram_(i, j);
      const double det = g11 * g22 - std::norm(g12);
      if (!(det > 1e-12 * g11 * g22)) return std::numeric_limits<double>::infinity();
      const double tr = g22 * cross_(i, i).real() + g11 * cross_(j, j).real() -
                        2.0 * (g12 * std::conj(cross_(i, j))).real();
      return total_ - tr / det;
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    CMatrix gs(m, m);
    CMatrix cs(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto ir = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
        const auto ic = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]);
        gs(r, c) = gram_(ir, ic);
        cs(r, c) = cross_(ir, ic);
      }
    }
    Eigen::LLT<CMatrix> llt(gs);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    return total_ - llt.solve(cs).trace().real();
  }

  const ArrayGeometry& geom_;
  const CMatrix& w_;
  CMatrix xw_;
  mutable CMatrix a_;
  CMatrix gram_;
  CMatrix cross_;
  double total_ = 0.0;
};

struct TexturePrior {
  double a;
  double b;
  TextureKind kind;
};

double tau_estimate(double quadratic, std::size_t sensors, const std::optional<TexturePrior>& prior) {
  return prior ? tau_map_from_quadratic(quadratic, sensors, prior->a, prior->b, prior->kind)
               : tau_ml_from_quadratic(quadratic, sensors);
}

// Textures from the residual block under the given speckle inverse, floored.
std::vector<double> textures_from_residuals(const CMatrix& r, const CMatrix& q_inv,
                                            const std::optional<TexturePrior>& prior,
                                            std::size_t* floored_count) {
  const auto n = static_cast<std::size_t>(r.rows());
  std::vector<double> taus(static_cast<std::size_t>(r.cols()));
  for (Eigen::Index t = 0; t < r.cols(); ++t) {
    const double raw = tau_estimate(quadratic_form(r.col(t), q_inv), n, prior);
    if (raw < kTextureFloor && floored_count) ++*floored_count;
    taus[static_cast<std::size_t>(t)] = floored(raw);
  }
  return taus;
}

CMatrix weighted_outer_sum(const CMatrix& r, std::span<const double> taus) {
  CMatrix rw = r;
  for (Eigen::Index t = 0; t < rw.cols(); ++t) {
    rw.col(t) /= std::sqrt(taus[static_cast<std::size_t>(t)]);
  }
  CMatrix q = (rw * rw.adjoint()) / static_cast<double>(r.cols());
  return 0.5 * (q + q.adjoint());
}

// Likelihood with tau maximized out per snapshot (conditional LL, plus the
// texture prior when given).
double concentrated_ll(const CMatrix& r, const HermitianFactor& q,
                       const std::optional<TexturePrior>& prior) {
  const auto n = static_cast<std::size_t>(r.rows());
  const double nn = static_cast<double>(n);
  double ll = 0.0;
  for (Eigen::Index t = 0; t < r.cols(); ++t) {
    const double quad = quadratic_form(r.col(t), q.inverse);
    const double tau = floored(tau_estimate(quad, n, prior));
    ll += -nn * std::log(kPi) - q.log_det - nn * std::log(tau) - quad / tau;
    if (prior) {
      ll += log_texture_pdf(TextureParams(prior->kind, prior->a, prior->b), tau);
    }
  }
  return ll;
}

struct SpeckleStep {
  SpeckleCovariance q;
  HermitianFactor factor;
};

// One outer-iteration speckle update: closed form (textures substituted from
// the previous speckle), relaxed toward the previous estimate, trace
// normalized, optionally backtracked so the concentrated likelihood never drops.
SpeckleStep update_speckle(const CMatrix& r, SpeckleStep current,
                           const std::optional<TexturePrior>& prior,
                           const IterationOptions& options, EstimateReport& report) {
  for (std::size_t rep = 0; rep < std::max<std::size_t>(1, options.q_inner_repeats); ++rep) {
    const std::vector<double> taus =
        textures_from_residuals(r, current.factor.inverse, prior, nullptr);
    const CMatrix closed = weighted_outer_sum(r, taus);
    const double base =
        options.q_monotone_guard ? concentrated_ll(r, current.factor, prior) : 0.0;

    double beta = options.q_step;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      try {
        const CMatrix mixed = (1.0 - beta) * current.q.matrix() + beta * closed;
        SpeckleCovariance qn = normalize_trace(mixed);
        HermitianFactor f = hermitian_factor(qn);
        if (!options.q_monotone_guard || concentrated_ll(r, f, prior) >= base) {
          current = SpeckleStep{std::move(qn), std::move(f)};
          accepted = true;
          break;
        }
      } catch (const SingularityError&) {
        if (!options.q_monotone_guard) throw;
      }
      beta *= 0.5;
      ++report.q_step_halvings;
    }
    if (!accepted) break;
  }
  return current;
}

bool should_stop(const IterationOptions& options, std::size_t iteration,
                 const std::vector<DoaVector>& trace) {
  if (iteration + 1 >= options.stop.max_iterations) return true;
  if (trace.size() >= 2) {
    const double change = trace.back().max_abs_difference(trace[trace.size() - 2]);
    if (change < options.stop.theta_tolerance) return true;
  }
  return false;
}

void check_problem(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources) {
  if (x.sensors() != geom.sensors()) {
    throw DimensionError("snapshot rows must match the number of sensors");
  }
  if (sources < 1 || sources >= geom.sensors()) {
    throw ConfigError("need 1 <= M < N sources");
  }
}

}  // namespace

CMatrix residuals(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                  const SourceWaveforms& s) {
  if (s.sources() != theta.size() || s.snapshots() != x.snapshots() ||
      x.sensors() != geom.sensors()) {
    throw DimensionError("residuals: inconsistent dimensions");
  }
  return x.matrix() - steering_matrix(geom, theta) * s.matrix();
}

double conditional_log_likelihood(const Snapshots& x, const ArrayGeometry& geom,
                                  const DoaVector& theta, const SourceWaveforms& s,
                                  const HermitianFactor& q, std::span<const double> taus) {
  check_taus(taus, x.snapshots());
  const CMatrix rho = q.inv_sqrt * residuals(x, geom, theta, s);
  const double n = static_cast<double>(x.sensors());
  const double t = static_cast<double>(x.snapshots());
  double ll = -t * n * std::log(kPi) - t * q.log_det;
  for (Eigen::Index k = 0; k < rho.cols(); ++k) {
    const double tau = taus[static_cast<std::size_t>(k)];
    ll -= n * std::log(tau) + rho.col(k).squaredNorm() / tau;
  }
  return ll;
}

double joint_log_likelihood(const Snapshots& x, const ArrayGeometry& geom,
                            const EstimatorState& state, TextureKind kind) {
  if (!state.shape_a || !state.scale_b) {
    throw DomainError("joint likelihood needs texture shape and scale");
  }
  const TextureParams prior(kind, *state.shape_a, *state.scale_b);
  const HermitianFactor q = hermitian_factor(state.q_normalized);
  double ll = conditional_log_likelihood(x, geom, state.theta, state.waveforms, q, state.taus);
  for (double tau : state.taus) {
    ll += log_texture_pdf(prior, tau);
  }
  return ll;
}

double tau_ml_from_quadratic(double quadratic, std::size_t sensors) {
  return quadratic / static_cast<double>(sensors);
}

double tau_map_from_quadratic(double quadratic, std::size_t sensors, double a, double b,
                              TextureKind kind) {
  if (!(a > 0) || !(b > 0)) {
    throw DomainError("MAP texture needs a > 0 and b > 0");
  }
  const double n = static_cast<double>(sensors);
  if (kind == TextureKind::InverseGamma) {
    return (quadratic + b) / (a + n + 1.0);
  }
  // Positive root of tau^2 - c tau - b q = 0, c = (a-N-1) b; the c < 0 branch
  // is rewritten to avoid cancellation.
  const double c = (a - n - 1.0) * b;
  const double disc = std::sqrt(c * c + 4.0 * b * quadratic);
  if (c >= 0) {
    return 0.5 * (c + disc);
  }
  const double denom = disc - c;
  return denom > 0 ? 2.0 * b * quadratic / denom : 0.0;
}

double estimate_tau_ml(const CVector& x_t, const ArrayGeometry& geom, const DoaVector& theta,
                       const CVector& s_t, const CMatrix& q_inv) {
  const CVector r = x_t - steering_matrix(geom, theta) * s_t;
  return tau_ml_from_quadratic(quadratic_form(r, q_inv), geom.sensors());
}

double estimate_tau_map(const CVector& x_t, const ArrayGeometry& geom, const DoaVector& theta,
                        const CVector& s_t, const CMatrix& q_inv, double a, double b,
                        TextureKind kind) {
  const CVector r = x_t - steering_matrix(geom, theta) * s_t;
  return tau_map_from_quadratic(quadratic_form(r, q_inv), geom.sensors(), a, b, kind);
}

CMatrix update_q_given_tau(const Snapshots& x, const ArrayGeometry& geom,
                           const DoaVector& theta, const SourceWaveforms& s,
                           std::span<const double> taus) {
  check_taus(taus, x.snapshots());
  return weighted_outer_sum(residuals(x, geom, theta, s), taus);
}

CMatrix update_q_ml(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                    const SourceWaveforms& s, const CMatrix& q_prev_inv) {
  const CMatrix r = residuals(x, geom, theta, s);
  const auto n = static_cast<Eigen::Index>(geom.sensors());
  CMatrix q = CMatrix::Zero(n, n);
  for (Eigen::Index t = 0; t < r.cols(); ++t) {
    const double quad = quadratic_form(r.col(t), q_prev_inv);
    if (!(quad > 0)) {
      throw DegenerateResidualError("update_q_ml: zero residual at snapshot " +
                                    std::to_string(t));
    }
    q += r.col(t) * r.col(t).adjoint() / quad;
  }
  q *= static_cast<double>(n) / static_cast<double>(r.cols());
  return 0.5 * (q + q.adjoint());
}

CMatrix update_q_map(const Snapshots& x, const ArrayGeometry& geom, const DoaVector& theta,
                     const SourceWaveforms& s, const CMatrix& q_prev_inv, double a, double b,
                     TextureKind kind) {
  if (!(a > 0) || !(b > 0)) {
    throw DomainError("update_q_map needs a > 0 and b > 0");
  }
  const CMatrix r = residuals(x, geom, theta, s);
  const auto n = static_cast<Eigen::Index>(geom.sensors());
  const double nn = static_cast<double>(n);
  const double t_count = static_cast<double>(r.cols());
  CMatrix q = CMatrix::Zero(n, n);
  for (Eigen::Index t = 0; t < r.cols(); ++t) {
    const double quad = quadratic_form(r.col(t), q_prev_inv);
    double denom;
    if (kind == TextureKind::Gamma) {
      // sqrt(4 b q + c^2) + c with c = (a-N-1) b
      const double c = (a - nn - 1.0) * b;
      const double root = std::sqrt(4.0 * b * quad + c * c);
      denom = c >= 0 ? root + c : 4.0 * b * quad / (root - c);
    } else {
      denom = b + quad;
    }
    if (!(denom > 0)) {
      throw DegenerateResidualError("update_q_map: zero residual at snapshot " +
                                    std::to_string(t));
    }
    q += r.col(t) * r.col(t).adjoint() / denom;
  }
  const double front = kind == TextureKind::Gamma ? 2.0 / t_count : (a + nn + 1.0) / t_count;
  q *= front;
  return 0.5 * (q + q.adjoint());
}

SourceWaveforms estimate_waveforms(const Snapshots& x, const ArrayGeometry& geom,
                                   const DoaVector& theta, const HermitianFactor& q) {
  const CMatrix a = q.inv_sqrt * steering_matrix(geom, theta);
  const CMatrix xt = q.inv_sqrt * x.matrix();
  Eigen::HouseholderQR<CMatrix> qr(a);
  const double norm = a.norm();
  if (!(norm > 0) || qr.matrixQR().diagonal().cwiseAbs().minCoeff() <= 1e-10 * norm) {
    throw SingularityError("estimate_waveforms: whitened steering matrix is rank deficient");
  }
  return SourceWaveforms(qr.solve(xt));
}

double estimate_b(std::span<const double> taus, double a, TextureKind kind) {
  if (!(a > 0)) throw DomainError("estimate_b needs a > 0");
  if (taus.empty()) throw DomainError("estimate_b needs textures");
  const double t = static_cast<double>(taus.size());
  if (kind == TextureKind::Gamma) {
    double sum = 0.0;
    for (double v : taus) {
      if (!(v > 0)) throw DomainError("textures must be positive");
      sum += v;
    }
    return sum / (t * a);
  }
  double inv_sum = 0.0;
  for (double v : taus) {
    if (!(v > 0)) throw DomainError("textures must be positive");
    inv_sum += 1.0 / v;
  }
  return t * a / inv_sum;
}

ShapeEstimate estimate_a(std::span<const double> taus, TextureKind kind, double lo, double hi) {
  if (taus.empty()) throw DomainError("estimate_a needs textures");
  if (!(lo > 0) || !(lo < hi)) throw DomainError("estimate_a needs 0 < lo < hi");
  // Work with u = tau (gamma) or u = 1/tau (inverse gamma); both reduce to the
  // gamma-shape equation ln a - Psi(a) = ln(mean u) - mean(ln u).
  double mean_u = 0.0;
  double mean_log_u = 0.0;
  for (double v : taus) {
    if (!(v > 0)) throw DomainError("textures must be positive");
    const double u = kind == TextureKind::Gamma ? v : 1.0 / v;
    mean_u += u;
    mean_log_u += std::log(u);
  }
  const double t = static_cast<double>(taus.size());
  mean_u /= t;
  mean_log_u /= t;
  const double rhs = std::log(mean_u) - mean_log_u;

  auto f = [rhs](double a) { return std::log(a) - digamma(a) - rhs; };
  if (!(rhs > 0) || f(hi) > 0) {
    return {hi, true};
  }
  if (f(lo) < 0) {
    return {lo, true};
  }
  return {find_root_monotone(f, lo, hi, 1e-12), false};
}

double theta_objective(const Snapshots& x, const ArrayGeometry& geom,
                       std::span<const double> taus, const HermitianFactor& q,
                       std::span<const double> angles) {
  check_taus(taus, x.snapshots());
  return ThetaObjective(x, geom, taus, q)(angles);
}

DoaVector estimate_theta(const Snapshots& x, const ArrayGeometry& geom,
                         std::span<const double> taus, const HermitianFactor& q,
                         std::size_t sources, const GridSpec& grid,
                         std::span<const DoaVector> hints) {
  check_problem(x, geom, sources);
  check_taus(taus, x.snapshots());
  if (q.original.rows() != static_cast<Eigen::Index>(geom.sensors())) {
    throw DimensionError("speckle factor size must match the number of sensors");
  }
  ThetaObjective objective(x, geom, taus, q);
  GridTupleObjective coarse = objective.coarse(grid);
  AngleObjective exact = [&objective](std::span<const double> angles) {
    return objective(angles);
  };
  return minimize_doa_objective(exact, coarse, sources, grid, hints);
}

DoaVector cmle(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
               const GridSpec& grid) {
  const auto n = static_cast<Eigen::Index>(geom.sensors());
  const HermitianFactor identity = hermitian_factor(CMatrix::Identity(n, n));
  const std::vector<double> ones(x.snapshots(), 1.0);
  return estimate_theta(x, geom, ones, identity, sources, grid);
}

namespace {

EstimateReport iterate(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
                       const IterationOptions& options, std::vector<double> taus,
                       std::optional<TextureKind> map_kind) {
  check_problem(x, geom, sources);
  if (options.stop.max_iterations < 1) {
    throw ConfigError("stop criterion needs max_iterations >= 1");
  }
  if (!(options.q_step > 0) || options.q_step > 1) {
    throw ConfigError("speckle step must lie in (0, 1]");
  }
  const auto n = static_cast<Eigen::Index>(geom.sensors());

  SpeckleStep speckle{SpeckleCovariance(CMatrix::Identity(n, n)),
                      hermitian_factor(CMatrix::Identity(n, n))};
  std::vector<DoaVector> theta_trace;
  std::vector<double> ll_trace;
  EstimateReport scratch{
      EstimatorState{0, DoaVector({0.0}), SourceWaveforms(CMatrix::Zero(1, 1)),
                     speckle.q, taus, std::nullopt, std::nullopt},
      {}, {}, 0, 0, 0, 0};

  for (std::size_t i = 0;; ++i) {
    // theta, s (and the texture prior for MAP) from current tau, Q.
    std::span<const DoaVector> hints;
    if (!theta_trace.empty()) hints = std::span<const DoaVector>(&theta_trace.back(), 1);
    DoaVector theta = estimate_theta(x, geom, taus, speckle.factor, sources, options.grid, hints);
    SourceWaveforms s = estimate_waveforms(x, geom, theta, speckle.factor);

    std::optional<TexturePrior> prior;
    EstimatorState state{i, theta, s, speckle.q, taus, std::nullopt, std::nullopt};
    double ll;
    if (map_kind) {
      const ShapeEstimate a = estimate_a(taus, *map_kind);
      if (a.clamped) ++scratch.shape_clamps;
      const double b = estimate_b(taus, a.value, *map_kind);
      prior = TexturePrior{a.value, b, *map_kind};
      state.shape_a = a.value;
      state.scale_b = b;
      ll = conditional_log_likelihood(x, geom, theta, s, speckle.factor, taus);
      const TextureParams params(*map_kind, a.value, b);
      for (double tau : taus) ll += log_texture_pdf(params, tau);
    } else {
      ll = conditional_log_likelihood(x, geom, theta, s, speckle.factor, taus);
    }
    theta_trace.push_back(theta);
    ll_trace.push_back(ll);

    if (should_stop(options, i, theta_trace)) {
      scratch.final_state = std::move(state);
      break;
    }

    // Speckle first (from the previous speckle), then textures with
    // the updated speckle.
    const CMatrix r = residuals(x, geom, theta, s);
    speckle = update_speckle(r, std::move(speckle), prior, options, scratch);
    taus = textures_from_residuals(r, speckle.factor.inverse, prior, &scratch.floored_taus);
  }

  scratch.iterations_used = theta_trace.size();
  scratch.theta_trace = std::move(theta_trace);
  scratch.ll_trace = std::move(ll_trace);
  return scratch;
}

}  // namespace

EstimateReport imle(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
                    const IterationOptions& options) {
  return iterate(x, geom, sources, options, std::vector<double>(x.snapshots(), 1.0),
                 std::nullopt);
}

EstimateReport imape(const Snapshots& x, const ArrayGeometry& geom, std::size_t sources,
                     TextureKind kind, const IterationOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> taus(x.snapshots());
  for (double& t : taus) {
    t = floored(std::abs(normal(rng)));
  }
  return iterate(x, geom, sources, options, std::move(taus), kind);
}

}  // namespace sirpdoa
