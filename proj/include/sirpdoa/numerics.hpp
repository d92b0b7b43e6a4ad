#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/signal_model.hpp"

namespace sirpdoa {

/// Q together with Q^{-1/2} (Hermitian square root) and Q^{-1}.
struct HermitianFactor {
  CMatrix original;
  CMatrix inv_sqrt;
  CMatrix inverse;
  double log_det = 0.0;  // ln |Q|
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

/// Eigendecomposition-based factor. Throws SingularityError when the smallest
/// eigenvalue is at or below 1e-10 * lambda_max; nothing is regularized.
HermitianFactor hermitian_factor(const CMatrix& q);
HermitianFactor hermitian_factor(const SpeckleCovariance& q);

/// N * Q / tr(Q).
SpeckleCovariance normalize_trace(const CMatrix& q_raw);

/// ||x - A (A^H A)^{-1} A^H x||^2 via Householder QR of A. Throws
/// SingularityError when A is (numerically) rank deficient.
double projection_residual(const CMatrix& a, const CVector& x);

/// Sum of projection residuals over the columns of `x`.
double projection_residual(const CMatrix& a, const CMatrix& x);

/// Psi(x) for x > 0: upward recurrence to x >= 6, then the asymptotic series.
double digamma(double x);

/// Root of a monotone function bracketed by [lo, hi]. Safeguarded secant:
/// every iterate stays inside the shrinking sign-change bracket and falls back
/// to bisection when the secant step stalls. Returns once the bracket is no
/// wider than `tol` (or f hits zero exactly).
double find_root_monotone(const std::function<double(double)>& f, double lo, double hi,
                          double tol);

/// Search domain for the DOA minimizer (all radians).
struct GridSpec {
  double lo = -kPi / 2;
  double hi = kPi / 2;
  double coarse_step = deg_to_rad(1.0);
  double refine_tolerance = deg_to_rad(0.01);
  double min_separation = deg_to_rad(1.0);

  static GridSpec from_degrees(double lo, double hi, double coarse_step,
                               double refine_tolerance, double min_separation);

  void validate() const;

  /// Coarse grid points lo + k*step lying in [lo, hi] and strictly inside
  /// (-pi/2, pi/2).
  std::vector<double> points() const;
};

using AngleObjective = std::function<double(std::span<const double> angles)>;

/// Scores a coarse tuple given as ascending indices into GridSpec::points().
/// Only used to rank grid tuples; refinement always uses the AngleObjective.
using GridTupleObjective = std::function<double(std::span<const std::size_t> indices)>;

/// Exhaustive search over ascending, min_separation-spaced M-tuples of grid
/// points, then coordinate-wise golden-section refinement to
/// refine_tolerance. Each `hint` that is admissible is refined as an extra
/// candidate; the best refined candidate wins, so the result is never worse
/// than any admissible hint.
DoaVector minimize_doa_objective(const AngleObjective& objective, std::size_t sources,
                                 const GridSpec& grid, std::span<const DoaVector> hints = {});

DoaVector minimize_doa_objective(const AngleObjective& objective,
                                 const GridTupleObjective& coarse, std::size_t sources,
                                 const GridSpec& grid, std::span<const DoaVector> hints = {});

}  // namespace sirpdoa
