#include "sirpdoa/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sirpdoa/errors.hpp"

namespace sirpdoa {

namespace {

constexpr double kEigenFloor = 1e-10;
constexpr double kRankTolerance = 1e-10;
constexpr double kAngleMargin = 1e-9;

}  // namespace

HermitianFactor hermitian_factor(const CMatrix& q) {
  if (q.rows() < 1 || q.rows() != q.cols()) {
    throw DimensionError("hermitian_factor needs a square, non-empty matrix");
  }
  if (!q.allFinite()) {
    throw DomainError("hermitian_factor: non-finite entries");
  }
  const double scale = std::max(1e-300, q.cwiseAbs().maxCoeff());
  if ((q - q.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw DomainError("hermitian_factor: matrix is not Hermitian");
  }

  Eigen::SelfAdjointEigenSolver<CMatrix> eig(q);
  if (eig.info() != Eigen::Success) {
    throw SingularityError("hermitian_factor: eigendecomposition failed");
  }
  const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
  const double lmax = lambda(lambda.size() - 1);
  const double lmin = lambda(0);
  if (!(lmax > 0) || lmin <= kEigenFloor * lmax) {
    std::ostringstream msg;
    msg << "matrix is not positive definite: smallest eigenvalue " << lmin
        << " vs largest " << lmax;
    throw SingularityError(msg.str());
  }

  const CMatrix& u = eig.eigenvectors();
  Eigen::VectorXd inv_root = lambda.cwiseSqrt().cwiseInverse();
  Eigen::VectorXd inv = lambda.cwiseInverse();

  HermitianFactor f;
  f.original = q;
  f.inv_sqrt = u * inv_root.asDiagonal() * u.adjoint();
  f.inverse = u * inv.asDiagonal() * u.adjoint();
  f.log_det = lambda.array().log().sum();
  f.min_eigenvalue = lmin;
  f.max_eigenvalue = lmax;
  return f;
}

HermitianFactor hermitian_factor(const SpeckleCovariance& q) {
  return hermitian_factor(q.matrix());
}

SpeckleCovariance normalize_trace(const CMatrix& q_raw) {
  if (q_raw.rows() < 1 || q_raw.rows() != q_raw.cols()) {
    throw DimensionError("normalize_trace needs a square matrix");
  }
  const Complex tr = q_raw.trace();
  const double scale = std::max(1.0, q_raw.cwiseAbs().maxCoeff());
  if (!(tr.real() > 0) || std::abs(tr.imag()) > 1e-10 * scale * q_raw.rows()) {
    std::ostringstream msg;
    msg << "cannot normalize a matrix with trace " << tr;
    throw DomainError(msg.str());
  }
  const double n = static_cast<double>(q_raw.rows());
  return SpeckleCovariance(q_raw * (n / tr.real()));
}

namespace {

// Returns the residual, or +inf when `a` is numerically rank deficient.
double projection_residual_or_inf(const CMatrix& a, const CMatrix& x) {
  if (a.rows() != x.rows()) {
    throw DimensionError("projection_residual: row count mismatch");
  }
  if (a.cols() > a.rows()) {
    return std::numeric_limits<double>::infinity();
  }
  Eigen::HouseholderQR<CMatrix> qr(a);
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  const double norm = a.norm();
  if (a.cols() > 0 && (!(norm > 0) || diag.minCoeff() <= kRankTolerance * norm)) {
    return std::numeric_limits<double>::infinity();
  }
  CMatrix y = qr.householderQ().adjoint() * x;
  return y.bottomRows(a.rows() - a.cols()).squaredNorm();
}

}  // namespace

double projection_residual(const CMatrix& a, const CMatrix& x) {
  const double r = projection_residual_or_inf(a, x);
  if (!std::isfinite(r)) {
    throw SingularityError("projection_residual: matrix is rank deficient");
  }
  return r;
}

double projection_residual(const CMatrix& a, const CVector& x) {
  return projection_residual(a, CMatrix(x));
}

double digamma(double x) {
  if (!(x > 0) || !std::isfinite(x)) {
    throw DomainError("digamma is implemented for finite x > 0");
  }
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli tail through B_14.
  const double tail =
      inv2 *
      (1.0 / 12 -
       inv2 * (1.0 / 120 -
               inv2 * (1.0 / 252 -
                       inv2 * (1.0 / 240 -
                               inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return result + std::log(x) - 0.5 * inv - tail;
}

double find_root_monotone(const std::function<double(double)>& f, double lo, double hi,
                          double tol) {
  if (!(lo < hi) || !(tol > 0)) {
    throw DomainError("find_root_monotone needs lo < hi and tol > 0");
  }
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (!std::isfinite(flo) || !std::isfinite(fhi) || (flo > 0) == (fhi > 0)) {
    std::ostringstream msg;
    msg << "no sign change on [" << lo << ", " << hi << "]: f(lo)=" << flo
        << ", f(hi)=" << fhi;
    throw BracketError(msg.str());
  }

  bool force_bisect = false;
  for (int iter = 0; iter < 1000 && hi - lo > tol; ++iter) {
    const double width = hi - lo;
    double x = 0.5 * (lo + hi);
    if (!force_bisect) {
      const double secant = hi - fhi * (hi - lo) / (fhi - flo);
      if (secant > lo && secant < hi) {
        x = secant;
      }
    }
    const double fx = f(x);
    if (fx == 0.0) {
      return x;
    }
    if ((fx > 0) == (flo > 0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
      fhi = fx;
    }
    // A one-sided secant step that barely shrinks the bracket is followed by
    // bisection, so the width at least halves every two evaluations.
    force_bisect = !force_bisect && (hi - lo) > 0.5 * width;
  }
  return 0.5 * (lo + hi);
}

GridSpec GridSpec::from_degrees(double lo, double hi, double coarse_step,
                                double refine_tolerance, double min_separation) {
  GridSpec g;
  g.lo = deg_to_rad(lo);
  g.hi = deg_to_rad(hi);
  g.coarse_step = deg_to_rad(coarse_step);
  g.refine_tolerance = deg_to_rad(refine_tolerance);
  g.min_separation = deg_to_rad(min_separation);
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (!(lo < hi)) throw ConfigError("grid: lo must be below hi");
  if (!(coarse_step > 0)) throw ConfigError("grid: coarse step must be positive");
  if (!(refine_tolerance > 0) || !(refine_tolerance < coarse_step)) {
    throw ConfigError("grid: refine tolerance must be positive and below the coarse step");
  }
  if (!(min_separation > 0)) throw ConfigError("grid: min separation must be positive");
}

std::vector<double> GridSpec::points() const {
  std::vector<double> pts;
  const double half_pi = kPi / 2 - kAngleMargin;
  for (long k = 0;; ++k) {
    const double p = lo + static_cast<double>(k) * coarse_step;
    if (p > hi + 1e-12) break;
    if (p > -half_pi && p < half_pi) pts.push_back(p);
  }
  return pts;
}

namespace {

struct Candidate {
  std::vector<double> angles;
  double value = std::numeric_limits<double>::infinity();
};

class Refiner {
 public:
  Refiner(const AngleObjective& f, const GridSpec& grid)
      : f_(f),
        grid_(grid),
        lower_(std::max(grid.lo, -kPi / 2 + kAngleMargin)),
        upper_(std::min(grid.hi, kPi / 2 - kAngleMargin)) {}

  bool admissible(std::span<const double> angles) const {
    for (std::size_t k = 0; k < angles.size(); ++k) {
      if (!(angles[k] >= lower_ && angles[k] <= upper_)) return false;
      if (k > 0 && angles[k] - angles[k - 1] < grid_.min_separation - 1e-12) return false;
    }
    return true;
  }

  Candidate refine(Candidate c) const {
    const std::size_t m = c.angles.size();
    const double tol = grid_.refine_tolerance;
    double half_width = grid_.coarse_step;
    std::vector<double> trial = c.angles;
    for (int sweep = 0; sweep < 100; ++sweep) {
      double max_change = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double lo_k = k == 0 ? lower_ : c.angles[k - 1] + grid_.min_separation;
        const double hi_k = k + 1 == m ? upper_ : c.angles[k + 1] - grid_.min_separation;
        const double a = std::max(lo_k, c.angles[k] - half_width);
        const double b = std::min(hi_k, c.angles[k] + half_width);
        if (!(b > a)) continue;
        trial = c.angles;
        auto g = [&](double u) {
          trial[k] = u;
          return f_(trial);
        };
        const auto [u, gu] = golden_section(g, a, b, tol);
        if (gu < c.value) {
          max_change = std::max(max_change, std::abs(u - c.angles[k]));
          c.angles[k] = u;
          c.value = gu;
        }
      }
      if (max_change < tol) break;
      half_width = std::min(grid_.coarse_step, std::max(4.0 * max_change, 2.0 * tol));
    }
    return c;
  }

 private:
  template <typename G>
  static std::pair<double, double> golden_section(G&& g, double a, double b, double tol) {
    constexpr double kInvPhi = 0.6180339887498949;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double gc = g(c);
    double gd = g(d);
    double best_u = gc <= gd ? c : d;
    double best_g = std::min(gc, gd);
    while (b - a > tol) {
      if (gc <= gd) {
        b = d;
        d = c;
        gd = gc;
        c = b - kInvPhi * (b - a);
        gc = g(c);
        if (gc < best_g) {
          best_g = gc;
          best_u = c;
        }
      } else {
        a = c;
        c = d;
        gc = gd;
        d = a + kInvPhi * (b - a);
        gd = g(d);
        if (gd < best_g) {
          best_g = gd;
          best_u = d;
        }
      }
    }
    return {best_u, best_g};
  }

  const AngleObjective& f_;
  const GridSpec& grid_;
  double lower_;
  double upper_;
};

// Visits every ascending index tuple whose grid angles respect min_separation.
template <typename Visit>
void for_each_tuple(const std::vector<double>& pts, std::size_t m, double min_sep,
                    Visit&& visit) {
  std::vector<std::size_t> idx(m);
  auto recurse = [&](auto&& self, std::size_t depth, std::size_t start) -> void {
    for (std::size_t i = start; i < pts.size(); ++i) {
      if (depth > 0 && pts[i] - pts[idx[depth - 1]] < min_sep - 1e-12) continue;
      idx[depth] = i;
      if (depth + 1 == m) {
        visit(std::span<const std::size_t>(idx));
      } else {
        self(self, depth + 1, i + 1);
      }
    }
  };
  recurse(recurse, 0, 0);
}

}  // namespace

DoaVector minimize_doa_objective(const AngleObjective& objective, std::size_t sources,
                                 const GridSpec& grid, std::span<const DoaVector> hints) {
  return minimize_doa_objective(objective, GridTupleObjective{}, sources, grid, hints);
}

DoaVector minimize_doa_objective(const AngleObjective& objective,
                                 const GridTupleObjective& coarse, std::size_t sources,
                                 const GridSpec& grid, std::span<const DoaVector> hints) {
  grid.validate();
  if (sources < 1) {
    throw ConfigError("minimize_doa_objective: need at least one source");
  }
  const std::vector<double> pts = grid.points();

  std::vector<std::size_t> best_idx;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<double> angles(sources);
  for_each_tuple(pts, sources, grid.min_separation, [&](std::span<const std::size_t> idx) {
    double score;
    if (coarse) {
      score = coarse(idx);
    } else {
      for (std::size_t k = 0; k < sources; ++k) angles[k] = pts[idx[k]];
      score = objective(angles);
    }
    if (score < best_score || best_idx.empty()) {
      best_score = score;
      best_idx.assign(idx.begin(), idx.end());
    }
  });
  if (best_idx.empty()) {
    throw ConfigError("DOA search grid admits no ascending tuple for the requested sources");
  }

  Refiner refiner(objective, grid);
  std::vector<Candidate> starts;
  Candidate grid_best;
  for (std::size_t k = 0; k < sources; ++k) grid_best.angles.push_back(pts[best_idx[k]]);
  grid_best.value = objective(grid_best.angles);
  starts.push_back(std::move(grid_best));
  for (const DoaVector& h : hints) {
    if (h.size() != sources || !refiner.admissible(h.radians())) continue;
    Candidate c;
    c.angles.assign(h.radians().begin(), h.radians().end());
    c.value = objective(c.angles);
    starts.push_back(std::move(c));
  }

  Candidate best;
  for (Candidate& s : starts) {
    Candidate r = refiner.refine(std::move(s));
    if (r.value < best.value || best.angles.empty()) {
      best = std::move(r);
    }
  }
  return DoaVector(std::move(best.angles));
}

}  // namespace sirpdoa
