#include "sirpdoa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "sirpdoa/errors.hpp"
#include "sirpdoa/estimators.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa::oracle {

double golden_maximize(const std::function<double(double)>& f, double lo, double hi,
                       double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < 500 && b - a > tol; ++i) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

double maximize_positive(const std::function<double(double)>& f, double lo, double hi) {
  const double u = golden_maximize([&](double v) { return f(std::exp(v)); }, std::log(lo),
                                   std::log(hi), 1e-13);
  return std::exp(u);
}

std::vector<double> coordinate_minimize(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double initial_step,
                                        std::size_t max_sweeps) {
  std::vector<double> step(x.size(), initial_step);
  double fx = f(x);
  std::vector<double> trial = x;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    double scale = 1.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < x.size(); ++k) {
      trial = x;
      auto g = [&](double u) {
        trial[k] = u;
        return -f(trial);
      };
      const double u = golden_maximize(g, x[k] - step[k], x[k] + step[k], 1e-14 * scale);
      trial[k] = u;
      const double fu = f(trial);
      const double change = std::abs(u - x[k]);
      if (fu <= fx) {
        x[k] = u;
        fx = fu;
        max_change = std::max(max_change, change);
      }
      // Widen when the minimizer sits near the bracket edge, shrink otherwise.
      step[k] = change > 0.8 * step[k] ? 4.0 * step[k]
                                        : std::max(8.0 * change, 1e-12 * scale);
    }
    if (max_change < 1e-15 * scale) break;
  }
  return x;
}

double snapshot_conditional_ll(double tau, double quadratic, std::size_t sensors) {
  return -static_cast<double>(sensors) * std::log(tau) - quadratic / tau;
}

double conditional_ll_direct(const CMatrix& x, const CMatrix& a, const CMatrix& s,
                             const CMatrix& q, const std::vector<double>& taus) {
  const double n = static_cast<double>(x.rows());
  const double t = static_cast<double>(x.cols());
  const CMatrix q_inv = q.inverse();
  const double log_det = std::log(std::abs(q.determinant()));
  double ll = -t * n * std::log(kPi) - t * log_det;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const CVector r = x.col(k) - a * s.col(k);
    const double quad = (r.adjoint() * q_inv * r)(0, 0).real();
    ll += -n * std::log(taus[static_cast<std::size_t>(k)]) - quad / taus[static_cast<std::size_t>(k)];
  }
  return ll;
}

namespace {

// log prior written out from the density definitions.
double log_prior(double tau, double a, double b, TextureKind kind) {
  if (kind == TextureKind::Gamma) {
    return (a - 1.0) * std::log(tau) - tau / b - std::lgamma(a) - a * std::log(b);
  }
  return -(a + 1.0) * std::log(tau) - b / tau - std::lgamma(a) + a * std::log(b);
}

struct Instance {
  ArrayGeometry geom;
  DoaVector theta;
  CMatrix a;
  CMatrix s_true;
  CMatrix s_fit;  // perturbed waveform estimate used to form residuals
  CMatrix x;
  CMatrix q;      // Hermitian PD
};

CMatrix random_complex(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  CMatrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double re = normal(rng);
      m(r, c) = Complex(re, normal(rng));
    }
  }
  return m;
}

Instance random_instance(Rng& rng) {
  std::uniform_int_distribution<int> pick_n(3, 6);
  const int n = pick_n(rng);
  std::uniform_int_distribution<int> pick_m(1, std::min(2, n - 1));
  const int m = pick_m(rng);
  std::uniform_int_distribution<int> pick_t(2, 5);
  const int t = pick_t(rng);
  std::uniform_real_distribution<double> angle(-60.0, 60.0);
  std::vector<double> deg;
  while (static_cast<int>(deg.size()) < m) {
    const double cand = angle(rng);
    bool ok = true;
    for (double d : deg) ok = ok && std::abs(d - cand) > 15.0;
    if (ok) deg.push_back(cand);
  }
  std::sort(deg.begin(), deg.end());

  ArrayGeometry geom = ArrayGeometry::uniform_linear(static_cast<std::size_t>(n));
  DoaVector theta = DoaVector::from_degrees(deg);
  CMatrix a = steering_matrix(geom, theta);
  CMatrix s = random_complex(m, t, rng);
  CMatrix b = random_complex(n, n, rng, 0.5);
  CMatrix q = b * b.adjoint() + CMatrix::Identity(n, n);
  Eigen::LLT<CMatrix> llt(q);
  CMatrix noise = CMatrix(llt.matrixL()) * random_complex(n, t, rng, std::sqrt(0.5));
  CMatrix x = a * s + noise;
  CMatrix s_fit = s + random_complex(m, t, rng, 0.1);
  return Instance{std::move(geom), std::move(theta), std::move(a), std::move(s),
                  std::move(s_fit), std::move(x), std::move(q)};
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

double quad_direct(const CVector& r, const CMatrix& q_inv) {
  return (r.adjoint() * q_inv * r)(0, 0).real();
}

SuiteResult tau_suite(std::string_view name, std::size_t count, Rng& rng,
                      std::optional<TextureKind> kind) {
  SuiteResult res{std::string(name), count, 0.0, 1e-6, false};
  std::uniform_real_distribution<double> pick_a(0.5, 10.0);
  std::uniform_real_distribution<double> pick_b(0.2, 5.0);
  for (std::size_t i = 0; i < count; ++i) {
    const Instance inst = random_instance(rng);
    const CMatrix q_inv = inst.q.inverse();
    const auto n = static_cast<std::size_t>(inst.x.rows());
    const double a = pick_a(rng);
    const double b = pick_b(rng);
    for (Eigen::Index t = 0; t < inst.x.cols(); ++t) {
      const CVector r = inst.x.col(t) - inst.a * inst.s_fit.col(t);
      const double quad = quad_direct(r, q_inv);
      double got;
      double want;
      if (kind) {
        got = estimate_tau_map(inst.x.col(t), inst.geom, inst.theta, inst.s_fit.col(t), q_inv, a,
                               b, *kind);
        want = maximize_positive([&](double tau) {
          return snapshot_conditional_ll(tau, quad, n) + log_prior(tau, a, b, *kind);
        });
      } else {
        got = estimate_tau_ml(inst.x.col(t), inst.geom, inst.theta, inst.s_fit.col(t), q_inv);
        want = maximize_positive(
            [&](double tau) { return snapshot_conditional_ll(tau, quad, n); });
      }
      res.max_error = std::max(res.max_error, rel_err(got, want));
    }
  }
  return res;
}

SuiteResult waveform_suite(std::size_t count, Rng& rng) {
  SuiteResult res{"waveforms", count, 0.0, 1e-6, false};
  std::uniform_real_distribution<double> pick_tau(0.2, 5.0);
  for (std::size_t i = 0; i < count; ++i) {
    const Instance inst = random_instance(rng);
    const CMatrix q_inv = inst.q.inverse();
    const auto t_count = inst.x.cols();
    const auto m = inst.a.cols();
    std::vector<double> taus(static_cast<std::size_t>(t_count));
    for (double& v : taus) v = pick_tau(rng);

    const SourceWaveforms got =
        estimate_waveforms(Snapshots(inst.x), inst.geom, inst.theta, hermitian_factor(inst.q));

    // Minimize sum_t (x - A s)^H Q^{-1} (x - A s) / tau over the real and
    // imaginary parts of every s(t) jointly.
    auto unpack = [&](const std::vector<double>& v) {
      CMatrix s(m, t_count);
      for (Eigen::Index t = 0; t < t_count; ++t) {
        for (Eigen::Index k = 0; k < m; ++k) {
          const auto base = static_cast<std::size_t>(2 * (t * m + k));
          s(k, t) = Complex(v[base], v[base + 1]);
        }
      }
      return s;
    };
    auto objective = [&](const std::vector<double>& v) {
      const CMatrix s = unpack(v);
      double total = 0.0;
      for (Eigen::Index t = 0; t < t_count; ++t) {
        const CVector r = inst.x.col(t) - inst.a * s.col(t);
        total += quad_direct(r, q_inv) / taus[static_cast<std::size_t>(t)];
      }
      return total;
    };
    const std::vector<double> start(static_cast<std::size_t>(2 * m * t_count), 0.0);
    const CMatrix want = unpack(coordinate_minimize(objective, start, 1.0, 2000));
    const double err = (got.matrix() - want).norm() / want.norm();
    res.max_error = std::max(res.max_error, err);
  }
  return res;
}

SuiteResult scale_suite(std::string_view name, std::size_t count, Rng& rng, TextureKind kind) {
  SuiteResult res{std::string(name), count, 0.0, 1e-6, false};
  std::uniform_real_distribution<double> pick_a(0.5, 8.0);
  std::uniform_real_distribution<double> pick_tau(0.05, 20.0);
  std::uniform_int_distribution<int> pick_t(3, 50);
  for (std::size_t i = 0; i < count; ++i) {
    const double a = pick_a(rng);
    std::vector<double> taus(static_cast<std::size_t>(pick_t(rng)));
    for (double& v : taus) v = pick_tau(rng);
    const double got = estimate_b(taus, a, kind);
    const double want = maximize_positive([&](double b) {
      double ll = 0.0;
      for (double tau : taus) ll += log_prior(tau, a, b, kind);
      return ll;
    });
    res.max_error = std::max(res.max_error, rel_err(got, want));
  }
  return res;
}

// Closed-form speckle update vs. the known-texture update with each texture
// replaced by its per-snapshot maximizer (written here in textbook form).
SuiteResult speckle_suite(std::string_view name, std::size_t count, Rng& rng,
                          std::optional<TextureKind> kind) {
  SuiteResult res{std::string(name), count, 0.0, 1e-10, false};
  std::uniform_real_distribution<double> pick_a(0.5, 10.0);
  std::uniform_real_distribution<double> pick_b(0.2, 5.0);
  for (std::size_t i = 0; i < count; ++i) {
    const Instance inst = random_instance(rng);
    const CMatrix q_inv = inst.q.inverse();
    const double n = static_cast<double>(inst.x.rows());
    const double a = pick_a(rng);
    const double b = pick_b(rng);
    const Snapshots x(inst.x);
    const SourceWaveforms s(inst.s_fit);

    CMatrix got;
    if (kind) {
      got = update_q_map(x, inst.geom, inst.theta, s, q_inv, a, b, *kind);
    } else {
      got = update_q_ml(x, inst.geom, inst.theta, s, q_inv);
    }

    CMatrix want = CMatrix::Zero(inst.x.rows(), inst.x.rows());
    for (Eigen::Index t = 0; t < inst.x.cols(); ++t) {
      const CVector r = inst.x.col(t) - inst.a * inst.s_fit.col(t);
      const double quad = quad_direct(r, q_inv);
      double tau;
      if (!kind) {
        tau = quad / n;
      } else if (*kind == TextureKind::Gamma) {
        const double c = (a - n - 1.0) * b;
        tau = 0.5 * (c + std::sqrt(c * c + 4.0 * b * quad));
      } else {
        tau = (quad + b) / (a + n + 1.0);
      }
      want += r * r.adjoint() / tau;
    }
    want /= static_cast<double>(inst.x.cols());
    res.max_error = std::max(res.max_error, (got - want).norm() / want.norm());
  }
  return res;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"tau-ml", "tau-map-k", "tau-map-t", "waveforms", "scale-b-k",
          "scale-b-t", "q-ml", "q-map-k", "q-map-t"};
}

SuiteResult run_suite(std::string_view name, std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {std::hash<std::string_view>{}(name)}));
  SuiteResult res;
  if (name == "tau-ml") {
    res = tau_suite(name, instances, rng, std::nullopt);
  } else if (name == "tau-map-k") {
    res = tau_suite(name, instances, rng, TextureKind::Gamma);
  } else if (name == "tau-map-t") {
    res = tau_suite(name, instances, rng, TextureKind::InverseGamma);
  } else if (name == "waveforms") {
    res = waveform_suite(instances, rng);
  } else if (name == "scale-b-k") {
    res = scale_suite(name, instances, rng, TextureKind::Gamma);
  } else if (name == "scale-b-t") {
    res = scale_suite(name, instances, rng, TextureKind::InverseGamma);
  } else if (name == "q-ml") {
    res = speckle_suite(name, instances, rng, std::nullopt);
  } else if (name == "q-map-k") {
    res = speckle_suite(name, instances, rng, TextureKind::Gamma);
  } else if (name == "q-map-t") {
    res = speckle_suite(name, instances, rng, TextureKind::InverseGamma);
  } else {
    throw ConfigError("unknown oracle suite '" + std::string(name) + "'");
  }
  res.passed = res.max_error <= res.tolerance;
  return res;
}

}  // namespace sirpdoa::oracle
