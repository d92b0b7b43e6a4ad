#pragma once

// Brute-force reference solutions for the closed-form estimator updates.
// Nothing here calls the closed forms it is compared against: every
// reference either optimizes the likelihood numerically or re-derives a
// quantity from its definition.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/signal_model.hpp"

namespace sirpdoa::oracle {

/// Golden-section maximizer of a unimodal function on [lo, hi].
double golden_maximize(const std::function<double(double)>& f, double lo, double hi,
                       double tol);

/// Maximizer of a unimodal function of a positive variable, searched in
/// log-space on [lo, hi].
double maximize_positive(const std::function<double(double)>& f, double lo = 1e-8,
                         double hi = 1e8);

/// Gradient-free cyclic coordinate minimization with golden-section line
/// searches; returns the minimizer starting from `start`.
std::vector<double> coordinate_minimize(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> start, double initial_step,
                                        std::size_t max_sweeps = 400);

/// Per-snapshot conditional log-likelihood terms in tau: -N ln tau - q / tau.
double snapshot_conditional_ll(double tau, double quadratic, std::size_t sensors);

/// Conditional log-likelihood computed from explicit determinants and
/// inverses (no whitening factor).
double conditional_ll_direct(const CMatrix& x, const CMatrix& a, const CMatrix& s,
                             const CMatrix& q, const std::vector<double>& taus);

struct SuiteResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;  // relative error (or relative Frobenius)
  double tolerance = 0.0;
  bool passed = false;
};

std::vector<std::string> suite_names();

/// Runs one named suite ("tau-ml", "tau-map-k", "tau-map-t", "waveforms",
/// "scale-b-k", "scale-b-t", "q-ml", "q-map-k", "q-map-t") on random small
/// instances.
SuiteResult run_suite(std::string_view name, std::size_t instances, std::uint64_t seed);

}  // namespace sirpdoa::oracle
