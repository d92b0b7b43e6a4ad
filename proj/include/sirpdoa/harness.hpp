#pragma once

// Monte-Carlo MSE-vs-SNR experiments: configuration, per-trial execution,
// permutation-matched MSE aggregation and result files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sirpdoa/estimators.hpp"
#include "sirpdoa/noise_model.hpp"
#include "sirpdoa/numerics.hpp"

namespace sirpdoa {

enum class Estimator { CMLE, IMLE, IMAPE };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);

struct ExperimentConfig {
  std::size_t sensors = 6;
  double spacing = 1.0;  // half wavelengths
  std::vector<double> doas_deg{30.0, 60.0};
  std::size_t snapshots = 10;
  TextureKind texture = TextureKind::InverseGamma;
  double shape = 1.1;
  double scale = 2.0;
  double speckle_sigma2 = 1.0;
  std::vector<double> snr_db{-5, 0, 5, 10, 15, 20, 25};
  std::size_t trials = 100;
  std::vector<Estimator> estimators{Estimator::CMLE, Estimator::IMLE, Estimator::IMAPE};
  IterationOptions iteration;
  std::uint64_t master_seed = 20170305;

  std::size_t sources() const { return doas_deg.size(); }

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// `json_text` may omit any key; omitted keys keep their defaults.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config, int indent = 2);

struct EstimatorOutcome {
  bool ok = false;
  std::vector<double> theta_deg;
  std::vector<std::vector<double>> theta_trace_deg;
  std::vector<double> ll_trace;
  std::size_t iterations = 0;
  double wall_seconds = 0.0;
  std::string error;
};

struct TrialResult {
  double snr_db = 0.0;
  std::size_t snr_index = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::map<Estimator, EstimatorOutcome> outcomes;
};

struct MseRow {
  double snr_db = 0.0;
  std::string estimator;
  double mse_deg2 = 0.0;
  std::size_t trials = 0;
  std::size_t failed_trials = 0;

  friend bool operator==(const MseRow&, const MseRow&) = default;
};

struct MseTable {
  std::vector<MseRow> rows;

  /// SNR ascending, then estimator name ascending.
  void sort();
  const MseRow* find(double snr_db, std::string_view estimator) const;

  friend bool operator==(const MseTable&, const MseTable&) = default;
};

struct ExperimentResult {
  MseTable table;
  std::vector<TrialResult> trials;  // ordered by (snr index, trial index)
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t snr_index, std::size_t trial);

/// Everything in a trial is derived from `seed`: waveforms, noise and the
/// IMAPE texture initialization each use their own sub-stream.
TrialResult run_trial(const ExperimentConfig& config, double snr_db, std::uint64_t seed);

/// Runs every (SNR, trial) cell, `parallel` cells at a time. Aggregation does
/// not depend on completion order.
ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t parallel = 1);

/// Squared error of one estimate after the best source-to-estimate pairing,
/// averaged over sources (degrees^2).
double matched_squared_error(std::span<const double> estimate_deg,
                             std::span<const double> truth_deg);

/// Mean of matched_squared_error over all estimates (degrees^2).
double mse_permutation_matched(std::span<const std::vector<double>> estimates_deg,
                               std::span<const double> truth_deg);

/// Per-trial matched squared errors of one estimator at one SNR; failed
/// trials are skipped.
std::vector<double> trial_errors(const ExperimentResult& result, const ExperimentConfig& config,
                                 double snr_db, Estimator estimator);

/// Percentile bootstrap interval for the mean of `values`.
std::pair<double, double> bootstrap_mean_interval(std::span<const double> values,
                                                  std::size_t resamples, double level,
                                                  std::uint64_t seed);

MseTable aggregate(const ExperimentConfig& config, std::span<const TrialResult> trials,
                   std::vector<std::string>* warnings = nullptr);

std::string mse_table_to_csv(const MseTable& table);
MseTable parse_mse_csv(std::string_view csv);

/// (estimator, snr_db, log10 mse) rows for external plotting.
std::string plot_data_csv(const MseTable& table);

/// Writes results.csv, plot_data.csv, trials.csv and metadata.json into `dir`.
void write_results(const ExperimentResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir);

}  // namespace sirpdoa
