#include "sirpdoa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sirpdoa/errors.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa {

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kCsvHeader = "snr_db,estimator,mse_deg2,trials,failed_trials";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

std::vector<double> sorted_truth(const ExperimentConfig& config) {
  std::vector<double> truth = config.doas_deg;
  std::sort(truth.begin(), truth.end());
  return truth;
}

}  // namespace

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t snr_index, std::size_t trial) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(snr_index),
                                   static_cast<std::uint64_t>(trial)});
}

TrialResult run_trial(const ExperimentConfig& config, double snr_db, std::uint64_t seed) {
  config.validate();
  const ArrayGeometry geom = ArrayGeometry::uniform_linear(config.sensors, config.spacing);
  const std::vector<double> truth_deg = sorted_truth(config);
  const DoaVector truth = DoaVector::from_degrees(truth_deg);
  const TextureParams params(config.texture, config.shape, config.scale);
  const SpeckleCovariance q =
      normalize_trace(build_speckle_covariance(config.sensors, config.speckle_sigma2).matrix());

  const SourceWaveforms raw = generate_waveforms(
      truth.size(), config.snapshots, derive_seed(seed, Stream::kWaveforms), 1.0);
  const SourceWaveforms s = scale_waveforms_to_snr(raw, db_to_snr(snr_db), params, q);
  const NoiseBlock noise =
      sample_noise(params, q, config.snapshots, derive_seed(seed, Stream::kNoise));
  const Snapshots x = synthesize(geom, truth, s, noise.noise);

  TrialResult result;
  result.snr_db = snr_db;
  result.seed = seed;
  for (Estimator e : config.estimators) {
    EstimatorOutcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      switch (e) {
        case Estimator::CMLE: {
          const DoaVector theta = cmle(x, geom, truth.size(), config.iteration.grid);
          out.theta_deg = theta.degrees();
          out.theta_trace_deg = {out.theta_deg};
          out.iterations = 1;
          break;
        }
        case Estimator::IMLE:
        case Estimator::IMAPE: {
          const EstimateReport report =
              e == Estimator::IMLE
                  ? imle(x, geom, truth.size(), config.iteration)
                  : imape(x, geom, truth.size(), config.texture, config.iteration,
                          derive_seed(seed, Stream::kTextureInit));
          out.theta_deg = report.final_state.theta.degrees();
          for (const DoaVector& t : report.theta_trace) out.theta_trace_deg.push_back(t.degrees());
          out.ll_trace = report.ll_trace;
          out.iterations = report.iterations_used;
          break;
        }
      }
      out.ok = true;
    } catch (const std::exception& ex) {
      out.ok = false;
      out.error = ex.what();
    }
    out.wall_seconds = seconds_since(start);
    result.outcomes.emplace(e, std::move(out));
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t parallel) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t cells = config.snr_db.size() * config.trials;
  std::vector<TrialResult> results(cells);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t cell = next++; cell < cells; cell = next++) {
      const std::size_t snr_index = cell / config.trials;
      const std::size_t trial = cell % config.trials;
      TrialResult r = run_trial(config, config.snr_db[snr_index],
                                trial_seed(config.master_seed, snr_index, trial));
      r.snr_index = snr_index;
      r.trial = trial;
      results[cell] = std::move(r);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallel, cells));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  ExperimentResult out;
  out.table = aggregate(config, results, &out.warnings);
  out.trials = std::move(results);
  out.wall_seconds = seconds_since(start);
  return out;
}

double matched_squared_error(std::span<const double> estimate_deg,
                             std::span<const double> truth_deg) {
  if (estimate_deg.size() != truth_deg.size() || truth_deg.empty()) {
    throw DimensionError("estimate and truth must have the same non-zero length");
  }
  std::vector<std::size_t> perm(truth_deg.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      const double d = estimate_deg[perm[k]] - truth_deg[k];
      sum += d * d;
    }
    best = std::min(best, sum);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(truth_deg.size());
}

double mse_permutation_matched(std::span<const std::vector<double>> estimates_deg,
                               std::span<const double> truth_deg) {
  if (estimates_deg.empty()) {
    throw DimensionError("no estimates to average");
  }
  double sum = 0.0;
  for (const auto& e : estimates_deg) {
    sum += matched_squared_error(e, truth_deg);
  }
  return sum / static_cast<double>(estimates_deg.size());
}

std::vector<double> trial_errors(const ExperimentResult& result, const ExperimentConfig& config,
                                 double snr_db, Estimator estimator) {
  const std::vector<double> truth = sorted_truth(config);
  std::vector<double> errors;
  for (const TrialResult& t : result.trials) {
    if (t.snr_db != snr_db) continue;
    const auto it = t.outcomes.find(estimator);
    if (it == t.outcomes.end() || !it->second.ok) continue;
    errors.push_back(matched_squared_error(it->second.theta_deg, truth));
  }
  return errors;
}

std::pair<double, double> bootstrap_mean_interval(std::span<const double> values,
                                                  std::size_t resamples, double level,
                                                  std::uint64_t seed) {
  if (values.empty() || resamples < 2 || !(level > 0 && level < 1)) {
    throw DomainError("bootstrap needs values, >= 2 resamples and a level in (0, 1)");
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(resamples);
  for (double& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[pick(rng)];
    m = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = 0.5 * (1.0 - level);
  auto at = [&](double p) {
    const auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(resamples - 1)));
    return means[std::min(idx, resamples - 1)];
  };
  return {at(alpha), at(1.0 - alpha)};
}

void MseTable::sort() {
  std::sort(rows.begin(), rows.end(), [](const MseRow& a, const MseRow& b) {
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    return a.estimator < b.estimator;
  });
}

const MseRow* MseTable::find(double snr_db, std::string_view estimator) const {
  for (const MseRow& r : rows) {
    if (r.snr_db == snr_db && r.estimator == estimator) return &r;
  }
  return nullptr;
}

MseTable aggregate(const ExperimentConfig& config, std::span<const TrialResult> trials,
                   std::vector<std::string>* warnings) {
  const std::vector<double> truth = sorted_truth(config);
  MseTable table;
  for (double snr : config.snr_db) {
    for (Estimator e : config.estimators) {
      double sum = 0.0;
      std::size_t ok = 0;
      std::size_t failed = 0;
      for (const TrialResult& t : trials) {
        if (t.snr_db != snr) continue;
        const auto it = t.outcomes.find(e);
        if (it == t.outcomes.end()) continue;
        if (!it->second.ok) {
          ++failed;
          continue;
        }
        sum += matched_squared_error(it->second.theta_deg, truth);
        ++ok;
      }
      MseRow row;
      row.snr_db = snr;
      row.estimator = std::string(to_string(e));
      row.mse_deg2 = ok > 0 ? sum / static_cast<double>(ok) : std::nan("");
      row.trials = ok;
      row.failed_trials = failed;
      if (warnings && failed * 10 > ok + failed) {
        warnings->push_back(row.estimator + " failed " + std::to_string(failed) + " of " +
                            std::to_string(ok + failed) + " trials at SNR " +
                            fmt_double(snr) + " dB");
      }
      table.rows.push_back(std::move(row));
    }
  }
  table.sort();
  return table;
}

std::string mse_table_to_csv(const MseTable& table) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const MseRow& r : table.rows) {
    out << fmt_double(r.snr_db) << ',' << r.estimator << ',' << fmt_double(r.mse_deg2) << ','
        << r.trials << ',' << r.failed_trials << '\n';
  }
  return out.str();
}

MseTable parse_mse_csv(std::string_view csv) {
  MseTable table;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw IoError("unexpected MSE CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) {
      throw IoError("malformed MSE CSV row: " + line);
    }
    try {
      MseRow r;
      r.snr_db = std::stod(f[0]);
      r.estimator = f[1];
      r.mse_deg2 = std::stod(f[2]);
      r.trials = std::stoull(f[3]);
      r.failed_trials = std::stoull(f[4]);
      table.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw IoError("malformed MSE CSV row: " + line);
    }
  }
  return table;
}

std::string plot_data_csv(const MseTable& table) {
  std::vector<MseRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const MseRow& a, const MseRow& b) {
    if (a.estimator != b.estimator) return a.estimator < b.estimator;
    return a.snr_db < b.snr_db;
  });
  std::ostringstream out;
  out << "estimator,snr_db,log10_mse\n";
  for (const MseRow& r : rows) {
    out << r.estimator << ',' << fmt_double(r.snr_db) << ',' << fmt_double(std::log10(r.mse_deg2))
        << '\n';
  }
  return out.str();
}

void write_results(const ExperimentResult& result, const ExperimentConfig& config,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  write_file(dir / "results.csv", mse_table_to_csv(result.table));
  write_file(dir / "plot_data.csv", plot_data_csv(result.table));

  std::ostringstream trials;
  trials << "snr_db,trial,seed,estimator,ok,iterations,theta_deg\n";
  for (const TrialResult& t : result.trials) {
    for (const auto& [e, o] : t.outcomes) {
      trials << fmt_double(t.snr_db) << ',' << t.trial << ',' << t.seed << ',' << to_string(e)
             << ',' << (o.ok ? 1 : 0) << ',' << o.iterations << ',';
      for (std::size_t k = 0; k < o.theta_deg.size(); ++k) {
        trials << (k ? ";" : "") << fmt_double(o.theta_deg[k]);
      }
      trials << '\n';
    }
  }
  write_file(dir / "trials.csv", trials.str());

  nlohmann::json meta;
  meta["tool"] = "sirpdoa";
  meta["version"] = kVersion;
  meta["config"] = nlohmann::json::parse(config_to_json(config));
  meta["master_seed"] = config.master_seed;
  meta["seed_derivation"] = "trial_seed = splitmix64 chain of (master_seed, snr_index, trial)";
  meta["wall_seconds"] = result.wall_seconds;
  meta["created_unix"] = static_cast<long long>(std::time(nullptr));
  meta["warnings"] = result.warnings;
  std::size_t failed = 0;
  for (const MseRow& r : result.table.rows) failed += r.failed_trials;
  meta["failed_trials_total"] = failed;
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

}  // namespace sirpdoa
