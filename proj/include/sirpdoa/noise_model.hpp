#pragma once

// Spherically invariant (compound-Gaussian) noise: n(t) = sqrt(tau(t)) sigma(t),
// with i.i.d. positive textures tau(t) and complex Gaussian speckle sigma(t) ~ CN(0, Q).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sirpdoa/random.hpp"
#include "sirpdoa/signal_model.hpp"

namespace sirpdoa {

/// Gamma textures give K-distributed noise; inverse-gamma textures give
/// t-distributed noise.
enum class TextureKind { Gamma, InverseGamma };

std::string_view to_string(TextureKind kind);
TextureKind parse_texture_kind(std::string_view name);

struct TextureParams {
  TextureParams(TextureKind kind, double shape, double scale);

  TextureKind kind;
  double shape;  // a
  double scale;  // b
};

/// Hermitian positive-definite speckle covariance. The stored matrix is
/// exactly Hermitian (the input is symmetrized after a 1e-12 check).
class SpeckleCovariance {
 public:
  explicit SpeckleCovariance(CMatrix q);

  const CMatrix& matrix() const { return q_; }
  std::size_t size() const { return static_cast<std::size_t>(q_.rows()); }
  double trace() const { return q_.trace().real(); }

 private:
  CMatrix q_;
};

struct NoiseBlock {
  CMatrix noise;                // N x T
  std::vector<double> textures;  // tau(t), length T
};

double texture_pdf(const TextureParams& params, double tau);
double log_texture_pdf(const TextureParams& params, double tau);

/// E{tau}: a*b for gamma, b/(a-1) for inverse gamma (requires a > 1).
double texture_mean(const TextureParams& params);

std::vector<double> sample_textures(const TextureParams& params, std::size_t count, Rng& rng);
std::vector<double> sample_textures(const TextureParams& params, std::size_t count,
                                    std::uint64_t seed);

/// [Q]_{m,n} = sigma2 * 0.9^|m-n| * exp(j*pi*(m-n)/2).
SpeckleCovariance build_speckle_covariance(std::size_t sensors, double sigma2 = 1.0);

/// Columns are i.i.d. CN(0, Q) draws, built as L g(t) with L the Cholesky
/// factor of Q and g(t) ~ CN(0, I).
CMatrix sample_speckle(const SpeckleCovariance& q, std::size_t snapshots, Rng& rng);

/// Requires tr(Q) = N (to 1e-9 relative).
NoiseBlock sample_noise(const TextureParams& params, const SpeckleCovariance& q,
                        std::size_t snapshots, Rng& rng);
NoiseBlock sample_noise(const TextureParams& params, const SpeckleCovariance& q,
                        std::size_t snapshots, std::uint64_t seed);

/// Linear SNR = sum_t ||s(t)||^2 / (T E{tau} tr{Q}).
double compute_snr(const SourceWaveforms& waveforms, const TextureParams& params,
                   const SpeckleCovariance& q);

double snr_to_db(double linear);
double db_to_snr(double db);

/// Multiplies S by the scalar that makes compute_snr hit `target_snr` (linear).
SourceWaveforms scale_waveforms_to_snr(const SourceWaveforms& waveforms, double target_snr,
                                       const TextureParams& params, const SpeckleCovariance& q);

}  // namespace sirpdoa
