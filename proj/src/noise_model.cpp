#include "sirpdoa/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "sirpdoa/errors.hpp"

namespace sirpdoa {

std::string_view to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::Gamma:
      return "gamma";
    case TextureKind::InverseGamma:
      return "inverse_gamma";
  }
  return "unknown";
}

TextureKind parse_texture_kind(std::string_view name) {
  if (name == "gamma" || name == "K" || name == "k") {
    return TextureKind::Gamma;
  }
  if (name == "inverse_gamma" || name == "t") {
    return TextureKind::InverseGamma;
  }
  throw ConfigError("unknown texture kind '" + std::string(name) +
                    "' (expected gamma or inverse_gamma)");
}

TextureParams::TextureParams(TextureKind kind_, double shape_, double scale_)
    : kind(kind_), shape(shape_), scale(scale_) {
  if (!(shape > 0) || !(scale > 0) || !std::isfinite(shape) || !std::isfinite(scale)) {
    std::ostringstream msg;
    msg << "texture parameters must be positive (a=" << shape << ", b=" << scale << ")";
    throw DomainError(msg.str());
  }
}

SpeckleCovariance::SpeckleCovariance(CMatrix q) : q_(std::move(q)) {
  if (q_.rows() < 1 || q_.rows() != q_.cols()) {
    throw DimensionError("speckle covariance must be square and non-empty");
  }
  if (!q_.allFinite()) {
    throw DomainError("speckle covariance has non-finite entries");
  }
  const double scale = std::max(1.0, q_.cwiseAbs().maxCoeff());
  if ((q_ - q_.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("speckle covariance is not Hermitian");
  }
  CMatrix sym = 0.5 * (q_ + q_.adjoint());
  q_ = std::move(sym);
}

double log_texture_pdf(const TextureParams& p, double tau) {
  if (!(tau > 0)) {
    throw DomainError("texture density is supported on tau > 0");
  }
  const double a = p.shape;
  const double b = p.scale;
  switch (p.kind) {
    case TextureKind::Gamma:
      return -std::lgamma(a) - a * std::log(b) + (a - 1.0) * std::log(tau) - tau / b;
    case TextureKind::InverseGamma:
      return -std::lgamma(a) + a * std::log(b) - (a + 1.0) * std::log(tau) - b / tau;
  }
  return 0.0;
}

double texture_pdf(const TextureParams& params, double tau) {
  return std::exp(log_texture_pdf(params, tau));
}

double texture_mean(const TextureParams& p) {
  if (p.kind == TextureKind::Gamma) {
    return p.shape * p.scale;
  }
  if (!(p.shape > 1.0)) {
    std::ostringstream msg;
    msg << "inverse-gamma texture mean is undefined for a <= 1 (a=" << p.shape << ")";
    throw DomainError(msg.str());
  }
  return p.scale / (p.shape - 1.0);
}

std::vector<double> sample_textures(const TextureParams& p, std::size_t count, Rng& rng) {
  if (count < 1) {
    throw ConfigError("texture sample count must be at least 1");
  }
  std::vector<double> out(count);
  if (p.kind == TextureKind::Gamma) {
    std::gamma_distribution<double> gamma(p.shape, p.scale);
    for (auto& v : out) {
      v = gamma(rng);
    }
  } else {
    std::gamma_distribution<double> gamma(p.shape, 1.0 / p.scale);
    for (auto& v : out) {
      v = 1.0 / gamma(rng);
    }
  }
  for (auto& v : out) {
    // Underflow for tiny shapes; keep the support strictly positive.
    if (!(v > 0)) v = std::numeric_limits<double>::min();
    if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
  }
  return out;
}

std::vector<double> sample_textures(const TextureParams& params, std::size_t count,
                                    std::uint64_t seed) {
  Rng rng(seed);
  return sample_textures(params, count, rng);
}

SpeckleCovariance build_speckle_covariance(std::size_t sensors, double sigma2) {
  if (sensors < 1) {
    throw ConfigError("speckle covariance needs N >= 1");
  }
  if (!(sigma2 > 0)) {
    throw DomainError("speckle power must be positive");
  }
  const auto n = static_cast<Eigen::Index>(sensors);
  CMatrix q(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto lag = static_cast<double>(r - c);
      q(r, c) = std::polar(sigma2 * std::pow(0.9, std::abs(lag)), kPi * lag / 2.0);
    }
  }
  return SpeckleCovariance(std::move(q));
}

CMatrix sample_speckle(const SpeckleCovariance& q, std::size_t snapshots, Rng& rng) {
  Eigen::LLT<CMatrix> llt(q.matrix());
  if (llt.info() != Eigen::Success) {
    throw SingularityError("speckle covariance is not positive definite");
  }
  const auto n = static_cast<Eigen::Index>(q.size());
  const auto t = static_cast<Eigen::Index>(snapshots);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  CMatrix g(n, t);
  for (Eigen::Index c = 0; c < t; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(r, c) = Complex(re, im);
    }
  }
  return llt.matrixL() * g;
}

NoiseBlock sample_noise(const TextureParams& params, const SpeckleCovariance& q,
                        std::size_t snapshots, Rng& rng) {
  const double n = static_cast<double>(q.size());
  if (std::abs(q.trace() - n) > 1e-9 * n) {
    throw ConfigError("speckle covariance must be trace-normalized (tr Q = N)");
  }
  NoiseBlock block;
  block.textures = sample_textures(params, snapshots, rng);
  block.noise = sample_speckle(q, snapshots, rng);
  for (std::size_t t = 0; t < snapshots; ++t) {
    block.noise.col(static_cast<Eigen::Index>(t)) *= std::sqrt(block.textures[t]);
  }
  return block;
}

NoiseBlock sample_noise(const TextureParams& params, const SpeckleCovariance& q,
                        std::size_t snapshots, std::uint64_t seed) {
  Rng rng(seed);
  return sample_noise(params, q, snapshots, rng);
}

double compute_snr(const SourceWaveforms& waveforms, const TextureParams& params,
                   const SpeckleCovariance& q) {
  const double t = static_cast<double>(waveforms.snapshots());
  return waveforms.total_power() / (t * texture_mean(params) * q.trace());
}

double snr_to_db(double linear) { return 10.0 * std::log10(linear); }

double db_to_snr(double db) { return std::pow(10.0, db / 10.0); }

SourceWaveforms scale_waveforms_to_snr(const SourceWaveforms& waveforms, double target_snr,
                                       const TextureParams& params, const SpeckleCovariance& q) {
  if (!(target_snr > 0) || !std::isfinite(target_snr)) {
    throw DomainError("target SNR must be positive and finite");
  }
  const double current = compute_snr(waveforms, params, q);
  if (!(current > 0)) {
    throw DomainError("cannot scale all-zero waveforms to a target SNR");
  }
  return SourceWaveforms(waveforms.matrix() * std::sqrt(target_snr / current));
}

}  // namespace sirpdoa
