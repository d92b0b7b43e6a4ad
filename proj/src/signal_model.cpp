#include "sirpdoa/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sirpdoa/errors.hpp"
#include "sirpdoa/random.hpp"

namespace sirpdoa {

namespace {

bool all_finite(const CMatrix& m) {
  return m.allFinite();
}

void check_angle(double angle) {
  if (!std::isfinite(angle) || angle <= -kPi / 2 || angle >= kPi / 2) {
    std::ostringstream msg;
    msg << "steering angle " << angle << " rad outside (-pi/2, pi/2)";
    throw DomainError(msg.str());
  }
}

}  // namespace

ArrayGeometry::ArrayGeometry(std::vector<double> positions) : positions_(std::move(positions)) {
  if (positions_.empty()) {
    throw ConfigError("array geometry needs at least one sensor");
  }
  for (std::size_t i = 1; i < positions_.size(); ++i) {
    if (!(positions_[i] > positions_[i - 1])) {
      throw ConfigError("sensor positions must be strictly increasing");
    }
  }
}

ArrayGeometry ArrayGeometry::uniform_linear(std::size_t sensors, double spacing) {
  if (!(spacing > 0)) {
    throw ConfigError("ULA spacing must be positive");
  }
  std::vector<double> pos(sensors);
  for (std::size_t n = 0; n < sensors; ++n) {
    pos[n] = spacing * static_cast<double>(n);
  }
  return ArrayGeometry(std::move(pos));
}

DoaVector::DoaVector(std::vector<double> radians) : angles_(std::move(radians)) {
  if (angles_.empty()) {
    throw ConfigError("DOA vector must hold at least one angle");
  }
  for (std::size_t i = 0; i < angles_.size(); ++i) {
    check_angle(angles_[i]);
    if (i > 0 && !(angles_[i] > angles_[i - 1])) {
      throw ConfigError("DOA angles must be strictly ascending");
    }
  }
}

DoaVector DoaVector::from_degrees(std::span<const double> degrees) {
  std::vector<double> rad(degrees.size());
  std::transform(degrees.begin(), degrees.end(), rad.begin(), deg_to_rad);
  return DoaVector(std::move(rad));
}

std::vector<double> DoaVector::degrees() const {
  std::vector<double> deg(angles_.size());
  std::transform(angles_.begin(), angles_.end(), deg.begin(), rad_to_deg);
  return deg;
}

double DoaVector::max_abs_difference(const DoaVector& other) const {
  if (other.size() != size()) {
    throw DimensionError("DOA vectors differ in length");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    worst = std::max(worst, std::abs(angles_[i] - other.angles_[i]));
  }
  return worst;
}

SourceWaveforms::SourceWaveforms(CMatrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw ConfigError("waveforms need M >= 1 sources and T >= 1 snapshots");
  }
  if (!all_finite(values_)) {
    throw DomainError("waveforms contain non-finite entries");
  }
}

Snapshots::Snapshots(CMatrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw ConfigError("snapshot block must be non-empty");
  }
  if (!all_finite(values_)) {
    throw DomainError("snapshots contain non-finite entries");
  }
}

CVector steering_vector(const ArrayGeometry& geom, double angle) {
  check_angle(angle);
  const double phase = kPi * std::sin(angle);
  const auto pos = geom.positions();
  CVector a(static_cast<Eigen::Index>(pos.size()));
  for (std::size_t n = 0; n < pos.size(); ++n) {
    a(static_cast<Eigen::Index>(n)) = std::polar(1.0, phase * pos[n]);
  }
  return a;
}

void detail::fill_steering_matrix(const ArrayGeometry& geom, std::span<const double> angles,
                                  CMatrix& out) {
  const auto pos = geom.positions();
  out.resize(static_cast<Eigen::Index>(pos.size()), static_cast<Eigen::Index>(angles.size()));
  for (std::size_t m = 0; m < angles.size(); ++m) {
    const double phase = kPi * std::sin(angles[m]);
    for (std::size_t n = 0; n < pos.size(); ++n) {
      out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) =
          std::polar(1.0, phase * pos[n]);
    }
  }
}

CMatrix steering_matrix(const ArrayGeometry& geom, const DoaVector& doas) {
  if (doas.size() >= geom.sensors()) {
    std::ostringstream msg;
    msg << "need fewer sources than sensors (M=" << doas.size() << ", N=" << geom.sensors()
        << ")";
    throw ConfigError(msg.str());
  }
  CMatrix a;
  detail::fill_steering_matrix(geom, doas.radians(), a);
  Eigen::JacobiSVD<CMatrix> svd(a);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 1e-10 * sv(0)) {
    throw SingularityError("steering matrix is rank deficient for the given DOAs");
  }
  return a;
}

SourceWaveforms generate_waveforms(std::size_t sources, std::size_t snapshots,
                                   std::uint64_t seed, double per_source_power) {
  if (!(per_source_power > 0) || !std::isfinite(per_source_power)) {
    throw DomainError("per-source power must be positive");
  }
  if (sources < 1 || snapshots < 1) {
    throw ConfigError("waveforms need M >= 1 and T >= 1");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  const double amplitude = std::sqrt(per_source_power);
  CMatrix s(static_cast<Eigen::Index>(sources), static_cast<Eigen::Index>(snapshots));
  // Column-major fill keeps the draw order independent of M.
  for (Eigen::Index t = 0; t < s.cols(); ++t) {
    for (Eigen::Index m = 0; m < s.rows(); ++m) {
      s(m, t) = std::polar(amplitude, phase(rng));
    }
  }
  return SourceWaveforms(std::move(s));
}

Snapshots synthesize(const ArrayGeometry& geom, const DoaVector& doas,
                     const SourceWaveforms& waveforms, const CMatrix& noise) {
  const auto n = static_cast<Eigen::Index>(geom.sensors());
  const auto t = static_cast<Eigen::Index>(waveforms.snapshots());
  if (waveforms.sources() != doas.size()) {
    throw DimensionError("waveform rows must match the number of DOAs");
  }
  if (noise.rows() != n || noise.cols() != t) {
    std::ostringstream msg;
    msg << "noise block is " << noise.rows() << "x" << noise.cols() << ", expected " << n << "x"
        << t;
    throw DimensionError(msg.str());
  }
  CMatrix a = steering_matrix(geom, doas);
  return Snapshots(a * waveforms.matrix() + noise);
}

}  // namespace sirpdoa
