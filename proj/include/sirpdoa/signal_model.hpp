#pragma once

// Narrowband far-field array model: x(t) = A(theta) s(t) + n(t).

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace sirpdoa {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Sensor positions in units of half wavelengths. A half-wavelength ULA has
/// positions 0, 1, ..., N-1.
class ArrayGeometry {
 public:
  explicit ArrayGeometry(std::vector<double> positions);

  static ArrayGeometry uniform_linear(std::size_t sensors, double spacing = 1.0);

  std::size_t sensors() const { return positions_.size(); }
  std::span<const double> positions() const { return positions_; }

 private:
  std::vector<double> positions_;
};

/// Source directions in radians, strictly ascending inside (-pi/2, pi/2).
class DoaVector {
 public:
  explicit DoaVector(std::vector<double> radians);

  static DoaVector from_degrees(std::span<const double> degrees);

  std::size_t size() const { return angles_.size(); }
  double operator[](std::size_t i) const { return angles_[i]; }
  std::span<const double> radians() const { return angles_; }
  std::vector<double> degrees() const;

  /// Largest absolute per-source difference, radians.
  double max_abs_difference(const DoaVector& other) const;

  friend bool operator==(const DoaVector&, const DoaVector&) = default;

 private:
  std::vector<double> angles_;
};

/// Deterministic source waveforms, M x T (column t is s(t)).
class SourceWaveforms {
 public:
  explicit SourceWaveforms(CMatrix values);

  const CMatrix& matrix() const { return values_; }
  std::size_t sources() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t snapshots() const { return static_cast<std::size_t>(values_.cols()); }

  /// Sum over t of ||s(t)||^2.
  double total_power() const { return values_.squaredNorm(); }

 private:
  CMatrix values_;
};

/// Array observations, N x T (column t is x(t)).
class Snapshots {
 public:
  explicit Snapshots(CMatrix values);

  const CMatrix& matrix() const { return values_; }
  std::size_t sensors() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t snapshots() const { return static_cast<std::size_t>(values_.cols()); }

 private:
  CMatrix values_;
};

/// Element n is exp(j*pi*position_n*sin(angle)). Throws DomainError outside
/// (-pi/2, pi/2).
CVector steering_vector(const ArrayGeometry& geom, double angle);

/// A(theta) = [a(theta_1), ..., a(theta_M)]. Requires M < N and full column
/// rank (checked numerically).
CMatrix steering_matrix(const ArrayGeometry& geom, const DoaVector& doas);

/// Unit-modulus random-phase waveforms scaled by sqrt(per_source_power).
SourceWaveforms generate_waveforms(std::size_t sources, std::size_t snapshots,
                                   std::uint64_t seed, double per_source_power);

/// X = A(theta) S + noise.
Snapshots synthesize(const ArrayGeometry& geom, const DoaVector& doas,
                     const SourceWaveforms& waveforms, const CMatrix& noise);

namespace detail {

// Hot-path variant for the DOA search: no range, order or rank checks.
void fill_steering_matrix(const ArrayGeometry& geom, std::span<const double> angles,
                          CMatrix& out);

}  // namespace detail

}  // namespace sirpdoa
