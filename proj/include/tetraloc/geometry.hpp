#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <utility>

#include "tetraloc/constants.hpp"
#include "tetraloc/errors.hpp"

namespace tetraloc {

enum class ArrayKind { rta, orthogonal, custom };

// Antenna pairs used for phase differencing, in solver row order.
// Indices are 1-based antenna ids; pair (n, o) means "phase_n - phase_o".
inline constexpr std::array<std::pair<int, int>, 6> kPairOrder{
    {{2, 1}, {3, 2}, {1, 3}, {4, 1}, {4, 2}, {4, 3}}};

/// 4-element receive array in the body frame. A4 doubles as the TX antenna.
struct AntennaArray {
  std::array<Eigen::Vector3d, 4> positions;  // meters, body frame
  double spacing = 0.0;                      // edge length d (min edge for custom)
  ArrayKind kind = ArrayKind::custom;

  const Eigen::Vector3d& antenna(int one_based_id) const { return positions[one_based_id - 1]; }
};

/// Unit baseline directions for the 6 antenna pairs, one row per pair in
/// kPairOrder, plus the physical baseline lengths needed to convert phase
/// differences to incidence angles.
struct DirectionMatrix {
  Eigen::Matrix<double, 6, 3> rows;
  std::array<double, 6> baseline_lengths{};  // meters
};

namespace detail {

inline void validate_array(const std::array<Eigen::Vector3d, 4>& p) {
  double min_dist = std::numeric_limits<double>::infinity();
  double max_dist = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      const double dist = (p[i] - p[j]).norm();
      min_dist = std::min(min_dist, dist);
      max_dist = std::max(max_dist, dist);
    }
  }
  if (!(min_dist > 0.0)) throw DegenerateGeometryError("coincident antennas");
  // Coplanar antennas cannot resolve a 3D bearing.
  const Eigen::Vector3d e1 = p[1] - p[0];
  const Eigen::Vector3d e2 = p[2] - p[0];
  const Eigen::Vector3d e3 = p[3] - p[0];
  const double volume = std::abs(e1.cross(e2).dot(e3));
  if (volume < 1e-12 * max_dist * max_dist * max_dist)
    throw DegenerateGeometryError("coplanar antennas: full 3D localization needs 4 non-degenerate elements");
}

}  // namespace detail

/// Regular tetrahedral array with edge `spacing`: base triangle A1..A3 in the
/// x-z plane, apex A4 (the TX antenna) toward +y.
inline AntennaArray build_rta(double spacing) {
  if (!(spacing > 0.0)) throw InvalidParameterError("antenna spacing must be positive");
  const double d = spacing;
  AntennaArray array;
  array.positions = {Eigen::Vector3d(0.0, 0.0, 0.0),
                     Eigen::Vector3d(d, 0.0, 0.0),
                     Eigen::Vector3d(d / 2.0, 0.0, d * std::sqrt(3.0) / 2.0),
                     Eigen::Vector3d(d / 2.0, d * std::sqrt(6.0) / 3.0, d * std::sqrt(3.0) / 6.0)};
  array.spacing = d;
  array.kind = ArrayKind::rta;
  return array;
}

/// Orthogonal array: reference antenna plus one antenna along each body axis.
inline AntennaArray build_orthogonal(double spacing) {
  if (!(spacing > 0.0)) throw InvalidParameterError("antenna spacing must be positive");
  const double d = spacing;
  AntennaArray array;
  array.positions = {Eigen::Vector3d(0.0, 0.0, 0.0), Eigen::Vector3d(d, 0.0, 0.0),
                     Eigen::Vector3d(0.0, d, 0.0), Eigen::Vector3d(0.0, 0.0, d)};
  array.spacing = d;
  array.kind = ArrayKind::orthogonal;
  return array;
}

/// Arbitrary 4-element array. Rejects coincident or coplanar layouts.
inline AntennaArray build_custom(const std::array<Eigen::Vector3d, 4>& positions) {
  detail::validate_array(positions);
  AntennaArray array;
  array.positions = positions;
  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) min_dist = std::min(min_dist, (positions[i] - positions[j]).norm());
  array.spacing = min_dist;
  array.kind = ArrayKind::custom;
  return array;
}

/// Builds the 6x3 matrix of unit baseline directions, row k for pair k in
/// kPairOrder: (a_n - a_o) / |a_n - a_o|.
inline DirectionMatrix baseline_matrix(const AntennaArray& array) {
  detail::validate_array(array.positions);
  DirectionMatrix m;
  for (std::size_t k = 0; k < kPairOrder.size(); ++k) {
    const auto [n, o] = kPairOrder[k];
    const Eigen::Vector3d baseline = array.antenna(n) - array.antenna(o);
    const double length = baseline.norm();
    if (!(length > 0.0)) throw DegenerateGeometryError("coincident antennas");
    m.rows.row(static_cast<int>(k)) = (baseline / length).transpose();
    m.baseline_lengths[k] = length;
  }
  return m;
}

/// The six direction rows exactly as published, for reproduction/comparison
/// runs. Note rows 4..6 are not consistent with any one tetrahedron placement
/// (see README); the canonical matrix from build_rta + baseline_matrix is the
/// self-consistent default.
inline DirectionMatrix paper_matrix(double spacing = kDefaultSpacing) {
  DirectionMatrix m;
  const double s3 = std::sqrt(3.0);
  const double s6 = std::sqrt(6.0);
  m.rows << 1.0, 0.0, 0.0,
      -0.5, 0.0, s3 / 2.0,
      -0.5, 0.0, -s3 / 2.0,
      0.5, s3 / 6.0, s6 / 3.0,
      0.5, s3 / 6.0, -s6 / 3.0,
      0.0, s6 / 3.0, 1.0 / s3;
  m.baseline_lengths.fill(spacing);
  return m;
}

}  // namespace tetraloc
