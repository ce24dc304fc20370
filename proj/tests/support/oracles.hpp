#pragma once

// Test-only oracles, independent of the library implementation paths they
// check.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tetraloc/rng.hpp"

namespace oracles {

// Angular separation that stays accurate near zero (acos of a dot product
// floors around sqrt(eps)).
inline double angular_error_rad(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

// Bearing from pan (about +y, from +x toward +z) and tilt (toward +y).
inline Eigen::Vector3d bearing_from_pan_tilt(double pan_rad, double tilt_rad) {
  return {std::cos(tilt_rad) * std::cos(pan_rad), std::sin(tilt_rad),
          std::cos(tilt_rad) * std::sin(pan_rad)};
}

// Uniform random rotation via a normalized quaternion of 4 gaussians.
inline Eigen::Matrix3d random_rotation(tetraloc::Rng& rng) {
  Eigen::Quaterniond q(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
  q.normalize();
  return q.toRotationMatrix();
}

inline Eigen::Vector3d random_unit_vector(tetraloc::Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
  } while (v.norm() < 1e-9);
  return v.normalized();
}

// Table-driven CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF), deliberately a
// different construction from the library's bitwise loop.
inline std::uint16_t crc16_table_oracle(std::span<const std::uint8_t> data) {
  static const auto table = [] {
    std::array<std::uint16_t, 256> t{};
    for (int i = 0; i < 256; ++i) {
      std::uint16_t crc = static_cast<std::uint16_t>(i << 8);
      for (int b = 0; b < 8; ++b)
        crc = static_cast<std::uint16_t>((crc & 0x8000) ? (crc << 1) ^ 0x1021 : (crc << 1));
      t[static_cast<std::size_t>(i)] = crc;
    }
    return t;
  }();
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : data)
    crc = static_cast<std::uint16_t>((crc << 8) ^ table[((crc >> 8) ^ byte) & 0xFF]);
  return crc;
}

}  // namespace oracles
