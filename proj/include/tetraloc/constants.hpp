#pragma once

namespace tetraloc {

// Physical and device constants shared across the library.
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// UWB channel-5 carrier (DW1000 convention), used to derive the default
// antenna spacing of 0.95 * lambda / 2.
inline constexpr double kDefaultCarrierHz = 6489.6e6;
inline constexpr double kDefaultWavelength = kSpeedOfLight / kDefaultCarrierHz;  // ~46.2 mm
inline constexpr double kSpacingFactor = 0.95;
inline constexpr double kDefaultSpacing = kSpacingFactor * kDefaultWavelength / 2.0;  // ~21.9 mm

// Device timestamp resolution (DW1000-style ranging counter).
inline constexpr double kTickSeconds = 15.65e-12;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Default master seed for every CLI run; override with --seed.
inline constexpr unsigned long long kDefaultSeed = 1729;

}  // namespace tetraloc
