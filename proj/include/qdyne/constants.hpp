#pragma once

#include <numbers>

// Physical constants (CODATA 2018).  All gyromagnetic ratios are angular,
// in rad s^-1 T^-1.  Code elsewhere must reference this table, never literals.
namespace qdyne::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double mu0 = 1.25663706212e-6;    // vacuum permeability, N A^-2
inline constexpr double hbar = 1.054571817e-34;    // reduced Planck, J s

// electron: 28.02495164 GHz/T
inline constexpr double gamma_electron = two_pi * 28.02495164e9;
// 13C: 10.7084 MHz/T
inline constexpr double gamma_13c = two_pi * 10.7084e6;
// 1H: 42.577478518 MHz/T
inline constexpr double gamma_1h = two_pi * 42.577478518e6;

}  // namespace qdyne::constants
