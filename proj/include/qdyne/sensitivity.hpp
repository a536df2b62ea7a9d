#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"

// Duty-cycle and sensitivity budget: optimal sampling interval, effective
// sensitivity under time overhead, relative frequency uncertainty, and the
// point-dipole coupling-vs-distance helper.
namespace qdyne {

struct SensitivityScenario {
  std::string label;
  double b0 = 0.0;              // T
  double eta_nv = 0.0;          // T/sqrt(Hz)
  double t_sensing = 0.0;       // s
  double t_rf = 0.0;            // s, nuclear manipulation time per sample
  double nuclear_rabi = 0.0;    // Hz
  double t2star_nuclear = 0.0;  // s
};

struct SensitivityResult {
  double dt_opt = 0.0;            // s
  double overhead_factor = 0.0;   // sqrt(dt_opt / t_sensing)
  double eta_eff = 0.0;           // T/sqrt(Hz)
  double rel_freq_uncertainty = 0.0;  // 0 when no signal amplitude was given
};

// The sensitivity-vs-linewidth tradeoff sqrt(dT) / (1 - T_meas/dT) is
// minimized at dT = 3 T_meas (free evolution : measurement = 2 : 1).
inline double optimal_sampling_interval(double t_meas) {
  if (t_meas <= 0.0) throw std::invalid_argument("t_meas must be > 0");
  return 3.0 * t_meas;
}

inline double effective_sensitivity(double eta_nv, double dt, double t_sensing) {
  if (t_sensing <= 0.0) throw std::invalid_argument("t_sensing must be > 0");
  if (dt < t_sensing)
    throw std::invalid_argument("sampling interval shorter than the sensing time");
  return eta_nv * std::sqrt(dt / t_sensing);
}

// sigma_omega / omega_eff at an explicit sampling interval.
inline double relative_frequency_uncertainty_at(
    const SensitivityScenario& sc, double signal_amplitude, double dt) {
  if (signal_amplitude <= 0.0)
    throw std::invalid_argument("signal amplitude must be > 0");
  if (sc.b0 <= 0.0 || sc.t2star_nuclear <= 0.0)
    throw std::invalid_argument("scenario needs positive B0 and T2*");
  const double t_meas = sc.t_sensing + sc.t_rf;
  if (dt <= t_meas)
    throw std::invalid_argument("sampling interval must exceed the measurement time");
  const double gamma_eff = (dt - t_meas) / dt;  // T_fid / dT
  const double eta_eff = effective_sensitivity(sc.eta_nv, dt, sc.t_sensing);
  return 2.0 * std::sqrt(2.0) / (gamma_eff * sc.b0) * (eta_eff / signal_amplitude) /
         std::pow(sc.t2star_nuclear, 1.5);
}

// Full scenario evaluation at the optimal sampling interval.
inline SensitivityResult evaluate_scenario(const SensitivityScenario& sc,
                                           double signal_amplitude = 0.0) {
  SensitivityResult out;
  const double t_meas = sc.t_sensing + sc.t_rf;
  out.dt_opt = optimal_sampling_interval(t_meas);
  out.overhead_factor = std::sqrt(out.dt_opt / sc.t_sensing);
  out.eta_eff = effective_sensitivity(sc.eta_nv, out.dt_opt, sc.t_sensing);
  if (signal_amplitude > 0.0)
    out.rel_freq_uncertainty =
        relative_frequency_uncertainty_at(sc, signal_amplitude, out.dt_opt);
  return out;
}

enum class Nucleus { c13, h1 };

// Secular point-dipole coupling A_zz in Hz at distance r and polar angle
// theta from the NV axis.
inline double dipolar_azz(double r, double theta, Nucleus nucleus) {
  if (r <= 0.0) throw std::invalid_argument("distance must be > 0");
  using namespace constants;
  const double gamma_n = nucleus == Nucleus::c13 ? gamma_13c : gamma_1h;
  const double ct = std::cos(theta);
  return mu0 / (4.0 * pi) * gamma_electron * gamma_n * hbar / (r * r * r) *
         (3.0 * ct * ct - 1.0) / two_pi;
}

}  // namespace qdyne
