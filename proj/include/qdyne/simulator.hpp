#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <future>
#include <optional>
#include <random>
#include <vector>

#include "qdyne/sequence.hpp"
#include "qdyne/spin_core.hpp"

// Executes a Sequence against the one- or two-spin state.  Exact mode
// records expectation values; photon mode draws Poisson counts.  Closed-form
// back-action and infidelity channels live alongside the brute-force
// evolution so each can check the other.
namespace qdyne {

struct SimConfig {
  bool shot_noise = false;
  std::uint64_t rng_seed = 12345;
  int shots_per_readout = 1;
  double sensor_t2star = 0.0;  // s; 0 disables the contrast envelope
  double sensor_t1 = 0.0;      // s; 0 disables
};

enum class TraceKind { expectation_Iz, expectation_Sz, photon_counts };

struct TimeTrace {
  std::vector<double> values;
  double dt = 0.0;  // s
  TraceKind kind = TraceKind::expectation_Iz;
};

// Ideal heterodyne response: the n-th measurement returns the reference-
// relative precession cosine.
inline double heterodyne_expectation(int n, double delta_omega, double tau) {
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  return std::cos(delta_omega * static_cast<double>(n) * tau);
}

// Per-sample recursion state: transverse and longitudinal Bloch components
// in the stroboscopic measurement frame.
struct BackActionState {
  double ix = 0.0;
  double iz = 0.0;
};

namespace sim_detail {

struct Mat2 {
  double a, b, c, d;  // row major
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c,
            c * o.b + d * o.d};
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace sim_detail

// Exact m-th power of the measurement-precession recursion
//   [ cos a cos b   -sin b ]
//   [ cos a sin b    cos b ]
// applied to (Ix, Iz).
inline BackActionState back_action_recursion(const BackActionState& start,
                                             double beta, double alpha, int m) {
  if (m < 0) throw std::invalid_argument("m must be >= 0");
  using sim_detail::Mat2;
  Mat2 r{std::cos(alpha) * std::cos(beta), -std::sin(beta),
         std::cos(alpha) * std::sin(beta), std::cos(beta)};
  Mat2 acc{1, 0, 0, 1};
  int k = m;
  while (k > 0) {
    if (k & 1) acc = r * acc;
    r = r * r;
    k >>= 1;
  }
  return {acc.a * start.ix + acc.b * start.iz,
          acc.c * start.ix + acc.d * start.iz};
}

struct BackActionEigenvalues {
  std::complex<double> lambda_plus;
  std::complex<double> lambda_minus;
  bool closed_form = true;  // false when sin(beta)^2 < mu^2 (real-spectrum regime)
};

// lambda_pm = (cos b +- i sin b sqrt(1 - mu^2/sin^2 b)) cos^2(a/2),
// mu = tan^2(a/2).  Outside its domain the numeric eigensolve is returned
// and the closed form flagged inapplicable.
inline BackActionEigenvalues back_action_eigenvalues(double beta, double alpha) {
  const double mu = std::tan(alpha / 2.0) * std::tan(alpha / 2.0);
  const double sb = std::sin(beta);
  const double c2 = std::cos(alpha / 2.0) * std::cos(alpha / 2.0);
  BackActionEigenvalues out;
  if (sb * sb >= mu * mu && sb != 0.0) {
    const double root = std::sqrt(1.0 - mu * mu / (sb * sb));
    out.lambda_plus = std::complex<double>(std::cos(beta), sb * root) * c2;
    out.lambda_minus = std::complex<double>(std::cos(beta), -sb * root) * c2;
    out.closed_form = true;
    return out;
  }
  Eigen::Matrix2d r;
  r << std::cos(alpha) * std::cos(beta), -std::sin(beta),
       std::cos(alpha) * std::sin(beta), std::cos(beta);
  Eigen::EigenSolver<Eigen::Matrix2d> es(r);
  out.lambda_plus = es.eigenvalues()(0);
  out.lambda_minus = es.eigenvalues()(1);
  out.closed_form = false;
  return out;
}

struct WeakMeasurement {
  double signal = 0.0;          // <S_z> the readout would report
  DensityMatrix nuclear_avg;    // outcome-averaged nuclear state
};

// Closed-form weak measurement of strength alpha on a prepared two-spin
// state: signal = -1/2 sin(alpha) cos(beta) with cos(beta) = 2 <I_z>, and
// the averaged nuclear state keeps I_z while both transverse coherences are
// scaled by cos(alpha).
inline WeakMeasurement weak_measure(const DensityMatrix& rho_total, double alpha) {
  if (alpha < 0.0 || alpha >= constants::pi)
    throw PhysicsError("weak measurement strength must be in [0, pi)");
  if (rho_total.dim() != 4) throw PhysicsError("weak_measure expects dim 4");
  DensityMatrix nuc = partial_trace(rho_total, Subsystem::target);
  WeakMeasurement out;
  const double iz = 0.5 * (nuc.m(0, 0).real() - nuc.m(1, 1).real());
  out.signal = -std::sin(alpha) * iz;
  nuc.m(0, 1) *= std::cos(alpha);
  nuc.m(1, 0) *= std::cos(alpha);
  out.nuclear_avg = nuc;
  return out;
}

// Transverse contraction from one idle window next to an imperfectly
// initialized sensor: sqrt(cos^2 phi + (2f-1)^2 sin^2 phi), phi = pi a_zz tau.
inline double infidelity_contraction(double fidelity, double a_zz_hz, double tau) {
  const double phi = constants::pi * a_zz_hz * tau;
  const double d = 2.0 * fidelity - 1.0;
  const double c = std::cos(phi), s = std::sin(phi);
  return std::sqrt(c * c + d * d * s * s);
}

// Full channel Tr_sensor[U (rho_sensor(f) x rho) U+] over an interaction
// window of length tau.
inline DensityMatrix infidelity_channel(const DensityMatrix& rho_nuclear,
                                        double fidelity, double a_zz_hz,
                                        double tau) {
  if (fidelity <= 0.5 || fidelity > 1.0)
    throw PhysicsError("fidelity must be in (0.5, 1]");
  DensityMatrix total = tensor(sensor_init(fidelity), rho_nuclear);
  total = evolve_coupling(total, a_zz_hz, tau);
  return partial_trace(total, Subsystem::target);
}

enum class RateForm { exact, taylor };

inline double infidelity_decay_rate(double fidelity, double a_zz_hz, double tau,
                                    RateForm form) {
  if (fidelity <= 0.5 || fidelity > 1.0)
    throw PhysicsError("fidelity must be in (0.5, 1]");
  if (tau <= 0.0) throw PhysicsError("tau must be > 0");
  const double phi = constants::pi * a_zz_hz * tau;
  if (form == RateForm::taylor)
    return 2.0 * fidelity * (1.0 - fidelity) * std::sin(phi) * std::sin(phi) / tau;
  const double d = 2.0 * fidelity - 1.0;
  const double arg =
      std::cos(phi) * std::cos(phi) + d * d * std::sin(phi) * std::sin(phi);
  if (arg <= 0.0) throw PhysicsError("degenerate contraction");  // unreachable for f > 0.5
  return -0.5 * std::log(arg) / tau;
}

namespace sim_detail {

inline double frame_detuning(const Sequence& seq) {
  bool found = false;
  double dw = 0.0;
  for_each_element(seq, [&](const SequenceElement& e) {
    if (auto* p = std::get_if<NuclearPulse>(&e)) {
      if (!found) {
        dw = p->detuning;
        found = true;
      } else if (std::abs(p->detuning - dw) >
                 1e-9 * std::max({std::abs(dw), std::abs(p->detuning), 1.0})) {
        throw PhysicsError("nuclear pulses disagree on the frame detuning");
      }
    }
  });
  return dw;
}

}  // namespace sim_detail

// Run a sequence.  One trace entry per optical readout; the nuclear state
// carries over between sensing blocks (weak-measurement average), the sensor
// is rebuilt from the previous readout's initialization fidelity, and an
// idle window next to an imperfect sensor contracts the nuclear coherence.
inline TimeTrace run_sequence(const Sequence& seq, const SimConfig& cfg) {
  validate(seq);
  if (cfg.shots_per_readout < 1)
    throw std::invalid_argument("shots_per_readout must be >= 1");
  const SequenceTiming tm = timing(seq);
  const double dw = sim_detail::frame_detuning(seq);

  // fidelity used for the very first sensor preparation
  double current_f = 1.0;
  bool saw_readout = false;
  bool sensor_used = false;
  for_each_element(seq, [&](const SequenceElement& e) {
    if (auto* r = std::get_if<OpticalReadout>(&e); r && !saw_readout) {
      current_f = r->init_fidelity;
      saw_readout = true;
    }
    if (std::holds_alternative<SensorPulse>(e) ||
        std::holds_alternative<Interaction>(e))
      sensor_used = true;
  });

  const double env_rate = (cfg.sensor_t2star > 0.0 ? 1.0 / cfg.sensor_t2star : 0.0) +
                          (cfg.sensor_t1 > 0.0 ? 1.0 / cfg.sensor_t1 : 0.0);

  DensityMatrix rho_n = spin_up();
  std::optional<DensityMatrix> rho4;
  double phase_acc = 0.0;
  double t = 0.0;
  double last_readout_t = -1.0;
  double last_a_zz = 0.0;

  std::mt19937_64 rng(cfg.rng_seed);
  TimeTrace trace;
  trace.kind = cfg.shot_noise
                   ? TraceKind::photon_counts
                   : (sensor_used ? TraceKind::expectation_Sz
                                  : TraceKind::expectation_Iz);

  const SpinOperator sz_sensor = tensor(spin_half(PauliAxis::z), identity_op(2));
  const SpinOperator iz_single = spin_half(PauliAxis::z);

  for_each_element(seq, [&](const SequenceElement& e) {
    std::visit(
        [&](const auto& el) {
          using T = std::decay_t<decltype(el)>;
          if constexpr (std::is_same_v<T, Polarize>) {
            if (rho4) throw PhysicsError("polarize inside a sensing block");
            rho_n = polarized_state(el.polarization);
          } else if constexpr (std::is_same_v<T, PhaseStep>) {
            phase_acc += el.phi;
          } else if constexpr (std::is_same_v<T, NuclearPulse>) {
            NuclearFrame h{el.detuning, el.rabi, el.phase + phase_acc,
                           el.amp_error};
            SpinOperator u = rotation_unitary(h, el.angle);
            if (rho4) {
              cxmat u4 = kronecker(cxmat::Identity(2, 2), u.m);
              rho4->m = u4 * rho4->m * u4.adjoint();
            } else {
              rho_n = apply_unitary(rho_n, u);
            }
            t += el.angle / el.rabi;
          } else if constexpr (std::is_same_v<T, FreeEvolution>) {
            if (rho4) {
              *rho4 = evolve_coupling(*rho4, 0.0, el.duration, dw);
            } else {
              rho_n = evolve_free(rho_n, dw, el.duration);
            }
            t += el.duration;
          } else if constexpr (std::is_same_v<T, SensorPulse>) {
            if (!rho4) {
              if (current_f < 1.0 && last_readout_t >= 0.0 && last_a_zz != 0.0) {
                // idle hyperfine dephasing since the previous readout; the
                // coherent part is absorbed into the resonance definition
                const double c = infidelity_contraction(
                    current_f, last_a_zz, t - last_readout_t);
                rho_n.m(0, 1) *= c;
                rho_n.m(1, 0) *= c;
              }
              rho4 = tensor(sensor_init(current_f), rho_n);
            }
            SpinOperator u = ideal_rotation(el.angle, el.phase);
            cxmat u4 = kronecker(u.m, cxmat::Identity(2, 2));
            rho4->m = u4 * rho4->m * u4.adjoint();
          } else if constexpr (std::is_same_v<T, Interaction>) {
            if (!rho4)
              throw PhysicsError("interaction without sensor preparation");
            *rho4 = evolve_coupling(*rho4, el.a_zz, el.duration, dw);
            last_a_zz = el.a_zz;
            t += el.duration;
          } else if constexpr (std::is_same_v<T, OpticalReadout>) {
            double x;
            if (rho4) {
              x = expectation(*rho4, sz_sensor);
              rho_n = partial_trace(*rho4, Subsystem::target);
              rho4.reset();
            } else {
              x = expectation(rho_n, iz_single);
            }
            if (env_rate > 0.0) x *= std::exp(-t * env_rate);
            if (cfg.shot_noise) {
              const double lam = el.mean_counts * (1.0 + 2.0 * el.contrast * x) *
                                 static_cast<double>(cfg.shots_per_readout);
              std::poisson_distribution<long> poisson(std::max(lam, 0.0));
              trace.values.push_back(static_cast<double>(poisson(rng)) /
                                     static_cast<double>(cfg.shots_per_readout));
            } else {
              trace.values.push_back(x);
            }
            last_readout_t = t;
            current_f = el.init_fidelity;
          }
        },
        e);
  });

  trace.dt = tm.readout_count >= 2 ? tm.sampling_interval : tm.total_duration;
  return trace;
}

// One exact-mode trace per detuning; every nuclear pulse in the template is
// re-pinned to the grid point's detuning (and optional amp error / rabi).
inline std::vector<std::pair<double, TimeTrace>> sweep_detuning(
    const Sequence& protocol, const std::vector<double>& detunings,
    double amp_error, double rabi, const SimConfig& cfg) {
  if (detunings.empty()) throw std::invalid_argument("empty detuning list");
  auto run_point = [&](size_t idx) {
    Sequence s = protocol;
    std::function<void(std::vector<SequenceItem>&)> patch =
        [&](std::vector<SequenceItem>& items) {
          for (auto& item : items) {
            if (auto* el = std::get_if<SequenceElement>(&item.node)) {
              if (auto* p = std::get_if<NuclearPulse>(el)) {
                p->detuning = detunings[idx];
                p->amp_error = amp_error;
                if (rabi > 0.0) p->rabi = rabi;
              }
            } else {
              patch(std::get<RepeatBlock>(item.node).body);
            }
          }
        };
    patch(s.items);
    SimConfig point_cfg = cfg;
    point_cfg.rng_seed = sim_detail::splitmix64(cfg.rng_seed ^ idx);
    return run_sequence(s, point_cfg);
  };

  std::vector<std::pair<double, TimeTrace>> out(detunings.size());
  std::vector<std::future<TimeTrace>> futures;
  futures.reserve(detunings.size());
  for (size_t i = 0; i < detunings.size(); ++i)
    futures.push_back(std::async(std::launch::async, run_point, i));
  for (size_t i = 0; i < detunings.size(); ++i)
    out[i] = {detunings[i], futures[i].get()};
  return out;
}

}  // namespace qdyne
