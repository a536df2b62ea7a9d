#pragma once

#include <cmath>
#include <functional>
#include <variant>
#include <vector>

#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"

// Typed pulse programs.  A Sequence is an ordered list of elements and
// repeat blocks (nesting depth <= 2); builders below emit the three
// protocols the toolkit reproduces.
namespace qdyne {

// rf rotation of the nuclear spin; duration = angle / rabi (nominal rate).
struct NuclearPulse {
  double angle = 0.0;      // rad
  double phase = 0.0;      // rad, relative to the accumulated reference phase
  double rabi = 0.0;       // rad/s, nominal
  double detuning = 0.0;   // rad/s
  double amp_error = 0.0;  // dimensionless

  bool operator==(const NuclearPulse&) const = default;
};

// Ideal, instantaneous microwave rotation of the sensor spin.
struct SensorPulse {
  double angle = 0.0;  // rad
  double phase = 0.0;  // rad

  bool operator==(const SensorPulse&) const = default;
};

struct FreeEvolution {
  double duration = 0.0;  // s

  bool operator==(const FreeEvolution&) const = default;
};

// Sensor-target S_z I_z interaction window.
struct Interaction {
  double duration = 0.0;  // s (tau_zz)
  double a_zz = 0.0;      // Hz

  bool operator==(const Interaction&) const = default;
};

struct OpticalReadout {
  double contrast = 0.3;       // fluorescence contrast, in (0,1]
  double mean_counts = 0.02;   // photons per readout at <S_z> = 0
  double init_fidelity = 1.0;  // sensor re-initialization fidelity, in (0.5,1]

  bool operator==(const OpticalReadout&) const = default;
};

// Set the nuclear state to p|up><up| + (1-p) 1/2 (polarization transfer
// treated as an ideal initialization step).
struct Polarize {
  double polarization = 1.0;

  bool operator==(const Polarize&) const = default;
};

// Advance the rf reference phase for all subsequent nuclear pulses.
struct PhaseStep {
  double phi = 0.0;  // rad

  bool operator==(const PhaseStep&) const = default;
};

using SequenceElement = std::variant<NuclearPulse, SensorPulse, FreeEvolution,
                                     Interaction, OpticalReadout, Polarize,
                                     PhaseStep>;

struct SequenceItem;

struct RepeatBlock {
  int count = 1;
  std::vector<SequenceItem> body;

  bool operator==(const RepeatBlock&) const;
};

struct SequenceItem {
  std::variant<SequenceElement, RepeatBlock> node;

  bool operator==(const SequenceItem&) const = default;
};

inline bool RepeatBlock::operator==(const RepeatBlock& o) const {
  return count == o.count && body == o.body;
}

struct Sequence {
  std::vector<SequenceItem> items;

  bool operator==(const Sequence&) const = default;
};

inline double element_duration(const SequenceElement& e) {
  if (auto* p = std::get_if<NuclearPulse>(&e)) return p->angle / p->rabi;
  if (auto* w = std::get_if<FreeEvolution>(&e)) return w->duration;
  if (auto* i = std::get_if<Interaction>(&e)) return i->duration;
  return 0.0;  // sensor pulses, readout, polarize, phasestep are instantaneous
}

// Visit every element in execution order (repeat blocks unrolled).
inline void for_each_element(const Sequence& seq,
                             const std::function<void(const SequenceElement&)>& fn) {
  std::function<void(const std::vector<SequenceItem>&)> walk =
      [&](const std::vector<SequenceItem>& items) {
        for (const auto& item : items) {
          if (auto* el = std::get_if<SequenceElement>(&item.node)) {
            fn(*el);
          } else {
            const auto& rb = std::get<RepeatBlock>(item.node);
            for (int k = 0; k < rb.count; ++k) walk(rb.body);
          }
        }
      };
  walk(seq.items);
}

inline int nesting_depth(const Sequence& seq) {
  std::function<int(const std::vector<SequenceItem>&)> depth =
      [&](const std::vector<SequenceItem>& items) {
        int d = 0;
        for (const auto& item : items)
          if (auto* rb = std::get_if<RepeatBlock>(&item.node))
            d = std::max(d, 1 + depth(rb->body));
        return d;
      };
  return depth(seq.items);
}

struct SequenceTiming {
  double total_duration = 0.0;    // s
  double sampling_interval = 0.0; // s between consecutive readouts (0 if < 2)
  int readout_count = 0;
};

// Walk the expanded sequence and derive total duration and the readout
// sampling interval.  Readouts must be uniformly spaced when there is more
// than one; heterodyne traces are meaningless otherwise.
inline SequenceTiming timing(const Sequence& seq) {
  SequenceTiming out;
  double t = 0.0;
  std::vector<double> readout_times;
  for_each_element(seq, [&](const SequenceElement& e) {
    t += element_duration(e);
    if (std::holds_alternative<OpticalReadout>(e)) readout_times.push_back(t);
  });
  out.total_duration = t;
  out.readout_count = static_cast<int>(readout_times.size());
  if (readout_times.size() >= 2) {
    const double dt = (readout_times.back() - readout_times.front()) /
                      static_cast<double>(readout_times.size() - 1);
    for (size_t i = 1; i < readout_times.size(); ++i) {
      const double gap = readout_times[i] - readout_times[i - 1];
      if (std::abs(gap - dt) > 1e-9 * std::max(dt, 1e-12))
        throw PhysicsError("readouts are not uniformly spaced");
    }
    out.sampling_interval = dt;
  }
  return out;
}

inline void validate(const Sequence& seq) {
  if (nesting_depth(seq) > 2) throw PhysicsError("repeat nesting depth > 2");
  for_each_element(seq, [](const SequenceElement& e) {
    std::visit(
        [](const auto& el) {
          using T = std::decay_t<decltype(el)>;
          if constexpr (std::is_same_v<T, NuclearPulse>) {
            if (el.rabi <= 0.0) throw PhysicsError("nuclear pulse needs rabi > 0");
            if (el.angle < 0.0) throw PhysicsError("negative pulse angle");
            if (std::abs(el.amp_error) >= 1.0)
              throw PhysicsError("amp_error must satisfy |eps| < 1");
          } else if constexpr (std::is_same_v<T, FreeEvolution>) {
            if (el.duration < 0.0) throw PhysicsError("negative duration");
          } else if constexpr (std::is_same_v<T, Interaction>) {
            if (el.duration < 0.0) throw PhysicsError("negative duration");
          } else if constexpr (std::is_same_v<T, OpticalReadout>) {
            if (el.contrast <= 0.0 || el.contrast > 1.0)
              throw PhysicsError("contrast must be in (0,1]");
            if (el.mean_counts < 0.0) throw PhysicsError("negative mean counts");
            if (el.init_fidelity <= 0.5 || el.init_fidelity > 1.0)
              throw PhysicsError("init fidelity must be in (0.5,1]");
          } else if constexpr (std::is_same_v<T, Polarize>) {
            if (el.polarization < 0.0 || el.polarization > 1.0)
              throw PhysicsError("polarization must be in [0,1]");
          }
        },
        e);
  });
}

// ---------------------------------------------------------------------------
// Protocol builders
// ---------------------------------------------------------------------------

// Projective heterodyne response protocol: a pi/2 starts the precession,
// then M blocks of [precess tau1, pi/2, tau2, pi (echo), tau2, pi/2].  The
// readout sits in the out-of-plane window of each block, where the
// population holds the accumulated phase, so one run yields M samples.
inline Sequence build_n14_response(double tau1, double tau2,
                                   double rabi_period, double detuning,
                                   double amp_error, int m_blocks) {
  if (tau1 <= 0.0 || tau2 <= 0.0 || rabi_period <= 0.0)
    throw std::invalid_argument("times must be > 0");
  if (m_blocks < 1) throw std::invalid_argument("M must be >= 1");
  const double rabi = constants::two_pi / rabi_period;
  auto rf = [&](double angle) {
    return SequenceItem{SequenceElement{
        NuclearPulse{angle, 0.0, rabi, detuning, amp_error}}};
  };
  Sequence seq;
  seq.items.push_back(rf(constants::pi / 2.0));
  RepeatBlock block;
  block.count = m_blocks;
  block.body.push_back({SequenceElement{FreeEvolution{tau1}}});
  block.body.push_back(rf(constants::pi / 2.0));
  block.body.push_back({SequenceElement{OpticalReadout{}}});
  block.body.push_back({SequenceElement{FreeEvolution{tau2}}});
  block.body.push_back(rf(constants::pi));
  block.body.push_back({SequenceElement{FreeEvolution{tau2}}});
  block.body.push_back(rf(constants::pi / 2.0));
  seq.items.push_back({block});
  return seq;
}

struct EndorOptions {
  double polarization = 1.0;
  double ramsey_phase2 = 72.0 * constants::pi / 180.0;  // second mw pulse phase
  OpticalReadout readout{};
};

// ENDOR qdyne: polarize, (pi/2)_ref, then M blocks of [phase step Phi, free
// evolution, (3pi/2)_{ref+k Phi}, sensor Ramsey over the S_z I_z coupling,
// optical readout, (pi/2)_{ref+k Phi}, dead time].  Sampling interval:
// t_free + rabi_period + t_ramsey + extra_wait.
inline Sequence build_endor_qdyne(double t_free, double t_ramsey,
                                  double rabi_period, double a_zz_hz,
                                  double phi, double extra_wait, int m_blocks,
                                  const EndorOptions& opt = {}) {
  if (t_free <= 0.0 || t_ramsey <= 0.0 || rabi_period <= 0.0)
    throw std::invalid_argument("times must be > 0");
  if (extra_wait < 0.0) throw std::invalid_argument("extra_wait must be >= 0");
  if (m_blocks < 1) throw std::invalid_argument("M must be >= 1");
  const double rabi = constants::two_pi / rabi_period;
  auto rf = [&](double angle) {
    return SequenceItem{SequenceElement{NuclearPulse{angle, 0.0, rabi, 0.0, 0.0}}};
  };
  Sequence seq;
  seq.items.push_back({SequenceElement{Polarize{opt.polarization}}});
  seq.items.push_back(rf(constants::pi / 2.0));
  RepeatBlock block;
  block.count = m_blocks;
  if (phi != 0.0) block.body.push_back({SequenceElement{PhaseStep{phi}}});
  block.body.push_back({SequenceElement{FreeEvolution{t_free}}});
  block.body.push_back(rf(3.0 * constants::pi / 2.0));
  block.body.push_back({SequenceElement{SensorPulse{constants::pi / 2.0, 0.0}}});
  block.body.push_back({SequenceElement{Interaction{t_ramsey, a_zz_hz}}});
  block.body.push_back(
      {SequenceElement{SensorPulse{constants::pi / 2.0, opt.ramsey_phase2}}});
  block.body.push_back({SequenceElement{opt.readout}});
  block.body.push_back(rf(constants::pi / 2.0));
  if (extra_wait > 0.0)
    block.body.push_back({SequenceElement{FreeEvolution{extra_wait}}});
  seq.items.push_back({block});
  return seq;
}

struct ConventionalOptions {
  double detuning = 0.0;              // rad/s
  double fast_rabi_period = 4e-6;     // basis-change pulses, 2pi time
  double interrogation_time = 1e-6;   // effective tau_zz of the sensing block
  OpticalReadout readout{};
};

// Conventional (dynamical-decoupling style) qdyne baseline.  The sensing
// block is abstracted to an effective weak measurement of strength alpha
// plus dead time; basis changes use fast pulses so that the block's own
// duration is negligible against the sampling interval.
inline Sequence build_conventional_qdyne(double alpha, double sample_interval,
                                         int m_blocks,
                                         const ConventionalOptions& opt = {}) {
  if (alpha < 0.0 || alpha >= constants::pi / 2.0)
    throw std::invalid_argument("alpha must be in [0, pi/2)");
  if (m_blocks < 1) throw std::invalid_argument("M must be >= 1");
  const double a_zz = alpha / (constants::pi * opt.interrogation_time);
  const double rabi = constants::two_pi / opt.fast_rabi_period;
  const double pad =
      sample_interval - opt.fast_rabi_period - opt.interrogation_time;
  if (pad < 0.0)
    throw std::invalid_argument("sample interval shorter than the sensing block");
  auto rf = [&](double angle) {
    return SequenceItem{
        SequenceElement{NuclearPulse{angle, 0.0, rabi, opt.detuning, 0.0}}};
  };
  Sequence seq;
  seq.items.push_back({SequenceElement{Polarize{1.0}}});
  seq.items.push_back(rf(constants::pi / 2.0));
  RepeatBlock block;
  block.count = m_blocks;
  block.body.push_back({SequenceElement{FreeEvolution{pad}}});
  block.body.push_back(rf(3.0 * constants::pi / 2.0));
  block.body.push_back({SequenceElement{SensorPulse{constants::pi / 2.0, 0.0}}});
  block.body.push_back(
      {SequenceElement{Interaction{opt.interrogation_time, a_zz}}});
  block.body.push_back({SequenceElement{
      SensorPulse{constants::pi / 2.0, constants::pi / 2.0}}});
  block.body.push_back({SequenceElement{opt.readout}});
  block.body.push_back(rf(constants::pi / 2.0));
  seq.items.push_back({block});
  return seq;
}

}  // namespace qdyne
