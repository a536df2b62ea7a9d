#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"

// Exact linear algebra for one and two spin-1/2 systems.  All matrices are
// small (2x2 or 4x4) complex; unitaries come from closed forms, never from a
// truncated series.  Values are immutable once built, so everything here is
// safe to call concurrently.
namespace qdyne {

using complexd = std::complex<double>;
using cxmat = Eigen::MatrixXcd;

inline constexpr double kHermTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kPsdTol = -1e-10;

// A (usually Hermitian) operator on a 1- or 2-spin space.
struct SpinOperator {
  cxmat m;

  int dim() const { return static_cast<int>(m.rows()); }

  bool is_hermitian(double tol = kHermTol) const {
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
  }
  bool is_unitary(double tol = kHermTol) const {
    cxmat d = m.adjoint() * m - cxmat::Identity(m.rows(), m.cols());
    return d.cwiseAbs().maxCoeff() <= tol;
  }
};

// Unit-trace, Hermitian, PSD-within-tolerance state of 1 or 2 spins.
struct DensityMatrix {
  cxmat m;

  int dim() const { return static_cast<int>(m.rows()); }

  // Validation is a check, never a silent repair.
  void validate() const {
    if (dim() != 2 && dim() != 4) throw PhysicsError("density matrix dim must be 2 or 4");
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > kHermTol)
      throw PhysicsError("density matrix not Hermitian");
    if (std::abs(m.trace() - complexd(1.0, 0.0)) > kTraceTol)
      throw PhysicsError("density matrix trace != 1");
    Eigen::SelfAdjointEigenSolver<cxmat> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < kPsdTol)
      throw PhysicsError("density matrix not PSD");
  }
};

enum class PauliAxis { x, y, z };

inline SpinOperator pauli(PauliAxis axis) {
  cxmat m(2, 2);
  const complexd i(0.0, 1.0);
  switch (axis) {
    case PauliAxis::x: m << 0, 1, 1, 0; break;
    case PauliAxis::y: m << 0, -i, i, 0; break;
    case PauliAxis::z: m << 1, 0, 0, -1; break;
  }
  return {m};
}

// Spin-1/2 operator I_a = sigma_a / 2.
inline SpinOperator spin_half(PauliAxis axis) {
  SpinOperator s = pauli(axis);
  s.m *= 0.5;
  return s;
}

inline SpinOperator identity_op(int dim) { return {cxmat::Identity(dim, dim)}; }

inline cxmat kronecker(const cxmat& a, const cxmat& b) {
  cxmat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline SpinOperator tensor(const SpinOperator& a, const SpinOperator& b) {
  if (a.dim() != 2 || b.dim() != 2)
    throw PhysicsError("tensor expects two dim-2 operands");
  return {kronecker(a.m, b.m)};
}

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != 2 || b.dim() != 2)
    throw PhysicsError("tensor expects two dim-2 operands");
  return {kronecker(a.m, b.m)};
}

// Nuclear-frame rotation generator: H = detuning I_z + rabi (1+amp_error)
// (cos(phase) I_x + sin(phase) I_y).  Angles and durations are tied through
// the nominal rabi rate: t = angle / rabi.
struct NuclearFrame {
  double detuning = 0.0;   // rad/s
  double rabi = 0.0;       // rad/s, nominal
  double drive_phase = 0.0;  // rad
  double amp_error = 0.0;  // dimensionless
};

// Hyperfine coupling H_II = 2 pi a_zz S_z I_z with a_zz in plain Hz.
struct Coupling {
  double a_zz_hz = 0.0;
};

// Closed-form SU(2) rotation exp(-i H t) for the nuclear frame generator,
// with the pulse duration fixed by the nominal rabi rate.  The detuned
// effective rate is Lambda = sqrt(rabi^2 (1+eps)^2 + detuning^2).
inline SpinOperator rotation_unitary(const NuclearFrame& h, double nominal_angle) {
  if (nominal_angle != 0.0 && h.rabi <= 0.0)
    throw PhysicsError("rotation_unitary: zero rabi rate with nonzero angle");
  const double t = h.rabi > 0.0 ? nominal_angle / h.rabi : 0.0;
  const double wx = h.rabi * (1.0 + h.amp_error) * std::cos(h.drive_phase);
  const double wy = h.rabi * (1.0 + h.amp_error) * std::sin(h.drive_phase);
  const double wz = h.detuning;
  const double lambda = std::sqrt(wx * wx + wy * wy + wz * wz);
  cxmat u = cxmat::Identity(2, 2);
  if (lambda * t != 0.0) {
    const double half = 0.5 * lambda * t;
    const complexd i(0.0, 1.0);
    const double nx = wx / lambda, ny = wy / lambda, nz = wz / lambda;
    cxmat ns(2, 2);
    ns << nz, nx - i * ny, nx + i * ny, -nz;
    u = std::cos(half) * cxmat::Identity(2, 2) - i * std::sin(half) * ns;
  }
  return {u};
}

// Instantaneous ideal rotation by `angle` about an in-plane axis at `phase`.
inline SpinOperator ideal_rotation(double angle, double phase) {
  NuclearFrame h{0.0, 1.0, phase, 0.0};
  return rotation_unitary(h, angle);
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const SpinOperator& u) {
  return {u.m * rho.m * u.m.adjoint()};
}

// Free precession under H = delta_omega I_z for time t.
inline DensityMatrix evolve_free(const DensityMatrix& rho, double delta_omega,
                                 double t) {
  if (rho.dim() != 2) throw PhysicsError("evolve_free expects dim 2");
  const double half = 0.5 * delta_omega * t;
  const complexd i(0.0, 1.0);
  cxmat u(2, 2);
  u << std::exp(-i * half), 0.0, 0.0, std::exp(i * half);
  return {u * rho.m * u.adjoint()};
}

// Diagonal two-spin evolution.  H = 2 pi a_zz S_z I_z + delta_omega I_z on
// the nuclear factor; both terms are diagonal in the product basis
// {|0 up>, |0 dn>, |1 up>, |1 dn>}, so the propagator is exact.
inline DensityMatrix evolve_coupling(const DensityMatrix& rho, double a_zz_hz,
                                     double t, double nuclear_delta_omega = 0.0) {
  if (rho.dim() != 4) throw PhysicsError("evolve_coupling expects dim 4");
  const double w = constants::two_pi * a_zz_hz;
  const complexd i(0.0, 1.0);
  Eigen::Vector4d energy;
  // S_z = +-1/2 on sensor index, I_z = +-1/2 on nuclear index
  energy << w * 0.25 + nuclear_delta_omega * 0.5,
            -w * 0.25 - nuclear_delta_omega * 0.5,
            -w * 0.25 + nuclear_delta_omega * 0.5,
            w * 0.25 - nuclear_delta_omega * 0.5;
  Eigen::Vector4cd phases;
  for (int k = 0; k < 4; ++k) phases(k) = std::exp(-i * energy(k) * t);
  cxmat out(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      out(r, c) = phases(r) * rho.m(r, c) * std::conj(phases(c));
  return {out};
}

enum class Subsystem { sensor, target };

// Trace out the complementary spin of a two-spin state.  The sensor is the
// first tensor factor.
inline DensityMatrix partial_trace(const DensityMatrix& rho, Subsystem keep) {
  if (rho.dim() != 4) throw PhysicsError("partial_trace expects dim 4");
  cxmat out = cxmat::Zero(2, 2);
  if (keep == Subsystem::sensor) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        out(i, j) = rho.m(2 * i, 2 * j) + rho.m(2 * i + 1, 2 * j + 1);
  } else {
    for (int k = 0; k < 2; ++k)
      for (int l = 0; l < 2; ++l)
        out(k, l) = rho.m(k, l) + rho.m(2 + k, 2 + l);
  }
  return {out};
}

// Tr(rho O) for Hermitian O.  A residual imaginary part above 1e-8 signals a
// non-Hermitian operand and is an error; below that it is discarded.
inline double expectation(const DensityMatrix& rho, const SpinOperator& op) {
  if (rho.dim() != op.dim()) throw PhysicsError("expectation: dimension mismatch");
  const complexd tr = (rho.m * op.m).trace();
  if (std::abs(tr.imag()) > 1e-8)
    throw PhysicsError("expectation: imaginary part " + std::to_string(tr.imag()));
  return tr.real();
}

// Convenience states.
inline DensityMatrix spin_up() {
  cxmat m(2, 2);
  m << 1, 0, 0, 0;
  return {m};
}

inline DensityMatrix maximally_mixed(int dim = 2) {
  return {cxmat::Identity(dim, dim) / static_cast<double>(dim)};
}

// p |up><up| + (1-p) 1/2
inline DensityMatrix polarized_state(double p) {
  if (p < 0.0 || p > 1.0) throw PhysicsError("polarization must be in [0,1]");
  cxmat m(2, 2);
  m << 0.5 * (1.0 + p), 0, 0, 0.5 * (1.0 - p);
  return {m};
}

// Sensor prepared by the laser with initialization fidelity f:
// rho = f |0><0| + (1-f) |1><1|  (equivalently (1-f) 1 + (2f-1)|0><0|).
inline DensityMatrix sensor_init(double fidelity) {
  if (fidelity <= 0.0 || fidelity > 1.0)
    throw PhysicsError("sensor fidelity must be in (0,1]");
  cxmat m(2, 2);
  m << fidelity, 0, 0, 1.0 - fidelity;
  return {m};
}

}  // namespace qdyne
