#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "qdyne/constants.hpp"
#include "qdyne/errors.hpp"
#include "qdyne/simulator.hpp"

// Spectral estimation and fitting: amplitude spectra, decaying-sinusoid
// least squares, Cramer-Rao bounds, decay-rate decomposition, and the
// raw-photon-trace phase correction pipeline.
namespace qdyne {

struct Spectrum {
  std::vector<double> freqs;  // Hz, strictly increasing, DC..Nyquist
  std::vector<double> amps;   // one-sided amplitudes, >= 0
  double dt = 0.0;            // sampling interval of the source trace
};

// One-sided amplitude spectrum.  Zero padding refines the frequency grid;
// amplitudes stay normalized to the unpadded length so an on-bin unit
// cosine shows amplitude one.
inline Spectrum fft_amplitude_spectrum(const TimeTrace& trace,
                                       int zero_pad_factor = 8) {
  const size_t n0 = trace.values.size();
  if (n0 < 4) throw std::invalid_argument("trace too short for a spectrum");
  if (zero_pad_factor < 1) throw std::invalid_argument("pad factor must be >= 1");
  std::vector<double> x(trace.values);
  x.resize(n0 * static_cast<size_t>(zero_pad_factor), 0.0);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  const size_t n = x.size();
  const size_t half = n / 2;
  Spectrum out;
  out.dt = trace.dt;
  out.freqs.reserve(half + 1);
  out.amps.reserve(half + 1);
  for (size_t k = 0; k <= half; ++k) {
    out.freqs.push_back(static_cast<double>(k) / (static_cast<double>(n) * trace.dt));
    const double scale = (k == 0 || (n % 2 == 0 && k == half)) ? 1.0 : 2.0;
    out.amps.push_back(scale * std::abs(spec[k]) / static_cast<double>(n0));
  }
  return out;
}

struct SpectralPeak {
  double frequency = 0.0;
  double amplitude = 0.0;
  size_t bin = 0;
};

// Highest bin at or above min_freq, refined by quadratic interpolation of
// log-amplitudes over three bins.
inline SpectralPeak find_peak(const Spectrum& spec, double min_freq = 0.0,
                              bool interpolate = true) {
  if (spec.amps.empty()) throw std::invalid_argument("empty spectrum");
  size_t first = 0;
  while (first < spec.freqs.size() && spec.freqs[first] < min_freq) ++first;
  if (first >= spec.freqs.size())
    throw std::invalid_argument("min_freq beyond Nyquist");
  size_t k = first;
  for (size_t i = first; i < spec.amps.size(); ++i)
    if (spec.amps[i] > spec.amps[k]) k = i;
  SpectralPeak pk{spec.freqs[k], spec.amps[k], k};
  if (interpolate && k > 0 && k + 1 < spec.amps.size() && spec.amps[k] > 0.0 &&
      spec.amps[k - 1] > 0.0 && spec.amps[k + 1] > 0.0) {
    const double la = std::log(spec.amps[k - 1]);
    const double lb = std::log(spec.amps[k]);
    const double lc = std::log(spec.amps[k + 1]);
    const double den = la - 2.0 * lb + lc;
    if (den < 0.0) {
      const double d = 0.5 * (la - lc) / den;
      pk.frequency += d * (spec.freqs[1] - spec.freqs[0]);
      pk.amplitude = std::exp(lb - 0.25 * (la - lc) * d);
    }
  }
  return pk;
}

// ---------------------------------------------------------------------------
// Decaying sinusoid maximum-likelihood fit
// ---------------------------------------------------------------------------

struct SinusoidFit {
  double amplitude = 0.0;   // >= 0
  double frequency = 0.0;   // Hz, in [0, Nyquist]
  double phase = 0.0;       // rad, in (-pi, pi]
  double decay_rate = 0.0;  // Hz, >= 0
  double offset = 0.0;
  std::array<double, 5> param_stddevs{};  // A, nu, phi, Gamma, offset
  double residual_rms = 0.0;
  int iterations = 0;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& msg, SinusoidFit last)
      : std::runtime_error(msg), last_iterate(last) {}
  SinusoidFit last_iterate;
};

namespace fit_detail {

inline Eigen::VectorXd model(const Eigen::VectorXd& t, const Eigen::VectorXd& p) {
  return (p(0) * ((2.0 * constants::pi * p(1) * t.array() + p(2)).sin()) *
              (-p(3) * t.array()).exp() +
          p(4))
      .matrix();
}

inline Eigen::MatrixXd jacobian(const Eigen::VectorXd& t, const Eigen::VectorXd& p) {
  const auto theta = 2.0 * constants::pi * p(1) * t.array() + p(2);
  const auto env = (-p(3) * t.array()).exp();
  Eigen::MatrixXd j(t.size(), 5);
  j.col(0) = (theta.sin() * env).matrix();
  j.col(1) = (p(0) * 2.0 * constants::pi * t.array() * theta.cos() * env).matrix();
  j.col(2) = (p(0) * theta.cos() * env).matrix();
  j.col(3) = (-p(0) * t.array() * theta.sin() * env).matrix();
  j.col(4) = Eigen::VectorXd::Ones(t.size());
  return j;
}

// Canonical parameter region: A >= 0, nu >= 0, phi in (-pi, pi].
inline void normalize(Eigen::VectorXd& p) {
  if (p(1) < 0.0) {
    p(1) = -p(1);
    p(2) = constants::pi - p(2);
  }
  if (p(0) < 0.0) {
    p(0) = -p(0);
    p(2) += constants::pi;
  }
  p(2) = std::remainder(p(2), constants::two_pi);
  if (p(2) <= -constants::pi) p(2) += constants::two_pi;
}

}  // namespace fit_detail

// Damped Gauss-Newton least squares for
//   y = A sin(2 pi nu t + phi) exp(-Gamma t) + offset
// with analytic Jacobian.  Seeds come from the padded FFT peak and a
// log-envelope regression unless an initial guess is supplied.
inline SinusoidFit fit_decaying_sinusoid(
    const TimeTrace& trace, const SinusoidFit* init = nullptr,
    int max_iterations = 200) {
  const size_t n = trace.values.size();
  if (n < 8) throw std::invalid_argument("trace too short to fit");
  if (trace.dt <= 0.0) throw std::invalid_argument("trace needs dt > 0");

  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(trace.values.data(), n);
  Eigen::VectorXd t(n);
  for (size_t i = 0; i < n; ++i) t(i) = static_cast<double>(i) * trace.dt;
  const double total_time = static_cast<double>(n) * trace.dt;

  Eigen::VectorXd p(5);
  if (init) {
    p << init->amplitude, init->frequency, init->phase, init->decay_rate,
        init->offset;
  } else {
    const double mean = y.mean();
    TimeTrace centered = trace;
    for (double& v : centered.values) v -= mean;
    Spectrum spec = fft_amplitude_spectrum(centered, 8);
    SpectralPeak pk = find_peak(spec, 0.5 / (static_cast<double>(n) * trace.dt));
    // crude envelope slope from four trace segments
    const size_t seg = std::max<size_t>(n / 4, 2);
    std::vector<double> log_env, t_env;
    for (size_t s = 0; s + seg <= n; s += seg) {
      double acc = 0.0;
      for (size_t i = s; i < s + seg; ++i) acc += (y(i) - mean) * (y(i) - mean);
      const double rms = std::sqrt(acc / static_cast<double>(seg));
      if (rms > 0.0) {
        log_env.push_back(std::log(rms));
        t_env.push_back((static_cast<double>(s) + 0.5 * seg) * trace.dt);
      }
    }
    double gamma0 = 0.0;
    if (log_env.size() >= 2) {
      const double tm = std::accumulate(t_env.begin(), t_env.end(), 0.0) / t_env.size();
      const double lm =
          std::accumulate(log_env.begin(), log_env.end(), 0.0) / log_env.size();
      double num = 0.0, den = 0.0;
      for (size_t i = 0; i < t_env.size(); ++i) {
        num += (t_env[i] - tm) * (log_env[i] - lm);
        den += (t_env[i] - tm) * (t_env[i] - tm);
      }
      if (den > 0.0) gamma0 = std::max(0.0, -num / den);
    }
    // phase of the peak bin of A sin(...) ~ arg X + pi/2
    Eigen::FFT<double> fft;
    std::vector<double> x0(trace.values);
    for (auto& v : x0) v -= mean;
    x0.resize(n * 8, 0.0);
    std::vector<std::complex<double>> sp;
    fft.fwd(sp, x0);
    const double phi0 = std::arg(sp[pk.bin]) + constants::pi / 2.0;
    p << std::max(pk.amplitude, 1e-30), pk.frequency, phi0, gamma0, mean;
  }

  const double y_scale = std::max((y.array() - y.mean()).abs().maxCoeff(), 1e-300);
  const auto scale_of = [&](int i, const Eigen::VectorXd& pp) {
    switch (i) {
      case 0: case 4: return std::max(std::abs(pp(i)), 1e-3 * y_scale);
      case 1: case 3: return std::max(std::abs(pp(i)), 1e-3 / total_time);
      default: return std::max(std::abs(pp(i)), 1e-3);
    }
  };

  Eigen::VectorXd r = y - fit_detail::model(t, p);
  double ssr = r.squaredNorm();
  double lambda = 1e-3;
  int iter = 0;
  bool converged = false;
  for (; iter < max_iterations && !converged; ++iter) {
    Eigen::MatrixXd j = fit_detail::jacobian(t, p);
    Eigen::MatrixXd jtj = j.transpose() * j;
    Eigen::VectorXd jtr = j.transpose() * r;
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd damped = jtj;
      for (int d = 0; d < 5; ++d)
        damped(d, d) += lambda * std::max(jtj(d, d), 1e-300);
      Eigen::VectorXd delta = damped.ldlt().solve(jtr);
      Eigen::VectorXd cand = p + delta;
      // keep the iterate in the band where the model is identifiable
      const bool sane = std::isfinite(cand.sum()) &&
                        std::abs(cand(1)) < 1.0 / trace.dt &&
                        std::abs(cand(3)) * total_time < 200.0;
      if (!sane) {
        lambda *= 11.0;
        continue;
      }
      Eigen::VectorXd rc = y - fit_detail::model(t, cand);
      const double ssr_c = rc.squaredNorm();
      if (ssr_c <= ssr || !std::isfinite(ssr)) {
        double step = 0.0;
        for (int d = 0; d < 5; ++d)
          step = std::max(step, std::abs(delta(d)) / scale_of(d, cand));
        p = cand;
        r = rc;
        ssr = ssr_c;
        lambda = std::max(lambda / 9.0, 1e-12);
        stepped = true;
        if (step < 1e-10) converged = true;
        break;
      }
      lambda *= 11.0;
    }
    if (!stepped) break;  // damping saturated: accept the current iterate
  }

  fit_detail::normalize(p);
  SinusoidFit out;
  out.amplitude = p(0);
  out.frequency = p(1);
  out.phase = p(2);
  out.decay_rate = std::max(p(3), 0.0);
  out.offset = p(4);
  out.iterations = iter;
  out.residual_rms = std::sqrt(ssr / static_cast<double>(n));
  if (!converged) throw FitError("fit did not converge", out);

  if (n > 5) {
    const double sigma2 = ssr / static_cast<double>(n - 5);
    Eigen::MatrixXd j = fit_detail::jacobian(t, p);
    Eigen::MatrixXd cov = (j.transpose() * j).ldlt().solve(
        Eigen::MatrixXd::Identity(5, 5)) * sigma2;
    for (int i = 0; i < 5; ++i)
      out.param_stddevs[i] = std::sqrt(std::max(cov(i, i), 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cramer-Rao bounds for the decaying sinusoid
// ---------------------------------------------------------------------------

// Decay correction factor C[T] for the frequency variance, with
// z = exp(-zeta) the per-sample envelope.  Evaluated through the geometric
// moment sums S_k = sum n^k z^(2n), which stay conditioned for every zeta;
// the textbook ratio form cancels catastrophically when N*zeta is small.
inline double crlb_c_factor(int n_samples, double zeta) {
  if (n_samples < 2) throw std::invalid_argument("need at least 2 samples");
  if (zeta <= 0.0) throw std::invalid_argument("zeta must be > 0");
  const double w = std::exp(-2.0 * zeta);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, wn = 1.0;
  for (int k = 0; k < n_samples; ++k) {
    const double kd = static_cast<double>(k);
    s0 += wn;
    s1 += kd * wn;
    s2 += kd * kd * wn;
    wn *= w;
    if (wn == 0.0) break;
  }
  const double det = s0 * s2 - s1 * s1;
  if (det <= 0.0) throw PhysicsError("degenerate Fisher information");
  const double n3 = std::pow(static_cast<double>(n_samples), 3);
  return n3 / 12.0 * s0 / det;
}

// var(nu) = 12 / ((2 pi)^2 (A/rho)^2 T^3) * C[T].  A_over_rho folds the
// amplitude against the one-sided noise PSD: rho^2 = 2 sigma^2 dT for white
// per-sample noise sigma.
inline double crlb_variance(double a_over_rho, double total_time, double dt,
                            double t2star) {
  if (a_over_rho <= 0.0 || total_time <= 0.0 || dt <= 0.0 || t2star <= 0.0)
    throw std::invalid_argument("crlb_variance needs positive inputs");
  const int n = static_cast<int>(std::llround(total_time / dt));
  const double c = crlb_c_factor(n, dt / t2star);
  return 12.0 /
         (constants::two_pi * constants::two_pi * a_over_rho * a_over_rho *
          total_time * total_time * total_time) *
         c;
}

// Saturated long-time limit: sigma(nu) = 2 sqrt(2) / (2 pi (A/rho) T2*^{3/2}).
inline double crlb_sigma(double a_over_rho, double t2star) {
  if (a_over_rho <= 0.0 || t2star <= 0.0)
    throw std::invalid_argument("crlb_sigma needs positive inputs");
  return 2.0 * std::sqrt(2.0) /
         (constants::two_pi * a_over_rho * std::pow(t2star, 1.5));
}

// ---------------------------------------------------------------------------
// Decay decomposition Gamma(tau_seq) = coeff / tau_seq + Gamma0
// ---------------------------------------------------------------------------

struct DecayPoint {
  double tau_seq = 0.0;     // s
  double gamma = 0.0;       // Hz
  double gamma_sigma = 0.0; // Hz; <= 0 means unweighted
};

struct DecayDecomposition {
  double back_action_coeff = 0.0;  // dimensionless (alpha^2/4)
  double gamma0 = 0.0;             // Hz
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  bool clamped = false;
};

inline DecayDecomposition fit_decay_decomposition(
    const std::vector<DecayPoint>& points) {
  if (points.size() < 3) throw std::invalid_argument("need at least 3 points");
  Eigen::MatrixXd x(points.size(), 2);
  Eigen::VectorXd y(points.size());
  Eigen::VectorXd w(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    if (points[i].tau_seq <= 0.0)
      throw std::invalid_argument("tau_seq must be > 0");
    x(i, 0) = 1.0 / points[i].tau_seq;
    x(i, 1) = 1.0;
    y(i) = points[i].gamma;
    w(i) = points[i].gamma_sigma > 0.0
               ? 1.0 / (points[i].gamma_sigma * points[i].gamma_sigma)
               : 1.0;
  }
  Eigen::Matrix2d xtwx = x.transpose() * w.asDiagonal() * x;
  if (std::abs(xtwx.determinant()) < 1e-30 * xtwx.norm() * xtwx.norm())
    throw std::invalid_argument("degenerate design matrix (tau values too similar)");
  Eigen::Vector2d beta = xtwx.ldlt().solve(x.transpose() * (w.asDiagonal() * y));
  DecayDecomposition out;
  out.covariance = xtwx.inverse();
  out.back_action_coeff = beta(0);
  out.gamma0 = beta(1);
  if (out.back_action_coeff < 0.0) {
    out.back_action_coeff = 0.0;
    out.clamped = true;
  }
  if (out.gamma0 < 0.0) {
    out.gamma0 = 0.0;
    out.clamped = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Three-phase magnetometer and photon pipeline
// ---------------------------------------------------------------------------

// Invert counts ~ base (1 + V cos(pulse_phase - theta)) sampled at pulse
// phases {0, 120, 240} degrees; returns theta in (-pi, pi].
inline double magnetometer_phase(double c0, double c120, double c240) {
  if (c0 < 0.0 || c120 < 0.0 || c240 < 0.0)
    throw std::invalid_argument("counts must be >= 0");
  const double yy = std::sqrt(3.0) * (c120 - c240);
  const double xx = 2.0 * c0 - c120 - c240;
  if (yy == 0.0 && xx == 0.0)
    throw std::invalid_argument("all-equal counts: phase undefined");
  double phase = std::atan2(yy, xx);
  if (phase <= -constants::pi) phase = constants::pi;
  return phase;
}

inline double circular_distance(double a, double b) {
  return std::abs(std::remainder(a - b, constants::two_pi));
}

struct PhotonBlockLayout {
  int n_angles = 5;
  int samples_per_angle = 60;
  int magnetometer_samples = 150;

  int total() const { return n_angles * samples_per_angle + magnetometer_samples; }
};

struct PipelineResult {
  std::vector<std::vector<double>> block_average;  // [n_angles][samples_per_angle]
  std::vector<double> phases;                      // per input trace
  int kept = 0;
  int total = 0;
  double dt = 0.0;
};

// Extract the per-trace magnetometer phase, keep traces inside the
// double-sided window around +-center (sign-correcting the negative side),
// and average the kept qdyne segments per angle block.
inline PipelineResult phase_correct_and_group(
    const std::vector<std::vector<double>>& raw, const PhotonBlockLayout& layout,
    double window_center, double window_halfwidth, double dt = 0.0) {
  if (layout.magnetometer_samples < 3 || layout.magnetometer_samples % 3 != 0)
    throw std::invalid_argument("magnetometer segment must hold whole phase triples");
  PipelineResult out;
  out.dt = dt;
  out.total = static_cast<int>(raw.size());
  out.block_average.assign(layout.n_angles,
                           std::vector<double>(layout.samples_per_angle, 0.0));
  const int qdyne_len = layout.n_angles * layout.samples_per_angle;
  for (const auto& tracev : raw) {
    if (static_cast<int>(tracev.size()) != layout.total())
      throw std::invalid_argument("trace length does not match the layout");
    double c[3] = {0.0, 0.0, 0.0};
    for (int i = 0; i < layout.magnetometer_samples; ++i)
      c[i % 3] += tracev[qdyne_len + i];
    const double theta = magnetometer_phase(c[0], c[1], c[2]);
    out.phases.push_back(theta);
    const double dplus = circular_distance(theta, window_center);
    const double dminus = circular_distance(theta, -window_center);
    if (std::min(dplus, dminus) > window_halfwidth) continue;
    const double sign = dplus <= dminus ? 1.0 : -1.0;
    ++out.kept;
    for (int b = 0; b < layout.n_angles; ++b)
      for (int s = 0; s < layout.samples_per_angle; ++s)
        out.block_average[b][s] += sign * tracev[b * layout.samples_per_angle + s];
  }
  if (out.kept == 0) throw EmptyResultError("no trace inside the acceptance window");
  for (auto& block : out.block_average)
    for (auto& v : block) v /= static_cast<double>(out.kept);
  return out;
}

}  // namespace qdyne
