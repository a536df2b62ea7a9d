#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qdyne/analysis.hpp"

using namespace qdyne;
using Catch::Approx;

namespace {

TimeTrace synth(double a, double nu, double phi, double gamma, double offset,
                double dt, size_t n) {
  TimeTrace t;
  t.dt = dt;
  t.kind = TraceKind::expectation_Sz;
  for (size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) * dt;
    t.values.push_back(a * std::sin(constants::two_pi * nu * ti + phi) *
                           std::exp(-gamma * ti) +
                       offset);
  }
  return t;
}

// The published ratio form of the decay correction factor; used as the
// cross-check oracle in its numerically stable regime.
double c_factor_ratio_form(int n, double zeta) {
  const double z = std::exp(-zeta);
  const double t3 = std::pow(static_cast<double>(n), 3);
  const double one_m_z2 = -std::expm1(-2.0 * zeta);
  const double z2n = std::exp(-2.0 * n * zeta);
  const double num = t3 / 12.0 * one_m_z2 * one_m_z2 * one_m_z2 * (1.0 - z2n);
  const double den = z * z * (1.0 - z2n) * (1.0 - z2n) -
                     static_cast<double>(n) * static_cast<double>(n) * z2n *
                         one_m_z2 * one_m_z2;
  return num / den;
}

}  // namespace

TEST_CASE("amplitude spectrum") {
  SECTION("constant trace puts all weight in the DC bin") {
    TimeTrace t = synth(0.0, 0.0, 0.0, 0.0, 1.3, 1e-4, 32);
    Spectrum s = fft_amplitude_spectrum(t, 1);
    CHECK(s.amps[0] == Approx(1.3).epsilon(1e-12));
    for (size_t k = 1; k < s.amps.size(); ++k) CHECK(s.amps[k] < 1e-10);
  }

  SECTION("on-bin cosine shows a single unit peak") {
    const size_t n = 64;
    const double dt = 1e-4;
    const double nu = 8.0 / (n * dt);
    TimeTrace t = synth(1.0, nu, constants::pi / 2.0, 0.0, 0.0, dt, n);  // cos
    Spectrum s = fft_amplitude_spectrum(t, 1);
    SpectralPeak pk = find_peak(s, 0.0, false);
    CHECK(pk.frequency == Approx(nu));
    CHECK(pk.amplitude == Approx(1.0).epsilon(1e-9));
    for (size_t k = 0; k < s.amps.size(); ++k)
      if (k != pk.bin) CHECK(s.amps[k] < 1e-9);
  }

  SECTION("Parseval consistency before padding") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x;
    for (int i = 0; i < 100; ++i) x.push_back(g(rng));
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, x);
    double power_t = 0.0, power_f = 0.0;
    for (double v : x) power_t += v * v;
    for (const auto& c : spec) power_f += std::norm(c);
    CHECK(power_f / static_cast<double>(x.size()) ==
          Approx(power_t).epsilon(1e-9));
  }

  SECTION("synthetic 13C-like trace peaks in the right bin") {
    // nu = 2.368 kHz, Gamma = 0.6 kHz, dt = 105.5506 us, 60 points
    const double dt = 105.5506e-6;
    TimeTrace t = synth(1.0, 2368.0, 0.3, 600.0, 0.0, dt, 60);
    Spectrum s = fft_amplitude_spectrum(t, 8);
    SpectralPeak pk = find_peak(s, 200.0, false);
    const double bin = 1.0 / (60.0 * 8.0 * dt);
    CHECK(std::abs(pk.frequency - 2368.0) <= 2.0 * bin);
  }

  CHECK_THROWS_AS(fft_amplitude_spectrum(synth(1, 1, 0, 0, 0, 1, 3), 1),
                  std::invalid_argument);
}

TEST_CASE("decaying sinusoid fit") {
  SECTION("noiseless recovery at the published 14N numbers") {
    // frequency 1.932 kHz, decay 0.51 kHz on the Fig. 2b grid
    const double dt = 144.333e-6;
    TimeTrace t = synth(0.5, 1932.0, 1.1, 510.0, 0.0, dt, 30);
    SinusoidFit f = fit_decaying_sinusoid(t);
    CHECK(f.frequency == Approx(1932.0).epsilon(1e-9));
    CHECK(f.decay_rate == Approx(510.0).epsilon(1e-9));
    CHECK(f.amplitude == Approx(0.5).epsilon(1e-9));
    CHECK(f.phase == Approx(1.1).margin(1e-9));
    CHECK(f.residual_rms < 1e-10);
  }

  SECTION("pure sinusoid fits to zero decay") {
    TimeTrace t = synth(1.0, 2368.0, 0.4, 0.0, 0.0, 105.5506e-6, 60);
    SinusoidFit f = fit_decaying_sinusoid(t);
    CHECK(f.decay_rate * 105.5506e-6 * 60 < 1e-9);
  }

  SECTION("randomized noiseless corpus recovers all parameters to 1e-9") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
      const double dt = 50e-6 + u01(rng) * 2e-4;
      const size_t n = 40 + static_cast<size_t>(u01(rng) * 80);
      const double nyq = 0.5 / dt;
      const double nu = (0.1 + 0.8 * u01(rng)) * nyq;
      const double a = 0.2 + u01(rng);
      const double phi = -constants::pi + constants::two_pi * u01(rng);
      const double gamma = u01(rng) * 2.0 / (static_cast<double>(n) * dt);
      const double off = (u01(rng) - 0.5) * 2.0;
      TimeTrace t = synth(a, nu, phi, gamma, off, dt, n);
      SinusoidFit f = fit_decaying_sinusoid(t);
      CHECK(f.frequency == Approx(nu).epsilon(1e-9));
      CHECK(f.amplitude == Approx(a).epsilon(1e-9));
      CHECK(std::abs(std::remainder(f.phase - phi, constants::two_pi)) < 1e-8);
      CHECK(f.decay_rate ==
            Approx(gamma).margin(1e-9 / (static_cast<double>(n) * dt)).epsilon(1e-7));
      CHECK(f.offset == Approx(off).margin(1e-9));
    }
  }

  SECTION("explicit seed is honored") {
    TimeTrace t = synth(1.0, 500.0, 0.1, 100.0, 0.0, 1e-4, 50);
    SinusoidFit init;
    init.amplitude = 0.9;
    init.frequency = 480.0;
    init.phase = 0.0;
    init.decay_rate = 120.0;
    init.offset = 0.01;
    SinusoidFit f = fit_decaying_sinusoid(t, &init);
    CHECK(f.frequency == Approx(500.0).epsilon(1e-9));
  }

  SECTION("fitted frequency agrees with the spectral peak to one bin") {
    TimeTrace t = synth(0.7, 1870.0, 0.9, 300.0, 0.1, 105.5506e-6, 60);
    SinusoidFit f = fit_decaying_sinusoid(t);
    TimeTrace centered = t;
    for (auto& v : centered.values) v -= f.offset;
    Spectrum s = fft_amplitude_spectrum(centered, 8);
    SpectralPeak pk = find_peak(s, 100.0);
    CHECK(std::abs(pk.frequency - f.frequency) <= 1.0 / (60.0 * 105.5506e-6));
  }

  CHECK_THROWS_AS(fit_decaying_sinusoid(synth(1, 1, 0, 0, 0, 1e-4, 5)),
                  std::invalid_argument);
}

TEST_CASE("Monte-Carlo frequency scatter vs the CRLB") {
  // T = 4 T2*, per-sample noise sigma; one-sided PSD rho^2 = 2 sigma^2 dt
  const double dt = 1e-4, t2star = 40.0 * dt;
  const size_t n = 160;
  const double a = 1.0, nu = 1230.0, sigma = 0.05;
  const double a_over_rho = a / std::sqrt(2.0 * sigma * sigma * dt);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> nus;
  for (int trial = 0; trial < 150; ++trial) {
    TimeTrace t = synth(a, nu, 0.7, 1.0 / t2star, 0.0, dt, n);
    for (auto& v : t.values) v += g(rng);
    try {
      nus.push_back(fit_decaying_sinusoid(t).frequency);
    } catch (const FitError& e) {
      nus.push_back(e.last_iterate.frequency);
    }
  }
  double mean = 0.0;
  for (double v : nus) mean += v;
  mean /= static_cast<double>(nus.size());
  double var = 0.0;
  for (double v : nus) var += (v - mean) * (v - mean);
  var /= static_cast<double>(nus.size() - 1);
  const double sig_mc = std::sqrt(var);
  const double sig_bound = crlb_sigma(a_over_rho, t2star);
  CHECK(sig_mc / sig_bound > 0.75);
  CHECK(sig_mc / sig_bound < 1.25);
}

TEST_CASE("decay correction factor") {
  SECTION("matches the published ratio form where that is stable") {
    for (int n : {50, 200, 1000}) {
      for (double zeta : {0.2, 0.025, 0.01}) {
        CHECK(crlb_c_factor(n, zeta) ==
              Approx(c_factor_ratio_form(n, zeta)).epsilon(1e-10));
      }
    }
  }

  SECTION("monotone in the decay at fixed N") {
    const int n = 500;
    double prev = crlb_c_factor(n, 1e-4);
    for (double zeta : {1e-3, 1e-2, 0.1, 0.5}) {
      const double c = crlb_c_factor(n, zeta);
      CHECK(c > prev);
      prev = c;
    }
  }

  SECTION("no-decay limit approaches N^2/(N^2-1)") {
    // the leading zeta correction scales like N * zeta
    CHECK(crlb_c_factor(1000, 1e-9) == Approx(1.0).epsilon(1e-4));
    CHECK(crlb_c_factor(100, 1e-12) ==
          Approx(100.0 * 100.0 / (100.0 * 100.0 - 1.0)).epsilon(1e-8));
    CHECK(crlb_c_factor(100, 1e-4) - 1.0 ==
          Approx(1.0 / (100.0 * 100.0 - 1.0) + 100.0 * 1e-4).epsilon(0.05));
  }

  SECTION("long-time limit matches 8 T^3 / (12 T2*^3)") {
    const int n = 100000;
    const double zeta = 1e-3;
    const double limit = 8.0 * std::pow(static_cast<double>(n), 3) /
                         (12.0 * std::pow(1.0 / zeta, 3));
    CHECK(crlb_c_factor(n, zeta) == Approx(limit).epsilon(1e-3));
  }

  CHECK_THROWS_AS(crlb_c_factor(1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(crlb_c_factor(100, 0.0), std::invalid_argument);
}

TEST_CASE("CRLB variance and sigma") {
  SECTION("short-time regime reduces to the non-decaying formula") {
    const double a_over_rho = 3.0, dt = 1.0, t2star = 1e5;
    const double t = 100.0;  // T / T2* = 1e-3
    const double simple = 12.0 / (constants::two_pi * constants::two_pi *
                                  a_over_rho * a_over_rho * t * t * t);
    CHECK(crlb_variance(a_over_rho, t, dt, t2star) == Approx(simple).epsilon(0.01));
  }

  SECTION("long-time regime saturates at the decay bound") {
    const double a_over_rho = 1.0, dt = 1.0, t2star = 1000.0;
    const double bound =
        8.0 / (constants::two_pi * constants::two_pi * t2star * t2star * t2star);
    CHECK(crlb_variance(a_over_rho, 40 * t2star, dt, t2star) ==
          Approx(bound).epsilon(1e-3));
  }

  SECTION("plateau value at the documented parameters") {
    // A/rho = 1, T2* = 40, dT = 1: plateau near 8/((2 pi)^2 40^3) ~ 3.17e-6
    const double v = crlb_variance(1.0, 1000.0, 1.0, 40.0);
    CHECK(v == Approx(8.0 / (constants::two_pi * constants::two_pi * 64000.0))
                   .epsilon(0.03));
  }

  SECTION("monotone decreasing in T and in A/rho") {
    double prev = crlb_variance(1.0, 50.0, 1.0, 40.0);
    for (double t : {100.0, 200.0, 400.0, 800.0}) {
      const double v = crlb_variance(1.0, t, 1.0, 40.0);
      CHECK(v <= prev);
      prev = v;
    }
    CHECK(crlb_variance(2.0, 100.0, 1.0, 40.0) <
          crlb_variance(1.0, 100.0, 1.0, 40.0));
  }

  SECTION("sigma closed form") {
    CHECK(crlb_sigma(2.0, 1.0) ==
          Approx(0.5 * 2.0 * std::sqrt(2.0) / constants::two_pi));
    // doubling A/rho halves sigma
    CHECK(crlb_sigma(2.0, 0.3) == Approx(0.5 * crlb_sigma(1.0, 0.3)));
    // sigma^2 is exactly the stated saturation bound ...
    const double s = crlb_sigma(1.5, 7.0);
    CHECK(s * s == Approx(8.0 / (constants::two_pi * constants::two_pi * 1.5 * 1.5 *
                                 7.0 * 7.0 * 7.0))
                       .epsilon(1e-12));
    // ... which the variance approaches as the sampling gets dense
    CHECK(s * s ==
          Approx(crlb_variance(1.5, 7.0 * 40, 7.0 / 1000.0, 7.0)).epsilon(3e-3));
  }
}

TEST_CASE("decay decomposition fit") {
  SECTION("noiseless forward model recovers exactly") {
    const double coeff = 0.3 * 0.3 / 4.0, gamma0 = 1000.0;
    std::vector<DecayPoint> pts;
    for (double tau : {50e-6, 100e-6, 200e-6, 400e-6, 900e-6})
      pts.push_back({tau, coeff / tau + gamma0, 0.0});
    DecayDecomposition d = fit_decay_decomposition(pts);
    CHECK(d.back_action_coeff == Approx(coeff).epsilon(1e-10));
    CHECK(d.gamma0 == Approx(gamma0).epsilon(1e-10));
    CHECK_FALSE(d.clamped);
    for (const auto& p : pts)
      CHECK(std::abs(d.back_action_coeff / p.tau_seq + d.gamma0 - p.gamma) <
            1e-10 * p.gamma);
  }

  SECTION("zero back-action data fits to the mean") {
    std::vector<DecayPoint> pts{{1e-4, 500.0, 1.0},
                                {2e-4, 500.0, 1.0},
                                {5e-4, 500.0, 1.0},
                                {9e-4, 500.0, 1.0}};
    DecayDecomposition d = fit_decay_decomposition(pts);
    CHECK(d.back_action_coeff == Approx(0.0).margin(1e-9));
    CHECK(d.gamma0 == Approx(500.0).epsilon(1e-10));
  }

  SECTION("plateau scenarios on the published scales") {
    // strong-coupling pairs level near 1 kHz, the weak pair near 27 Hz
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    auto scenario = [&](double alpha, double gamma0) {
      std::vector<DecayPoint> pts;
      for (double tau = 1e-4; tau <= 5.2e-3; tau *= 1.7) {
        const double clean = alpha * alpha / 4.0 / tau + gamma0;
        const double sigma = 0.05 * clean;
        pts.push_back({tau, clean + sigma * g(rng), sigma});
      }
      return fit_decay_decomposition(pts);
    };
    DecayDecomposition strong = scenario(0.3, 1000.0);
    CHECK(strong.gamma0 == Approx(1000.0).epsilon(0.15));
    DecayDecomposition weak = scenario(0.05, 27.0);
    CHECK(weak.gamma0 ==
          Approx(27.0).margin(3.0 * std::sqrt(weak.covariance(1, 1))));
    CHECK(weak.gamma0 < 100.0);
  }

  CHECK_THROWS_AS(fit_decay_decomposition({{1e-4, 1.0, 0.0}, {2e-4, 2.0, 0.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit_decay_decomposition(
                      {{1e-4, 1.0, 0.0}, {1e-4, 1.1, 0.0}, {1e-4, 0.9, 0.0}}),
                  std::invalid_argument);
}

TEST_CASE("three-phase magnetometer inversion") {
  auto counts_for = [](double theta, double base, double visibility) {
    std::array<double, 3> c{};
    for (int k = 0; k < 3; ++k) {
      const double pulse_phase = constants::two_pi * k / 3.0;
      c[k] = base * (1.0 + visibility * std::cos(pulse_phase - theta));
    }
    return c;
  };

  SECTION("zero phase") {
    auto c = counts_for(0.0, 100.0, 0.8);
    CHECK(magnetometer_phase(c[0], c[1], c[2]) == Approx(0.0).margin(1e-12));
  }

  SECTION("quarter turn") {
    auto c = counts_for(constants::pi / 2.0, 50.0, 0.5);
    CHECK(magnetometer_phase(c[0], c[1], c[2]) ==
          Approx(constants::pi / 2.0).margin(1e-12));
  }

  SECTION("inversion identity over the full circle") {
    for (int k = -180; k <= 180; k += 7) {
      const double theta = k * constants::pi / 180.0;
      auto c = counts_for(theta, 80.0, 0.6);
      const double got = magnetometer_phase(c[0], c[1], c[2]);
      CHECK(std::abs(std::remainder(got - theta, constants::two_pi)) < 1e-9);
    }
  }

  CHECK_THROWS_AS(magnetometer_phase(5.0, 5.0, 5.0), std::invalid_argument);
  CHECK_THROWS_AS(magnetometer_phase(-1.0, 5.0, 5.0), std::invalid_argument);
}

namespace {

// Forward model for the raw 450-readout records: five qdyne angle blocks
// followed by the three-phase magnetometer, all Poisson photon counts.  The
// qdyne signal amplitude rides on sin(theta), the fringe slope at the
// drifted readout phase, which is what the acceptance window exploits.
std::vector<double> synth_record(double theta, std::mt19937_64& rng,
                                 const PhotonBlockLayout& layout,
                                 double base = 50.0, double vis = 0.6,
                                 double sig = 0.25) {
  std::vector<double> rec;
  for (int b = 0; b < layout.n_angles; ++b) {
    for (int s = 0; s < layout.samples_per_angle; ++s) {
      const double q = sig * std::cos(constants::pi / 2.0 * s + 0.4 * b);
      const double lam =
          base * (1.0 + vis * (std::cos(theta) + std::sin(theta) * q));
      std::poisson_distribution<long> p(lam);
      rec.push_back(static_cast<double>(p(rng)));
    }
  }
  for (int i = 0; i < layout.magnetometer_samples; ++i) {
    const double pulse_phase = constants::two_pi * (i % 3) / 3.0;
    const double lam = base * (1.0 + vis * std::cos(pulse_phase - theta));
    std::poisson_distribution<long> p(lam);
    rec.push_back(static_cast<double>(p(rng)));
  }
  return rec;
}

double averaged_amplitude(const PipelineResult& res, double dt) {
  double acc = 0.0;
  for (const auto& block : res.block_average) {
    TimeTrace t{block, dt, TraceKind::photon_counts};
    double mean = 0.0;
    for (double v : t.values) mean += v;
    mean /= static_cast<double>(t.values.size());
    for (double& v : t.values) v -= mean;  // the DC skirt would bury the line
    Spectrum s = fft_amplitude_spectrum(t, 8);
    acc += find_peak(s, s.freqs[1] * 0.5).amplitude;
  }
  return acc / static_cast<double>(res.block_average.size());
}

}  // namespace

TEST_CASE("photon pipeline") {
  PhotonBlockLayout layout;
  CHECK(layout.total() == 450);

  SECTION("drift-free input is fully accepted") {
    std::mt19937_64 rng(31);
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < 40; ++i)
      raw.push_back(synth_record(constants::pi / 2.0, rng, layout));
    PipelineResult res = phase_correct_and_group(
        raw, layout, constants::pi / 2.0, constants::pi / 6.0, 105.5506e-6);
    CHECK(res.kept == res.total);
    CHECK(res.block_average.size() == 5);
    CHECK(res.block_average[0].size() == 60);
  }

  SECTION("uniform random phases: acceptance fraction matches the window") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> u(-constants::pi, constants::pi);
    std::vector<std::vector<double>> raw;
    const int n = 600;
    for (int i = 0; i < n; ++i) raw.push_back(synth_record(u(rng), rng, layout));
    PipelineResult res = phase_correct_and_group(
        raw, layout, constants::pi / 2.0, constants::pi / 6.0, 105.5506e-6);
    // double window of half-width 30 degrees: 2 * 60 / 360 = 1/3
    const double frac = static_cast<double>(res.kept) / res.total;
    const double sigma = std::sqrt((1.0 / 3.0) * (2.0 / 3.0) / n);
    CHECK(std::abs(frac - 1.0 / 3.0) < 3.0 * sigma);
  }

  SECTION("window sweep: amplitude peaks at +-90 degrees") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-constants::pi, constants::pi);
    std::vector<std::vector<double>> raw;
    for (int i = 0; i < 400; ++i) raw.push_back(synth_record(u(rng), rng, layout));
    const double hw = constants::pi / 6.0;
    const double amp90 = averaged_amplitude(
        phase_correct_and_group(raw, layout, constants::pi / 2.0, hw, 105.5506e-6),
        105.5506e-6);
    const double amp0 = averaged_amplitude(
        phase_correct_and_group(raw, layout, 0.0, hw, 105.5506e-6), 105.5506e-6);
    CHECK(amp90 > 3.0 * amp0);
  }

  SECTION("empty window is an error") {
    std::mt19937_64 rng(34);
    std::vector<std::vector<double>> raw{synth_record(0.0, rng, layout)};
    CHECK_THROWS_AS(phase_correct_and_group(raw, layout, constants::pi / 2.0,
                                            0.01, 105.5506e-6),
                    EmptyResultError);
  }

  SECTION("length mismatch is an error") {
    std::vector<std::vector<double>> raw{std::vector<double>(37, 1.0)};
    CHECK_THROWS_AS(phase_correct_and_group(raw, layout, 0.0, 1.0, 1.0),
                    std::invalid_argument);
  }
}
