// qdyne command line: simulate pulse programs, sweep detunings, analyze
// traces, evaluate sensitivity budgets, and run the raw-photon pipeline.
//
// Exit codes: 0 ok, 2 bad input, 3 physics/fit failure, 4 empty result.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "qdyne/qdyne.hpp"

namespace {

using namespace qdyne;

struct RangeSpec {
  std::vector<double> values;  // Hz
};

RangeSpec parse_range(const std::string& spec) {
  const auto c1 = spec.find(':');
  const auto c2 = spec.find(':', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw ParseError("range must be start:stop:step");
  using units::Dimension;
  const double start = units::parse_value(spec.substr(0, c1), Dimension::frequency);
  const double stop = units::parse_value(spec.substr(c1 + 1, c2 - c1 - 1), Dimension::frequency);
  const double step = units::parse_value(spec.substr(c2 + 1), Dimension::frequency);
  if (step <= 0.0) throw ParseError("range step must be > 0");
  if (stop < start) throw ParseError("range stop must be >= start");
  RangeSpec out;
  for (double v = start; v <= stop + 0.5 * step; v += step) out.values.push_back(v);
  if (out.values.empty()) throw EmptyResultError("empty range");
  return out;
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-")
    std::fwrite(content.data(), 1, content.size(), stdout);
  else
    io::write_file(out_path, content);
}

// gamma_eff implied by a template: leading free-evolution fraction of the
// sampling interval.
double template_gamma_eff(const Sequence& seq) {
  double tau1 = 0.0;
  for (const auto& item : seq.items) {
    if (auto* rb = std::get_if<RepeatBlock>(&item.node)) {
      for (const auto& inner : rb->body)
        if (auto* el = std::get_if<SequenceElement>(&inner.node))
          if (auto* w = std::get_if<FreeEvolution>(el)) {
            tau1 = w->duration;
            break;
          }
      break;
    }
  }
  const SequenceTiming tm = timing(seq);
  return tm.sampling_interval > 0.0 ? tau1 / tm.sampling_interval : 0.0;
}

int run(int argc, char** argv) {
  CLI::App app{"pulse-level heterodyne nuclear-spin sensing toolkit"};
  app.require_subcommand(1);

  std::string out_path = "-";
  std::string format = "csv";
  std::uint64_t seed = 12345;
  app.add_option("--out", out_path, "output path ('-' for stdout)")->capture_default_str();
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a .seq pulse program");
  std::string seq_path;
  std::string noise = "off";
  int shots = 1;
  double t2star = 0.0, t1 = 0.0;
  sim->add_option("sequence", seq_path, "path to a .seq file")->required();
  sim->add_option("--noise", noise, "on: Poisson photon counts")->check(CLI::IsMember({"on", "off"}));
  sim->add_option("--shots", shots, "shots averaged per readout");
  sim->add_option("--t2star", t2star, "sensor T2* contrast envelope, seconds");
  sim->add_option("--t1", t1, "sensor T1 contrast envelope, seconds");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "spectra over a detuning grid");
  std::string sweep_seq, range_spec;
  double epsilon = 0.0, rabi_hz = 0.0;
  int pad = 8;
  sweep->add_option("sequence", sweep_seq, "template .seq file")->required();
  sweep->add_option("--range", range_spec, "detuning grid start:stop:step, Hz units")->required();
  sweep->add_option("--epsilon", epsilon, "rf amplitude error");
  sweep->add_option("--rabi", rabi_hz, "override nuclear rabi frequency, Hz");
  sweep->add_option("--pad", pad, "FFT zero-padding factor");

  // spectrum
  auto* spect = app.add_subcommand("spectrum", "amplitude spectrum of a trace");
  std::string trace_path;
  int spad = 8;
  spect->add_option("trace", trace_path, "trace file (csv or json)")->required();
  spect->add_option("--pad", spad, "FFT zero-padding factor");

  // fit
  auto* fit = app.add_subcommand("fit", "decaying-sinusoid fit of a trace");
  std::string fit_path;
  fit->add_option("trace", fit_path, "trace file (csv or json)")->required();

  // crlb
  auto* crlb = app.add_subcommand("crlb", "frequency-estimation bounds");
  double a_over_rho = 1.0, c_t2star = 1.0, c_dt = 1.0, tmax = 0.0;
  int points = 50;
  crlb->add_option("--a-over-rho", a_over_rho, "signal amplitude over noise PSD")->required();
  crlb->add_option("--t2star", c_t2star, "decay time, seconds")->required();
  crlb->add_option("--dt", c_dt, "sampling interval, seconds");
  crlb->add_option("--tmax", tmax, "emit var(nu) curve up to this T");
  crlb->add_option("--points", points, "curve resolution");

  // sensitivity
  auto* sens = app.add_subcommand("sensitivity", "evaluate a scenario file");
  std::string scen_path;
  double signal_amp = 0.0;
  sens->add_option("scenario", scen_path, "scenario key=value file")->required();
  sens->add_option("--signal-amp", signal_amp, "signal amplitude, tesla");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "phase-correct raw photon blocks");
  std::string raw_path;
  int n_angles = 5, samples_per_angle = 60, mag_samples = 150;
  double center_deg = 90.0, halfwidth_deg = 30.0, pipe_dt = 105.5506e-6;
  bool sweep_centers = false;
  pipe->add_option("counts", raw_path, "csv: one readout block per row")->required();
  pipe->add_option("--angles", n_angles, "angle blocks per record");
  pipe->add_option("--samples", samples_per_angle, "samples per angle block");
  pipe->add_option("--mag", mag_samples, "magnetometer samples per record");
  pipe->add_option("--center", center_deg, "window center, degrees");
  pipe->add_option("--halfwidth", halfwidth_deg, "window half width, degrees");
  pipe->add_option("--dt", pipe_dt, "sampling interval of the qdyne samples, seconds");
  pipe->add_flag("--sweep-centers", sweep_centers, "emit amplitude vs window center");

  CLI11_PARSE(app, argc, argv);

  SimConfig cfg;
  cfg.rng_seed = seed;

  if (*sim) {
    Sequence seq = parse_sequence(io::read_file(seq_path));
    const SequenceTiming tm = timing(seq);
    if (seq.items.empty() || tm.readout_count == 0)
      throw ParseError("sequence has nothing to read out");
    cfg.shot_noise = noise == "on";
    cfg.shots_per_readout = shots;
    cfg.sensor_t2star = t2star;
    cfg.sensor_t1 = t1;
    TimeTrace trace = run_sequence(seq, cfg);
    io::TraceMeta meta{seed, shots, cfg.shot_noise};
    emit(out_path, format == "json" ? io::trace_to_json(trace, meta).dump(2) + "\n"
                                    : io::trace_to_csv(trace, meta));
    return 0;
  }

  if (*sweep) {
    Sequence seq = parse_sequence(io::read_file(sweep_seq));
    RangeSpec grid = parse_range(range_spec);
    std::vector<double> detunings;
    for (double hz : grid.values) detunings.push_back(constants::two_pi * hz);
    auto traces = sweep_detuning(seq, detunings, epsilon,
                                 constants::two_pi * rabi_hz, cfg);
    const double gamma_eff = template_gamma_eff(seq);
    std::string matrix, peaks;
    peaks = "delta_hz,peak_hz,gamma_line_hz\n";
    for (size_t i = 0; i < traces.size(); ++i) {
      Spectrum spec = fft_amplitude_spectrum(traces[i].second, pad);
      if (i == 0) {
        matrix = "delta_hz";
        for (double f : spec.freqs) matrix += "," + io::format_double(f);
        matrix += "\n";
      }
      matrix += io::format_double(grid.values[i]);
      for (double a : spec.amps) matrix += "," + io::format_double(a);
      matrix += "\n";
      const double min_freq = spec.freqs.size() > 1 ? spec.freqs[1] * 0.5 : 0.0;
      SpectralPeak pk = find_peak(spec, min_freq);
      peaks += io::format_double(grid.values[i]) + "," + io::format_double(pk.frequency) +
               "," + io::format_double(gamma_eff * grid.values[i]) + "\n";
    }
    emit(out_path, matrix);
    if (!out_path.empty() && out_path != "-")
      io::write_file(out_path + ".peaks.csv", peaks);
    return 0;
  }

  if (*spect) {
    TimeTrace trace = io::read_trace(trace_path);
    Spectrum spec = fft_amplitude_spectrum(trace, spad);
    emit(out_path, io::spectrum_to_csv(spec));
    return 0;
  }

  if (*fit) {
    TimeTrace trace = io::read_trace(fit_path);
    SinusoidFit f = fit_decaying_sinusoid(trace);
    emit(out_path, io::fit_to_json(f).dump(2) + "\n");
    return 0;
  }

  if (*crlb) {
    if (tmax > 0.0) {
      std::string csv = "total_time_s,var_nu_hz2,sigma_nu_hz\n";
      for (int i = 1; i <= points; ++i) {
        const double t = tmax * static_cast<double>(i) / points;
        if (t < 2.0 * c_dt) continue;
        const double v = crlb_variance(a_over_rho, t, c_dt, c_t2star);
        csv += io::format_double(t) + "," + io::format_double(v) + "," +
               io::format_double(std::sqrt(v)) + "\n";
      }
      emit(out_path, csv);
    } else {
      nlohmann::json j;
      j["sigma_nu_hz"] = crlb_sigma(a_over_rho, c_t2star);
      j["variance_bound_hz2"] = crlb_sigma(a_over_rho, c_t2star) *
                                crlb_sigma(a_over_rho, c_t2star);
      emit(out_path, j.dump(2) + "\n");
    }
    return 0;
  }

  if (*sens) {
    SensitivityScenario sc = io::scenario_from_text(io::read_file(scen_path));
    SensitivityResult r = evaluate_scenario(sc, signal_amp);
    if (format == "csv") {
      std::string csv = "label,dt_opt_s,overhead_factor,eta_eff\n";
      csv += sc.label + "," + io::format_double(r.dt_opt) + "," +
             io::format_double(r.overhead_factor) + "," + io::format_double(r.eta_eff) + "\n";
      emit(out_path, csv);
    } else {
      emit(out_path, io::sensitivity_to_json(sc, r).dump(2) + "\n");
    }
    return 0;
  }

  if (*pipe) {
    PhotonBlockLayout layout{n_angles, samples_per_angle, mag_samples};
    std::vector<std::vector<double>> raw;
    {
      const std::string text = io::read_file(raw_path);
      std::istringstream in(text);
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != layout.total())
          throw ParseError("row length " + std::to_string(row.size()) +
                               " does not match layout total " +
                               std::to_string(layout.total()),
                           line_no, 1);
        raw.push_back(std::move(row));
      }
    }
    if (raw.empty()) throw ParseError("no records in '" + raw_path + "'");
    const double deg = constants::pi / 180.0;

    auto block_amplitude = [&](const PipelineResult& res) {
      double acc = 0.0;
      for (const auto& block : res.block_average) {
        TimeTrace t{block, pipe_dt, TraceKind::photon_counts};
        double mean = 0.0;
        for (double v : t.values) mean += v;
        mean /= static_cast<double>(t.values.size());
        for (double& v : t.values) v -= mean;
        Spectrum spec = fft_amplitude_spectrum(t, 8);
        acc += find_peak(spec, spec.freqs[1] * 0.5).amplitude;
      }
      return acc / static_cast<double>(res.block_average.size());
    };

    if (sweep_centers) {
      std::string csv = "center_deg,amplitude,accepted_fraction\n";
      for (int cdeg = -180; cdeg <= 180; cdeg += 10) {
        try {
          PipelineResult res = phase_correct_and_group(
              raw, layout, cdeg * deg, halfwidth_deg * deg, pipe_dt);
          csv += std::to_string(cdeg) + "," + io::format_double(block_amplitude(res)) +
                 "," + io::format_double(static_cast<double>(res.kept) / res.total) + "\n";
        } catch (const EmptyResultError&) {
          csv += std::to_string(cdeg) + ",0,0\n";
        }
      }
      emit(out_path, csv);
      return 0;
    }

    PipelineResult res = phase_correct_and_group(raw, layout, center_deg * deg,
                                                 halfwidth_deg * deg, pipe_dt);
    std::string csv = "# accepted " + std::to_string(res.kept) + " of " +
                      std::to_string(res.total) + "\n";
    csv += "block,index,time_s,value\n";
    for (size_t b = 0; b < res.block_average.size(); ++b)
      for (size_t i = 0; i < res.block_average[b].size(); ++i)
        csv += std::to_string(b) + "," + std::to_string(i) + "," +
               io::format_double(i * pipe_dt) + "," +
               io::format_double(res.block_average[b][i]) + "\n";
    emit(out_path, csv);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const qdyne::EmptyResultError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const qdyne::PhysicsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const qdyne::FitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const qdyne::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
