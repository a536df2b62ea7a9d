#pragma once

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "qdyne/analysis.hpp"
#include "qdyne/errors.hpp"
#include "qdyne/sensitivity.hpp"
#include "qdyne/simulator.hpp"
#include "qdyne/units.hpp"

// File formats: traces and spectra as CSV (LF, '.' decimal, header row,
// `# key value` metadata lines) or JSON; fits and sensitivity results as
// JSON.  Scenario files are flat key=value text.
namespace qdyne::io {

inline const char* kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::expectation_Iz: return "expectation_Iz";
    case TraceKind::expectation_Sz: return "expectation_Sz";
    case TraceKind::photon_counts: return "photon_counts";
  }
  return "unknown";
}

inline TraceKind kind_from_name(const std::string& s) {
  if (s == "expectation_Iz") return TraceKind::expectation_Iz;
  if (s == "expectation_Sz") return TraceKind::expectation_Sz;
  if (s == "photon_counts") return TraceKind::photon_counts;
  throw ParseError("unknown trace kind '" + s + "'");
}

inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    double back;
    auto [p, ec] = std::from_chars(buf, buf + std::strlen(buf), back);
    if (ec == std::errc() && p == buf + std::strlen(buf) && back == v) break;
  }
  return buf;
}

struct TraceMeta {
  std::uint64_t seed = 0;
  int shots = 1;
  bool noise = false;
};

inline std::string trace_to_csv(const TimeTrace& trace, const TraceMeta& meta) {
  std::string out;
  out += "# qdyne-trace v1\n";
  out += "# kind " + std::string(kind_name(trace.kind)) + "\n";
  out += "# dt_s " + format_double(trace.dt) + "\n";
  out += "# seed " + std::to_string(meta.seed) + "\n";
  out += "# shots " + std::to_string(meta.shots) + "\n";
  out += "# noise " + std::string(meta.noise ? "on" : "off") + "\n";
  out += "index,time_s,value\n";
  for (size_t i = 0; i < trace.values.size(); ++i) {
    out += std::to_string(i) + "," + format_double(static_cast<double>(i) * trace.dt) +
           "," + format_double(trace.values[i]) + "\n";
  }
  return out;
}

inline nlohmann::json trace_to_json(const TimeTrace& trace, const TraceMeta& meta) {
  nlohmann::json j;
  j["kind"] = kind_name(trace.kind);
  j["dt_s"] = trace.dt;
  j["seed"] = meta.seed;
  j["shots"] = meta.shots;
  j["noise"] = meta.noise;
  j["values"] = trace.values;
  return j;
}

inline TimeTrace trace_from_csv(const std::string& text) {
  TimeTrace out;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key, value;
      meta >> key >> value;
      if (key == "kind") out.kind = kind_from_name(value);
      if (key == "dt_s") out.dt = std::stod(value);
      continue;
    }
    if (!header_seen) {
      header_seen = true;  // column header row
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ParseError("bad trace row", line_no, 1);
    out.values.push_back(std::stod(line.substr(c2 + 1)));
  }
  return out;
}

inline TimeTrace trace_from_json(const nlohmann::json& j) {
  TimeTrace out;
  out.kind = kind_from_name(j.at("kind").get<std::string>());
  out.dt = j.at("dt_s").get<double>();
  out.values = j.at("values").get<std::vector<double>>();
  return out;
}

// Reads either format, sniffing JSON by the first non-space byte.
inline TimeTrace read_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    return trace_from_json(nlohmann::json::parse(text));
  return trace_from_csv(text);
}

inline std::string spectrum_to_csv(const Spectrum& spec) {
  std::string out;
  out += "# qdyne-spectrum v1\n";
  out += "# dt_s " + format_double(spec.dt) + "\n";
  out += "frequency_hz,amplitude\n";
  for (size_t i = 0; i < spec.freqs.size(); ++i)
    out += format_double(spec.freqs[i]) + "," + format_double(spec.amps[i]) + "\n";
  return out;
}

inline nlohmann::json fit_to_json(const SinusoidFit& fit) {
  nlohmann::json j;
  j["amplitude"] = fit.amplitude;
  j["frequency_hz"] = fit.frequency;
  j["phase_rad"] = fit.phase;
  j["decay_rate_hz"] = fit.decay_rate;
  j["offset"] = fit.offset;
  j["stddev"] = {{"amplitude", fit.param_stddevs[0]},
                 {"frequency_hz", fit.param_stddevs[1]},
                 {"phase_rad", fit.param_stddevs[2]},
                 {"decay_rate_hz", fit.param_stddevs[3]},
                 {"offset", fit.param_stddevs[4]}};
  j["residual_rms"] = fit.residual_rms;
  j["iterations"] = fit.iterations;
  return j;
}

// Flat key=value scenario file; times accept the DSL time units, rates Hz
// units, everything else is plain SI.
inline SensitivityScenario scenario_from_text(const std::string& text) {
  SensitivityScenario sc;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ParseError("expected key=value", line_no, 1);
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    using units::Dimension;
    if (key == "label") sc.label = value;
    else if (key == "b0") sc.b0 = units::parse_value(value, Dimension::none, line_no);
    else if (key == "eta_nv") sc.eta_nv = units::parse_value(value, Dimension::none, line_no);
    else if (key == "t_sensing") sc.t_sensing = units::parse_value(value, Dimension::time, line_no);
    else if (key == "t_rf") sc.t_rf = units::parse_value(value, Dimension::time, line_no);
    else if (key == "nuclear_rabi") sc.nuclear_rabi = units::parse_value(value, Dimension::frequency, line_no);
    else if (key == "t2star_nuclear") sc.t2star_nuclear = units::parse_value(value, Dimension::time, line_no);
    else throw ParseError("unknown scenario key '" + key + "'", line_no, 1);
  }
  if (sc.t_rf <= 0.0 && sc.nuclear_rabi > 0.0) sc.t_rf = 1.0 / sc.nuclear_rabi;
  if (sc.b0 <= 0.0 || sc.eta_nv <= 0.0 || sc.t_sensing <= 0.0 || sc.t_rf <= 0.0 ||
      sc.t2star_nuclear <= 0.0)
    throw ParseError("scenario is missing required positive fields");
  return sc;
}

inline nlohmann::json sensitivity_to_json(const SensitivityScenario& sc,
                                          const SensitivityResult& r) {
  nlohmann::json j;
  j["label"] = sc.label;
  j["dt_opt_s"] = r.dt_opt;
  j["overhead_factor"] = r.overhead_factor;
  j["eta_eff"] = r.eta_eff;
  if (r.rel_freq_uncertainty > 0.0)
    j["rel_freq_uncertainty"] = r.rel_freq_uncertainty;
  return j;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
}

}  // namespace qdyne::io
