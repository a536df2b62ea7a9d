#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "qdyne/sequence.hpp"
#include "qdyne/units.hpp"

// Line-oriented text form of a Sequence.  One statement per line,
// `key=value` arguments with unit suffixes, `repeat N { ... }` blocks and
// `#` comments.  Files use UTF-8, LF newlines and the `.seq` extension.
namespace qdyne {

namespace seqtext_detail {

struct Token {
  std::string_view text;
  int column;  // 1-based
};

inline std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])) &&
           line[j] != '#')
      ++j;
    out.push_back({line.substr(i, j - i), static_cast<int>(i) + 1});
    i = j;
  }
  return out;
}

struct Arg {
  std::string_view key;  // empty for a positional argument
  std::string_view value;
  int column;
};

inline Arg split_arg(const Token& tok) {
  auto eq = tok.text.find('=');
  if (eq == std::string_view::npos) return {{}, tok.text, tok.column};
  return {tok.text.substr(0, eq), tok.text.substr(eq + 1), tok.column};
}

class ArgReader {
 public:
  ArgReader(const std::vector<Token>& toks, size_t first, int line)
      : line_(line) {
    for (size_t i = first; i < toks.size(); ++i) args_.push_back(split_arg(toks[i]));
  }

  // Named argument; `positional` admits the bare-value shorthand for the
  // statement's single natural argument (e.g. `wait 10us`).
  double get(std::string_view key, units::Dimension dim, double fallback,
             bool required = false, bool positional = false) {
    for (auto& a : args_) {
      const bool match = a.key == key || (positional && a.key.empty());
      if (match && !a.used) {
        a.used = true;
        return units::parse_value(a.value, dim, line_, a.column);
      }
    }
    if (required)
      throw ParseError("missing argument '" + std::string(key) + "'", line_, 1);
    return fallback;
  }

  void finish(std::string_view stmt) const {
    for (const auto& a : args_)
      if (!a.used)
        throw ParseError("unexpected argument '" + std::string(a.key.empty() ? a.value : a.key) +
                             "' for '" + std::string(stmt) + "'",
                         line_, a.column);
  }

 private:
  struct OwnedArg : Arg {
    bool used = false;
    OwnedArg(const Arg& a) : Arg(a) {}
  };
  std::vector<OwnedArg> args_;
  int line_;
};

inline SequenceElement parse_statement(const std::vector<Token>& toks, int line) {
  using units::Dimension;
  const std::string_view kw = toks[0].text;
  ArgReader args(toks, 1, line);
  SequenceElement out;
  if (kw == "rf") {
    NuclearPulse p;
    p.angle = args.get("angle", Dimension::angle, 0.0, /*required=*/true);
    p.phase = args.get("phase", Dimension::angle, 0.0);
    p.rabi = args.get("rabi", Dimension::angular_frequency, 0.0, true);
    p.detuning = args.get("detuning", Dimension::angular_frequency, 0.0);
    p.amp_error = args.get("amp_error", Dimension::none, 0.0);
    out = p;
  } else if (kw == "mw") {
    SensorPulse p;
    p.angle = args.get("angle", Dimension::angle, 0.0, true);
    p.phase = args.get("phase", Dimension::angle, 0.0);
    out = p;
  } else if (kw == "wait") {
    FreeEvolution w;
    w.duration = args.get("duration", Dimension::time, 0.0, true, /*positional=*/true);
    out = w;
  } else if (kw == "interact") {
    Interaction it;
    it.duration = args.get("tau", Dimension::time, 0.0, true);
    it.a_zz = args.get("azz", Dimension::frequency, 0.0, true);
    out = it;
  } else if (kw == "readout") {
    OpticalReadout r;
    r.contrast = args.get("contrast", Dimension::none, r.contrast);
    r.mean_counts = args.get("counts", Dimension::none, r.mean_counts);
    r.init_fidelity = args.get("fidelity", Dimension::none, r.init_fidelity);
    out = r;
  } else if (kw == "polarize") {
    Polarize p;
    p.polarization = args.get("p", Dimension::none, p.polarization, false, true);
    out = p;
  } else if (kw == "phasestep") {
    PhaseStep p;
    p.phi = args.get("phi", Dimension::angle, 0.0, true, /*positional=*/true);
    out = p;
  } else {
    throw ParseError("unknown statement '" + std::string(kw) + "'", line,
                     toks[0].column);
  }
  args.finish(kw);
  return out;
}

}  // namespace seqtext_detail

inline Sequence parse_sequence(std::string_view text) {
  using namespace seqtext_detail;
  Sequence seq;
  std::vector<std::vector<SequenceItem>*> stack{&seq.items};
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks[0].text == "repeat") {
      if (toks.size() != 3 || toks[2].text != "{")
        throw ParseError("expected 'repeat <count> {'", line_no, toks[0].column);
      int count = 0;
      auto [p, ec] = std::from_chars(toks[1].text.data(),
                                     toks[1].text.data() + toks[1].text.size(), count);
      if (ec != std::errc() || p != toks[1].text.data() + toks[1].text.size())
        throw ParseError("bad repeat count '" + std::string(toks[1].text) + "'",
                         line_no, toks[1].column);
      if (count < 1) throw ParseError("repeat count must be >= 1", line_no, toks[1].column);
      if (stack.size() >= 3)
        throw ParseError("repeat nesting deeper than 2", line_no, toks[0].column);
      stack.back()->push_back({RepeatBlock{count, {}}});
      auto& rb = std::get<RepeatBlock>(stack.back()->back().node);
      stack.push_back(&rb.body);
      continue;
    }
    if (toks[0].text == "}") {
      if (toks.size() != 1)
        throw ParseError("unexpected tokens after '}'", line_no, toks[1].column);
      if (stack.size() == 1)
        throw ParseError("unmatched '}'", line_no, toks[0].column);
      stack.pop_back();
      continue;
    }
    stack.back()->push_back({parse_statement(toks, line_no)});
  }
  if (stack.size() != 1) throw ParseError("unterminated repeat block", line_no, 1);
  validate(seq);
  return seq;
}

namespace seqtext_detail {

inline std::string format_element(const SequenceElement& e) {
  using units::Dimension;
  using units::format_value;
  return std::visit(
      [](const auto& el) -> std::string {
        using T = std::decay_t<decltype(el)>;
        if constexpr (std::is_same_v<T, NuclearPulse>) {
          std::string s = "rf angle=" + format_value(el.angle, Dimension::angle) +
                          " phase=" + format_value(el.phase, Dimension::angle) +
                          " rabi=" + format_value(el.rabi, Dimension::angular_frequency);
          if (el.detuning != 0.0)
            s += " detuning=" + format_value(el.detuning, Dimension::angular_frequency);
          if (el.amp_error != 0.0)
            s += " amp_error=" + format_value(el.amp_error, Dimension::none);
          return s;
        } else if constexpr (std::is_same_v<T, SensorPulse>) {
          return "mw angle=" + format_value(el.angle, Dimension::angle) +
                 " phase=" + format_value(el.phase, Dimension::angle);
        } else if constexpr (std::is_same_v<T, FreeEvolution>) {
          return "wait " + format_value(el.duration, Dimension::time);
        } else if constexpr (std::is_same_v<T, Interaction>) {
          return "interact tau=" + format_value(el.duration, Dimension::time) +
                 " azz=" + format_value(el.a_zz, Dimension::frequency);
        } else if constexpr (std::is_same_v<T, OpticalReadout>) {
          return "readout contrast=" + format_value(el.contrast, Dimension::none) +
                 " counts=" + format_value(el.mean_counts, Dimension::none) +
                 " fidelity=" + format_value(el.init_fidelity, Dimension::none);
        } else if constexpr (std::is_same_v<T, Polarize>) {
          return "polarize p=" + format_value(el.polarization, Dimension::none);
        } else {
          return "phasestep " + format_value(el.phi, Dimension::angle);
        }
      },
      e);
}

inline void serialize_items(const std::vector<SequenceItem>& items, int indent,
                            std::string& out) {
  const std::string pad(2 * indent, ' ');
  for (const auto& item : items) {
    if (auto* el = std::get_if<SequenceElement>(&item.node)) {
      out += pad + format_element(*el) + "\n";
    } else {
      const auto& rb = std::get<RepeatBlock>(item.node);
      out += pad + "repeat " + std::to_string(rb.count) + " {\n";
      serialize_items(rb.body, indent + 1, out);
      out += pad + "}\n";
    }
  }
}

}  // namespace seqtext_detail

// Canonical form; parse_sequence(serialize_sequence(s)) == s bit-exactly.
inline std::string serialize_sequence(const Sequence& seq) {
  std::string out;
  seqtext_detail::serialize_items(seq.items, 0, out);
  return out;
}

}  // namespace qdyne
