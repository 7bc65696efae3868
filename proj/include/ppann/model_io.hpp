#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ppann/pann.hpp"
#include "ppann/text_io.hpp"

namespace ppann {

inline constexpr std::string_view kModelMagic = "pann-model v1";

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> parse_ints(std::string_view s) {
  std::vector<int> out;
  for (auto tok : split(s, ' '))
    if (!tok.empty()) out.push_back(static_cast<int>(parse_int(tok)));
  return out;
}

}  // namespace detail

/// Text container: header lines "key value", optional "meta key value" lines,
/// then "params N" followed by N values in canonical order, then "end".
inline std::string serialize_model(const PannModel& m) {
  const auto& c = m.net.config();
  std::ostringstream os;
  os << kModelMagic << "\n";
  os << "kind " << to_string(c.kind) << "\n";
  os << "x_dim " << c.x_dim << "\n";
  os << "y_dim " << c.y_dim << "\n";
  os << "x_widths " << detail::join_ints(c.x_widths) << "\n";
  os << "y_widths " << detail::join_ints(c.y_widths) << "\n";
  os << "normalisation " << (m.normalisation ? 1 : 0) << "\n";
  os << "growth " << (m.growth ? 1 : 0) << "\n";
  os << "stress_scale " << format_double(m.stress_scale) << "\n";
  for (const auto& [k, v] : m.metadata) {
    if (k.empty() || k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw IoError("model metadata keys must be single words and values single lines");
    os << "meta " << k << " " << v << "\n";
  }
  const auto& theta = m.net.params().values;
  os << "params " << theta.size() << "\n";
  for (double v : theta) os << format_double(v) << "\n";
  os << "end\n";
  return os.str();
}

inline PannModel deserialize_model(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto l : split(text, '\n')) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back(l);
  }
  std::size_t i = 0;
  auto next = [&]() -> std::string_view {
    if (i >= lines.size()) throw IoError("model file truncated");
    return lines[i++];
  };
  auto field = [&](std::string_view key) -> std::string_view {
    const std::string_view l = next();
    if (l.substr(0, key.size()) != key || l.size() <= key.size() || l[key.size()] != ' ')
      throw IoError("model file: expected '" + std::string(key) + "', got '" + std::string(l) + "'");
    return l.substr(key.size() + 1);
  };

  if (next() != kModelMagic) throw IoError("model file: unknown format or version");
  PicnnConfig c;
  try {
    c.kind = parse_architecture(field("kind"));
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
  c.x_dim = static_cast<int>(parse_int(field("x_dim")));
  c.y_dim = static_cast<int>(parse_int(field("y_dim")));
  c.x_widths = detail::parse_ints(field("x_widths"));
  c.y_widths = detail::parse_ints(field("y_widths"));
  const bool normalisation = parse_int(field("normalisation")) != 0;
  const bool growth = parse_int(field("growth")) != 0;
  const double scale = parse_double(field("stress_scale"));
  if (!(scale > 0.0)) throw IoError("model file: stress_scale must be positive");

  std::map<std::string, std::string> meta;
  std::string_view l = next();
  while (l.substr(0, 5) == "meta ") {
    const std::string_view rest = l.substr(5);
    const std::size_t sp = rest.find(' ');
    if (sp == std::string_view::npos) throw IoError("model file: malformed meta line");
    meta.emplace(std::string(rest.substr(0, sp)), std::string(rest.substr(sp + 1)));
    l = next();
  }
  if (l.substr(0, 7) != "params ") throw IoError("model file: expected 'params'");
  const long long n = parse_int(l.substr(7));

  PicnnLayout layout;
  try {
    layout = PicnnLayout(c);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("model file: ") + e.what());
  }
  if (n < 0 || static_cast<std::size_t>(n) != layout.size())
    throw IoError("model file: parameter count does not match the architecture");
  PicnnParams p = zero_params(layout);
  for (long long k = 0; k < n; ++k) p.values[static_cast<std::size_t>(k)] = parse_double(next());
  if (next() != "end") throw IoError("model file: missing 'end'");

  PannModel m(Picnn(c, std::move(p)), scale);
  m.normalisation = normalisation;
  m.growth = growth;
  m.metadata = std::move(meta);
  return m;
}

inline void save_model(const PannModel& m, const std::string& path) { write_file(path, serialize_model(m)); }
inline PannModel load_model(const std::string& path) { return deserialize_model(read_file(path)); }

}  // namespace ppann
