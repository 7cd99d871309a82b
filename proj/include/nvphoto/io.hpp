#pragma once

// Files: profile JSON, trace CSV + sidecar, atomic writes.

#include "nvphoto/profiles.hpp"
#include "nvphoto/pulsesim.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace nvphoto {

using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace io {

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Writes through a temporary in the same directory and renames over the target.
inline void write_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorKind::config, origin + ": " + e.what());
  }
}

inline Json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

/// 64-bit FNV-1a, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// %.17g keeps doubles exact through a text round trip.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io

// ---------------------------------------------------------------------------
// JSON field access with config errors instead of library exceptions

namespace detail {

template <class T>
T get(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::config, where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    fail(ErrorKind::config, where + ": '" + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, where);
}

inline AgingChannel parse_channel(const std::string& s) {
  if (s == "uv") return AgingChannel::uv;
  if (s == "blue") return AgingChannel::blue;
  fail(ErrorKind::config, "unknown aging channel '" + s + "' (expected uv or blue)");
}

}  // namespace detail

inline Json to_json(const CrossSections& cs) {
  return {{"a1", cs.a1}, {"a2_0", cs.a2_0}, {"a2_1", cs.a2_1}, {"b1", cs.b1}, {"b2", cs.b2}, {"s1", cs.s1}};
}

inline CrossSections cross_sections_from_json(const Json& j, const std::string& where) {
  CrossSections cs;
  cs.a1 = detail::get_or(j, "a1", 0.0, where);
  cs.a2_0 = detail::get_or(j, "a2_0", 0.0, where);
  cs.a2_1 = detail::get_or(j, "a2_1", 0.0, where);
  cs.b1 = detail::get_or(j, "b1", 0.0, where);
  cs.b2 = detail::get_or(j, "b2", 0.0, where);
  cs.s1 = detail::get_or(j, "s1", 0.0, where);
  return cs;
}

inline Json to_json(const AgingLaw& law) {
  return {{"k0", law.k0},
          {"k_inf", law.k_inf},
          {"e_c", law.e_c},
          {"rho0", law.rho0},
          {"rho_inf", law.rho_inf},
          {"rho_power", law.rho_power},
          {"slow_weight_inf", law.slow_weight_inf},
          {"k_r_slow", law.k_r_slow},
          {"blue_pulse_fraction", law.blue_pulse_fraction}};
}

inline AgingLaw aging_law_from_json(const Json& j, const std::string& where) {
  AgingLaw law;
  law.k0 = detail::get<double>(j, "k0", where);
  law.k_inf = detail::get<double>(j, "k_inf", where);
  law.e_c = detail::get<double>(j, "e_c", where);
  law.rho0 = detail::get_or(j, "rho0", law.rho0, where);
  law.rho_inf = detail::get_or(j, "rho_inf", law.rho_inf, where);
  law.rho_power = detail::get_or(j, "rho_power", law.rho_power, where);
  law.slow_weight_inf = detail::get_or(j, "slow_weight_inf", law.slow_weight_inf, where);
  law.k_r_slow = detail::get_or(j, "k_r_slow", law.k_r_slow, where);
  law.blue_pulse_fraction = detail::get_or(j, "blue_pulse_fraction", law.blue_pulse_fraction, where);
  try {
    validate(law);
  } catch (const Error& e) {
    fail(ErrorKind::config, where + ": " + e.what());
  }
  return law;
}

inline Json to_json(const ReadoutParams& r) {
  return {{"eps0", r.eps0},
          {"eps1", r.eps1},
          {"integration_ns", r.integration_ns},
          {"shelving_delay_ns", r.shelving_delay_ns},
          {"shots", r.shots}};
}

inline ReadoutParams readout_from_json(const Json& j, const std::string& where) {
  ReadoutParams r;
  r.eps0 = detail::get_or(j, "eps0", r.eps0, where);
  r.eps1 = detail::get_or(j, "eps1", r.eps1, where);
  r.integration_ns = detail::get_or(j, "integration_ns", r.integration_ns, where);
  r.shelving_delay_ns = detail::get_or(j, "shelving_delay_ns", r.shelving_delay_ns, where);
  r.shots = detail::get_or<std::uint64_t>(j, "shots", r.shots, where);
  return r;
}

/// The aged cache is not stored; it is rebuilt on load.
inline Json to_json(const NvProfile& p) {
  Json cal = Json::object();
  for (const auto& [nm, cs] : p.calibrations) cal[std::to_string(nm)] = to_json(cs);
  Json laws = Json::object();
  for (const auto& [ch, law] : p.aging_laws) laws[to_string(ch)] = to_json(law);
  return {{"name", p.name},
          {"green_power", p.green_power},
          {"orange_probe_power", p.orange_probe_power},
          {"readout", to_json(p.readout)},
          {"calibrations", cal},
          {"aging_laws", laws},
          {"aging", {{"dose_uv", p.aging.dose_uv}, {"dose_blue", p.aging.dose_blue}}}};
}

inline NvProfile profile_from_json(const Json& j, const std::string& where) {
  NvProfile p;
  p.name = detail::get_or<std::string>(j, "name", "", where);
  p.green_power = detail::get_or(j, "green_power", p.green_power, where);
  p.orange_probe_power = detail::get_or(j, "orange_probe_power", p.orange_probe_power, where);
  if (j.contains("readout")) p.readout = readout_from_json(j.at("readout"), where + ".readout");
  const Json& cal = j.contains("calibrations") ? j.at("calibrations") : Json::object();
  if (!cal.is_object() || cal.empty()) fail(ErrorKind::config, where + ": 'calibrations' must be a non-empty object");
  for (const auto& [key, value] : cal.items()) {
    int nm = 0;
    try {
      std::size_t used = 0;
      nm = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail(ErrorKind::config, where + ": calibration key '" + key + "' is not a wavelength in nm");
    }
    const std::string w = where + ".calibrations." + key;
    CrossSections cs = cross_sections_from_json(value, w);
    try {
      validate(classify_region(nm), cs);
    } catch (const Error& e) {
      fail(e.kind() == ErrorKind::unsupported_wavelength ? e.kind() : ErrorKind::config, w + ": " + e.what());
    }
    p.calibrations[nm] = cs;
  }
  if (j.contains("aging_laws"))
    for (const auto& [key, value] : j.at("aging_laws").items())
      p.aging_laws[detail::parse_channel(key)] = aging_law_from_json(value, where + ".aging_laws." + key);
  if (j.contains("aging")) {
    const Json& a = j.at("aging");
    p.aging.dose_uv = detail::get_or(a, "dose_uv", 0.0, where + ".aging");
    p.aging.dose_blue = detail::get_or(a, "dose_blue", 0.0, where + ".aging");
    if (p.aging.dose_uv < 0.0 || p.aging.dose_blue < 0.0) fail(ErrorKind::config, where + ".aging: doses must be >= 0");
  }
  if (!p.aging.pristine()) p = aged_parameters(p, p.aging);
  return p;
}

inline NvProfile load_profile(const fs::path& path) { return profile_from_json(io::read_json(path), path.string()); }

/// Profile reference: "builtin:NAME" or a path, relative paths resolved against `base`.
inline NvProfile resolve_profile(const std::string& ref, const fs::path& base = {}) {
  const std::string prefix = "builtin:";
  if (ref.rfind(prefix, 0) == 0) return builtin_profile(ref.substr(prefix.size()));
  fs::path p(ref);
  if (p.is_relative() && !base.empty()) p = base / p;
  if (!fs::exists(p)) fail(ErrorKind::io, "profile file '" + p.string() + "' not found");
  return load_profile(p);
}

/// Hash of the canonical profile JSON.
inline std::string profile_hash(const NvProfile& p) { return io::fnv1a_hex(to_json(p).dump()); }

// ---------------------------------------------------------------------------
// traces

inline constexpr const char* kTraceHeader = "t_p_us,i_sig,i_ref,shots";

inline std::string trace_csv(const Trace& tr) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (std::size_t i = 0; i < tr.size(); ++i)
    out += io::fmt(tr.t_p[i]) + "," + io::fmt(tr.i_sig[i]) + "," + io::fmt(tr.i_ref[i]) + "," +
           std::to_string(tr.shots) + "\n";
  return out;
}

inline Trace parse_trace_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::io, origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) fail(ErrorKind::io, origin + ": expected header '" + kTraceHeader + "'");
  Trace tr;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell[4];
    for (auto& c : cell) std::getline(ls, c, ',');
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      tr.t_p.push_back(num(cell[0]));
      tr.i_sig.push_back(num(cell[1]));
      tr.i_ref.push_back(num(cell[2]));
      tr.shots = std::stoull(cell[3]);
    } catch (const std::exception&) {
      fail(ErrorKind::io, origin + ": malformed row " + std::to_string(row));
    }
  }
  return tr;
}

inline Trace read_trace(const fs::path& path) {
  Trace tr = parse_trace_csv(io::read_file(path), path.string());
  const fs::path side = fs::path(path).replace_extension(".json");
  if (fs::exists(side)) {
    const Json meta = io::read_json(side);
    tr.seed = detail::get_or<std::uint64_t>(meta, "seed", 0, side.string());
    if (meta.contains("protocol")) {
      const Json& pj = meta.at("protocol");
      tr.protocol.tag = parse_protocol_tag(detail::get_or<std::string>(pj, "tag", "REF", side.string()));
      tr.protocol.perturb.wavelength = detail::get_or(pj, "wavelength_nm", tr.protocol.perturb.wavelength, side.string());
      tr.protocol.perturb.power = detail::get_or(pj, "power_mw", tr.protocol.perturb.power, side.string());
    }
  }
  return tr;
}

inline Json trace_sidecar(const Trace& tr, const std::string& profile_name, const std::string& hash) {
  const Protocol& p = tr.protocol;
  return {{"protocol",
           {{"tag", to_string(p.tag)},
            {"wavelength_nm", p.perturb.wavelength},
            {"power_mw", p.perturb.power},
            {"prepare_us", p.perturb.duration},
            {"init", {{"wavelength_nm", p.init.wavelength}, {"power_mw", p.init.power}, {"duration_us", p.init.duration}}},
            {"readout", to_json(p.readout)},
            {"infinite_shots", p.infinite_shots}}},
          {"profile", profile_name},
          {"profile_hash", hash},
          {"seed", tr.seed},
          {"shots", tr.shots},
          {"points", tr.size()}};
}

/// Writes NAME.csv and NAME.json.
inline void write_trace(const fs::path& stem, const Trace& tr, const std::string& profile_name,
                        const std::string& hash) {
  io::write_atomic(stem.string() + ".csv", trace_csv(tr));
  io::write_atomic(stem.string() + ".json", io::dump(trace_sidecar(tr, profile_name, hash)));
}

}  // namespace nvphoto
