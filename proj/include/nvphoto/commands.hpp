#pragma once

// The five CLI verbs as library calls. Each takes a JSON run config, writes its
// outputs under `out` and returns the manifest, which is written last.

#include "nvphoto/io.hpp"
#include "nvphoto/sensitivity.hpp"

#include <functional>
#include <string>
#include <vector>

#ifndef NVPHOTO_VERSION
#define NVPHOTO_VERSION "0.1.0"
#endif

namespace nvphoto {

struct RunContext {
  Json config;
  fs::path base;  ///< directory relative profile and trace paths resolve against
  fs::path out;
};

/// Flag overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::uint64_t> shots;
  bool infinite_shots = false;
};

inline void apply_overrides(Json& config, const Overrides& o) {
  if (o.seed) config["seed"] = *o.seed;
  if (o.out) config["out"] = *o.out;
  if (o.shots) config["shots"] = *o.shots;
  if (o.infinite_shots) config["infinite_shots"] = true;
}

namespace detail {

inline std::vector<double> grid_from_json(const Json& j, const std::string& where) {
  std::vector<double> g;
  if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number()) fail(ErrorKind::config, where + ": grid entries must be numbers");
      g.push_back(v.get<double>());
    }
    return g;
  }
  if (!j.is_object()) fail(ErrorKind::config, where + ": grid must be an array or {start, stop, count}");
  const double start = get<double>(j, "start", where);
  const double stop = get<double>(j, "stop", where);
  const int count = get<int>(j, "count", where);
  const std::string spacing = get_or<std::string>(j, "spacing", "linear", where);
  if (count < 2 || !(stop > start)) fail(ErrorKind::config, where + ": need count >= 2 and stop > start");
  if (spacing == "linear") {
    for (int i = 0; i < count; ++i) g.push_back(start + (stop - start) * i / (count - 1.0));
  } else if (spacing == "log") {
    if (!(start > 0.0)) fail(ErrorKind::config, where + ": log spacing needs start > 0");
    if (get_or(j, "include_zero", false, where)) g.push_back(0.0);
    for (int i = 0; i < count; ++i) g.push_back(start * std::pow(stop / start, i / (count - 1.0)));
  } else {
    fail(ErrorKind::config, where + ": spacing must be 'linear' or 'log'");
  }
  return g;
}

inline std::vector<double> grid(const Json& config, const char* key) {
  if (!config.contains(key)) fail(ErrorKind::config, std::string("missing '") + key + "'");
  return grid_from_json(config.at(key), key);
}

inline std::uint64_t seed_of(const Json& config) {
  if (!config.contains("seed")) fail(ErrorKind::config, "a seed is required (config 'seed' or --seed)");
  return get<std::uint64_t>(config, "seed", "config");
}

/// Tracks written files so the manifest can list them with hashes.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    io::write_atomic(dir_ / name, content);
    files_.push_back({{"name", name}, {"fnv1a", io::fnv1a_hex(content)}});
  }

  Json finish(const std::string& command, const Json& config, Json summary) {
    Json recorded = config;
    recorded.erase("out");
    Json manifest{{"tool", "nvphoto"},
                  {"version", NVPHOTO_VERSION},
                  {"command", command},
                  {"config", recorded},
                  {"files", files_},
                  {"summary", std::move(summary)}};
    if (config.contains("seed")) manifest["seed"] = config.at("seed");
    io::write_atomic(dir_ / "manifest.json", io::dump(manifest));
    return manifest;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  Json files_ = Json::array();
};

inline fs::path out_dir(const RunContext& ctx) {
  if (!ctx.out.empty()) return ctx.out;
  return get<std::string>(ctx.config, "out", "config");
}

inline RateContext rate_context_from_json(const Json& j) {
  RateContext c;
  const std::string p = get_or<std::string>(j, "protocol", "ionization", "context");
  const std::string s = get_or<std::string>(j, "structure", "spin_independent", "context");
  if (p == "ionization")
    c.protocol = RateProtocol::ionization;
  else if (p == "recombination")
    c.protocol = RateProtocol::recombination;
  else
    fail(ErrorKind::config, "context.protocol must be 'ionization' or 'recombination'");
  if (s == "spin_independent")
    c.structure = RateStructure::spin_independent;
  else if (s == "spin_dependent")
    c.structure = RateStructure::spin_dependent;
  else if (s == "slow_channel")
    c.structure = RateStructure::slow_channel;
  else
    fail(ErrorKind::config, "context.structure must be spin_independent, spin_dependent or slow_channel");
  c.k_r = get_or(j, "k_r", 0.0, "context");
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

/// One trace per perturbing power: <TAG>_<index>.csv with a .json sidecar.
inline Json cmd_simulate(const RunContext& ctx) {
  const Json& c = ctx.config;
  const NvProfile profile = resolve_profile(detail::get<std::string>(c, "profile", "config"), ctx.base);
  const ProtocolTag tag = parse_protocol_tag(detail::get<std::string>(c, "protocol", "config"));
  const auto t_p = detail::grid(c, "t_p_us");
  std::vector<double> powers;
  if (c.contains("powers_mw"))
    powers = detail::grid(c, "powers_mw");
  else
    powers = {detail::get_or(c, "power_mw", 0.0, "config")};
  if (powers.empty()) fail(ErrorKind::config, "'powers_mw' is empty");
  const bool infinite = detail::get_or(c, "infinite_shots", false, "config");
  const std::uint64_t seed = infinite ? detail::get_or<std::uint64_t>(c, "seed", 0, "config") : detail::seed_of(c);
  const std::string hash = profile_hash(profile);

  detail::Outputs out(detail::out_dir(ctx));
  Json traces = Json::array();
  for (std::size_t k = 0; k < powers.size(); ++k) {
    Protocol p = make_protocol(tag, powers[k], profile);
    p.perturb.wavelength = detail::get_or(c, "wavelength_nm", p.perturb.wavelength, "config");
    p.perturb.duration = detail::get_or(c, "prepare_us", 0.0, "config");
    if (c.contains("init")) {
      p.init.power = detail::get_or(c.at("init"), "power_mw", p.init.power, "init");
      p.init.duration = detail::get_or(c.at("init"), "duration_us", p.init.duration, "init");
    }
    p.readout.shots = detail::get_or<std::uint64_t>(c, "shots", p.readout.shots, "config");
    p.infinite_shots = infinite;
    // Each power gets its own stream family.
    const Trace tr = run_protocol(profile, p, t_p, seed + 1000003ull * k);
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s_%02zu", to_string(tag), k);
    out.write(std::string(stem) + ".csv", trace_csv(tr));
    out.write(std::string(stem) + ".json", io::dump(trace_sidecar(tr, profile.name, hash)));
    traces.push_back({{"file", std::string(stem) + ".csv"}, {"power_mw", powers[k]}});
  }
  return out.finish("simulate", c, {{"traces", traces}, {"profile_hash", hash}});
}

// ---------------------------------------------------------------------------
// fit

/// Per-trace fits; a failing trace is reported and the batch continues.
inline Json cmd_fit(const RunContext& ctx) {
  const Json& c = ctx.config;
  if (!c.contains("traces") || !c.at("traces").is_array() || c.at("traces").empty())
    fail(ErrorKind::config, "'traces' must be a non-empty array of CSV paths");
  const std::string model = detail::get_or<std::string>(c, "model", "mono", "config");
  if (model != "mono" && model != "bi" && model != "auto") fail(ErrorKind::config, "model must be mono, bi or auto");
  const std::string channel = detail::get_or<std::string>(c, "channel", "raw", "config");
  if (channel != "raw" && channel != "charge") fail(ErrorKind::config, "channel must be 'raw' or 'charge'");
  const int resamples = detail::get_or(c, "bootstrap", 1000, "config");
  const std::uint64_t seed = detail::seed_of(c);
  std::optional<RateContext> context;
  std::optional<NvProfile> rate_profile;  // k_r looked up per trace from its sidecar
  if (c.contains("context")) {
    context = detail::rate_context_from_json(c.at("context"));
    if (c.at("context").contains("profile"))
      rate_profile = resolve_profile(detail::get<std::string>(c.at("context"), "profile", "context"), ctx.base);
  }
  FitOptions fopt;
  fopt.poisson_weights = detail::get_or(c, "poisson_weights", false, "config");
  SelectionOptions sopt;
  sopt.aicc_threshold = detail::get_or(c, "aicc_threshold", sopt.aicc_threshold, "config");
  sopt.amplitude_sigmas = detail::get_or(c, "amplitude_sigmas", sopt.amplitude_sigmas, "config");
  sopt.seed = seed;
  sopt.fit = fopt;

  auto path_of = [&](const std::string& s) {
    fs::path p(s);
    return p.is_relative() && !ctx.base.empty() ? ctx.base / p : p;
  };
  std::optional<Trace> baseline;
  if (c.contains("baseline")) baseline = read_trace(path_of(detail::get<std::string>(c, "baseline", "config")));

  detail::Outputs out(detail::out_dir(ctx));
  std::string report = "trace\tmodel\tparameter\tvalue\tci_low\tci_high\trendered\n";
  std::string table = "trace,model,parameter,value,ci_low,ci_high\n";
  Json results = Json::array();
  int failures = 0;
  for (std::size_t k = 0; k < c.at("traces").size(); ++k) {
    const std::string ref = c.at("traces")[k].get<std::string>();
    const std::string name = fs::path(ref).stem().string();
    Json entry{{"trace", name}};
    try {
      Trace tr = read_trace(path_of(ref));
      const Trace fit_input = channel == "charge" ? charge_channel(tr) : tr;
      FitResult fit;
      if (model == "auto") {
        const auto sel = select_model(fit_input, sopt);
        fit = sel.order == ModelOrder::bi ? *sel.bi : sel.mono;
        entry["delta_aicc"] = sel.delta_aicc;
      } else {
        fit = fit_exponential(fit_input, model == "bi" ? ModelOrder::bi : ModelOrder::mono, fopt);
      }
      if (!fit.flat) fit = bootstrap_ci(fit_input, fit, resamples, seed + k, fopt);
      entry["model"] = to_string(fit.model);
      entry["flat"] = fit.flat;
      entry["bootstrap_unstable"] = fit.bootstrap_unstable;
      if (fit.flat) {
        report += name + "\t" + to_string(fit.model) + "\ttau1\tnan\tnan\tnan\tamplitude unidentifiable\n";
        table += name + "," + to_string(fit.model) + ",tau1,nan,nan,nan\n";
      } else {
        for (const auto& [pname, value] : fit.parameters()) {
          const auto it = fit.ci.find(pname);
          const double lo = it != fit.ci.end() ? it->second.lo : std::numeric_limits<double>::quiet_NaN();
          const double hi = it != fit.ci.end() ? it->second.hi : std::numeric_limits<double>::quiet_NaN();
          const double half = it != fit.ci.end() ? it->second.half_width() : 0.0;
          report += name + "\t" + to_string(fit.model) + "\t" + pname + "\t" + io::fmt(value) + "\t" + io::fmt(lo) +
                    "\t" + io::fmt(hi) + "\t" + format_uncertain(value, half) + "\n";
          table += name + "," + to_string(fit.model) + "," + pname + "," + io::fmt(value) + "," + io::fmt(lo) + "," +
                   io::fmt(hi) + "\n";
          entry["parameters"][pname] = value;
        }
        if (fit.bootstrap_unstable) report += name + "\twarning: bootstrap unstable (> 5 % of refits failed)\n";
      }
      if (context && !fit.flat) {
        RateContext rc = *context;
        if (rate_profile && rc.protocol == RateProtocol::ionization)
          rc.k_r = rates_at(*rate_profile, tr.protocol.perturb.wavelength, tr.protocol.perturb.power).k_r;
        const auto rates = extract_rates(fit, rc);
        auto add = [&](const char* label, const std::optional<RateEstimate>& e) {
          if (!e) return;
          entry["rates"][label] = {{"value", e->value}, {"uncertainty", e->uncertainty}};
          report += name + "\trate\t" + label + "\t" + io::fmt(e->value) + "\t" +
                    io::fmt(e->ci ? e->ci->lo : std::numeric_limits<double>::quiet_NaN()) + "\t" +
                    io::fmt(e->ci ? e->ci->hi : std::numeric_limits<double>::quiet_NaN()) + "\t" +
                    format_uncertain(e->value, e->uncertainty) + " MHz\n";
        };
        add("k_i", rates.k_i);
        add("k_r", rates.k_r);
        add("recovery_rate", rates.recovery_rate);
        add("k_r_slow", rates.k_r_slow);
        if (rates.slow_fraction) entry["rates"]["slow_fraction"] = *rates.slow_fraction;
      }
      if (baseline) {
        const auto curve = rho_contrast_curves(tr, *baseline);
        std::string csv = "t_p_us,rho,c,flagged\n";
        for (std::size_t i = 0; i < curve.t_p.size(); ++i)
          csv += io::fmt(curve.t_p[i]) + "," + io::fmt(curve.rho[i]) + "," + io::fmt(curve.c[i]) + "," +
                 (curve.flagged[i] ? "1" : "0") + "\n";
        out.write(name + "_curves.csv", csv);
      }
    } catch (const Error& e) {
      ++failures;
      entry["error"] = e.what();
      report += name + "\terror\t" + e.what() + "\n";
    }
    results.push_back(entry);
  }
  out.write("fit_report.txt", report);
  out.write("fits.csv", table);
  return out.finish("fit", c, {{"results", results}, {"failures", failures}});
}

// ---------------------------------------------------------------------------
// age

struct AgeRow {
  double dose = 0.0;  ///< mJ
  double k594 = 0.0;  ///< MHz, from a simulated IC trace
  double rho = 0.0;   ///< relative steady NV- fraction at the aging wavelength
  double slow_weight = 0.0;
};

/// k594 by fitting a noiseless IC trace in the charge channel.
inline double simulated_k594(const NvProfile& profile) {
  const double k_guess = k594(profile);
  Protocol p = make_protocol(ProtocolTag::IC, profile.orange_probe_power, profile);
  p.infinite_shots = true;
  std::vector<double> t_p;
  for (int i = 0; i < 40; ++i) t_p.push_back(6.0 / k_guess * i / 39.0);
  const Trace tr = charge_channel(run_protocol(profile, p, t_p, 0));
  const FitResult f = fit_exponential(tr, ModelOrder::mono);
  return 1.0 / f.tau1;  // no recombination under orange
}

/// Fits k(E) = k_inf - (k_inf - k0) exp(-E/E_c) to a dose series.
inline std::optional<double> fit_characteristic_dose(const std::vector<AgeRow>& rows) {
  std::vector<const AgeRow*> pts;
  for (const auto& r : rows) pts.push_back(&r);
  if (pts.size() < 3) return std::nullopt;
  double kmin = pts[0]->k594, kmax = pts[0]->k594, emax = 0.0;
  for (const auto* r : pts) {
    kmin = std::min(kmin, r->k594);
    kmax = std::max(kmax, r->k594);
    emax = std::max(emax, r->dose);
  }
  if (!(kmax - kmin > 1e-9 * kmax) || !(emax > 0.0)) return std::nullopt;
  auto residuals = [&](const lsq::Vector& x) {
    lsq::Vector r(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i)
      r(static_cast<Eigen::Index>(i)) =
          (x(1) - (x(1) - x(0)) * std::exp(-pts[i]->dose / std::exp(x(2)))) / kmax - pts[i]->k594 / kmax;
    return r;
  };
  std::optional<double> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double frac : {0.03, 0.1, 0.3, 1.0}) {
    lsq::Vector x0(3);
    x0 << kmin, kmax, std::log(frac * emax);
    lsq::Options o;
    o.max_iterations = 500;
    o.relative_tolerance = 1e-14;
    const auto r = lsq::minimize(residuals, x0, o);
    if (r.params.allFinite() && r.cost < best_cost) {
      best_cost = r.cost;
      best = std::exp(r.params(2));
    }
  }
  return best;
}

/// Dose sweep of one aging channel.
inline Json cmd_age(const RunContext& ctx) {
  const Json& c = ctx.config;
  const NvProfile profile = resolve_profile(detail::get<std::string>(c, "profile", "config"), ctx.base);
  NvProfile pristine = profile;
  pristine.aging = {};
  pristine.aged.reset();
  const AgingChannel channel = detail::parse_channel(detail::get_or<std::string>(c, "channel", "uv", "config"));
  const auto law_it = profile.aging_laws.find(channel);
  if (law_it == profile.aging_laws.end())
    fail(ErrorKind::config, "profile '" + profile.name + "' has no " + to_string(channel) + " aging law");
  const double wavelength = detail::get_or(c, "wavelength_nm", channel == AgingChannel::uv ? 375.0 : 445.0, "config");
  if (detail::aging_region(channel) != classify_region(wavelength))
    fail(ErrorKind::config, "wavelength does not belong to the " + std::string(to_string(channel)) + " channel");
  const double rho_power = detail::get_or(c, "rho_power_mw", law_it->second.rho_power, "config");
  const auto doses = detail::grid(c, "doses_mj");

  std::vector<AgeRow> rows;
  std::string csv = "dose_mj,k594_mhz,rho,slow_weight\n";
  for (double e : doses) {
    if (e < 0.0) fail(ErrorKind::config, "doses must be >= 0");
    const NvProfile aged = aged_parameters(pristine, accumulate_dose({}, wavelength, e));
    AgeRow row{e, simulated_k594(aged), relative_rho(aged, wavelength, rho_power), slow_channel(aged).weight};
    rows.push_back(row);
    csv += io::fmt(row.dose) + "," + io::fmt(row.k594) + "," + io::fmt(row.rho) + "," + io::fmt(row.slow_weight) + "\n";
  }
  detail::Outputs out(detail::out_dir(ctx));
  out.write("aging.csv", csv);
  Json summary{{"profile", profile.name},
               {"channel", to_string(channel)},
               {"configured_e_c_mj", law_it->second.e_c},
               {"quality", to_string(quality_of(pristine))}};
  if (auto ec = fit_characteristic_dose(rows)) {
    summary["fitted_e_c_mj"] = *ec;
    summary["dose_90_mj"] = *ec * std::log(10.0);
  }
  out.write("aging_summary.json", io::dump(summary));
  return out.finish("age", c, summary);
}

// ---------------------------------------------------------------------------
// sense

struct SenseRow {
  double tau_m = 0.0;
  std::optional<TotalSensitivity> scheme_i;
  TotalSensitivity scheme_ii;
  std::string recommendation;
};

inline Json cmd_sense(const RunContext& ctx) {
  const Json& c = ctx.config;
  const NvProfile profile = resolve_profile(detail::get<std::string>(c, "profile", "config"), ctx.base);
  if (!c.contains("perturb")) fail(ErrorKind::config, "missing 'perturb' pulse");
  const Json& pj = c.at("perturb");
  const LaserPulse pulse{detail::get<double>(pj, "wavelength_nm", "perturb"), detail::get<double>(pj, "power_mw", "perturb"),
                         detail::get<double>(pj, "duration_us", "perturb")};
  const double green = detail::get_or(c, "green_power_mw", profile.green_power, "config");
  const double threshold = detail::get_or(c, "threshold", 0.25, "config");
  const double pulse_energy = detail::get_or(c, "pulse_energy_pj", pulse.energy_pj(), "config");
  const auto energy_t_p = detail::grid(c, "energy_t_p_us");
  const auto recovery_t_p = detail::grid(c, "recovery_t_p_us");
  std::vector<double> tau_m{0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0};
  if (c.contains("tau_m_us")) tau_m = detail::grid(c, "tau_m_us");

  const auto energy = sensitivity_vs_energy(profile, pulse.wavelength, pulse.power, energy_t_p);
  const auto recovery = recovery_curve(profile, pulse, green, recovery_t_p);
  const bool scheme_i_ok = energy.knee && pulse_energy <= *energy.knee;

  detail::Outputs out(detail::out_dir(ctx));
  std::string ecsv = "energy_pj,eta_nv\n";
  for (std::size_t i = 0; i < energy.x.size(); ++i) ecsv += io::fmt(energy.x[i]) + "," + io::fmt(energy.eta_nv[i]) + "\n";
  std::string rcsv = "t_p_us,eta_nv\n";
  for (std::size_t i = 0; i < recovery.x.size(); ++i)
    rcsv += io::fmt(recovery.x[i]) + "," + io::fmt(recovery.eta_nv[i]) + "\n";
  out.write("energy_curve.csv", ecsv);
  out.write("recovery_curve.csv", rcsv);

  std::string tcsv = "tau_m_us,scheme_i_eta,scheme_i_t_d_us,scheme_ii_eta,scheme_ii_t_d_us,recommendation\n";
  Json rows = Json::array();
  for (double tm : tau_m) {
    SenseRow row;
    row.tau_m = tm;
    row.scheme_ii = total_sensitivity(recovery, {tm}, Scheme::ii);
    if (scheme_i_ok) row.scheme_i = total_sensitivity(energy, {tm}, Scheme::i, pulse_energy);
    const double best_i = row.scheme_i ? row.scheme_i->best_eta : -1.0;
    const double best = std::max(best_i, row.scheme_ii.best_eta);
    if (best < threshold)
      row.recommendation = "not sensible";
    else
      row.recommendation = best_i >= row.scheme_ii.best_eta ? "scheme i" : "scheme ii";
    const std::string nan = "nan";
    tcsv += io::fmt(tm) + "," + (row.scheme_i ? io::fmt(row.scheme_i->best_eta) : nan) + "," +
            (row.scheme_i ? io::fmt(row.scheme_i->best_t_d) : nan) + "," + io::fmt(row.scheme_ii.best_eta) + "," +
            io::fmt(row.scheme_ii.best_t_d) + "," + row.recommendation + "\n";
    Json r{{"tau_m_us", tm},
           {"scheme_ii", {{"eta_total", row.scheme_ii.best_eta}, {"t_d_us", row.scheme_ii.best_t_d}}},
           {"recommendation", row.recommendation}};
    if (row.scheme_i) r["scheme_i"] = {{"eta_total", row.scheme_i->best_eta}, {"t_d_us", row.scheme_i->best_t_d}};
    rows.push_back(r);
  }
  out.write("total_sensitivity.csv", tcsv);
  Json summary{{"profile", profile.name},
               {"pulse_energy_pj", pulse_energy},
               {"scheme_i_admissible", scheme_i_ok},
               {"threshold", threshold},
               {"rows", rows}};
  if (energy.knee) summary["knee_pj"] = *energy.knee;
  return out.finish("sense", c, summary);
}

// ---------------------------------------------------------------------------
// calibrate

inline CalibrationTargets targets_from_json(const Json& j) {
  CalibrationTargets t;
  t.green_power = detail::get_or(j, "green_power", t.green_power, "targets");
  t.tolerance = detail::get_or(j, "tolerance", t.tolerance, "targets");
  if (!j.contains("wavelengths") || !j.at("wavelengths").is_array())
    fail(ErrorKind::config, "targets: 'wavelengths' must be an array");
  for (const auto& w : j.at("wavelengths")) {
    WavelengthTargets wt;
    wt.wavelength = detail::get<int>(w, "wavelength", "targets.wavelengths");
    const std::string where = "targets." + std::to_string(wt.wavelength);
    if (w.contains("points"))
      for (const auto& p : w.at("points")) {
        CalibrationPoint cp;
        cp.power = detail::get<double>(p, "power", where);
        auto opt = [&](const char* key) -> std::optional<double> {
          if (!p.contains(key)) return std::nullopt;
          return detail::get<double>(p, key, where);
        };
        cp.k_i = opt("k_i");
        cp.k_r = opt("k_r");
        cp.rho = opt("rho");
        cp.contrast = opt("contrast");
        wt.points.push_back(cp);
      }
    if (w.contains("fixed"))
      for (const auto& [k, v] : w.at("fixed").items()) wt.fixed[k] = v.get<double>();
    if (w.contains("a2_ratio")) wt.a2_ratio = detail::get<double>(w, "a2_ratio", where);
    t.wavelengths.push_back(wt);
  }
  return t;
}

/// Solves cross sections from targets (config 'targets', or the shipped
/// defaults), writes calibration.json; with `write_profiles` also one JSON per
/// builtin profile.
inline Json cmd_calibrate(const RunContext& ctx, bool write_profiles) {
  const Json& c = ctx.config;
  const CalibrationTargets targets =
      c.contains("targets") ? targets_from_json(c.at("targets")) : default_calibration_targets();
  const CalibrationResult result = calibrate_defaults(targets);
  detail::Outputs out(detail::out_dir(ctx));
  Json cal = Json::object();
  for (const auto& [nm, cs] : result.calibrations) {
    cal[std::to_string(nm)] = to_json(cs);
    cal[std::to_string(nm)]["residuals"] = result.residuals.at(nm);
  }
  out.write("calibration.json", io::dump({{"calibrations", cal}, {"max_residual", result.max_residual}}));
  Json names = Json::array();
  if (write_profiles)
    for (const auto& name : builtin_profile_names()) {
      out.write(name + ".json", io::dump(to_json(builtin_profile(name))));
      names.push_back(name);
    }
  return out.finish("calibrate", c, {{"max_residual", result.max_residual}, {"profiles", names}});
}

}  // namespace nvphoto
