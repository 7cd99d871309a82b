#pragma once

// Shipped emitter profiles.
//
// The representative profiles are calibrated against the power-dependent blue
// and power-independent UV observations (rho^445 = 0.20 at 0.1 mW and 0.75 at
// 1 mW, contrast retention ~50 % under blue light, rho^375 = 0.20). The UV
// observations describe an aged emitter, so the UV profiles store pristine
// coefficients together with a UV dose that ages them into that state.
// The fixture profiles reproduce the per-NV green contrast and orange
// ionization rates measured before and after aging.

#include "nvphoto/calibration.hpp"
#include "nvphoto/pulsesim.hpp"

#include <string>
#include <vector>

namespace nvphoto {

inline constexpr double kUvRhoPower = 0.034;    ///< mW
inline constexpr double kBlueRhoPower = 0.016;  ///< mW
inline constexpr double kUvCharacteristicDose = 150.0;     ///< mJ
inline constexpr double kBlueCharacteristicDose = 1500.0;  ///< mJ

/// Observations the default cross sections are solved from. Green: k_i = 0.1
/// MHz and k_r = 0.3 MHz per level (1 MHz recovery), 90 % NV- and a spin mode
/// at 1.3 MHz.
inline CalibrationTargets default_calibration_targets(const ReadoutParams& readout = {}) {
  CalibrationTargets t;
  t.green_power = 0.08;
  const double green_contrast = 1.0 - 0.1 / (0.1 + 3.0 * 1.2);
  const double blue_contrast = model_contrast(0.5 * measured_contrast(green_contrast, readout), readout);

  WavelengthTargets green{kGreenNm, {{0.08, 0.1, std::nullopt, 0.9, green_contrast}}, {}, {}};
  WavelengthTargets blue{445,
                         {{0.1, 0.8, std::nullopt, 0.20, std::nullopt},
                          {1.0, std::nullopt, std::nullopt, 0.75, std::nullopt},
                          {0.3, std::nullopt, std::nullopt, std::nullopt, blue_contrast}},
                         {},
                         3.0};
  WavelengthTargets uv{375, {{kUvRhoPower, 6.0 * kUvRhoPower, std::nullopt, 0.20, std::nullopt}}, {}, {}};
  WavelengthTargets orange{kOrangeNm, {{0.3, 0.16, std::nullopt, std::nullopt, std::nullopt}}, {{"s1", 3.0}}, 1.0};
  t.wavelengths = {green, blue, uv, orange};
  return t;
}

inline const std::map<int, CrossSections>& default_cross_sections() {
  static const std::map<int, CrossSections> table = calibrate_defaults(default_calibration_targets()).calibrations;
  return table;
}

namespace detail {

inline CrossSections orange_for(double k594, double probe_power) {
  const double a2 = k594 / (probe_power * probe_power);
  return {0.0, a2, a2, 0.0, 0.0, 3.0};
}

inline AgingLaw uv_law(double k0, double k_inf, double rho0, double slow_weight_inf) {
  AgingLaw law;
  law.k0 = k0;
  law.k_inf = k_inf;
  law.e_c = kUvCharacteristicDose;
  law.rho0 = rho0;
  law.rho_inf = 0.25 * rho0;
  law.rho_power = kUvRhoPower;
  law.slow_weight_inf = slow_weight_inf;
  return law;
}

inline AgingLaw blue_law(double k0, double k_inf, double rho0) {
  AgingLaw law;
  law.k0 = k0;
  law.k_inf = k_inf;
  law.e_c = kBlueCharacteristicDose;
  law.rho0 = rho0;
  law.rho_inf = 0.5 * rho0;
  law.rho_power = kBlueRhoPower;
  law.slow_weight_inf = 0.0;
  return law;
}

/// k_inf such that the law passes through k_after at dose E.
inline double k_inf_through(double k0, double k_after, double dose, double e_c) {
  return std::max(k0, k0 + (k_after - k0) / -std::expm1(-dose / e_c));
}

/// Pristine profile calibrated at the defaults with its own orange rate.
inline NvProfile pristine_profile(const std::string& name, double k594_pristine, double k594_inf,
                                  double slow_weight_inf) {
  NvProfile p;
  p.name = name;
  p.calibrations = default_cross_sections();
  p.calibrations[kOrangeNm] = orange_for(k594_pristine, p.orange_probe_power);
  p.aging_laws[AgingChannel::uv] =
      uv_law(k594_pristine, k594_inf, relative_rho(p, 375, kUvRhoPower), slow_weight_inf);
  p.aging_laws[AgingChannel::blue] = blue_law(k594_pristine, k594_inf, relative_rho(p, 445, kBlueRhoPower));
  return p;
}

/// UV-aged profile whose aged state reproduces the default calibration.
/// Stores pristine 375 nm coefficients with rho^375 = 0.8 and a UV dose of 20 E_c.
inline NvProfile uv_aged_profile(const std::string& name, double k594_pristine, double k594_aged,
                                 double slow_weight_inf) {
  NvProfile p;
  p.name = name;
  p.calibrations = default_cross_sections();
  const CrossSections aged_uv = p.calibrations.at(375);
  const double green = rho_of(steady_state(rates_at(p, kGreenNm, p.green_power)));
  const double rho0 = 0.8;
  const double s = solve_decreasing(
      [&](double x) { return steady_rho(scale_ionization(aged_uv, x), kUvRhoPower) / green; }, rho0);
  p.calibrations[375] = scale_ionization(aged_uv, s);
  p.calibrations[kOrangeNm] = orange_for(k594_pristine, p.orange_probe_power);
  AgingLaw uv = uv_law(k594_pristine, k594_aged, rho0, slow_weight_inf);
  p.aging_laws[AgingChannel::uv] = uv;
  p.aging_laws[AgingChannel::blue] =
      blue_law(k594_pristine, k594_aged, relative_rho(p, 445, kBlueRhoPower));
  p.aging.dose_uv = 20.0 * kUvCharacteristicDose;
  return aged_parameters(p, p.aging);
}

/// Leakage eps1 that makes the measured green contrast equal c520.
inline ReadoutParams readout_for_green_contrast(double c520) {
  ReadoutParams r;
  const double x = 1.0 - 0.1 / (0.1 + 3.0 * 1.2);
  // c = (1 - q) x / (1 + 2 q (1 - x)) solved for q = eps1/eps0
  const double q = (x - c520) / (x + 2.0 * c520 * (1.0 - x));
  r.eps1 = q * r.eps0;
  return r;
}

struct FixtureRow {
  const char* name;
  double c520;        ///< measured green contrast before aging
  double k594;        ///< before aging, MHz
  double k594_after;  ///< after aging, MHz (0 when not aged)
  double dose;        ///< mJ
  int set;            ///< 0: unaged, 1: blue, 2: UV
};

inline const std::vector<FixtureRow>& fixture_rows() {
  static const std::vector<FixtureRow> rows{
      {"nv1", 0.416, 0.160, 0.0, 0.0, 0},
      {"nv2", 0.392, 0.132, 0.0, 0.0, 0},
      {"nv3", 0.26, 0.15, 0.0, 0.0, 0},
      {"nv4", 0.098, 0.25, 0.0, 0.0, 0},
      {"nv5", 0.366, 0.8, 0.0, 0.0, 0},
      {"nv6", 0.386, 0.28, 0.0, 0.0, 0},
      {"nv7", 0.351, 0.19, 0.0, 0.0, 0},
      {"nv8", 0.387, 0.22, 0.0, 0.0, 0},
      {"blue_triangle_left", 0.394, 0.30, 0.27, 6625.0, 1},
      {"blue_plus", 0.410, 0.038, 0.174, 5583.0, 1},
      {"blue_diamond", 0.357, 0.012, 0.035, 3577.0, 1},
      {"uv_triangle_right", 0.381, 0.55, 1.1, 201.0, 2},
      {"uv_star", 0.406, 0.161, 0.7, 373.0, 2},
      {"uv_cross", 0.419, 0.026, 0.10, 938.0, 2},
      {"uv_diamond", 0.38, 0.005, 0.026, 136.0, 2},
  };
  return rows;
}

}  // namespace detail

/// Blue-series emitter in its pristine state.
inline NvProfile blue_representative() { return detail::pristine_profile("blue_representative", 0.16, 0.8, 0.3); }

/// UV-aged emitter with a 30 % slow recombination channel.
inline NvProfile uv_representative() { return detail::uv_aged_profile("uv_representative", 0.161, 0.7, 0.3); }

/// Poor, heavily UV-aged emitter whose recovery is dominated by the slow channel.
inline NvProfile uv_slow_recovery() { return detail::uv_aged_profile("uv_slow_recovery", 0.6, 3.0, 0.8); }

/// Fixture NV in its pristine state. The aging law passes through the
/// aged k_i^594 at the recorded dose (k_inf is clamped to k0 when the
/// recorded rate decreases).
inline NvProfile fixture_profile(const detail::FixtureRow& row) {
  const double e_c = row.set == 2 ? kUvCharacteristicDose : kBlueCharacteristicDose;
  const double k_inf = row.set == 0 ? 5.0 * row.k594 : detail::k_inf_through(row.k594, row.k594_after, row.dose, e_c);
  NvProfile p = detail::pristine_profile(row.name, row.k594, k_inf, 0.3);
  p.readout = detail::readout_for_green_contrast(row.c520);
  return p;
}

inline std::vector<std::string> builtin_profile_names() {
  std::vector<std::string> names{"blue_representative", "uv_representative", "uv_slow_recovery"};
  for (const auto& r : detail::fixture_rows()) names.emplace_back(r.name);
  return names;
}

inline NvProfile builtin_profile(const std::string& name) {
  if (name == "blue_representative") return blue_representative();
  if (name == "uv_representative") return uv_representative();
  if (name == "uv_slow_recovery") return uv_slow_recovery();
  for (const auto& r : detail::fixture_rows())
    if (name == r.name) return fixture_profile(r);
  fail(ErrorKind::config, "unknown builtin profile '" + name + "'");
}

}  // namespace nvphoto
