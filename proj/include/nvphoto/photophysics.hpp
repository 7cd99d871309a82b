#pragma once

// Wavelength regions, power laws and the dose-driven aging model.

#include "nvphoto/profile.hpp"
#include "nvphoto/ratemodel.hpp"

#include <cmath>
#include <sstream>

namespace nvphoto {

inline constexpr int kGreenNm = 520;
inline constexpr int kOrangeNm = 594;

/// Region boundaries 433, 477 and 575 nm belong to the shorter-wavelength region.
inline Region classify_region(double wavelength_nm) {
  if (!(wavelength_nm >= 300.0 && wavelength_nm <= 637.0)) {
    std::ostringstream os;
    os << wavelength_nm << " nm is outside 300-637 nm";
    fail(ErrorKind::unsupported_wavelength, os.str());
  }
  if (wavelength_nm <= 433.0) return Region::A;
  if (wavelength_nm <= 477.0) return Region::B;
  if (wavelength_nm <= 575.0) return Region::C;
  return Region::D;
}

inline void validate(Region region, const CrossSections& cs) {
  auto bad = [&](const char* what) {
    fail(ErrorKind::invalid_parameter, std::string("region ") + to_string(region) + " cross sections: " + what);
  };
  for (double v : {cs.a1, cs.a2_0, cs.a2_1, cs.b1, cs.b2, cs.s1})
    if (!std::isfinite(v) || v < 0.0) bad("coefficients must be finite and >= 0");
  switch (region) {
    case Region::A:
      if (!(cs.a1 > 0.0) || !(cs.b1 > 0.0)) bad("a1 and b1 must be > 0");
      if (cs.s1 != 0.0) bad("s1 must be 0");
      break;
    case Region::B:
      if (!(cs.a1 > 0.0) || !(cs.b2 > 0.0) || !(cs.s1 > 0.0)) bad("a1, b2 and s1 must be > 0");
      if (cs.b1 != 0.0) bad("b1 must be 0");
      break;
    case Region::C:
      if (cs.a1 != 0.0 || cs.b1 != 0.0) bad("a1 and b1 must be 0");
      break;
    case Region::D:
      if (cs.a1 != 0.0 || cs.b1 != 0.0 || cs.b2 != 0.0) bad("a1, b1 and b2 must be 0");
      break;
  }
}

inline RateSet rates_from(const CrossSections& cs, double power) {
  if (!std::isfinite(power) || power < 0.0) fail(ErrorKind::invalid_parameter, "power must be >= 0");
  const double p2 = power * power;
  return {cs.a1 * power + cs.a2_0 * p2, cs.a1 * power + cs.a2_1 * p2, cs.s1 * power,
          cs.b1 * power + cs.b2 * p2};
}

inline int wavelength_key(double wavelength_nm) {
  classify_region(wavelength_nm);
  return static_cast<int>(std::lround(wavelength_nm));
}

inline AgedView aged_view(const NvProfile& profile, const AgingState& state);

/// Coefficients in effect for this profile's current aging state.
inline CrossSections cross_sections_at(const NvProfile& profile, double wavelength_nm) {
  const int key = wavelength_key(wavelength_nm);
  const std::map<int, CrossSections>* table = &profile.calibrations;
  std::optional<AgedView> computed;
  if (!profile.aging.pristine()) {
    if (profile.aged && profile.aged->state == profile.aging) {
      table = &profile.aged->calibrations;
    } else {
      computed = aged_view(profile, profile.aging);
      table = &computed->calibrations;
    }
  }
  auto it = table->find(key);
  if (it == table->end())
    fail(ErrorKind::uncalibrated_wavelength,
         "profile '" + profile.name + "' has no calibration for " + std::to_string(key) + " nm");
  validate(classify_region(key), it->second);
  return it->second;
}

inline RateSet rates_at(const NvProfile& profile, double wavelength_nm, double power) {
  return rates_from(cross_sections_at(profile, wavelength_nm), power);
}

/// Slow recombination channel for the profile's current aging state.
inline SlowChannel slow_channel(const NvProfile& profile) {
  if (profile.aging.pristine()) return {};
  if (profile.aged && profile.aged->state == profile.aging) return profile.aged->slow;
  return aged_view(profile, profile.aging).slow;
}

namespace detail {

inline double steady_rho(const CrossSections& cs, double power) {
  return rho_of(steady_state(rates_from(cs, power)));
}

inline CrossSections scale_ionization(CrossSections cs, double s) {
  cs.a1 *= s;
  cs.a2_0 *= s;
  cs.a2_1 *= s;
  return cs;
}

/// Root of a strictly decreasing f on (0, inf), found by bisection in log space.
template <class F>
double solve_decreasing(F&& f, double target) {
  double lo = 1.0, hi = 1.0;
  for (int i = 0; f(lo) < target; ++i) {
    if (i > 200) fail(ErrorKind::calibration_failure, "target not reachable by scaling");
    lo /= 2.0;
  }
  for (int i = 0; f(hi) > target; ++i) {
    if (i > 200) fail(ErrorKind::calibration_failure, "target not reachable by scaling");
    hi *= 2.0;
  }
  for (int i = 0; i < 200 && hi / lo - 1.0 > 1e-15; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (f(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return std::sqrt(lo * hi);
}

inline Region aging_region(AgingChannel c) { return c == AgingChannel::uv ? Region::A : Region::B; }

/// First calibrated wavelength in the region, if any.
inline std::optional<int> region_wavelength(const std::map<int, CrossSections>& table, Region r) {
  for (const auto& [nm, cs] : table)
    if (classify_region(nm) == r) return nm;
  return std::nullopt;
}

}  // namespace detail

inline void validate(const AgingLaw& law) {
  auto ok = std::isfinite(law.k0) && std::isfinite(law.k_inf) && law.k0 > 0.0 && law.k_inf >= law.k0 &&
            std::isfinite(law.e_c) && law.e_c > 0.0 && law.rho_inf >= 0.0 && law.rho_inf <= law.rho0 &&
            law.rho0 <= 1.0 && law.slow_weight_inf >= 0.0 && law.slow_weight_inf <= 1.0 &&
            law.k_r_slow > 0.0 && law.blue_pulse_fraction >= 0.0 && law.blue_pulse_fraction <= 1.0 &&
            law.rho_power >= 0.0;
  if (!ok) fail(ErrorKind::invalid_parameter, "aging law violates k_inf >= k0 > 0, 0 <= rho_inf <= rho0 <= 1 or E_c > 0");
}

/// Fraction of the total aging change reached at dose E.
inline double aging_progress(const AgingLaw& law, double dose_mj) { return -std::expm1(-dose_mj / law.e_c); }

inline double k594_law(const AgingLaw& law, double dose_mj) {
  return law.k_inf - (law.k_inf - law.k0) * std::exp(-dose_mj / law.e_c);
}

inline double rho_law(const AgingLaw& law, double dose_mj) {
  return law.rho_inf + (law.rho0 - law.rho_inf) * std::exp(-dose_mj / law.e_c);
}

/// Steady NV- fraction at (wavelength, power) relative to the green-initialized state.
inline double relative_rho(const NvProfile& profile, double wavelength_nm, double power) {
  const double green = rho_of(steady_state(rates_at(profile, kGreenNm, profile.green_power)));
  return rho_of(steady_state(rates_at(profile, wavelength_nm, power))) / green;
}

/// Orange ionization rate at the probe power, the aging classifier.
inline double k594(const NvProfile& profile) {
  return rates_at(profile, kOrangeNm, profile.orange_probe_power).k_i0;
}

/// Classifier on the pristine k_i^594 (MHz).
inline Quality classify_quality(double k594_pristine) {
  if (k594_pristine < 0.05) return Quality::excellent;
  if (k594_pristine < 0.2) return Quality::good;
  if (k594_pristine < 0.5) return Quality::average;
  return Quality::poor;
}

inline Quality quality_of(const NvProfile& profile) {
  NvProfile pristine = profile;
  pristine.aging = {};
  pristine.aged.reset();
  return classify_quality(k594(pristine));
}

/// Adds a pulse's energy to the dose of its aging channel. Wavelengths outside
/// regions A and B do not age the emitter.
inline AgingState accumulate_dose(AgingState state, double wavelength_nm, double energy_mj) {
  if (!std::isfinite(energy_mj) || energy_mj < 0.0) fail(ErrorKind::invalid_parameter, "pulse energy must be >= 0");
  switch (classify_region(wavelength_nm)) {
    case Region::A: state.dose_uv += energy_mj; break;
    case Region::B: state.dose_blue += energy_mj; break;
    default: break;
  }
  return state;
}

inline AgedView aged_view(const NvProfile& profile, const AgingState& state) {
  if (state.dose_uv < 0.0 || state.dose_blue < 0.0) fail(ErrorKind::invalid_parameter, "dose must be >= 0");
  AgedView view{state, profile.calibrations, {}};
  double orange_scale = 1.0;

  for (const auto& [channel, law] : profile.aging_laws) {
    const double dose = state.dose(channel);
    if (dose <= 0.0) continue;
    validate(law);
    orange_scale *= k594_law(law, dose) / law.k0;

    const Region region = detail::aging_region(channel);
    if (auto nm = detail::region_wavelength(profile.calibrations, region)) {
      const CrossSections pristine = profile.calibrations.at(*nm);
      const double target = detail::steady_rho(pristine, law.rho_power) * rho_law(law, dose) / law.rho0;
      const double s = detail::solve_decreasing(
          [&](double x) { return detail::steady_rho(detail::scale_ionization(pristine, x), law.rho_power); },
          target);
      for (auto& [key, cs] : view.calibrations)
        if (classify_region(key) == region) cs = detail::scale_ionization(profile.calibrations.at(key), s);
    }
    if (channel == AgingChannel::uv) {
      view.slow.weight = law.slow_weight_inf * aging_progress(law, dose);
      view.slow.k_r_slow = law.k_r_slow;
      view.slow.blue_fraction = law.blue_pulse_fraction;
    }
  }
  if (auto it = view.calibrations.find(kOrangeNm); it != view.calibrations.end()) {
    it->second.a1 *= orange_scale;
    it->second.a2_0 *= orange_scale;
    it->second.a2_1 *= orange_scale;
  }
  return view;
}

/// Profile carrying the given aging state, with the aged coefficients cached.
inline NvProfile aged_parameters(const NvProfile& profile, const AgingState& state) {
  NvProfile out = profile;
  out.aging = state;
  out.aged.reset();
  if (!state.pristine()) out.aged = aged_view(profile, state);
  return out;
}

}  // namespace nvphoto
