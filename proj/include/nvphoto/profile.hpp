#pragma once

// Per-emitter configuration: calibrated cross sections, readout model and aging.
// Powers in mW, rates in MHz, doses in mJ.

#include "nvphoto/error.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace nvphoto {

enum class Region { A, B, C, D };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::A: return "A";
    case Region::B: return "B";
    case Region::C: return "C";
    case Region::D: return "D";
  }
  return "?";
}

/// Power-law coefficients of one calibrated wavelength.
struct CrossSections {
  double a1 = 0.0;    ///< linear ionization, MHz/mW
  double a2_0 = 0.0;  ///< quadratic ionization from m_s = 0, MHz/mW^2
  double a2_1 = 0.0;  ///< quadratic ionization from m_s = +-1, MHz/mW^2
  double b1 = 0.0;    ///< linear recombination, MHz/mW
  double b2 = 0.0;    ///< quadratic recombination, MHz/mW^2
  double s1 = 0.0;    ///< spin pumping, MHz/mW

  bool operator==(const CrossSections&) const = default;
};

enum class AgingChannel { uv, blue };

inline const char* to_string(AgingChannel c) { return c == AgingChannel::uv ? "uv" : "blue"; }

enum class Quality { excellent, good, average, poor };

inline const char* to_string(Quality q) {
  switch (q) {
    case Quality::excellent: return "excellent";
    case Quality::good: return "good";
    case Quality::average: return "average";
    case Quality::poor: return "poor";
  }
  return "?";
}

/// Exponential approach of the emitter's charge environment to its aged state.
struct AgingLaw {
  double k0 = 0.0;       ///< pristine k_i at the orange probe power, MHz
  double k_inf = 0.0;    ///< aged asymptote, MHz
  double e_c = 0.0;      ///< characteristic dose, mJ
  double rho0 = 1.0;     ///< pristine relative NV- fraction at rho_power
  double rho_inf = 1.0;  ///< aged relative NV- fraction at rho_power
  double rho_power = 0.0;  ///< power (mW) at which the rho law is defined
  double slow_weight_inf = 0.0;  ///< slow recombination fraction after full UV aging
  double k_r_slow = 1e-3;        ///< slow channel return rate, MHz
  double blue_pulse_fraction = 0.5;  ///< slow weight after a blue pulse relative to a UV pulse

  bool operator==(const AgingLaw&) const = default;
};

struct AgingState {
  double dose_uv = 0.0;    ///< mJ
  double dose_blue = 0.0;  ///< mJ

  double dose(AgingChannel c) const { return c == AgingChannel::uv ? dose_uv : dose_blue; }
  bool pristine() const { return dose_uv == 0.0 && dose_blue == 0.0; }
  bool operator==(const AgingState&) const = default;
};

/// Second (slow) recombination channel opened by UV aging.
struct SlowChannel {
  double weight = 0.0;  ///< fraction of NV0 recombining slowly after a UV pulse
  double blue_fraction = 0.5;
  double k_r_slow = 1e-3;

  /// Slow fraction after an ionizing pulse at this region.
  double weight_after(Region perturbing) const {
    if (perturbing == Region::A) return weight;
    if (perturbing == Region::B) return weight * blue_fraction;
    return 0.0;
  }
  bool operator==(const SlowChannel&) const = default;
};

struct ReadoutParams {
  double eps0 = 0.05;   ///< photons per shot from m_s = 0
  double eps1 = 0.015;  ///< photons per shot from m_s = +-1
  double integration_ns = 300.0;
  double shelving_delay_ns = 300.0;
  std::uint64_t shots = 1000000;

  bool operator==(const ReadoutParams&) const = default;
};

/// Cross sections and slow channel after applying an aging state.
struct AgedView {
  AgingState state;
  std::map<int, CrossSections> calibrations;
  SlowChannel slow;
};

struct NvProfile {
  std::string name;
  std::map<int, CrossSections> calibrations;  ///< pristine, keyed by wavelength in nm
  ReadoutParams readout;
  double green_power = 0.08;         ///< reference green power for relative rho, mW
  double orange_probe_power = 0.3;   ///< power at which k_i^594 is quoted, mW
  std::map<AgingChannel, AgingLaw> aging_laws;
  AgingState aging;
  std::optional<AgedView> aged;  ///< cache filled by aged_parameters
};

}  // namespace nvphoto
