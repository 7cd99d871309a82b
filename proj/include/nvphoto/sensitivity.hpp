#pragma once

// Sensing figures of merit for radical pairs photogenerated next to the NV.
// eta_nv ~ sqrt(rho) c, normalized to the green-initialized state; the pair
// decays with lifetime tau_m while the NV waits t_d before it is read.

#include "nvphoto/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace nvphoto {

enum class Scheme { i, ii };

inline const char* to_string(Scheme s) { return s == Scheme::i ? "i" : "ii"; }

struct SensitivityCurve {
  std::vector<double> x;       ///< pulse energy (pJ) for scheme i, green re-init length (us) for scheme ii
  std::vector<double> eta_nv;  ///< normalized to the green-initialized state
  Scheme scheme = Scheme::i;
  double t_d_min_ns = 300.0;
  std::optional<double> knee;  ///< largest x with eta_nv >= 0.95 max (energy curves)
};

struct RadicalPairSpec {
  double tau_m = 1.0;  ///< us
};

struct TotalSensitivity {
  std::vector<double> t_d;  ///< us
  std::vector<double> eta_total;
  double best_t_d = 0.0;
  double best_eta = 0.0;
};

inline constexpr double kKneeFraction = 0.95;

inline double nv_sensitivity(double rho, double c, double baseline_c) {
  if (!(baseline_c > 0.0)) fail(ErrorKind::invalid_parameter, "baseline contrast must be > 0");
  if (!std::isfinite(rho) || !std::isfinite(c)) return 0.0;
  return std::max(0.0, std::sqrt(std::max(rho, 0.0)) * c / baseline_c);
}

namespace detail {

inline ProtocolTag protocol_for(double wavelength_nm, bool recovery) {
  switch (classify_region(wavelength_nm)) {
    case Region::A: return recovery ? ProtocolTag::IIA : ProtocolTag::IA;
    case Region::B: return recovery ? ProtocolTag::IIB : ProtocolTag::IB;
    default: return recovery ? ProtocolTag::IIC : ProtocolTag::IC;
  }
}

/// eta_nv along a noiseless trace, against the REF trace of the same init.
inline std::vector<double> eta_along(const NvProfile& profile, const Protocol& protocol,
                                     const std::vector<double>& t_p) {
  Protocol ref = protocol;
  ref.tag = ProtocolTag::REF;
  ref.infinite_shots = true;
  Protocol p = protocol;
  p.infinite_shots = true;
  const Trace base = run_protocol(profile, ref, t_p, 0);
  const Trace tr = run_protocol(profile, p, t_p, 0);
  const auto curve = rho_contrast_curves(tr, base);
  const double c_base = (base.i_ref[0] - base.i_sig[0]) / base.i_ref[0];
  std::vector<double> eta;
  for (std::size_t i = 0; i < curve.rho.size(); ++i)
    eta.push_back(curve.flagged[i] ? 0.0 : nv_sensitivity(curve.rho[i], curve.c[i], c_base));
  return eta;
}

inline double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  if (at <= x.front()) return y.front();
  if (at >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), at);
  const auto j = static_cast<std::size_t>(it - x.begin());
  const double f = (at - x[j - 1]) / (x[j] - x[j - 1]);
  return y[j - 1] + f * (y[j] - y[j - 1]);
}

}  // namespace detail

/// eta_nv versus energy delivered by an I* pulse of the given length.
inline SensitivityCurve sensitivity_vs_energy(const NvProfile& profile, double wavelength_nm, double power,
                                              const std::vector<double>& t_p) {
  if (!(power > 0.0)) fail(ErrorKind::invalid_parameter, "pulse power must be > 0");
  Protocol p = make_protocol(detail::protocol_for(wavelength_nm, false), power, profile);
  p.perturb.wavelength = wavelength_nm;
  SensitivityCurve out;
  out.scheme = Scheme::i;
  out.t_d_min_ns = profile.readout.shelving_delay_ns;
  out.eta_nv = detail::eta_along(profile, p, t_p);
  for (double t : t_p) out.x.push_back(LaserPulse{wavelength_nm, power, t}.energy_pj());
  const double peak = *std::max_element(out.eta_nv.begin(), out.eta_nv.end());
  for (std::size_t i = 0; i < out.x.size(); ++i)
    if (out.eta_nv[i] >= kKneeFraction * peak) out.knee = out.x[i];
  return out;
}

/// eta_nv versus green re-initialization length after a perturbing pulse.
inline SensitivityCurve recovery_curve(const NvProfile& profile, const LaserPulse& perturb, double green_power,
                                       const std::vector<double>& t_p) {
  if (!(perturb.duration > 0.0) || !(perturb.power > 0.0))
    fail(ErrorKind::invalid_parameter, "perturbing pulse needs power and duration > 0");
  if (!(green_power > 0.0)) fail(ErrorKind::invalid_parameter, "green power must be > 0");
  Protocol p = make_protocol(detail::protocol_for(perturb.wavelength, true), perturb.power, profile);
  p.perturb = perturb;
  p.init.power = green_power;
  SensitivityCurve out;
  out.scheme = Scheme::ii;
  out.t_d_min_ns = profile.readout.shelving_delay_ns;
  out.x = t_p;
  out.eta_nv = detail::eta_along(profile, p, t_p);
  return out;
}

/// eta_nv(t_d) exp(-t_d / tau_m). Scheme ii reads after t_d = t_d_min + re-init
/// length; scheme i reads without re-initialization, so eta_nv is the value at
/// `pulse_energy_pj`, which must not exceed the curve's knee.
inline TotalSensitivity total_sensitivity(const SensitivityCurve& curve, const RadicalPairSpec& rp, Scheme scheme,
                                          double pulse_energy_pj = 0.0) {
  if (!(rp.tau_m > 0.0)) fail(ErrorKind::invalid_parameter, "tau_m must be > 0");
  if (curve.x.empty() || curve.x.size() != curve.eta_nv.size())
    fail(ErrorKind::invalid_parameter, "sensitivity curve is empty or inconsistent");
  if (scheme != curve.scheme)
    fail(ErrorKind::invalid_parameter, std::string("scheme ") + to_string(scheme) + " needs a scheme " +
                                           to_string(scheme) + " curve");
  const double t_d_min = curve.t_d_min_ns * 1e-3;
  TotalSensitivity out;
  if (scheme == Scheme::ii) {
    for (std::size_t i = 0; i < curve.x.size(); ++i) {
      out.t_d.push_back(t_d_min + curve.x[i]);
      out.eta_total.push_back(curve.eta_nv[i] * std::exp(-out.t_d.back() / rp.tau_m));
    }
  } else {
    if (curve.knee && pulse_energy_pj > *curve.knee)
      fail(ErrorKind::invalid_parameter, "pulse energy exceeds the eta-preserving threshold for scheme i");
    const double eta = detail::interpolate(curve.x, curve.eta_nv, pulse_energy_pj);
    for (int j = 0; j <= 100; ++j) {
      out.t_d.push_back(t_d_min + j * 0.1 * std::max(t_d_min, rp.tau_m));
      out.eta_total.push_back(eta * std::exp(-out.t_d.back() / rp.tau_m));
    }
  }
  // Strict comparison keeps the smallest t_d among ties.
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.eta_total.size(); ++i)
    if (out.eta_total[i] > out.eta_total[best]) best = i;
  out.best_t_d = out.t_d[best];
  out.best_eta = out.eta_total[best];
  return out;
}

}  // namespace nvphoto
