#pragma once

// Three-level charge/spin rate model of the NV center.
//
// Levels are M0 (NV-, m_s = 0), M1c (NV-, m_s = +1 and -1 combined) and Z (NV0).
// Rates are in MHz and times in microseconds.

#include "nvphoto/error.hpp"
#include "nvphoto/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace nvphoto {

struct RateSet {
  double k_i0 = 0.0;  ///< ionization from m_s = 0
  double k_i1 = 0.0;  ///< ionization from each m_s = +-1 level
  double k_s = 0.0;   ///< spin polarization +-1 -> 0
  double k_r = 0.0;   ///< recombination NV0 -> NV-, per spin sublevel

  bool operator==(const RateSet&) const = default;
};

struct LevelState {
  double m0 = 1.0;
  double m1c = 0.0;
  double z = 0.0;

  double total() const { return m0 + m1c + z; }
  linalg::Vec<3> vec() const { return {m0, m1c, z}; }
  static LevelState from(const linalg::Vec<3>& v) { return {v(0), v(1), v(2)}; }

  /// Per-level population of one m_s = +-1 sublevel.
  double m1_per_level() const { return 0.5 * m1c; }

  bool operator==(const LevelState&) const = default;
};

struct DecayConstants {
  double tau1 = 0.0;
  std::optional<double> tau2;  ///< absent in the mono-exponential case
};

inline void validate(const RateSet& r) {
  for (double k : {r.k_i0, r.k_i1, r.k_s, r.k_r}) {
    if (!std::isfinite(k) || k < 0.0) {
      std::ostringstream os;
      os << "rates must be finite and >= 0 (k_i0=" << r.k_i0 << ", k_i1=" << r.k_i1
         << ", k_s=" << r.k_s << ", k_r=" << r.k_r << ")";
      fail(ErrorKind::invalid_parameter, os.str());
    }
  }
}

inline void validate(const LevelState& s) {
  for (double p : {s.m0, s.m1c, s.z})
    if (!std::isfinite(p) || p < -1e-12)
      fail(ErrorKind::invalid_parameter, "populations must be finite and >= 0");
  if (std::abs(s.total() - 1.0) > 1e-9)
    fail(ErrorKind::invalid_parameter, "level populations must sum to 1");
}

/// dN/dt = G N with N = (M0, M1c, Z). Columns sum to zero.
inline linalg::Mat<3> rate_generator(const RateSet& r) {
  validate(r);
  linalg::Mat<3> g;
  g << -r.k_i0, r.k_s, r.k_r,
       0.0, -r.k_i1 - r.k_s, 2.0 * r.k_r,
       r.k_i0, r.k_i1, -3.0 * r.k_r;
  return g;
}

namespace detail {

inline LevelState normalized(linalg::Vec<3> v) {
  v = v.cwiseMax(0.0);
  const double sum = v.sum();
  return LevelState::from(v / sum);
}

}  // namespace detail

/// Populations after time t (us) under constant illumination.
inline LevelState evolve(const RateSet& rates, const LevelState& initial, double t) {
  if (!std::isfinite(t) || t < 0.0) fail(ErrorKind::invalid_parameter, "evolution time must be >= 0");
  validate(initial);
  const auto g = rate_generator(rates);
  if (t == 0.0) return initial;
  return detail::normalized(linalg::expm_apply<3>(g, initial.vec(), t));
}

/// Decay constants of the non-stationary modes.
///
/// tau = 2 / (S +- k_w) with S = k_i0 + k_s + k_i1 + 3 k_r. When k_i0 == k_i1 and
/// k_s == 0 only the charge mode is returned: tau1 = 1 / (k_i + 3 k_r).
inline DecayConstants decay_constants(const RateSet& r) {
  validate(r);
  if (r.k_i0 == r.k_i1 && r.k_s == 0.0) {
    const double rate = r.k_i0 + 3.0 * r.k_r;
    if (rate <= 0.0) fail(ErrorKind::invalid_parameter, "all rates zero: no dynamics");
    return {1.0 / rate, std::nullopt};
  }
  const double s = r.k_i0 + r.k_s + r.k_i1 + 3.0 * r.k_r;
  const double d = -r.k_i0 + r.k_s + r.k_i1;
  const double radicand = d * d - 2.0 * (r.k_i0 + 3.0 * r.k_s - r.k_i1) * r.k_r + 9.0 * r.k_r * r.k_r;
  if (radicand < -1e-12 * std::max(1.0, s * s)) {
    std::ostringstream os;
    os << "complex generator eigenvalues (k_w^2 = " << radicand << ")";
    fail(ErrorKind::oscillatory_regime, os.str());
  }
  const double k_w = std::sqrt(std::max(radicand, 0.0));
  DecayConstants out;
  out.tau1 = 2.0 / (s + k_w);
  const double slow = s - k_w;
  out.tau2 = slow > 0.0 ? 2.0 / slow : std::numeric_limits<double>::infinity();
  return out;
}

/// Stationary populations of the generator.
///
/// If the null space is more than one-dimensional, returns the long-time limit
/// reached from the spin-mixed NV- state (1/3, 2/3, 0).
inline LevelState steady_state(const RateSet& r) {
  validate(r);
  if (r.k_i0 + r.k_i1 == 0.0 && r.k_r == 0.0)
    fail(ErrorKind::no_steady_state, "no ionization and no recombination");

  const bool rank_deficient = (r.k_r == 0.0 && r.k_i0 == 0.0) ||
                              (r.k_r == 0.0 && r.k_i1 == 0.0 && r.k_s == 0.0) ||
                              (r.k_i0 == 0.0 && r.k_i1 == 0.0 && r.k_s == 0.0);
  const auto g = rate_generator(r);
  if (rank_deficient) {
    const double rate = -g.trace();
    const LevelState mixed{1.0 / 3.0, 2.0 / 3.0, 0.0};
    return detail::normalized(linalg::expm_apply<3>(g, mixed.vec(), 60.0 / rate));
  }

  Eigen::Matrix<double, 4, 3> a;
  a.topRows<3>() = g;
  a.row(3).setOnes();
  Eigen::Vector4d b(0.0, 0.0, 0.0, 1.0);
  const linalg::Vec<3> n = a.colPivHouseholderQr().solve(b);
  return detail::normalized(n);
}

/// NV- fraction (M0 + M1c) / (M0 + M1c + Z).
inline double rho_of(const LevelState& s) {
  const double total = s.total();
  if (!(total > 0.0)) fail(ErrorKind::invalid_parameter, "total population is zero");
  return (s.m0 + s.m1c) / total;
}

/// Spin contrast (M0 - M1) / M0 with the per-level M1 = m1c / 2.
inline double contrast_of(const LevelState& s) {
  if (!(s.m0 > 0.0)) fail(ErrorKind::undefined_contrast, "m_s = 0 population is zero");
  return (s.m0 - s.m1_per_level()) / s.m0;
}

}  // namespace nvphoto
