#pragma once

// Inverts observed (power, k_i, rho, contrast) targets into cross sections.
//
// Observables compared against the targets:
//   k_i       ionization rate from m_s = 0, k_i0
//   k_r       per-level recombination rate
//   rho       steady NV- fraction relative to the green-initialized state
//             (absolute for the 520 nm entry itself)
//   contrast  steady model contrast (M0 - M1)/M0

#include "nvphoto/lsq.hpp"
#include "nvphoto/photophysics.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <vector>

namespace nvphoto {

struct CalibrationPoint {
  double power = 0.0;
  std::optional<double> k_i;
  std::optional<double> k_r;
  std::optional<double> rho;
  std::optional<double> contrast;
};

struct WavelengthTargets {
  int wavelength = 0;
  std::vector<CalibrationPoint> points;
  /// Coefficients held at a fixed value, by name (a1, a2_0, a2_1, b1, b2, s1).
  std::map<std::string, double> fixed;
  /// a2_1 = a2_ratio * a2_0 unless a2_1 is fixed. Region B defaults to 3.
  std::optional<double> a2_ratio;
};

struct CalibrationTargets {
  double green_power = 0.08;  ///< reference for relative rho
  std::vector<WavelengthTargets> wavelengths;
  double tolerance = 1e-6;  ///< largest accepted absolute residual
};

struct CalibrationResult {
  std::map<int, CrossSections> calibrations;
  std::map<int, std::vector<double>> residuals;  ///< in target order (k_i, k_r, rho, contrast per point)
  double max_residual = 0.0;
};

namespace detail {

inline constexpr std::array<const char*, 6> kCoefficientNames{"a1", "a2_0", "a2_1", "b1", "b2", "s1"};

inline double& coefficient(CrossSections& cs, int i) {
  switch (i) {
    case 0: return cs.a1;
    case 1: return cs.a2_0;
    case 2: return cs.a2_1;
    case 3: return cs.b1;
    case 4: return cs.b2;
    default: return cs.s1;
  }
}

/// Coefficients a region allows to be nonzero.
inline std::array<bool, 6> allowed_coefficients(Region r) {
  switch (r) {
    case Region::A: return {true, false, false, true, false, false};
    case Region::B: return {true, true, true, false, true, true};
    case Region::C: return {false, true, true, false, true, true};
    case Region::D: return {false, true, true, false, false, true};
  }
  return {};
}

inline std::string describe_residuals(int wavelength, const std::vector<double>& res) {
  std::ostringstream os;
  os << wavelength << " nm residuals [";
  for (std::size_t i = 0; i < res.size(); ++i) os << (i ? ", " : "") << res[i];
  os << "]";
  return os.str();
}

}  // namespace detail

/// Calibrates one wavelength. `green_rho` is the absolute steady NV- fraction of
/// the green reference state (1 when no relative rho targets are used).
inline CrossSections calibrate_wavelength(const WavelengthTargets& targets, double green_rho,
                                          std::vector<double>* residuals_out = nullptr) {
  const Region region = classify_region(targets.wavelength);
  const auto allowed = detail::allowed_coefficients(region);
  if (targets.points.empty())
    fail(ErrorKind::calibration_failure, std::to_string(targets.wavelength) + " nm: no targets");

  CrossSections base;
  std::array<bool, 6> is_fixed{};
  for (const auto& [name, value] : targets.fixed) {
    int idx = -1;
    for (int i = 0; i < 6; ++i)
      if (name == detail::kCoefficientNames[i]) idx = i;
    if (idx < 0) fail(ErrorKind::config, "unknown coefficient '" + name + "'");
    if (!allowed[idx] && value != 0.0)
      fail(ErrorKind::calibration_failure, std::string("region ") + to_string(region) + " requires " + name + " = 0");
    detail::coefficient(base, idx) = value;
    is_fixed[idx] = true;
  }
  const double ratio = targets.a2_ratio.value_or(region == Region::B ? 3.0 : 1.0);
  const bool tie_a2 = allowed[2] && !is_fixed[2];

  // Constraint-forced values before any fitting.
  for (const auto& p : targets.points) {
    if (p.k_r && *p.k_r > 0.0 && region == Region::D)
      fail(ErrorKind::calibration_failure, "region D has no recombination but a k_r target is > 0");
    if (p.contrast && std::abs(*p.contrast) > 1e-12 && region == Region::A)
      fail(ErrorKind::calibration_failure, "region A has no spin pumping but a contrast target is nonzero");
  }

  // Free coefficients, optimized as logarithms to keep them positive.
  std::vector<int> free;
  for (int i = 0; i < 6; ++i)
    if (allowed[i] && !is_fixed[i] && !(i == 2 && tie_a2)) free.push_back(i);

  auto first_k = [&]() -> std::optional<std::pair<double, double>> {
    for (const auto& p : targets.points)
      if (p.k_i && p.power > 0.0) return std::make_pair(p.power, *p.k_i);
    return std::nullopt;
  }();

  lsq::Vector x0(static_cast<Eigen::Index>(free.size()));
  for (std::size_t j = 0; j < free.size(); ++j) {
    double guess = 1.0;
    const int i = free[j];
    if (first_k) {
      const auto [p, k] = *first_k;
      if (i == 0) guess = k / p;
      if (i == 1) guess = (allowed[0] ? 0.05 : 1.0) * k / (p * p);
    }
    x0(static_cast<Eigen::Index>(j)) = std::log(std::max(guess, 1e-6));
  }

  auto build = [&](const lsq::Vector& x) {
    CrossSections cs = base;
    for (std::size_t j = 0; j < free.size(); ++j)
      detail::coefficient(cs, free[j]) = std::exp(x(static_cast<Eigen::Index>(j)));
    if (tie_a2) cs.a2_1 = ratio * cs.a2_0;
    return cs;
  };

  auto residuals = [&](const lsq::Vector& x) {
    const CrossSections cs = build(x);
    std::vector<double> out;
    for (const auto& p : targets.points) {
      const RateSet r = rates_from(cs, p.power);
      if (p.k_i) out.push_back((r.k_i0 - *p.k_i) / std::max(std::abs(*p.k_i), 1e-3));
      if (p.k_r) out.push_back((r.k_r - *p.k_r) / std::max(std::abs(*p.k_r), 1e-3));
      if (p.rho || p.contrast) {
        LevelState s{1.0 / 3.0, 2.0 / 3.0, 0.0};
        if (r.k_i0 + r.k_i1 > 0.0 || r.k_r > 0.0) s = steady_state(r);
        if (p.rho) out.push_back(rho_of(s) / green_rho - *p.rho);
        if (p.contrast) out.push_back((s.m0 > 0.0 ? contrast_of(s) : 0.0) - *p.contrast);
      }
    }
    return lsq::Vector(Eigen::Map<lsq::Vector>(out.data(), static_cast<Eigen::Index>(out.size())));
  };

  CrossSections cs = base;
  lsq::Vector res;
  if (free.empty()) {
    res = residuals(x0);
  } else {
    lsq::Options opt;
    opt.max_iterations = 500;
    opt.relative_tolerance = 1e-14;
    auto fit = lsq::minimize(residuals, x0, opt);
    cs = build(fit.params);
    res = fit.residuals;
    for (std::size_t j = 0; j < free.size(); ++j) {
      const double v = detail::coefficient(cs, free[j]);
      if (v < 1e-12 && (free[j] == 0 || free[j] == 3) && (region == Region::A || region == Region::B))
        fail(ErrorKind::calibration_failure, std::to_string(targets.wavelength) + " nm: " +
                                                 detail::kCoefficientNames[free[j]] +
                                                 " driven to zero; " + detail::describe_residuals(targets.wavelength, {res.data(), res.data() + res.size()}));
    }
  }
  std::vector<double> res_vec(res.data(), res.data() + res.size());
  if (residuals_out) *residuals_out = std::move(res_vec);
  return cs;
}

/// Calibrates every wavelength in `targets`; the 520 nm entry (if present) is
/// solved first because relative rho targets are normalized to it.
inline CalibrationResult calibrate_defaults(const CalibrationTargets& targets) {
  CalibrationResult out;
  double green_rho = 1.0;
  std::vector<const WavelengthTargets*> order;
  for (const auto& w : targets.wavelengths)
    if (w.wavelength == kGreenNm) order.insert(order.begin(), &w);
    else order.push_back(&w);

  bool have_green = false;
  for (const auto* w : order) {
    const bool needs_green = w->wavelength != kGreenNm &&
                             std::any_of(w->points.begin(), w->points.end(), [](const auto& p) { return p.rho.has_value(); });
    if (needs_green && !have_green)
      fail(ErrorKind::calibration_failure, "relative rho targets need a 520 nm calibration");
    std::vector<double> res;
    CrossSections cs = calibrate_wavelength(*w, w->wavelength == kGreenNm ? 1.0 : green_rho, &res);
    if (w->wavelength == kGreenNm) {
      green_rho = detail::steady_rho(cs, targets.green_power);
      have_green = true;
    }
    for (double r : res) out.max_residual = std::max(out.max_residual, std::abs(r));
    const bool off = std::any_of(res.begin(), res.end(), [&](double r) { return !(std::abs(r) <= targets.tolerance); });
    if (off) fail(ErrorKind::calibration_failure, detail::describe_residuals(w->wavelength, res));
    validate(classify_region(w->wavelength), cs);
    out.calibrations[w->wavelength] = cs;
    out.residuals[w->wavelength] = std::move(res);
  }
  return out;
}

}  // namespace nvphoto
