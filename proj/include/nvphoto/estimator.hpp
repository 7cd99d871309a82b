#pragma once

// Trace inversion: joint exponential fits of the reference and signal traces,
// model selection, bootstrap intervals, rho/c curves and rate extraction.
//
//   ref(t) = g1      + a1 exp(-t/tau1) [+ b1 exp(-t/tau2)]
//   sig(t) = g1 + g2 + a2 exp(-t/tau1) [+ b2 exp(-t/tau2)]

#include "nvphoto/lsq.hpp"
#include "nvphoto/pulsesim.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace nvphoto {

enum class ModelOrder { mono, bi };

inline const char* to_string(ModelOrder m) { return m == ModelOrder::mono ? "mono" : "bi"; }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double half_width() const { return 0.5 * (hi - lo); }
};

struct FitResult {
  ModelOrder model = ModelOrder::mono;
  double gamma1 = 0.0, gamma2 = 0.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  double beta1 = 0.0, beta2 = 0.0;
  double tau1 = std::numeric_limits<double>::quiet_NaN();
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  double residual = 0.0;  ///< sum of squared residuals over both traces
  std::size_t n_points = 0;  ///< points per trace
  int iterations = 0;
  bool converged = false;
  bool flat = false;  ///< amplitudes unidentifiable; tau not applicable
  bool bootstrap_unstable = false;
  std::map<std::string, Interval> ci;  ///< 95 % bootstrap intervals
  std::map<std::string, double> se;    ///< bootstrap standard errors

  int parameter_count() const { return model == ModelOrder::mono ? 5 : 8; }

  std::vector<std::pair<std::string, double>> parameters() const {
    std::vector<std::pair<std::string, double>> p{
        {"gamma1", gamma1}, {"gamma2", gamma2}, {"alpha1", alpha1}, {"alpha2", alpha2}, {"tau1", tau1}};
    if (model == ModelOrder::bi) {
      p.insert(p.begin() + 4, {{"beta1", beta1}, {"beta2", beta2}});
      p.emplace_back("tau2", tau2);
    }
    return p;
  }

  double ref_at(double t) const {
    double v = gamma1;
    if (flat) return v;
    v += alpha1 * std::exp(-t / tau1);
    if (model == ModelOrder::bi) v += beta1 * std::exp(-t / tau2);
    return v;
  }
  double sig_at(double t) const {
    double v = gamma1 + gamma2;
    if (flat) return v;
    v += alpha2 * std::exp(-t / tau1);
    if (model == ModelOrder::bi) v += beta2 * std::exp(-t / tau2);
    return v;
  }

  /// Small-sample corrected Akaike criterion over the 2N joint residuals.
  double aicc() const {
    const double n = 2.0 * static_cast<double>(n_points);
    const double k = parameter_count();
    const double ssr = std::max(residual, std::numeric_limits<double>::min());
    return n * std::log(ssr / n) + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
  }
};

/// Raised when the optimizer does not converge; carries the last iterate.
class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, FitResult last) : Error(ErrorKind::fit_failure, what), last_(std::move(last)) {}
  const FitResult& last_iterate() const { return last_; }

 private:
  FitResult last_;
};

struct FitOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
  bool poisson_weights = false;  ///< weight residuals by 1/sqrt(count variance)
};

namespace detail {

struct FitData {
  std::vector<double> t, ref, sig, w_ref, w_sig;
};

inline FitData fit_data(const Trace& tr, const FitOptions& opt) {
  FitData d{tr.t_p, tr.i_ref, tr.i_sig, std::vector<double>(tr.size(), 1.0), std::vector<double>(tr.size(), 1.0)};
  if (opt.poisson_weights && tr.shots > 0) {
    const double floor = 1.0 / static_cast<double>(tr.shots);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      d.w_ref[i] = 1.0 / std::sqrt(std::max(tr.i_ref[i], floor) / static_cast<double>(tr.shots));
      d.w_sig[i] = 1.0 / std::sqrt(std::max(tr.i_sig[i], floor) / static_cast<double>(tr.shots));
    }
  }
  return d;
}

// Parameter vector: mono [g1 g2 a1 a2 ln tau1], bi [g1 g2 a1 a2 b1 b2 ln tau1 ln tau2].
struct ExpModel {
  const FitData* d;
  bool bi;

  Eigen::Index size() const { return bi ? 8 : 5; }

  lsq::Vector residuals(const lsq::Vector& p) const {
    const std::size_t n = d->t.size();
    lsq::Vector r(2 * n);
    const double t1 = std::exp(p(bi ? 6 : 4));
    const double t2 = bi ? std::exp(p(7)) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e1 = std::exp(-d->t[i] / t1);
      double ref = p(0) + p(2) * e1;
      double sig = p(0) + p(1) + p(3) * e1;
      if (bi) {
        const double e2 = std::exp(-d->t[i] / t2);
        ref += p(4) * e2;
        sig += p(5) * e2;
      }
      r(static_cast<Eigen::Index>(i)) = d->w_ref[i] * (ref - d->ref[i]);
      r(static_cast<Eigen::Index>(n + i)) = d->w_sig[i] * (sig - d->sig[i]);
    }
    return r;
  }

  lsq::Matrix jacobian(const lsq::Vector& p) const {
    const std::size_t n = d->t.size();
    lsq::Matrix j = lsq::Matrix::Zero(static_cast<Eigen::Index>(2 * n), size());
    const double t1 = std::exp(p(bi ? 6 : 4));
    const double t2 = bi ? std::exp(p(7)) : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ri = static_cast<Eigen::Index>(i);
      const auto si = static_cast<Eigen::Index>(n + i);
      const double t = d->t[i];
      const double e1 = std::exp(-t / t1);
      const double wr = d->w_ref[i], ws = d->w_sig[i];
      j(ri, 0) = wr;
      j(si, 0) = ws;
      j(si, 1) = ws;
      j(ri, 2) = wr * e1;
      j(si, 3) = ws * e1;
      // d/d(ln tau) exp(-t/tau) = exp(-t/tau) t/tau
      const int l1 = bi ? 6 : 4;
      j(ri, l1) = wr * p(2) * e1 * t / t1;
      j(si, l1) = ws * p(3) * e1 * t / t1;
      if (bi) {
        const double e2 = std::exp(-t / t2);
        j(ri, 4) = wr * e2;
        j(si, 5) = ws * e2;
        j(ri, 7) = wr * p(4) * e2 * t / t2;
        j(si, 7) = ws * p(5) * e2 * t / t2;
      }
    }
    return j;
  }
};

/// Linear least squares of the amplitudes for fixed time constants; returns
/// the full parameter vector and its cost.
inline std::pair<lsq::Vector, double> linear_amplitudes(const FitData& d, const std::vector<double>& taus) {
  const std::size_t n = d.t.size();
  const bool bi = taus.size() == 2;
  // Columns: g1, g2, a1, a2 [, b1, b2]
  const Eigen::Index k = bi ? 6 : 4;
  lsq::Matrix a = lsq::Matrix::Zero(static_cast<Eigen::Index>(2 * n), k);
  lsq::Vector y(static_cast<Eigen::Index>(2 * n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = static_cast<Eigen::Index>(i);
    const auto si = static_cast<Eigen::Index>(n + i);
    const double e1 = std::exp(-d.t[i] / taus[0]);
    a(ri, 0) = d.w_ref[i];
    a(si, 0) = d.w_sig[i];
    a(si, 1) = d.w_sig[i];
    a(ri, 2) = d.w_ref[i] * e1;
    a(si, 3) = d.w_sig[i] * e1;
    if (bi) {
      const double e2 = std::exp(-d.t[i] / taus[1]);
      a(ri, 4) = d.w_ref[i] * e2;
      a(si, 5) = d.w_sig[i] * e2;
    }
    y(ri) = d.w_ref[i] * d.ref[i];
    y(si) = d.w_sig[i] * d.sig[i];
  }
  const lsq::Vector c = a.colPivHouseholderQr().solve(y);
  const double cost = (a * c - y).squaredNorm();
  lsq::Vector p(bi ? 8 : 5);
  p.head(k) = c;
  p(k) = std::log(taus[0]);
  if (bi) p(7) = std::log(taus[1]);
  return {p, std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity()};
}

/// Time-constant candidates spanning the sampled window.
inline std::vector<double> tau_grid(const std::vector<double>& t, int count) {
  double dt_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < t.size(); ++i) dt_min = std::min(dt_min, t[i] - t[i - 1]);
  const double span = t.back() - t.front();
  const double lo = std::max(dt_min / 3.0, span * 1e-9);
  const double hi = 3.0 * span;
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, i / (count - 1.0));
  return g;
}

/// tau from a log-linear regression on the detrended rho combination.
inline std::optional<double> log_linear_tau(const FitData& d) {
  const std::size_t n = d.t.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (d.ref[i] + 2.0 * d.sig[i]) / 3.0;
  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  const double base = std::accumulate(y.end() - static_cast<long>(tail), y.end(), 0.0) / static_cast<double>(tail);
  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v - base));
  if (!(peak > 0.0)) return std::nullopt;
  const double sign = (y.front() - base) >= 0.0 ? 1.0 : -1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = sign * (y[i] - base);
    if (v < 0.1 * peak) break;
    const double ly = std::log(v);
    sx += d.t[i];
    sy += ly;
    sxx += d.t[i] * d.t[i];
    sxy += d.t[i] * ly;
    ++m;
  }
  if (m < 2) return std::nullopt;
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  if (!(slope < 0.0) || !std::isfinite(slope)) return std::nullopt;
  return -1.0 / slope;
}

inline FitResult to_fit_result(const lsq::Vector& p, bool bi, const lsq::Result& r, std::size_t n) {
  FitResult f;
  f.model = bi ? ModelOrder::bi : ModelOrder::mono;
  f.gamma1 = p(0);
  f.gamma2 = p(1);
  f.alpha1 = p(2);
  f.alpha2 = p(3);
  if (bi) {
    f.beta1 = p(4);
    f.beta2 = p(5);
    f.tau1 = std::exp(p(6));
    f.tau2 = std::exp(p(7));
    if (f.tau2 < f.tau1) {
      std::swap(f.tau1, f.tau2);
      std::swap(f.alpha1, f.beta1);
      std::swap(f.alpha2, f.beta2);
    }
  } else {
    f.tau1 = std::exp(p(4));
  }
  f.residual = r.cost;
  f.n_points = n;
  f.iterations = r.iterations;
  f.converged = r.converged;
  return f;
}

inline lsq::Vector to_params(const FitResult& f) {
  const bool bi = f.model == ModelOrder::bi;
  lsq::Vector p(bi ? 8 : 5);
  p(0) = f.gamma1;
  p(1) = f.gamma2;
  p(2) = f.alpha1;
  p(3) = f.alpha2;
  if (bi) {
    p(4) = f.beta1;
    p(5) = f.beta2;
    p(6) = std::log(f.tau1);
    p(7) = std::log(f.tau2);
  } else {
    p(4) = std::log(f.tau1);
  }
  return p;
}

inline lsq::Result run_lm(const ExpModel& m, const lsq::Vector& start, const FitOptions& opt) {
  lsq::Options o;
  o.max_iterations = opt.max_iterations;
  o.relative_tolerance = opt.relative_tolerance;
  return lsq::minimize([&](const lsq::Vector& p) { return m.residuals(p); },
                       [&](const lsq::Vector& p, const lsq::Vector&) { return m.jacobian(p); }, start, o);
}

inline FitResult flat_result(const FitData& d, std::size_t n) {
  FitResult f;
  const double mr = std::accumulate(d.ref.begin(), d.ref.end(), 0.0) / static_cast<double>(n);
  const double ms = std::accumulate(d.sig.begin(), d.sig.end(), 0.0) / static_cast<double>(n);
  f.gamma1 = mr;
  f.gamma2 = ms - mr;
  f.flat = true;
  f.converged = true;
  for (std::size_t i = 0; i < n; ++i)
    f.residual += std::pow(d.w_ref[i] * (d.ref[i] - mr), 2) + std::pow(d.w_sig[i] * (d.sig[i] - ms), 2);
  f.n_points = n;
  return f;
}

inline bool is_constant(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo <= 1e-12 * std::max(1e-300, std::max(std::abs(*lo), std::abs(*hi)));
}

/// Amplitudes of a mono fit indistinguishable from zero at 3 sigma.
inline bool amplitudes_unidentifiable(const ExpModel& m, const lsq::Result& r) {
  const auto n = r.residuals.size();
  const auto k = m.size();
  if (n <= k) return false;
  const double s2 = r.cost / static_cast<double>(n - k);
  if (s2 == 0.0) return false;
  const lsq::Matrix info = r.jacobian.transpose() * r.jacobian;
  Eigen::FullPivLU<lsq::Matrix> lu(info);
  if (!lu.isInvertible()) return true;
  const lsq::Matrix cov = lu.inverse() * s2;
  const double se1 = std::sqrt(std::max(cov(2, 2), 0.0));
  const double se2 = std::sqrt(std::max(cov(3, 3), 0.0));
  return std::abs(r.params(2)) < 3.0 * se1 && std::abs(r.params(3)) < 3.0 * se2;
}

}  // namespace detail

/// Joint least-squares fit of both traces with shared time constants.
inline FitResult fit_exponential(const Trace& trace, ModelOrder order, const FitOptions& opt = {}) {
  validate(trace);
  const bool bi = order == ModelOrder::bi;
  const std::size_t n = trace.size();
  const std::size_t n_params = bi ? 8 : 5;
  if (2 * n < 2 * n_params)
    fail(ErrorKind::invalid_parameter, "trace has too few points for a " + std::string(to_string(order)) + " fit");

  const auto d = detail::fit_data(trace, opt);
  if (detail::is_constant(d.ref) && detail::is_constant(d.sig)) return detail::flat_result(d, n);

  const detail::ExpModel mono_model{&d, false};
  std::vector<lsq::Vector> mono_starts;
  const auto grid = detail::tau_grid(d.t, bi ? 40 : 60);
  {
    double best = std::numeric_limits<double>::infinity();
    lsq::Vector best_p;
    for (double tau : grid) {
      auto [p, cost] = detail::linear_amplitudes(d, {tau});
      if (cost < best) best = cost, best_p = p;
    }
    mono_starts.push_back(best_p);
    if (auto tau = detail::log_linear_tau(d)) mono_starts.push_back(detail::linear_amplitudes(d, {*tau}).first);
  }

  lsq::Result mono_best;
  mono_best.cost = std::numeric_limits<double>::infinity();
  for (const auto& s : mono_starts) {
    auto r = detail::run_lm(mono_model, s, opt);
    if (r.params.allFinite() && r.cost < mono_best.cost) mono_best = r;
  }
  if (!std::isfinite(mono_best.cost)) fail(ErrorKind::fit_failure, "mono-exponential fit diverged");
  if (detail::amplitudes_unidentifiable(mono_model, mono_best)) return detail::flat_result(d, n);

  if (!bi) {
    auto f = detail::to_fit_result(mono_best.params, false, mono_best, n);
    if (!mono_best.converged) throw FitFailure("mono-exponential fit did not converge", f);
    return f;
  }

  // Bi: seeds from the mono tau (tau2 = 100 tau1 and splits around it) and
  // the best pairs of a coarse grid of fixed time constants.
  const double t_mono = std::exp(mono_best.params(4));
  std::vector<std::pair<double, double>> pairs{
      {t_mono, 100.0 * t_mono}, {t_mono / 100.0, t_mono}, {t_mono / 10.0, t_mono}, {t_mono / 3.0, 3.0 * t_mono}};
  std::vector<std::pair<double, std::pair<double, double>>> scored;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i + 2; j < grid.size(); ++j)
      scored.push_back({detail::linear_amplitudes(d, {grid[i], grid[j]}).second, {grid[i], grid[j]}});
  std::partial_sort(scored.begin(), scored.begin() + std::min<std::size_t>(3, scored.size()), scored.end(),
                    [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, scored.size()); ++i) pairs.push_back(scored[i].second);

  const detail::ExpModel bi_model{&d, true};
  lsq::Result best;
  best.cost = std::numeric_limits<double>::infinity();
  for (const auto& [ta, tb] : pairs) {
    auto r = detail::run_lm(bi_model, detail::linear_amplitudes(d, {ta, tb}).first, opt);
    if (r.params.allFinite() && r.cost < best.cost) best = r;
  }
  if (!std::isfinite(best.cost)) fail(ErrorKind::fit_failure, "bi-exponential fit diverged");
  auto f = detail::to_fit_result(best.params, true, best, n);
  if (!best.converged) throw FitFailure("bi-exponential fit did not converge", f);
  return f;
}

namespace detail {

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Residual bootstrap: resamples (reference, signal) residual pairs with
/// replacement onto the fitted curves and refits from the fitted parameters.
/// Traces with a known shot count get Poisson-standardized residuals.
inline FitResult bootstrap_ci(const Trace& trace, const FitResult& fit, int resamples, std::uint64_t seed,
                              const FitOptions& opt = {}) {
  if (resamples < 2) fail(ErrorKind::invalid_parameter, "bootstrap needs at least 2 resamples");
  FitResult out = fit;
  if (fit.flat) return out;
  validate(trace);
  const bool bi = fit.model == ModelOrder::bi;
  const std::size_t n = trace.size();
  // Shot noise scales with sqrt(mean counts), so residuals are standardized by
  // that scale before resampling and rescaled at the point they land on.
  const double floor = trace.shots > 0 ? 1.0 / static_cast<double>(trace.shots) : 0.0;
  auto scale = [&](double mean) { return trace.shots > 0 ? std::sqrt(std::max(mean, floor)) : 1.0; };
  std::vector<double> f_ref(n), f_sig(n), s_ref(n), s_sig(n), r_ref(n), r_sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    f_ref[i] = fit.ref_at(trace.t_p[i]);
    f_sig[i] = fit.sig_at(trace.t_p[i]);
    s_ref[i] = scale(f_ref[i]);
    s_sig[i] = scale(f_sig[i]);
    r_ref[i] = (trace.i_ref[i] - f_ref[i]) / s_ref[i];
    r_sig[i] = (trace.i_sig[i] - f_sig[i]) / s_sig[i];
  }

  const auto names = fit.parameters();
  std::vector<std::vector<double>> samples(names.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const lsq::Vector start = detail::to_params(fit);
  int failures = 0;
  for (int b = 0; b < resamples; ++b) {
    Trace boot = trace;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng);
      boot.i_ref[i] = f_ref[i] + r_ref[j] * s_ref[i];
      boot.i_sig[i] = f_sig[i] + r_sig[j] * s_sig[i];
    }
    const auto d = detail::fit_data(boot, opt);
    const detail::ExpModel m{&d, bi};
    const auto r = detail::run_lm(m, start, opt);
    if (!r.converged || !r.params.allFinite()) {
      ++failures;
      continue;
    }
    const auto f = detail::to_fit_result(r.params, bi, r, n);
    const auto vals = f.parameters();
    for (std::size_t k = 0; k < vals.size(); ++k) samples[k].push_back(vals[k].second);
  }
  out.bootstrap_unstable = failures > 0.05 * resamples;
  if (samples[0].size() < 2) {
    out.bootstrap_unstable = true;
    return out;
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto& s = samples[k];
    out.ci[names[k].first] = {detail::percentile(s, 0.025), detail::percentile(s, 0.975)};
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    out.se[names[k].first] = std::sqrt(var / static_cast<double>(s.size() - 1));
  }
  return out;
}

struct SelectionOptions {
  double aicc_threshold = 10.0;
  double amplitude_sigmas = 3.0;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 0;
  FitOptions fit{};
};

struct ModelSelection {
  ModelOrder order = ModelOrder::mono;
  FitResult mono;
  std::optional<FitResult> bi;  ///< with bootstrap errors when the criterion favored it
  double delta_aicc = 0.0;      ///< AICc(mono) - AICc(bi)
};

/// Chooses bi only if AICc improves by more than the threshold and both
/// second-component amplitudes exceed the configured multiple of their
/// bootstrap standard error.
inline ModelSelection select_model(const Trace& trace, const SelectionOptions& opt = {}) {
  ModelSelection sel;
  sel.mono = fit_exponential(trace, ModelOrder::mono, opt.fit);
  if (sel.mono.flat || trace.size() < 8) return sel;
  FitResult bi;
  try {
    bi = fit_exponential(trace, ModelOrder::bi, opt.fit);
  } catch (const FitFailure&) {
    return sel;
  }
  if (bi.flat) return sel;
  sel.delta_aicc = sel.mono.aicc() - bi.aicc();
  sel.bi = bi;
  if (!(sel.delta_aicc > opt.aicc_threshold)) return sel;
  sel.bi = bootstrap_ci(trace, bi, opt.bootstrap_resamples, opt.seed, opt.fit);
  const auto& se = sel.bi->se;
  if (se.empty()) return sel;
  const bool b1 = std::abs(sel.bi->beta1) > opt.amplitude_sigmas * se.at("beta1");
  const bool b2 = std::abs(sel.bi->beta2) > opt.amplitude_sigmas * se.at("beta2");
  if (b1 && b2) sel.order = ModelOrder::bi;
  return sel;
}

// ---------------------------------------------------------------------------
// rho and contrast curves

struct RhoContrastCurve {
  std::vector<double> t_p;
  std::vector<double> rho;  ///< relative NV- fraction
  std::vector<double> c;    ///< ODMR contrast, NaN where undefined
  std::vector<bool> flagged;
  double i_ref0 = 0.0;
  double i_sig0 = 0.0;
};

/// (1/3 I_ref + 2/3 I_sig) normalized to the baseline, and (I_ref - I_sig)/I_ref.
/// Uses t_p-matched baseline values when the grids coincide, else the baseline mean.
inline RhoContrastCurve rho_contrast_curves(const Trace& trace, const Trace& baseline) {
  if (trace.t_p.empty() || baseline.t_p.empty()) fail(ErrorKind::invalid_parameter, "empty trace");
  bool matched = trace.t_p.size() == baseline.t_p.size();
  for (std::size_t i = 0; matched && i < trace.size(); ++i)
    matched = std::abs(trace.t_p[i] - baseline.t_p[i]) <= 1e-12 * std::max(1.0, std::abs(trace.t_p[i]));
  const double mean_ref = std::accumulate(baseline.i_ref.begin(), baseline.i_ref.end(), 0.0) / baseline.size();
  const double mean_sig = std::accumulate(baseline.i_sig.begin(), baseline.i_sig.end(), 0.0) / baseline.size();

  RhoContrastCurve out;
  out.t_p = trace.t_p;
  out.i_ref0 = mean_ref;
  out.i_sig0 = mean_sig;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double ref0 = matched ? baseline.i_ref[i] : mean_ref;
    const double sig0 = matched ? baseline.i_sig[i] : mean_sig;
    const double denom = ref0 / 3.0 + 2.0 * sig0 / 3.0;
    if (!(denom > 0.0)) fail(ErrorKind::invalid_parameter, "baseline has zero counts");
    out.rho.push_back((trace.i_ref[i] / 3.0 + 2.0 * trace.i_sig[i] / 3.0) / denom);
    const bool undefined = !(trace.i_ref[i] > 0.0);
    out.flagged.push_back(undefined);
    out.c.push_back(undefined ? std::numeric_limits<double>::quiet_NaN()
                              : (trace.i_ref[i] - trace.i_sig[i]) / trace.i_ref[i]);
  }
  return out;
}

/// Model contrast (M0 - M1)/M0 from the means with the eps1 leakage removed.
inline double corrected_contrast(double i_ref, double i_sig, const ReadoutParams& p) {
  if (!(i_ref > 0.0)) fail(ErrorKind::undefined_contrast, "reference counts are zero");
  return model_contrast((i_ref - i_sig) / i_ref, p);
}

/// Trace whose two channels both carry the rho combination 1/3 I_ref + 2/3 I_sig.
/// It contains only the charge mode of the dynamics.
inline Trace charge_channel(const Trace& tr) {
  Trace out = tr;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double v = tr.i_ref[i] / 3.0 + 2.0 * tr.i_sig[i] / 3.0;
    out.i_ref[i] = v;
    out.i_sig[i] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// rates

enum class RateProtocol { ionization, recombination };
enum class RateStructure { spin_independent, spin_dependent, slow_channel };

struct RateContext {
  RateProtocol protocol = RateProtocol::ionization;
  RateStructure structure = RateStructure::spin_independent;
  double k_r = 0.0;  ///< known recombination at the perturbing wavelength (ionization protocols), MHz
};

struct RateEstimate {
  double value = 0.0;
  double uncertainty = 0.0;      ///< delta-method half width of the 95 % interval
  std::optional<Interval> ci;    ///< transformed bootstrap interval
};

struct RateEstimates {
  std::optional<RateEstimate> k_i;
  std::optional<RateEstimate> k_r;
  std::optional<RateEstimate> recovery_rate;  ///< 1/tau1, MHz
  std::optional<RateEstimate> k_r_slow;
  std::optional<double> slow_fraction;
};

namespace detail {

/// 1/tau with the bootstrap interval mapped through the reciprocal.
inline RateEstimate reciprocal(double tau, const std::optional<Interval>& tau_ci, double scale = 1.0) {
  RateEstimate e;
  e.value = scale / tau;
  if (tau_ci) {
    e.uncertainty = scale * tau_ci->half_width() / (tau * tau);
    if (tau_ci->lo > 0.0) e.ci = Interval{scale / tau_ci->hi, scale / tau_ci->lo};
  }
  return e;
}

inline std::optional<Interval> ci_of(const FitResult& f, const std::string& name) {
  auto it = f.ci.find(name);
  if (it == f.ci.end()) return std::nullopt;
  return it->second;
}

}  // namespace detail

/// Rates from fitted time constants. Ionization: k_i = 1/tau - 3 k_r using the
/// contextual k_r; recombination: k_r = 1/(3 tau1) with green ionization folded
/// into the net recovery rate 1/tau1.
inline RateEstimates extract_rates(const FitResult& fit, const RateContext& ctx) {
  if (fit.flat) fail(ErrorKind::fit_failure, "flat trace: no time constant to convert");
  const bool needs_bi = ctx.structure != RateStructure::spin_independent;
  if (needs_bi != (fit.model == ModelOrder::bi))
    fail(ErrorKind::invalid_parameter, std::string("fit model '") + to_string(fit.model) +
                                           "' does not match the rate structure of the context");
  RateEstimates out;
  const double amp1 = std::abs(fit.alpha1 / 3.0 + 2.0 * fit.alpha2 / 3.0);
  const double amp2 = std::abs(fit.beta1 / 3.0 + 2.0 * fit.beta2 / 3.0);

  if (ctx.protocol == RateProtocol::ionization) {
    // Charge mode: the component carrying the rho amplitude.
    const bool second = fit.model == ModelOrder::bi && amp2 > amp1;
    const double tau = second ? fit.tau2 : fit.tau1;
    auto e = detail::reciprocal(tau, detail::ci_of(fit, second ? "tau2" : "tau1"));
    e.value -= 3.0 * ctx.k_r;
    if (e.ci) e.ci = Interval{e.ci->lo - 3.0 * ctx.k_r, e.ci->hi - 3.0 * ctx.k_r};
    out.k_i = e;
    return out;
  }
  if (ctx.structure == RateStructure::spin_dependent)
    fail(ErrorKind::invalid_parameter, "recombination protocols are spin independent or slow-channel");
  out.recovery_rate = detail::reciprocal(fit.tau1, detail::ci_of(fit, "tau1"));
  out.k_r = detail::reciprocal(fit.tau1, detail::ci_of(fit, "tau1"), 1.0 / 3.0);
  if (ctx.structure == RateStructure::slow_channel) {
    out.k_r_slow = detail::reciprocal(fit.tau2, detail::ci_of(fit, "tau2"));
    out.slow_fraction = amp2 / (amp1 + amp2);
  }
  return out;
}

// ---------------------------------------------------------------------------
// power scans

struct PowerScanEntry {
  double power = 0.0;  ///< mW
  FitResult fit;
  RhoContrastCurve curve;
  RateContext context;
};

struct PowerScanSummary {
  double exponent = 0.0;
  Interval exponent_ci;
  double prefactor = 0.0;  ///< k_i = prefactor * P^exponent, MHz
  std::vector<double> powers, k_i, rho_steady, c_steady;
  std::string regime;  ///< one-photon, two-photon or mixed
  std::vector<std::string> warnings;
};

/// Log-log regression of k_i against power, and long-t_p rho and c per power.
inline PowerScanSummary power_scan_analysis(const std::vector<PowerScanEntry>& entries) {
  if (entries.size() < 4) fail(ErrorKind::invalid_parameter, "power scan needs at least 4 powers");
  PowerScanSummary s;
  std::vector<double> lx, ly;
  for (const auto& e : entries) {
    double k = std::numeric_limits<double>::quiet_NaN();
    try {
      k = extract_rates(e.fit, e.context).k_i.value().value;
    } catch (const Error& err) {
      s.warnings.push_back("P = " + std::to_string(e.power) + " mW: " + err.what());
    }
    const std::size_t n = e.curve.rho.size();
    const std::size_t tail = std::min<std::size_t>(3, n);
    double rho = 0.0, c = 0.0;
    int m = 0;
    for (std::size_t i = n - tail; i < n; ++i) {
      if (e.curve.flagged[i]) continue;
      rho += e.curve.rho[i];
      c += e.curve.c[i];
      ++m;
    }
    s.powers.push_back(e.power);
    s.k_i.push_back(k);
    s.rho_steady.push_back(m ? rho / m : std::numeric_limits<double>::quiet_NaN());
    s.c_steady.push_back(m ? c / m : std::numeric_limits<double>::quiet_NaN());
    if (!(k > 0.0) || !(e.power > 0.0)) {
      if (std::isfinite(k)) s.warnings.push_back("P = " + std::to_string(e.power) + " mW: nonpositive rate excluded");
      continue;
    }
    lx.push_back(std::log(e.power));
    ly.push_back(std::log(k));
  }
  const std::size_t n = lx.size();
  if (n < 3) fail(ErrorKind::fit_failure, "fewer than 3 usable powers in the scan");
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) fail(ErrorKind::fit_failure, "power scan needs distinct powers");
  s.exponent = sxy / sxx;
  const double intercept = my - s.exponent * mx;
  s.prefactor = std::exp(intercept);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) sse += std::pow(ly[i] - intercept - s.exponent * lx[i], 2);
  const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  const boost::math::students_t dist(static_cast<double>(n - 2));
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  s.exponent_ci = {s.exponent - q * se, s.exponent + q * se};
  if (std::abs(s.exponent - 1.0) <= 0.25)
    s.regime = "one-photon";
  else if (std::abs(s.exponent - 2.0) <= 0.25)
    s.regime = "two-photon";
  else
    s.regime = "mixed";
  return s;
}

/// Renders value(uncertainty) with one significant digit of uncertainty,
/// e.g. 0.160(7) or 26(3).
inline std::string format_uncertain(double value, double uncertainty) {
  char buf[64];
  if (!std::isfinite(value)) return "nan";
  if (!(uncertainty > 0.0) || !std::isfinite(uncertainty)) {
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return buf;
  }
  int exp10 = static_cast<int>(std::floor(std::log10(uncertainty)));
  long digit = std::lround(uncertainty / std::pow(10.0, exp10));
  if (digit >= 10) {
    ++exp10;
    digit = std::lround(uncertainty / std::pow(10.0, exp10));
  }
  if (exp10 < 0) {
    std::snprintf(buf, sizeof buf, "%.*f(%ld)", -exp10, value, digit);
  } else {
    const double scale = std::pow(10.0, exp10);
    std::snprintf(buf, sizeof buf, "%.0f(%.0f)", std::round(value / scale) * scale, digit * scale);
  }
  return buf;
}

}  // namespace nvphoto
