#include "nvphoto/estimator.hpp"
#include "nvphoto/profiles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace nvphoto;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1.0));
  return v;
}

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a * std::pow(b / a, i / (n - 1.0)));
  return v;
}

struct Truth {
  double g1, g2, a1, a2, b1 = 0, b2 = 0, tau1, tau2 = 1.0;
};

// Trace straight from the fitting forms, optionally with Poisson noise.
Trace synthetic(const Truth& t, const std::vector<double>& grid, std::uint64_t shots = 0, std::uint64_t seed = 0) {
  Trace tr;
  tr.t_p = grid;
  tr.shots = shots;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double e1 = std::exp(-grid[i] / t.tau1), e2 = std::exp(-grid[i] / t.tau2);
    double ref = t.g1 + t.a1 * e1 + t.b1 * e2;
    double sig = t.g1 + t.g2 + t.a2 * e1 + t.b2 * e2;
    if (shots > 0) {
      auto r1 = detail::make_rng(seed, i, 1), r2 = detail::make_rng(seed, i, 2);
      ref = detail::sample_counts(ref, shots, r1);
      sig = detail::sample_counts(sig, shots, r2);
    }
    tr.i_ref.push_back(ref);
    tr.i_sig.push_back(sig);
  }
  return tr;
}

}  // namespace

TEST(Fit, NoiselessMonoRecovered) {
  const Truth t{1.0, -0.2, -0.5, -0.3, 0, 0, 10.0};
  const auto f = fit_exponential(synthetic(t, linspace(0, 60, 40)), ModelOrder::mono);
  EXPECT_TRUE(f.converged);
  EXPECT_NEAR(f.gamma1, 1.0, 1e-8);
  EXPECT_NEAR(f.gamma2, -0.2, 1e-8);
  EXPECT_NEAR(f.alpha1, -0.5, 1e-8);
  EXPECT_NEAR(f.alpha2, -0.3, 1e-8);
  EXPECT_NEAR(f.tau1, 10.0, 1e-8);
}

TEST(Fit, NoiselessBiSplitsMicrosecondAndMillisecond) {
  const Truth t{0.04, -0.01, -0.02, -0.01, -0.008, -0.006, 1.0, 1000.0};
  const auto f = fit_exponential(synthetic(t, logspace(0.01, 8000, 70)), ModelOrder::bi);
  EXPECT_EQ(f.model, ModelOrder::bi);
  EXPECT_NEAR(f.tau1 / 1.0, 1.0, 1e-6);
  EXPECT_NEAR(f.tau2 / 1000.0, 1.0, 1e-6);
  EXPECT_LT(f.tau1, f.tau2);
  EXPECT_NEAR(f.beta1, -0.008, 1e-9);
}

TEST(Fit, ConstantTraceIsFlat) {
  Trace tr;
  tr.t_p = linspace(0, 10, 12);
  tr.i_ref.assign(12, 0.04);
  tr.i_sig.assign(12, 0.03);
  const auto f = fit_exponential(tr, ModelOrder::mono);
  EXPECT_TRUE(f.flat);
  EXPECT_TRUE(std::isnan(f.tau1));
  EXPECT_NEAR(f.gamma1, 0.04, 1e-15);
  EXPECT_NEAR(f.gamma2, -0.01, 1e-15);
}

TEST(Fit, NoisyFlatTraceIsFlat) {
  const Truth t{0.04, -0.01, 0, 0, 0, 0, 1.0};
  const auto f = fit_exponential(synthetic(t, linspace(0, 10, 40), 1000000, 3), ModelOrder::mono);
  EXPECT_TRUE(f.flat);
}

TEST(Fit, TooFewPointsRejected) {
  const Truth t{1.0, 0, -0.5, -0.5, 0, 0, 1.0};
  EXPECT_THROW(fit_exponential(synthetic(t, linspace(0, 5, 4)), ModelOrder::mono), Error);
  EXPECT_THROW(fit_exponential(synthetic(t, linspace(0, 5, 7)), ModelOrder::bi), Error);
}

TEST(Fit, RefitFromSolutionIsIdempotent) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 50), 100000, 8);
  const auto f = fit_exponential(tr, ModelOrder::mono);
  const auto again = bootstrap_ci(tr, f, 2, 0);  // refits only from the solution
  const auto d = detail::fit_data(tr, {});
  const detail::ExpModel m{&d, false};
  const auto r = detail::run_lm(m, detail::to_params(f), {});
  EXPECT_NEAR(std::exp(r.params(4)), f.tau1, 1e-12 * f.tau1);
  EXPECT_NEAR(r.params(0), f.gamma1, 1e-12 * std::abs(f.gamma1));
  EXPECT_FALSE(again.ci.empty());
}

TEST(Fit, ScalingCountsScalesAmplitudesOnly) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 50), 100000, 8);
  Trace scaled = tr;
  for (auto& v : scaled.i_ref) v *= 7.5;
  for (auto& v : scaled.i_sig) v *= 7.5;
  const auto a = fit_exponential(tr, ModelOrder::mono);
  const auto b = fit_exponential(scaled, ModelOrder::mono);
  EXPECT_NEAR(b.tau1 / a.tau1, 1.0, 1e-8);
  EXPECT_NEAR(b.alpha1 / a.alpha1, 7.5, 1e-7);
  EXPECT_NEAR(b.gamma1 / a.gamma1, 7.5, 1e-7);
}

TEST(Fit, DenserNoiselessGridKeepsTau) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto a = fit_exponential(synthetic(t, linspace(0, 12, 30)), ModelOrder::mono);
  const auto b = fit_exponential(synthetic(t, linspace(0, 12, 59)), ModelOrder::mono);
  EXPECT_NEAR(a.tau1 / b.tau1, 1.0, 1e-9);
}

TEST(Fit, PoissonWeightsOption) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 50), 1000000, 2);
  FitOptions o;
  o.poisson_weights = true;
  const auto f = fit_exponential(tr, ModelOrder::mono, o);
  EXPECT_NEAR(f.tau1, 2.0, 0.1);
}

TEST(Selection, PureMonoStaysMono) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto sel = select_model(synthetic(t, logspace(0.02, 40, 60), 1000000, 1));
  EXPECT_EQ(sel.order, ModelOrder::mono);
}

TEST(Selection, ClearSecondChannelDetected) {
  const Truth t{0.04, -0.01, -0.02, -0.01, -0.006, -0.005, 1.0, 1000.0};
  const auto sel = select_model(synthetic(t, logspace(0.02, 6000, 60), 1000000, 1));
  ASSERT_EQ(sel.order, ModelOrder::bi);
  EXPECT_NEAR(sel.bi->tau2, 1000.0, 200.0);
  EXPECT_GT(sel.delta_aicc, 10.0);
}

TEST(Selection, SubNoiseSecondChannelNotHallucinated) {
  // 0.1 % of the amplitude in the slow channel
  const Truth t{0.04, -0.01, -0.02, -0.01, -2e-5, -1.7e-5, 1.0, 1000.0};
  int bi = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    if (select_model(synthetic(t, logspace(0.02, 6000, 60), 1000000, seed)).order == ModelOrder::bi) ++bi;
  EXPECT_LE(bi, 1);
}

TEST(Bootstrap, ZeroNoiseGivesZeroWidth) {
  const Truth t{1.0, -0.2, -0.5, -0.3, 0, 0, 10.0};
  const auto tr = synthetic(t, linspace(0, 60, 40));
  const auto f = bootstrap_ci(tr, fit_exponential(tr, ModelOrder::mono), 200, 1);
  for (const auto& [name, ci] : f.ci) EXPECT_LT(ci.hi - ci.lo, 1e-9) << name;
  EXPECT_FALSE(f.bootstrap_unstable);
}

TEST(Bootstrap, DeterministicGivenSeed) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 40), 100000, 4);
  const auto f = fit_exponential(tr, ModelOrder::mono);
  const auto a = bootstrap_ci(tr, f, 100, 9);
  const auto b = bootstrap_ci(tr, f, 100, 9);
  EXPECT_EQ(a.ci.at("tau1").lo, b.ci.at("tau1").lo);
  EXPECT_EQ(a.se.at("tau1"), b.se.at("tau1"));
}

TEST(Bootstrap, IntervalContainsEstimateAndIsOrdered) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 40), 100000, 4);
  const auto f = bootstrap_ci(tr, fit_exponential(tr, ModelOrder::mono), 300, 2);
  for (const auto& [name, ci] : f.ci) EXPECT_LE(ci.lo, ci.hi) << name;
  EXPECT_LT(f.ci.at("tau1").lo, f.tau1);
  EXPECT_GT(f.ci.at("tau1").hi, f.tau1);
}

TEST(Format, ValueWithUncertainty) {
  EXPECT_EQ(format_uncertain(0.1601, 0.0071), "0.160(7)");
  EXPECT_EQ(format_uncertain(0.8, 0.1), "0.8(1)");
  EXPECT_EQ(format_uncertain(0.174, 0.005), "0.174(5)");
  EXPECT_EQ(format_uncertain(26.3, 3.1), "26(3)");
  EXPECT_EQ(format_uncertain(41.62, 0.6), "41.6(6)");
  EXPECT_EQ(format_uncertain(1234.0, 56.0), "1230(60)");
  EXPECT_EQ(format_uncertain(0.15, 0.0196), "0.15(2)");
}

TEST(Curves, TraceAgainstItselfIsUnity) {
  const Truth t{0.04, -0.012, -0.02, -0.01, 0, 0, 2.0};
  const auto tr = synthetic(t, linspace(0, 12, 20), 100000, 4);
  const auto c = rho_contrast_curves(tr, tr);
  for (double r : c.rho) EXPECT_DOUBLE_EQ(r, 1.0);
}

TEST(Curves, EqualChannelsGiveZeroContrast) {
  Trace tr;
  tr.t_p = {0, 1, 2, 3};
  tr.i_ref = {0.04, 0.03, 0.0, 0.02};
  tr.i_sig = {0.02, 0.03, 0.0, 0.01};
  Trace base = tr;
  base.i_ref.assign(4, 0.04);
  base.i_sig.assign(4, 0.03);
  const auto c = rho_contrast_curves(tr, base);
  EXPECT_DOUBLE_EQ(c.c[1], 0.0);
  EXPECT_TRUE(c.flagged[2]);
  EXPECT_TRUE(std::isnan(c.c[2]));
  EXPECT_FALSE(c.flagged[0]);
}

TEST(Curves, MeanBaselineForMismatchedGrid) {
  Trace tr;
  tr.t_p = {0, 1, 2, 3};
  tr.i_ref = {0.04, 0.04, 0.04, 0.04};
  tr.i_sig = {0.02, 0.02, 0.02, 0.02};
  Trace base = tr;
  base.t_p = {0, 5, 10, 20};
  base.i_ref = {0.05, 0.03, 0.04, 0.04};
  const auto c = rho_contrast_curves(tr, base);
  EXPECT_NEAR(c.i_ref0, 0.04, 1e-15);
  EXPECT_NEAR(c.rho[0], 1.0, 1e-12);
}

TEST(Curves, NoiselessIbMatchesRateModel) {
  NvProfile p = blue_representative();
  p.readout.eps1 = 0.0;
  Protocol pr = make_protocol(ProtocolTag::IB, 0.3, p);
  pr.infinite_shots = true;
  pr.init.duration = 400.0;
  Protocol ref = pr;
  ref.tag = ProtocolTag::REF;
  const auto grid = linspace(0, 5, 11);
  const auto c = rho_contrast_curves(run_protocol(p, pr, grid, 0), run_protocol(p, ref, grid, 0));
  const auto green = steady_state(rates_at(p, kGreenNm, p.green_power));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto s = evolve(rates_at(p, 445, 0.3), green, grid[i]);
    EXPECT_NEAR(c.rho[i], rho_of(s) / rho_of(green), 1e-10);
    EXPECT_NEAR(c.c[i], contrast_of(s), 1e-10);
  }
}

TEST(Curves, CorrectedContrastUndoesLeakage) {
  const ReadoutParams r;
  const LevelState s{0.6, 0.25, 0.15};
  const double ref = mean_counts(s, r), sig = mean_counts(pi_pulse(s), r);
  EXPECT_NEAR(corrected_contrast(ref, sig, r), contrast_of(s), 1e-12);
  EXPECT_THROW(corrected_contrast(0.0, 0.0, r), Error);
}

TEST(Rates, IonizationWithKnownRecombination) {
  FitResult f;
  f.tau1 = 0.25;
  f.alpha1 = f.alpha2 = -1.0;
  f.ci["tau1"] = {0.24, 0.26};
  const auto r = extract_rates(f, {RateProtocol::ionization, RateStructure::spin_independent, 1.0});
  EXPECT_NEAR(r.k_i->value, 1.0, 1e-12);
  EXPECT_NEAR(r.k_i->uncertainty, 0.01 / 0.0625, 1e-12);
  EXPECT_NEAR(r.k_i->ci->lo, 1.0 / 0.26 - 3.0, 1e-12);
}

TEST(Rates, PureRecombination) {
  FitResult f;
  f.tau1 = 1.0 / 3.0;
  const auto r = extract_rates(f, {RateProtocol::recombination, RateStructure::spin_independent, 0.0});
  EXPECT_NEAR(r.k_r->value, 1.0, 1e-12);
  EXPECT_NEAR(r.recovery_rate->value, 3.0, 1e-12);
}

TEST(Rates, SlowChannel) {
  FitResult f;
  f.model = ModelOrder::bi;
  f.tau1 = 1.0;
  f.tau2 = 1000.0;
  f.alpha1 = f.alpha2 = 0.7;
  f.beta1 = f.beta2 = 0.3;
  const auto r = extract_rates(f, {RateProtocol::recombination, RateStructure::slow_channel, 0.0});
  EXPECT_NEAR(r.k_r_slow->value, 1e-3, 1e-15);
  EXPECT_NEAR(*r.slow_fraction, 0.3, 1e-12);
}

TEST(Rates, ModelContextMismatch) {
  FitResult mono;
  mono.tau1 = 1.0;
  EXPECT_THROW(extract_rates(mono, {RateProtocol::recombination, RateStructure::slow_channel, 0.0}), Error);
  FitResult bi = mono;
  bi.model = ModelOrder::bi;
  bi.tau2 = 10.0;
  EXPECT_THROW(extract_rates(bi, {RateProtocol::ionization, RateStructure::spin_independent, 0.0}), Error);
  FitResult flat;
  flat.flat = true;
  EXPECT_THROW(extract_rates(flat, {}), Error);
}

TEST(Rates, RoundTripRegionAIonization) {
  // Region A with k_r = 0 and a1 chosen so that k_i = 0.5 MHz at 0.1 mW.
  NvProfile p = blue_representative();
  p.calibrations[375] = {5.0, 0, 0, 1e-9, 0, 0};
  Protocol pr = make_protocol(ProtocolTag::IA, 0.1, p);
  pr.readout.shots = 1000000;
  const auto tr = run_protocol(p, pr, linspace(0, 12, 60), 17);
  const auto fit = fit_exponential(charge_channel(tr), ModelOrder::mono);
  const auto boot = bootstrap_ci(charge_channel(tr), fit, 400, 3);
  const auto r = extract_rates(boot, {RateProtocol::ionization, RateStructure::spin_independent,
                                      rates_at(p, 375, 0.1).k_r});
  EXPECT_NEAR(r.k_i->value, 0.5, 0.02);
  ASSERT_TRUE(r.k_i->ci);
  EXPECT_LT(r.k_i->ci->lo, 0.5);
  EXPECT_GT(r.k_i->ci->hi, 0.5);
}

TEST(PowerScan, RegionOneAndTwoPhotonExponents) {
  auto scan = [](const CrossSections& cs, int nm) {
    NvProfile p = blue_representative();
    p.calibrations[nm] = cs;
    std::vector<PowerScanEntry> entries;
    for (double power : {0.05, 0.1, 0.2, 0.4, 0.8}) {
      const RateSet r = rates_at(p, nm, power);
      const double tau = 1.0 / (r.k_i0 + 3.0 * r.k_r);
      Protocol pr = make_protocol(nm == 375 ? ProtocolTag::IA : ProtocolTag::IC, power, p);
      pr.perturb.wavelength = nm;
      pr.readout.shots = 1000000;
      const auto grid = linspace(0, 6 * tau, 50);
      Protocol ref = pr;
      ref.tag = ProtocolTag::REF;
      const auto tr = run_protocol(p, pr, grid, 11);
      PowerScanEntry e;
      e.power = power;
      e.fit = fit_exponential(charge_channel(tr), ModelOrder::mono);
      e.curve = rho_contrast_curves(tr, run_protocol(p, ref, grid, 12));
      e.context = {RateProtocol::ionization, RateStructure::spin_independent, r.k_r};
      entries.push_back(e);
    }
    return power_scan_analysis(entries);
  };
  const auto a = scan({4.0, 0, 0, 1.0, 0, 0}, 375);
  EXPECT_NEAR(a.exponent, 1.0, 0.05);
  EXPECT_EQ(a.regime, "one-photon");
  const double spread = *std::max_element(a.rho_steady.begin(), a.rho_steady.end()) -
                        *std::min_element(a.rho_steady.begin(), a.rho_steady.end());
  EXPECT_LT(spread, 0.01 * a.rho_steady[0]);
  const auto c = scan({0, 2.0, 2.0, 0, 0, 3.0}, 530);
  EXPECT_NEAR(c.exponent, 2.0, 0.1);
  EXPECT_EQ(c.regime, "two-photon");
  EXPECT_LT(c.exponent_ci.lo, c.exponent);
  EXPECT_GT(c.exponent_ci.hi, c.exponent);
}

TEST(PowerScan, NeedsFourPowers) { EXPECT_THROW(power_scan_analysis({}), Error); }
