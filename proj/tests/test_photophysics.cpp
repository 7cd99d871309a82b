#include "nvphoto/profiles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace nvphoto;

namespace {

// Closed-form steady NV- fraction for k_i0 = k_i1 = k (spin populations drop out):
// dz/dt = k (1 - z) - 3 k_r z.
double rho_closed_form(double k, double k_r) { return 3.0 * k_r / (k + 3.0 * k_r); }

NvProfile single_wavelength_profile(int nm, CrossSections cs) {
  NvProfile p;
  p.name = "test";
  p.calibrations[nm] = cs;
  p.calibrations[kGreenNm] = default_cross_sections().at(kGreenNm);
  return p;
}

}  // namespace

TEST(Regions, PaperWavelengths) {
  EXPECT_EQ(classify_region(375), Region::A);
  EXPECT_EQ(classify_region(445), Region::B);
  EXPECT_EQ(classify_region(520), Region::C);
  EXPECT_EQ(classify_region(594), Region::D);
}

TEST(Regions, BoundariesBelongToShorterRegion) {
  EXPECT_EQ(classify_region(433), Region::A);
  EXPECT_EQ(classify_region(433.001), Region::B);
  EXPECT_EQ(classify_region(477), Region::B);
  EXPECT_EQ(classify_region(575), Region::C);
  EXPECT_EQ(classify_region(637), Region::D);
}

TEST(Regions, OutOfRangeIsUnsupported) {
  for (double nm : {299.9, 637.1, -1.0, std::nan("")}) {
    try {
      classify_region(nm);
      FAIL() << nm;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::unsupported_wavelength);
    }
  }
}

TEST(Regions, ConstraintViolationsRejected) {
  EXPECT_THROW(validate(Region::A, {1, 0, 0, 1, 0, 0.5}), Error);  // s1 must vanish
  EXPECT_THROW(validate(Region::B, {1, 0, 0, 0.1, 1, 1}), Error);  // b1 must vanish
  EXPECT_THROW(validate(Region::C, {0.1, 1, 1, 0, 1, 1}), Error);
  EXPECT_THROW(validate(Region::D, {0, 1, 1, 0, 0.1, 1}), Error);
  EXPECT_NO_THROW(validate(Region::B, {1, 0.2, 0.6, 0, 1, 1}));
}

TEST(RatesAt, PowerLaws) {
  const CrossSections cs{2.0, 0.5, 1.5, 0.0, 3.0, 4.0};
  const RateSet r = rates_from(cs, 0.2);
  EXPECT_DOUBLE_EQ(r.k_i0, 2.0 * 0.2 + 0.5 * 0.04);
  EXPECT_DOUBLE_EQ(r.k_i1, 2.0 * 0.2 + 1.5 * 0.04);
  EXPECT_DOUBLE_EQ(r.k_r, 3.0 * 0.04);
  EXPECT_DOUBLE_EQ(r.k_s, 4.0 * 0.2);
}

TEST(RatesAt, ZeroPowerGivesZeroRates) {
  const RateSet r = rates_at(blue_representative(), 445, 0.0);
  EXPECT_EQ(r.k_i0, 0.0);
  EXPECT_EQ(r.k_i1, 0.0);
  EXPECT_EQ(r.k_s, 0.0);
  EXPECT_EQ(r.k_r, 0.0);
}

TEST(RatesAt, MissingWavelengthIsUncalibrated) {
  try {
    rates_at(blue_representative(), 405, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::uncalibrated_wavelength);
  }
}

TEST(RatesAt, NegativePowerRejected) { EXPECT_THROW(rates_at(blue_representative(), 445, -0.1), Error); }

TEST(RegionA, LinearRatesAndPowerIndependentSteadyState) {
  const auto p = single_wavelength_profile(375, {2.5, 0, 0, 0.7, 0, 0});
  const RateSet r1 = rates_at(p, 375, 0.05);
  const RateSet r2 = rates_at(p, 375, 0.10);
  EXPECT_DOUBLE_EQ(r2.k_i0 / r1.k_i0, 2.0);
  const double rho1 = rho_of(steady_state(r1));
  const double rho2 = rho_of(steady_state(r2));
  EXPECT_NEAR(rho1, rho2, 1e-9);
  EXPECT_NEAR(rho1, rho_closed_form(2.5, 0.7), 1e-12);
}

TEST(RegionA, PowerInvarianceOverRandomCoefficients) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int i = 0; i < 200; ++i) {
    const CrossSections cs{u(rng), 0, 0, u(rng), 0, 0};
    const double a = detail::steady_rho(cs, u(rng) * 0.1);
    const double b = detail::steady_rho(cs, u(rng) * 0.1);
    EXPECT_NEAR(a, b, 1e-9);
  }
}

TEST(RegionB, SteadyRhoIncreasesWithPower) {
  const auto& cs = default_cross_sections().at(445);
  double prev = -1.0;
  for (int i = 1; i <= 20; ++i) {
    const double rho = detail::steady_rho(cs, 0.05 * i);
    EXPECT_GT(rho, prev);
    prev = rho;
  }
}

TEST(Defaults, BlueRhoTargets) {
  const auto p = blue_representative();
  EXPECT_LE(relative_rho(p, 445, 0.1), 0.25);
  EXPECT_GE(relative_rho(p, 445, 1.0), 0.70);
}

TEST(Defaults, UvRhoTargetAndNoSpinPumping) {
  const auto& cs = default_cross_sections().at(375);
  EXPECT_EQ(cs.s1, 0.0);
  const auto p = blue_representative();
  EXPECT_NEAR(relative_rho(p, 375, 0.034), 0.20, 1e-6);
}

TEST(Defaults, GreenRatesGiveOneMegahertzRecovery) {
  const RateSet g = rates_at(blue_representative(), kGreenNm, 0.08);
  EXPECT_NEAR(g.k_i0, 0.1, 1e-9);
  EXPECT_NEAR(g.k_i0 + 3.0 * g.k_r, 1.0, 1e-9);
  EXPECT_NEAR(rho_of(steady_state(g)), 0.9, 1e-9);
}

TEST(Calibration, SingleParameterInversion) {
  WavelengthTargets t{375, {{0.2, 1.3, std::nullopt, std::nullopt, std::nullopt}}, {{"b1", 0.4}}, {}};
  const auto cs = calibrate_wavelength(t, 1.0);
  EXPECT_NEAR(cs.a1, 1.3 / 0.2, 1e-9);
}

TEST(Calibration, RegionBRhoTargetsReproduced) {
  CalibrationTargets targets = default_calibration_targets();
  const auto result = calibrate_defaults(targets);
  const double green = detail::steady_rho(result.calibrations.at(kGreenNm), targets.green_power);
  const auto& blue = result.calibrations.at(445);
  EXPECT_NEAR(detail::steady_rho(blue, 0.1) / green, 0.20, 1e-6);
  EXPECT_NEAR(detail::steady_rho(blue, 1.0) / green, 0.75, 1e-6);
  EXPECT_NEAR(blue.a2_1, 3.0 * blue.a2_0, 1e-9 * blue.a2_1);
  EXPECT_LT(result.max_residual, 1e-6);
}

TEST(Calibration, RegionDForcesNoRecombination) {
  WavelengthTargets t{594, {{0.3, 0.16, 0.0, std::nullopt, std::nullopt}}, {{"s1", 3.0}}, 1.0};
  const auto cs = calibrate_wavelength(t, 1.0);
  EXPECT_EQ(cs.b1, 0.0);
  EXPECT_EQ(cs.b2, 0.0);
  EXPECT_NEAR(rates_from(cs, 0.3).k_i0, 0.16, 1e-9);
}

TEST(Calibration, InfeasibleTargetsFail) {
  WavelengthTargets d{594, {{0.3, 0.16, 0.5, std::nullopt, std::nullopt}}, {}, {}};
  try {
    calibrate_wavelength(d, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::calibration_failure);
  }
  WavelengthTargets a{375, {{0.1, 1.0, std::nullopt, std::nullopt, 0.5}}, {}, {}};
  EXPECT_THROW(calibrate_wavelength(a, 1.0), Error);
}

TEST(Calibration, UnreachableRhoReportsResiduals) {
  CalibrationTargets t = default_calibration_targets();
  for (auto& w : t.wavelengths)
    if (w.wavelength == 445) w.points[1].rho = 1.5;  // above the green reference
  try {
    calibrate_defaults(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::calibration_failure);
    EXPECT_NE(std::string(e.what()).find("445 nm residuals"), std::string::npos);
  }
}

TEST(Dose, Accumulation) {
  AgingState s;
  EXPECT_EQ(accumulate_dose(s, 375, 0.0), s);
  const auto star = accumulate_dose(s, 375, 373.0);
  EXPECT_DOUBLE_EQ(star.dose_uv, 373.0);
  EXPECT_DOUBLE_EQ(star.dose_blue, 0.0);
  EXPECT_EQ(accumulate_dose(accumulate_dose(s, 445, 100.0), 445, 100.0), accumulate_dose(s, 445, 200.0));
  EXPECT_EQ(accumulate_dose(s, 520, 50.0), s);
  EXPECT_EQ(accumulate_dose(s, 594, 50.0), s);
  EXPECT_THROW(accumulate_dose(s, 375, -1.0), Error);
}

TEST(Aging, ZeroDoseLeavesProfileUnchanged) {
  const auto p = blue_representative();
  const auto aged = aged_parameters(p, {});
  EXPECT_DOUBLE_EQ(k594(aged), k594(p));
  EXPECT_NEAR(k594(p), p.aging_laws.at(AgingChannel::uv).k0, 1e-12);
  EXPECT_EQ(slow_channel(aged).weight, 0.0);
}

TEST(Aging, BluePlusFixture) {
  const auto p = builtin_profile("blue_plus");
  EXPECT_NEAR(k594(p), 0.038, 1e-9);
  const auto aged = aged_parameters(p, accumulate_dose({}, 445, 5583.0));
  EXPECT_NEAR(k594(aged), 0.174, 0.05 * 0.174);
}

TEST(Aging, StarFixtureUnderUv) {
  const auto p = builtin_profile("uv_star");
  const auto aged = aged_parameters(p, accumulate_dose({}, 375, 373.0));
  EXPECT_NEAR(k594(aged), 0.7, 1e-6);
}

TEST(Aging, MonotoneInDose) {
  const auto p = blue_representative();
  double k_prev = 0.0, rho_prev = 2.0;
  for (double e : {0.0, 20.0, 60.0, 150.0, 400.0, 1000.0}) {
    const auto aged = aged_parameters(p, accumulate_dose({}, 375, e));
    const double k = k594(aged);
    const double rho = relative_rho(aged, 375, kUvRhoPower);
    EXPECT_GE(k, k_prev);
    EXPECT_LE(rho, rho_prev + 1e-12);
    k_prev = k;
    rho_prev = rho;
  }
}

TEST(Aging, RhoFollowsLaw) {
  const auto p = blue_representative();
  const auto& law = p.aging_laws.at(AgingChannel::uv);
  const auto aged = aged_parameters(p, accumulate_dose({}, 375, 150.0));
  EXPECT_NEAR(relative_rho(aged, 375, law.rho_power), rho_law(law, 150.0), 1e-9);
}

TEST(Aging, BlueNeedsTenfoldDoseOfUv) {
  const auto p = blue_representative();
  const double e90_uv = p.aging_laws.at(AgingChannel::uv).e_c * std::log(10.0);
  const double e90_blue = p.aging_laws.at(AgingChannel::blue).e_c * std::log(10.0);
  EXPECT_GE(e90_blue / e90_uv, 5.0);
}

TEST(Aging, SlowChannelGating) {
  const auto p = blue_representative();
  const auto blue_aged = aged_parameters(p, accumulate_dose({}, 445, 5000.0));
  EXPECT_EQ(slow_channel(blue_aged).weight, 0.0);
  const auto uv_aged = aged_parameters(p, accumulate_dose({}, 375, 300.0));
  const auto slow = slow_channel(uv_aged);
  const double expected = 0.3 * aging_progress(p.aging_laws.at(AgingChannel::uv), 300.0);
  EXPECT_NEAR(slow.weight, expected, 1e-12);
  EXPECT_EQ(slow.weight_after(Region::D), 0.0);
  EXPECT_EQ(slow.weight_after(Region::C), 0.0);
  EXPECT_NEAR(slow.weight_after(Region::B), 0.5 * expected, 1e-12);
}

TEST(Aging, InvalidLawRejected) {
  AgingLaw law;
  law.k0 = 0.2;
  law.k_inf = 0.1;
  law.e_c = 100.0;
  EXPECT_THROW(validate(law), Error);
}

TEST(Quality, Thresholds) {
  EXPECT_EQ(classify_quality(0.012), Quality::excellent);
  EXPECT_EQ(classify_quality(0.16), Quality::good);
  EXPECT_EQ(classify_quality(0.25), Quality::average);
  EXPECT_EQ(classify_quality(0.8), Quality::poor);
  EXPECT_EQ(quality_of(builtin_profile("nv5")), Quality::poor);
}

TEST(Fixtures, AllBuiltinsResolve) {
  for (const auto& name : builtin_profile_names()) {
    const auto p = builtin_profile(name);
    EXPECT_GT(k594(p), 0.0) << name;
    EXPECT_GT(p.readout.eps0, p.readout.eps1) << name;
  }
  EXPECT_THROW(builtin_profile("nope"), Error);
}

TEST(Fixtures, GreenContrastMatchesRecorded) {
  for (const auto& row : detail::fixture_rows()) {
    const auto p = fixture_profile(row);
    const auto s = steady_state(rates_at(p, kGreenNm, p.green_power));
    EXPECT_NEAR(measured_contrast(contrast_of(s), p.readout), row.c520, 1e-9) << row.name;
  }
}

TEST(Fixtures, UvProfilesCarryObservedAgedState) {
  const auto p = uv_representative();
  EXPECT_NEAR(relative_rho(p, 375, kUvRhoPower), 0.20, 1e-6);
  EXPECT_NEAR(k594(p), 0.7, 1e-6);
  EXPECT_NEAR(slow_channel(p).weight, 0.3, 1e-6);
  EXPECT_NEAR(slow_channel(uv_slow_recovery()).weight, 0.8, 1e-6);
}
