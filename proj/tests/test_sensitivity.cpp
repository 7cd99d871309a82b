#include "nvphoto/profiles.hpp"
#include "nvphoto/sensitivity.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace nvphoto;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1.0));
  return v;
}

std::vector<double> log_grid(double a, double b, int n) {
  std::vector<double> v{0.0};
  for (int i = 0; i < n; ++i) v.push_back(a * std::pow(b / a, i / (n - 1.0)));
  return v;
}

SensitivityCurve blue_energy() {
  return sensitivity_vs_energy(blue_representative(), 445, 0.016, linspace(0, 20, 201));
}

SensitivityCurve uv_recovery(const NvProfile& p) {
  return recovery_curve(p, {375, 0.034, 250.0}, p.green_power, log_grid(0.01, 3000, 200));
}

}  // namespace

TEST(NvSensitivity, Examples) {
  EXPECT_EQ(nv_sensitivity(0.7, 0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(nv_sensitivity(1.0, 0.3, 0.3), 1.0);
  EXPECT_EQ(nv_sensitivity(0.2, 0.0, 0.3), 0.0);
  EXPECT_NEAR(nv_sensitivity(0.25, 0.15, 0.3), 0.25, 1e-15);
  EXPECT_EQ(nv_sensitivity(0.5, -0.1, 0.3), 0.0);
  EXPECT_THROW(nv_sensitivity(1.0, 0.3, 0.0), Error);
}

TEST(NvSensitivity, UvSteadyStateIsBlind) {
  const NvProfile p = uv_representative();
  const auto ss = steady_state(rates_at(p, 375, 0.034));
  const double c_green = measured_contrast(contrast_of(steady_state(rates_at(p, kGreenNm, p.green_power))), p.readout);
  EXPECT_NEAR(nv_sensitivity(rho_of(ss), measured_contrast(contrast_of(ss), p.readout), c_green), 0.0, 1e-12);
}

TEST(EnergyCurve, ZeroEnergyIsUnity) {
  const auto c = blue_energy();
  EXPECT_EQ(c.x.front(), 0.0);
  EXPECT_NEAR(c.eta_nv.front(), 1.0, 1e-12);
  EXPECT_EQ(c.scheme, Scheme::i);
  EXPECT_EQ(c.t_d_min_ns, 300.0);
}

TEST(EnergyCurve, BlueKneeNearTenPicojoules) {
  const auto c = blue_energy();
  ASSERT_TRUE(c.knee);
  EXPECT_GT(*c.knee, 5.0);
  EXPECT_LT(*c.knee, 20.0);
  for (std::size_t i = 0; i < c.x.size() && c.x[i] <= *c.knee; ++i) EXPECT_GE(c.eta_nv[i], 0.95 - 1e-12);
}

TEST(EnergyCurve, XIsPowerTimesDuration) {
  const auto c = sensitivity_vs_energy(blue_representative(), 445, 0.5, {0.0, 1.0, 2.0});
  EXPECT_NEAR(c.x[1], 500.0, 1e-9);
  EXPECT_NEAR(c.x[2], 1000.0, 1e-9);
}

TEST(EnergyCurve, LargeEnergyPlateau) {
  // Far past the knee the NV sits in the blue steady state.
  const NvProfile p = blue_representative();
  const double power = 0.3;
  const auto c = sensitivity_vs_energy(p, 445, power, {0.0, 200.0});
  const auto green = steady_state(rates_at(p, kGreenNm, p.green_power));
  const auto blue = steady_state(rates_at(p, 445, power));
  const double c520 = measured_contrast(contrast_of(green), p.readout);
  const double c445 = measured_contrast(contrast_of(blue), p.readout);
  const double expected = std::sqrt(rho_of(blue) / rho_of(green)) * c445 / c520;
  EXPECT_NEAR(c.eta_nv.back(), expected, 1e-6);
  EXPECT_GT(c445 / c520, 0.35);
  EXPECT_LT(c445 / c520, 0.65);
}

TEST(EnergyCurve, RejectsZeroPower) {
  EXPECT_THROW(sensitivity_vs_energy(blue_representative(), 445, 0.0, {0.0, 1.0}), Error);
}

TEST(RecoveryCurve, NoReinitAfterFullIonization) {
  const auto c = uv_recovery(uv_representative());
  EXPECT_LT(c.eta_nv.front(), 0.02);
  EXPECT_EQ(c.scheme, Scheme::ii);
}

TEST(RecoveryCurve, PristineRecoversWithinMicroseconds) {
  const NvProfile p = blue_representative();
  const auto c = recovery_curve(p, {445, 0.3, 200.0}, p.green_power, linspace(0, 10, 401));
  EXPECT_LT(c.eta_nv.front(), 0.6);
  const double final = c.eta_nv.back();
  double t95 = -1;
  for (std::size_t i = 0; i < c.x.size(); ++i)
    if (c.eta_nv[i] >= 0.95 * final) {
      t95 = c.x[i];
      break;
    }
  EXPECT_GT(t95, 0.0);
  EXPECT_LT(t95, 3.5);
}

TEST(RecoveryCurve, SlowProfileNeedsMilliseconds) {
  const auto c = uv_recovery(uv_slow_recovery());
  const double final = c.eta_nv.back();
  EXPECT_LT(detail::interpolate(c.x, c.eta_nv, 10.0), 0.9 * final);
  EXPECT_GT(detail::interpolate(c.x, c.eta_nv, 1500.0), 0.9 * final);
}

TEST(RecoveryCurve, InvalidPulse) {
  const NvProfile p = blue_representative();
  EXPECT_THROW(recovery_curve(p, {445, 0.3, 0.0}, 0.08, {0.0, 1.0}), Error);
  EXPECT_THROW(recovery_curve(p, {445, 0.3, 1.0}, 0.0, {0.0, 1.0}), Error);
}

TEST(Total, SchemeIAtMinimumDelay) {
  SensitivityCurve c;
  c.x = {0.0, 10.0};
  c.eta_nv = {0.8, 0.8};
  c.knee = 10.0;
  const auto t = total_sensitivity(c, {0.5}, Scheme::i, 5.0);
  EXPECT_NEAR(t.t_d.front(), 0.3, 1e-15);
  EXPECT_NEAR(t.eta_total.front(), 0.8 * std::exp(-0.6), 1e-14);
  EXPECT_NEAR(t.best_t_d, 0.3, 1e-15);
}

TEST(Total, SchemeIRefusedAboveKnee) {
  const auto c = blue_energy();
  EXPECT_THROW(total_sensitivity(c, {1.0}, Scheme::i, *c.knee * 1.5), Error);
  EXPECT_NO_THROW(total_sensitivity(c, {1.0}, Scheme::i, *c.knee));
}

TEST(Total, SchemeMustMatchCurve) {
  EXPECT_THROW(total_sensitivity(blue_energy(), {1.0}, Scheme::ii), Error);
  EXPECT_THROW(total_sensitivity(blue_energy(), {0.0}, Scheme::i), Error);
}

TEST(Total, LongLivedPairPicksEtaMaximum) {
  const auto c = uv_recovery(uv_representative());
  const auto t = total_sensitivity(c, {1e12}, Scheme::ii);
  const auto peak = std::max_element(c.eta_nv.begin(), c.eta_nv.end());
  EXPECT_NEAR(t.best_t_d, 0.3 + c.x[static_cast<std::size_t>(peak - c.eta_nv.begin())], 1e-9);
}

TEST(Total, ArgmaxInvariantUnderScaling) {
  auto c = uv_recovery(uv_representative());
  for (double tau_m : {0.5, 5.0, 100.0}) {
    const auto a = total_sensitivity(c, {tau_m}, Scheme::ii);
    auto scaled = c;
    for (auto& v : scaled.eta_nv) v *= 3.7;
    const auto b = total_sensitivity(scaled, {tau_m}, Scheme::ii);
    EXPECT_EQ(a.best_t_d, b.best_t_d) << tau_m;
    EXPECT_NEAR(b.best_eta / a.best_eta, 3.7, 1e-12);
  }
}

TEST(Total, DecaysAtLongDelay) {
  const auto t = total_sensitivity(blue_energy(), {2.0}, Scheme::i, 1.0);
  EXPECT_LT(t.eta_total.back(), 1e-4);
  for (std::size_t i = 1; i < t.eta_total.size(); ++i) EXPECT_LT(t.eta_total[i], t.eta_total[i - 1]);
}

TEST(Total, TiesGoToShorterDelay) {
  SensitivityCurve c;
  c.scheme = Scheme::ii;
  c.t_d_min_ns = 0.0;
  c.x = {0.0, 1.0, 2.0};
  c.eta_nv = {0.5, 0.5, 0.5};
  EXPECT_EQ(total_sensitivity(c, {1e300}, Scheme::ii).best_t_d, 0.0);
}

TEST(Total, SchemeIBeatsSchemeIiForShortLivedPairs) {
  const NvProfile p = uv_representative();
  const auto energy = sensitivity_vs_energy(p, 445, 0.016, linspace(0, 20, 201));
  const auto recovery = recovery_curve(p, {445, 0.016, 0.5}, p.green_power, log_grid(0.01, 3000, 200));
  for (double tau_m : {0.5, 1.0, 2.0}) {
    // same 8 pJ pulse in both schemes
    const double i = total_sensitivity(energy, {tau_m}, Scheme::i, 8.0).best_eta;
    const double ii = total_sensitivity(recovery, {tau_m}, Scheme::ii).best_eta;
    EXPECT_GE(i, ii - 1e-12) << tau_m;
  }
}
