#pragma once

// Pulse-sequence protocols on a simulated NV and shot-noise limited readout.
//
// Each grid point is measured as an alternating (signal shot, reference shot)
// sequence repeated many times; the state entering a shot is the periodic
// steady state of that two-shot cycle.

#include "nvphoto/photophysics.hpp"

#include <Eigen/QR>

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace nvphoto {

enum class ProtocolTag { IA, IB, IC, IIA, IIB, IIC, REF };

inline const char* to_string(ProtocolTag t) {
  switch (t) {
    case ProtocolTag::IA: return "IA";
    case ProtocolTag::IB: return "IB";
    case ProtocolTag::IC: return "IC";
    case ProtocolTag::IIA: return "IIA";
    case ProtocolTag::IIB: return "IIB";
    case ProtocolTag::IIC: return "IIC";
    case ProtocolTag::REF: return "REF";
  }
  return "?";
}

inline ProtocolTag parse_protocol_tag(const std::string& s) {
  for (auto t : {ProtocolTag::IA, ProtocolTag::IB, ProtocolTag::IC, ProtocolTag::IIA, ProtocolTag::IIB,
                 ProtocolTag::IIC, ProtocolTag::REF})
    if (s == to_string(t)) return t;
  fail(ErrorKind::config, "unknown protocol '" + s + "' (expected IA, IB, IC, IIA, IIB, IIC or REF)");
}

inline bool is_recovery_protocol(ProtocolTag t) {
  return t == ProtocolTag::IIA || t == ProtocolTag::IIB || t == ProtocolTag::IIC;
}

/// Default perturbing wavelength of a protocol family (0 for REF).
inline double default_wavelength(ProtocolTag t) {
  switch (t) {
    case ProtocolTag::IA:
    case ProtocolTag::IIA: return 375.0;
    case ProtocolTag::IB:
    case ProtocolTag::IIB: return 445.0;
    case ProtocolTag::IC:
    case ProtocolTag::IIC: return 594.0;
    case ProtocolTag::REF: return 0.0;
  }
  return 0.0;
}

struct LaserPulse {
  double wavelength = 520.0;  ///< nm
  double power = 0.0;         ///< mW
  double duration = 0.0;      ///< us

  /// mW * us = nJ; reported in pJ.
  double energy_pj() const { return power * duration * 1e3; }
};

struct Protocol {
  ProtocolTag tag = ProtocolTag::REF;
  /// Perturbing pulse. For II* protocols `duration` is the preparation length;
  /// 0 prepares the exact steady state of the perturbing wavelength.
  LaserPulse perturb{};
  LaserPulse init{520.0, 0.08, 15.0};
  ReadoutParams readout{};
  bool infinite_shots = false;  ///< return exact means instead of sampled counts
};

/// Protocol with the default init pulse: 250 us green for UV series, 15 us otherwise.
inline Protocol make_protocol(ProtocolTag tag, double perturb_power, const NvProfile& profile) {
  Protocol p;
  p.tag = tag;
  p.perturb = {default_wavelength(tag), perturb_power, 0.0};
  p.init = {static_cast<double>(kGreenNm), profile.green_power,
            (tag == ProtocolTag::IA || tag == ProtocolTag::IIA) ? 250.0 : 15.0};
  p.readout = profile.readout;
  return p;
}

struct Trace {
  std::vector<double> t_p;    ///< us
  std::vector<double> i_sig;  ///< mean counts per shot
  std::vector<double> i_ref;
  std::uint64_t shots = 0;
  std::uint64_t seed = 0;
  Protocol protocol;

  std::size_t size() const { return t_p.size(); }
};

inline void validate_grid(const std::vector<double>& t_p) {
  if (t_p.empty()) fail(ErrorKind::invalid_parameter, "empty t_p grid");
  for (std::size_t i = 0; i < t_p.size(); ++i) {
    if (!std::isfinite(t_p[i]) || t_p[i] < 0.0) fail(ErrorKind::invalid_parameter, "t_p values must be finite and >= 0");
    if (i > 0 && !(t_p[i] > t_p[i - 1])) fail(ErrorKind::invalid_parameter, "t_p grid must be strictly increasing");
  }
}

inline void validate(const Trace& tr) {
  if (tr.i_sig.size() != tr.t_p.size() || tr.i_ref.size() != tr.t_p.size())
    fail(ErrorKind::invalid_parameter, "trace columns have different lengths");
  if (tr.t_p.size() < 4) fail(ErrorKind::invalid_parameter, "trace needs at least 4 points");
  validate_grid(tr.t_p);
  for (std::size_t i = 0; i < tr.size(); ++i)
    if (!(tr.i_sig[i] >= 0.0) || !(tr.i_ref[i] >= 0.0)) fail(ErrorKind::invalid_parameter, "counts must be >= 0");
}

/// Ideal microwave pi pulse between m_s = 0 and one m_s = +-1 level.
inline LevelState pi_pulse(const LevelState& s) {
  const double half = s.m1_per_level();
  return {half, s.m0 + half, s.z};
}

/// Expected photons per shot; NV0 is dark in the charge-selective readout.
inline double mean_counts(const LevelState& s, const ReadoutParams& p) { return p.eps0 * s.m0 + p.eps1 * s.m1c; }

namespace detail {

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t branch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(branch)};
  return std::mt19937_64(seq);
}

inline double sample_counts(double mean_per_shot, std::uint64_t shots, std::mt19937_64& rng) {
  const double mean = mean_per_shot * static_cast<double>(shots);
  if (!(mean > 0.0)) return 0.0;
  std::poisson_distribution<long long> dist(mean);
  return static_cast<double>(dist(rng)) / static_cast<double>(shots);
}

}  // namespace detail

/// Mean counts per shot over params.shots shots, Poisson distributed.
inline double readout(const LevelState& state, const ReadoutParams& params, std::uint64_t seed) {
  if (params.shots < 1) fail(ErrorKind::invalid_parameter, "shots must be >= 1");
  auto rng = detail::make_rng(seed, 0, 0);
  return detail::sample_counts(mean_counts(state, params), params.shots, rng);
}

struct PulseEnergy {
  double pj = 0.0;
  double mj() const { return pj * 1e-9; }
};

/// Delivered energy per wavelength (nm, rounded).
inline std::map<int, PulseEnergy> sequence_energy(const std::vector<LaserPulse>& pulses) {
  std::map<int, PulseEnergy> out;
  for (const auto& p : pulses) {
    if (p.power < 0.0 || p.duration < 0.0) fail(ErrorKind::invalid_parameter, "pulse power and duration must be >= 0");
    out[static_cast<int>(std::lround(p.wavelength))].pj += p.energy_pj();
  }
  return out;
}

/// Measured contrast of a state with model contrast x, given
/// leakage eps1 of the m_s = +-1 levels into the signal.
inline double measured_contrast(double model_contrast, const ReadoutParams& p) {
  const double r = p.eps1 / p.eps0;
  return (1.0 - r) * model_contrast / (1.0 + 2.0 * r * (1.0 - model_contrast));
}

/// Inverse of measured_contrast.
inline double model_contrast(double measured, const ReadoutParams& p) {
  const double r = p.eps1 / p.eps0;
  return measured * (1.0 + 2.0 * r) / ((1.0 - r) + 2.0 * r * measured);
}

namespace detail {

using M3 = linalg::Mat<3>;

inline M3 pi_matrix() {
  M3 m;
  m << 0.0, 0.5, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 1.0;
  return m;
}

/// Fixed point of a column-stochastic map, starting guess used when the
/// fixed space is not one-dimensional.
inline linalg::Vec<3> periodic_state(const M3& cycle, const linalg::Vec<3>& guess) {
  Eigen::Matrix<double, 4, 3> a;
  a.topRows<3>() = cycle - M3::Identity();
  a.row(3).setOnes();
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 4, 3>> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() == 3) {
    linalg::Vec<3> x = qr.solve(Eigen::Vector4d(0.0, 0.0, 0.0, 1.0));
    x = x.cwiseMax(0.0);
    return x / x.sum();
  }
  linalg::Vec<3> x = guess;
  for (int i = 0; i < 4096; ++i) x = cycle * x;
  return x / x.sum();
}

/// Linear maps of one protocol, with the expensive decompositions done once.
class ShotModel {
 public:
  ShotModel(const NvProfile& profile, const Protocol& protocol)
      : protocol_(protocol),
        green_init_(rate_generator(rates_at(profile, protocol.init.wavelength, protocol.init.power))) {
    if (protocol.init.duration < 0.0) fail(ErrorKind::invalid_parameter, "init duration must be >= 0");
    init_map_ = green_init_.at(protocol.init.duration);
    green_steady_ = steady_state(rates_at(profile, protocol.init.wavelength, protocol.init.power)).vec();
    if (protocol.tag == ProtocolTag::REF) return;

    const RateSet pert = rates_at(profile, protocol.perturb.wavelength, protocol.perturb.power);
    perturb_.emplace(rate_generator(pert));
    if (!is_recovery_protocol(protocol.tag)) return;

    if (protocol.perturb.duration > 0.0) {
      prepare_ = perturb_->at(protocol.perturb.duration);
    } else {
      const linalg::Vec<3> ss = steady_state(pert).vec();
      prepare_ = ss * linalg::Vec<3>::Ones().transpose();
    }

    // Recovery under green with the NV0 population split between the fast
    // (3-level) channel and the slow trap, which refills NV- at k_r_slow.
    const SlowChannel slow = slow_channel(profile);
    const double w = slow.weight_after(classify_region(protocol.perturb.wavelength));
    const auto g3 = rate_generator(rates_at(profile, protocol.init.wavelength, protocol.init.power));
    linalg::Mat<4> g4 = linalg::Mat<4>::Zero();
    g4.topLeftCorner<3, 3>() = g3;
    g4(0, 3) = slow.k_r_slow / 3.0;
    g4(1, 3) = 2.0 * slow.k_r_slow / 3.0;
    g4(3, 3) = -slow.k_r_slow;
    recovery_.emplace(g4);
    split_.setZero();
    split_(0, 0) = 1.0;
    split_(1, 1) = 1.0;
    split_(2, 2) = 1.0 - w;
    split_(3, 2) = w;
    collapse_.setZero();
    collapse_(0, 0) = 1.0;
    collapse_(1, 1) = 1.0;
    collapse_(2, 2) = 1.0;
    collapse_(2, 3) = 1.0;
  }

  /// Populations read out by the (signal, reference) shots at this t_p.
  std::pair<LevelState, LevelState> readout_states(double t_p) const {
    M3 shot = init_map_;
    if (protocol_.tag != ProtocolTag::REF) {
      if (is_recovery_protocol(protocol_.tag)) {
        const linalg::Mat<4> r4 = recovery_->at(t_p);
        shot = collapse_ * r4 * split_ * prepare_ * shot;
      } else {
        shot = perturb_->at(t_p) * shot;
      }
    }
    const M3 pi = pi_matrix();
    const M3 cycle = shot * pi * shot;  // signal shot, then reference shot
    const linalg::Vec<3> start = periodic_state(cycle, green_steady_);
    const linalg::Vec<3> sig = pi * shot * start;
    const linalg::Vec<3> ref = cycle * start;
    return {state_of(sig), state_of(ref)};
  }

 private:
  static LevelState state_of(linalg::Vec<3> v) {
    v = v.cwiseMax(0.0);
    return LevelState::from(v / v.sum());
  }

  Protocol protocol_;
  linalg::Propagator<3> green_init_;
  M3 init_map_;
  linalg::Vec<3> green_steady_;
  std::optional<linalg::Propagator<3>> perturb_;
  M3 prepare_ = M3::Identity();
  std::optional<linalg::Propagator<4>> recovery_;
  Eigen::Matrix<double, 4, 3> split_;
  Eigen::Matrix<double, 3, 4> collapse_;
};

}  // namespace detail

/// Simulated ODMR trace. Points use independent random streams derived from
/// (seed, point index, branch), so a point does not depend on the rest of the grid.
inline Trace run_protocol(const NvProfile& profile, const Protocol& protocol, const std::vector<double>& t_p_grid,
                          std::uint64_t seed) {
  validate_grid(t_p_grid);
  if (!protocol.infinite_shots && protocol.readout.shots < 1) fail(ErrorKind::invalid_parameter, "shots must be >= 1");
  if (!(protocol.readout.eps0 > protocol.readout.eps1) || protocol.readout.eps1 < 0.0)
    fail(ErrorKind::invalid_parameter, "readout requires eps0 > eps1 >= 0");

  const NvProfile resolved = profile.aging.pristine() ? profile : aged_parameters(profile, profile.aging);
  const detail::ShotModel model(resolved, protocol);

  Trace tr;
  tr.t_p = t_p_grid;
  tr.shots = protocol.infinite_shots ? 0 : protocol.readout.shots;
  tr.seed = seed;
  tr.protocol = protocol;
  tr.i_sig.reserve(t_p_grid.size());
  tr.i_ref.reserve(t_p_grid.size());
  for (std::size_t i = 0; i < t_p_grid.size(); ++i) {
    const auto [sig, ref] = model.readout_states(t_p_grid[i]);
    const double mu_sig = mean_counts(sig, protocol.readout);
    const double mu_ref = mean_counts(ref, protocol.readout);
    if (protocol.infinite_shots) {
      tr.i_sig.push_back(mu_sig);
      tr.i_ref.push_back(mu_ref);
      continue;
    }
    auto rng_sig = detail::make_rng(seed, i, 1);
    auto rng_ref = detail::make_rng(seed, i, 2);
    tr.i_sig.push_back(detail::sample_counts(mu_sig, protocol.readout.shots, rng_sig));
    tr.i_ref.push_back(detail::sample_counts(mu_ref, protocol.readout.shots, rng_ref));
  }
  return tr;
}

}  // namespace nvphoto
