#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/rng.hpp"

namespace qlink {

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle to (-pi, pi].
inline double wrap_phase(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(theta, two_pi);
  if (r <= -std::numbers::pi) {
    r += two_pi;
  }
  return r;
}

/// Mean of exp(i*theta) over a centred Gaussian phase of width sigma.
inline double coherence_factor(double sigma) {
  if (sigma < 0.0) {
    throw std::invalid_argument("coherence_factor: sigma must be >= 0");
  }
  return std::exp(-0.5 * sigma * sigma);
}

/// Interferometric phase between the two nodes.
///
/// The phase is the sum of a slow Ornstein-Uhlenbeck drift (which the
/// stabilizer corrects) and a mechanical oscillation that the stabilizer
/// cannot follow. `drift` is left unwrapped so the OU dynamics are exact;
/// `theta()` is always wrapped.
struct PhaseProcess {
  double drift = 0.0;                    // rad
  double time = 0.0;                     // s, absolute process clock
  double osc_phase = 0.0;                // rad, phase of the mechanical mode at time 0
  double since_stabilization = 0.0;      // s
  int dither_sign = 1;                   // controller sign memory
  double sigma_ss = deg_to_rad(14.3);    // calibration target for the residual
  double tau_corr = 2.0;                 // s; infinity gives a free random walk
  double diffusion = 0.0;                // rad^2 / s
  double osc_amp = deg_to_rad(10.0);     // rad
  double osc_freq = 31.0;                // Hz

  double oscillation() const {
    return osc_amp * std::sin(2.0 * std::numbers::pi * osc_freq * time + osc_phase);
  }
  double theta() const { return wrap_phase(drift + oscillation()); }

  void validate() const {
    if (!(sigma_ss >= 0.0)) throw std::invalid_argument("phase.sigma_ss must be >= 0");
    if (!(diffusion >= 0.0)) throw std::invalid_argument("phase.diffusion must be >= 0");
    if (!(tau_corr > 0.0)) throw std::invalid_argument("phase.tau_corr must be > 0");
    if (!(osc_amp >= 0.0)) throw std::invalid_argument("phase.osc_amp must be >= 0");
    if (!(osc_freq >= 0.0)) throw std::invalid_argument("phase.osc_freq must be >= 0");
  }

  // Stationary standard deviation of the drift with no stabilization.
  double free_drift_std() const {
    if (std::isinf(tau_corr)) {
      return std::numeric_limits<double>::infinity();
    }
    return std::sqrt(0.5 * diffusion * tau_corr);
  }
};

struct StabilizerConfig {
  double interval = 0.180;                       // s between stabilizations
  double photon_budget = 1.0e4;                  // mean counts per estimate
  double gain = 1.0;                             // in (0, 2); 0 disables feedback
  double actuation_noise = deg_to_rad(0.5);      // rad
  double duration = 0.010;                       // s charged to the cycle ledger
  bool shot_noise = true;                        // false: counts equal their expectation
  int max_failures = 3;

  void validate() const {
    if (!(interval > 0.0)) throw std::invalid_argument("stabilizer.interval must be > 0");
    if (!(photon_budget >= 1.0)) throw std::invalid_argument("stabilizer.photon_budget must be >= 1");
    if (!(gain >= 0.0 && gain < 2.0)) throw std::invalid_argument("stabilizer.gain must be in [0, 2)");
    if (!(actuation_noise >= 0.0)) throw std::invalid_argument("stabilizer.actuation_noise must be >= 0");
    if (!(duration >= 0.0)) throw std::invalid_argument("stabilizer.duration must be >= 0");
    if (max_failures < 1) throw std::invalid_argument("stabilizer.max_failures must be >= 1");
  }
};

/// Exact OU step plus the deterministic oscillation (which only depends on
/// the clock).
inline PhaseProcess evolve_phase(PhaseProcess p, double dt, Rng& rng) {
  if (dt < 0.0) {
    throw std::invalid_argument("evolve_phase: dt must be >= 0");
  }
  if (dt == 0.0) {
    return p;
  }
  double variance;
  if (std::isinf(p.tau_corr)) {
    variance = p.diffusion * dt;
  } else {
    double decay = std::exp(-dt / p.tau_corr);
    p.drift *= decay;
    variance = 0.5 * p.diffusion * p.tau_corr * (-std::expm1(-2.0 * dt / p.tau_corr));
  }
  p.drift += gaussian(rng, std::sqrt(variance));
  p.time += dt;
  p.since_stabilization += dt;
  return p;
}

/// Phase magnitude from the two interferometer ports, whose intensities are
/// (1 +- cos theta)/2. Empty when no light was detected.
inline std::optional<double> estimate_phase(double counts_0, double counts_1) {
  if (counts_0 < 0.0 || counts_1 < 0.0) {
    throw std::invalid_argument("estimate_phase: negative counts");
  }
  double total = counts_0 + counts_1;
  if (total <= 0.0) {
    return std::nullopt;
  }
  double v = std::clamp((counts_0 - counts_1) / total, -1.0, 1.0);
  return std::acos(v);
}

struct StabilizeResult {
  PhaseProcess process;
  bool succeeded = false;
  int failures = 0;
  double estimate = 0.0;  // signed estimate used for the correction
};

namespace detail {

struct PortCounts {
  double port0 = 0.0;
  double port1 = 0.0;
};

inline PortCounts sample_ports(double theta, double mean_photons, bool shot_noise, Rng& rng) {
  double p0 = 0.5 * (1.0 + std::cos(theta));
  if (!shot_noise) {
    return {mean_photons * p0, mean_photons * (1.0 - p0)};
  }
  auto n = std::poisson_distribution<long long>(mean_photons)(rng);
  if (n == 0) {
    return {};
  }
  auto c0 = std::binomial_distribution<long long>(n, std::clamp(p0, 0.0, 1.0))(rng);
  return {static_cast<double>(c0), static_cast<double>(n - c0)};
}

}  // namespace detail

/// One feedback step. Half the photon budget measures |theta| at the operating
/// point, half measures after a +pi/2 dither; the quadrature port imbalance
/// gives the sign, and a tie reuses the previous sign.
inline StabilizeResult stabilize(PhaseProcess p, const StabilizerConfig& config, Rng& rng) {
  StabilizeResult result;
  const double half = 0.5 * config.photon_budget;
  for (int attempt = 0; attempt < config.max_failures; ++attempt) {
    double theta = p.theta();
    auto direct = detail::sample_ports(theta, half, config.shot_noise, rng);
    auto dithered = detail::sample_ports(theta + 0.5 * std::numbers::pi, half, config.shot_noise, rng);
    auto magnitude = estimate_phase(direct.port0, direct.port1);
    if (!magnitude) {
      ++result.failures;
      continue;
    }
    int sign = p.dither_sign;
    if (dithered.port0 < dithered.port1) {
      sign = 1;
    } else if (dithered.port0 > dithered.port1) {
      sign = -1;
    }
    p.dither_sign = sign;
    result.estimate = sign * *magnitude;
    if (config.gain > 0.0) {
      p.drift += -config.gain * result.estimate + gaussian(rng, config.actuation_noise);
    }
    p.since_stabilization = 0.0;
    result.succeeded = true;
    result.process = p;
    return result;
  }
  result.process = p;
  return result;
}

/// Time-averaged residual variance over one stabilization interval for unit
/// gain: the correction cancels the drift and leaves the oscillation sample,
/// estimator error and actuation error, after which the drift regrows.
inline double mean_residual_variance(const PhaseProcess& p, const StabilizerConfig& s) {
  const double T = s.interval;
  const double tau = p.tau_corr;
  const double a2 = p.osc_amp * p.osc_amp;
  const double omega = 2.0 * std::numbers::pi * p.osc_freq;
  const double est_var = s.shot_noise ? 2.0 / s.photon_budget : 0.0;
  const double kick = 0.5 * a2 + est_var + s.actuation_noise * s.actuation_noise;

  // Averages over s in [0, T) of exp(-2s/tau) and exp(-s/tau) cos(omega s).
  const double m2 = tau / (2.0 * T) * (-std::expm1(-2.0 * T / tau));
  const std::complex<double> z(-1.0 / tau, omega);
  const double c = ((std::exp(z * T) - 1.0) / (z * T)).real();

  return m2 * kick + 0.5 * p.diffusion * tau * (1.0 - m2) + 0.5 * a2 - a2 * c;
}

/// Diffusion coefficient that makes the stationary residual std equal
/// `p.sigma_ss` under `s`.
inline double calibrate_diffusion(const PhaseProcess& p, const StabilizerConfig& s) {
  PhaseProcess zero = p;
  zero.diffusion = 0.0;
  const double base = mean_residual_variance(zero, s);
  const double tau = p.tau_corr;
  const double m2 = tau / (2.0 * s.interval) * (-std::expm1(-2.0 * s.interval / tau));
  const double per_unit = 0.5 * tau * (1.0 - m2);
  const double d = (p.sigma_ss * p.sigma_ss - base) / per_unit;
  if (!(d >= 0.0)) {
    throw std::invalid_argument(
        "phase calibration: oscillation and estimator noise already exceed sigma_ss");
  }
  return d;
}

inline PhaseProcess calibrated_phase_process(const StabilizerConfig& s = {}) {
  PhaseProcess p;
  p.diffusion = calibrate_diffusion(p, s);
  return p;
}

/// Fresh process drawn from the free stationary drift with a random
/// mechanical phase.
inline PhaseProcess randomize_phase(PhaseProcess p, Rng& rng) {
  double sd = p.free_drift_std();
  p.drift = std::isinf(sd) ? 0.0 : gaussian(rng, sd);
  p.osc_phase = 2.0 * std::numbers::pi * uniform01(rng);
  p.time = 0.0;
  p.since_stabilization = 0.0;
  p.dither_sign = 1;
  return p;
}

struct PhaseSample {
  double time_s;
  double theta_rad;
  std::string event;
};

/// Free-running trajectory with a stabilization at every interval. Used by the
/// `phase` subcommand.
inline std::vector<PhaseSample> phase_trajectory(PhaseProcess p, const StabilizerConfig& s,
                                                 double duration, double dt, bool stabilize_on,
                                                 Rng& rng) {
  if (!(dt > 0.0) || !(duration >= 0.0)) {
    throw std::invalid_argument("phase_trajectory: need dt > 0 and duration >= 0");
  }
  std::vector<PhaseSample> out;
  const auto steps = static_cast<long long>(std::floor(duration / dt + 1e-9));
  const auto per_interval = std::max<long long>(1, std::llround(s.interval / dt));
  out.push_back({0.0, p.theta(), "start"});
  for (long long k = 1; k <= steps; ++k) {
    p = evolve_phase(p, dt, rng);
    double t = static_cast<double>(k) * dt;
    if (stabilize_on && k % per_interval == 0) {
      auto r = stabilize(p, s, rng);
      p = r.process;
      out.push_back({t, p.theta(), r.succeeded ? "stabilize" : "stabilize_failed"});
    } else {
      out.push_back({t, p.theta(), "evolve"});
    }
  }
  return out;
}

}  // namespace qlink
