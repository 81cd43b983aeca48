#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "qlink/quantum_state.hpp"

namespace qlink {

struct LinkParams {
  double r_ent = 1.0;     // Hz
  double r_dec = 1.0;     // Hz
  double f_unent = 0.25;  // fallback fidelity, [0, 1/2]
  double f0 = 1.0;        // fidelity at the herald, [1/4, 1]

  double eta() const { return r_ent / r_dec; }

  void validate() const {
    if (!(r_ent > 0.0) || !(r_dec > 0.0)) {
      throw std::invalid_argument("link rates must be > 0");
    }
    if (!(f_unent >= 0.0 && f_unent <= 0.5)) {
      throw std::invalid_argument("f_unent must be in [0, 1/2]");
    }
    if (!(f0 >= 0.25 && f0 <= 1.0)) {
      throw std::invalid_argument("f0 must be in [1/4, 1]");
    }
  }
};

/// Duty factor that maps the ideal 7.27 Hz single-photon rate at alpha = 0.05
/// onto the observed 6 Hz.
inline constexpr double kCalibratedDutyCycle = 0.825;

struct AttemptParams {
  double alpha = 0.05;
  double p_det = 4.0e-4;
  double t_attempt = 5.5e-6;                 // s
  double duty_cycle = kCalibratedDutyCycle;  // fraction of wall-clock time attempting

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(p_det >= 0.0 && p_det <= 1.0)) {
      throw std::invalid_argument("attempt alpha and p_det must be in [0, 1]");
    }
    if (!(t_attempt > 0.0)) {
      throw std::invalid_argument("t_attempt must be > 0");
    }
    if (!(duty_cycle > 0.0 && duty_cycle <= 1.0)) {
      throw std::invalid_argument("duty_cycle must be in (0, 1]");
    }
  }
};

namespace detail {

// (1 - exp(-x)) / x with its limit 1 at x = 0.
inline double one_minus_exp_over(double x) {
  if (std::abs(x) < 1e-6) {
    return 1.0 - x / 2.0 + x * x / 6.0;
  }
  return -std::expm1(-x) / x;
}

// log(1 + x) / x with its limit 1 at x = 0.
inline double log1p_over(double x) {
  if (std::abs(x) < 1e-6) {
    return 1.0 - x / 2.0 + x * x / 3.0;
  }
  return std::log1p(x) / x;
}

}  // namespace detail

/// Cumulative success probability after attempting for t_ent.
inline double p_succ(double r_ent, double t_ent) {
  if (!(t_ent >= 0.0) || !(r_ent >= 0.0)) {
    throw std::invalid_argument("p_succ: need r_ent >= 0 and t_ent >= 0");
  }
  return -std::expm1(-r_ent * t_ent);
}

/// Average fidelity of states heralded within a window whose success
/// probability is `p`, each stored until the window ends while its excess
/// fidelity over `f_floor` decays at r_dec = r_ent / eta.
///
/// With u = r_ent T and delta = (r_dec - r_ent) T the closed form is
/// f_floor + (f0 - f_floor) u (1 - p) g(delta) / p, g(x) = (1 - e^-x)/x, which
/// is regular at r_dec = r_ent.
inline double f_succ(double p, double eta, double f0 = 1.0, double f_floor = 0.25) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("f_succ: p_succ must be in (0, 1)");
  }
  if (!(eta > 0.0)) {
    throw std::invalid_argument("f_succ: eta must be > 0");
  }
  const double u = -std::log1p(-p);
  const double delta = u * (1.0 - eta) / eta;
  return f_floor + (f0 - f_floor) * u * (1.0 - p) * detail::one_minus_exp_over(delta) / p;
}

inline double f_det(double p, double f_success, double f_unent) {
  return p * f_success + (1.0 - p) * f_unent;
}

/// Best deterministic-delivery fidelity over the window length, for a fully
/// mixed fallback and perfect initial fidelity.
inline double f_det_max(double eta) {
  if (!(eta > 0.0)) {
    throw std::invalid_argument("f_det_max: eta must be > 0");
  }
  // eta^(1/(1-eta)) = exp(-log1p(x)/x) with x = eta - 1.
  const double x = eta - 1.0;
  return 0.25 * (1.0 + 3.0 * std::exp(-detail::log1p_over(x)));
}

/// Window T* = ln(r_dec/r_ent) / (r_dec - r_ent) that maximizes f_det.
inline double optimal_window(double r_ent, double r_dec) {
  if (!(r_ent > 0.0) || !(r_dec > 0.0)) {
    throw std::invalid_argument("optimal_window: rates must be > 0");
  }
  const double x = (r_dec - r_ent) / r_ent;
  return detail::log1p_over(x) / r_ent;
}

/// Link efficiency at which f_det_max crosses 1/2.
inline double threshold_eta() {
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-13) {
    double mid = 0.5 * (lo + hi);
    if (f_det_max(mid) < 0.5) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline double single_photon_rate(const AttemptParams& a) {
  a.validate();
  return a.duty_cycle * 2.0 * a.p_det * a.alpha / a.t_attempt;
}

inline double two_photon_rate(const AttemptParams& a) {
  a.validate();
  return a.duty_cycle * 0.5 * a.p_det * a.p_det / a.t_attempt;
}

inline double rate_advantage(double alpha, double p_det) {
  if (!(p_det > 0.0)) {
    throw std::invalid_argument("rate_advantage: p_det must be > 0");
  }
  return 4.0 * alpha / p_det;
}

inline double link_efficiency(double r_ent, double r_dec) {
  if (!(r_dec > 0.0)) {
    throw std::invalid_argument("link_efficiency: r_dec must be > 0");
  }
  return r_ent / r_dec;
}

struct TradeoffPoint {
  double alpha;
  double fidelity;
  double rate_hz;
};

/// Heralded fidelity and rate over a grid of bright-state populations.
inline std::vector<TradeoffPoint> heralded_fidelity_curve(const std::vector<double>& alpha_grid,
                                                          const NoiseModel& noise,
                                                          AttemptParams attempt = {}) {
  if (alpha_grid.empty()) {
    throw std::invalid_argument("heralded_fidelity_curve: empty grid");
  }
  std::vector<TradeoffPoint> out;
  out.reserve(alpha_grid.size());
  for (double alpha : alpha_grid) {
    NoiseModel n = noise;
    n.alpha = alpha;
    attempt.alpha = alpha;
    attempt.p_det = noise.p_det;
    double f = fidelity(heralded_state(n, 0), BellKind{BellVariant::PsiPlus, 0.0});
    out.push_back({alpha, f, single_photon_rate(attempt)});
  }
  return out;
}

struct SuccessCurvePoint {
  double eta;
  double p_succ;
  double fidelity;
};

/// F_succ against p_succ for one link efficiency, on an open (0, 1) grid.
inline std::vector<SuccessCurvePoint> f_succ_curve(double eta, int points, double f0 = 1.0,
                                                   double f_floor = 0.25) {
  if (points < 1) {
    throw std::invalid_argument("f_succ_curve: need at least one point");
  }
  std::vector<SuccessCurvePoint> out;
  for (int i = 1; i <= points; ++i) {
    double p = static_cast<double>(i) / (points + 1);
    out.push_back({eta, p, f_succ(p, eta, f0, f_floor)});
  }
  return out;
}

}  // namespace qlink
