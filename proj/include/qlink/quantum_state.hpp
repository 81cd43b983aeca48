#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qlink/density_matrix.hpp"
#include "qlink/phase_control.hpp"

namespace qlink {

enum class BellVariant { PsiPlus, PsiMinus };

/// Target Bell state (|ud> +- e^{i phase}|du>)/sqrt(2). Detector 0 heralds
/// PsiPlus, detector 1 heralds PsiMinus.
struct BellKind {
  BellVariant variant = BellVariant::PsiPlus;
  double phase = 0.0;

  BellKind normalized() const { return {variant, wrap_phase(phase)}; }

  static BellKind for_detector(int detector, double phase = 0.0) {
    return {detector == 0 ? BellVariant::PsiPlus : BellVariant::PsiMinus, phase};
  }
};

/// Calibration of the heralded state.
struct NoiseModel {
  double alpha = 0.05;        // bright-state population
  double p_det = 4.0e-4;      // end-to-end detection efficiency per node
  double p_dark = 0.0;        // dark-count probability per detector per attempt window
  double visibility = 1.0;    // photon indistinguishability
  double p_dbl = 0.0;         // double-excitation dephasing probability
  double sigma_theta = 0.0;   // residual optical phase spread, rad
  bool exact_weight = false;  // use alpha(1-p_det)/(1-alpha p_det) instead of alpha

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string("noise.") + name + " must be in [0, 1]");
      }
    };
    unit(alpha, "alpha");
    unit(p_det, "p_det");
    unit(p_dark, "p_dark");
    unit(visibility, "visibility");
    unit(p_dbl, "p_dbl");
    if (!(sigma_theta >= 0.0)) {
      throw std::invalid_argument("noise.sigma_theta must be >= 0");
    }
  }

  static NoiseModel ideal(double alpha) {
    NoiseModel n;
    n.alpha = alpha;
    return n;
  }

  // Error budget fitted to the measured heralded fidelities: dark heralds are
  // 3% of all heralds at alpha = 0.05, distinguishability and double
  // excitation keep a 3:4 ratio, and the phase spread is the 14.3 degree
  // stabilized residual.
  static NoiseModel calibrated(double alpha) {
    NoiseModel n;
    n.alpha = alpha;
    n.p_det = 4.0e-4;
    n.p_dark = kCalibratedDarkCount;
    n.visibility = 0.90;
    n.p_dbl = 0.13;
    n.sigma_theta = deg_to_rad(14.3);
    return n;
  }

  static constexpr double kCalibratedDarkCount = 6.18572165e-7;
};

enum class Axis { X, Y, Z, Rotated };

/// Single-node measurement axis; Rotated is cos(phi) X + sin(phi) Y.
struct ReadoutBasis {
  Axis axis = Axis::Z;
  double phi = 0.0;

  static ReadoutBasis x() { return {Axis::X, 0.0}; }
  static ReadoutBasis y() { return {Axis::Y, 0.0}; }
  static ReadoutBasis z() { return {Axis::Z, 0.0}; }
  static ReadoutBasis rotated(double phi) { return {Axis::Rotated, wrap_phase(phi)}; }

  Matrix2 operator_matrix() const {
    switch (axis) {
      case Axis::X:
        return pauli::x();
      case Axis::Y:
        return pauli::y();
      case Axis::Z:
        return pauli::z();
      case Axis::Rotated:
        return std::cos(phi) * pauli::x() + std::sin(phi) * pauli::y();
    }
    return pauli::z();
  }
};

inline Vector4 bell_vector(BellKind kind) {
  kind = kind.normalized();
  const double s = 1.0 / std::numbers::sqrt2;
  const double sign = kind.variant == BellVariant::PsiPlus ? 1.0 : -1.0;
  Vector4 v = Vector4::Zero();
  v(kUpDown) = s;
  v(kDownUp) = sign * s * std::polar(1.0, kind.phase);
  return v;
}

inline DensityMatrix bell_state(BellKind kind) { return DensityMatrix::pure(bell_vector(kind)); }

/// Conditional two-qubit state given that no detector clicked.
inline DensityMatrix no_detection_state(double alpha, double p_det) {
  if (!(alpha >= 0.0 && alpha <= 1.0) || !(p_det >= 0.0 && p_det <= 1.0)) {
    throw std::invalid_argument("no_detection_state: alpha and p_det must be in [0, 1]");
  }
  const double lost = 1.0 - p_det;
  return DensityMatrix::diagonal({alpha * alpha * lost * lost, alpha * (1.0 - alpha) * lost,
                                  alpha * (1.0 - alpha) * lost, (1.0 - alpha) * (1.0 - alpha)});
}

/// Weight of |uu> in the photon-heralded state.
inline double bright_weight(const NoiseModel& noise) {
  if (!noise.exact_weight) {
    return noise.alpha;
  }
  return noise.alpha * (1.0 - noise.p_det) / (1.0 - noise.alpha * noise.p_det);
}

/// Multiplicative factor on the |ud><du| coherence from distinguishability,
/// double excitation and phase spread.
inline double coherence_multiplier(const NoiseModel& noise) {
  return noise.visibility * (1.0 - noise.p_dbl) * coherence_factor(noise.sigma_theta);
}

/// Probability that a specific detector receives at least one photon while
/// the other receives none (independent emitters, 50:50 routing).
inline double photon_click_probability(double alpha, double p_det) {
  const double q = 0.5 * alpha * p_det;
  return (1.0 - q) * (1.0 - q) - (1.0 - 2.0 * q) * (1.0 - 2.0 * q);
}

inline double no_photon_probability(double alpha, double p_det) {
  const double none = 1.0 - alpha * p_det;
  return none * none;
}

/// Fraction of heralds on one detector that are dark counts.
inline double dark_herald_fraction(const NoiseModel& noise) {
  const double dark = noise.p_dark * no_photon_probability(noise.alpha, noise.p_det);
  const double photon = photon_click_probability(noise.alpha, noise.p_det);
  if (dark + photon <= 0.0) {
    return 0.0;
  }
  return dark / (dark + photon);
}

/// State heralded by a real photon on `detector` with optical phase `phase`
/// (no dark-count admixture).
inline DensityMatrix photon_heralded_state(const NoiseModel& noise, int detector,
                                           double phase = 0.0) {
  noise.validate();
  if (detector != 0 && detector != 1) {
    throw std::invalid_argument("detector must be 0 or 1");
  }
  const double w = bright_weight(noise);
  Matrix4 m = (1.0 - w) * bell_state(BellKind::for_detector(detector, phase)).matrix();
  m(kUpDown, kDownUp) *= coherence_multiplier(noise);
  m(kDownUp, kUpDown) *= coherence_multiplier(noise);
  m(kUpUp, kUpUp) += w;
  return DensityMatrix::unchecked(m);
}

/// Ensemble state delivered after a click on `detector`: photon-heralded
/// state mixed with the no-photon state at the dark-count herald fraction.
inline DensityMatrix heralded_state(const NoiseModel& noise, int detector) {
  DensityMatrix photon = photon_heralded_state(noise, detector, 0.0);
  const double d = dark_herald_fraction(noise);
  if (d == 0.0) {
    return photon;
  }
  Matrix4 m = (1.0 - d) * photon.matrix() + d * no_detection_state(noise.alpha, noise.p_det).matrix();
  return DensityMatrix::unchecked(m);
}

inline double fidelity(const DensityMatrix& rho, BellKind kind) {
  Vector4 psi = bell_vector(kind);
  return std::clamp((psi.adjoint() * rho.matrix() * psi)(0, 0).real(), 0.0, 1.0);
}

inline double correlator(const DensityMatrix& rho, const ReadoutBasis& a, const ReadoutBasis& b) {
  Matrix4 op = kron(a.operator_matrix(), b.operator_matrix());
  return std::clamp((rho.matrix() * op).trace().real(), -1.0, 1.0);
}

/// |Psi+-><Psi+-| = (II +- XX +- YY - ZZ)/4.
inline double fidelity_from_correlators(double xx, double yy, double zz, BellVariant variant) {
  const double s = variant == BellVariant::PsiPlus ? 1.0 : -1.0;
  return 0.25 * (1.0 + s * xx + s * yy - zz);
}

namespace detail {

// Whether node A (resp. B) differs between basis states i and j.
inline bool differs_a(int i, int j) { return ((i >> 1) & 1) != ((j >> 1) & 1); }
inline bool differs_b(int i, int j) { return (i & 1) != (j & 1); }

}  // namespace detail

/// Independent pure dephasing on each node: coherences between states that
/// differ on node k decay as exp(-t / tau_k).
inline DensityMatrix apply_storage_decay(const DensityMatrix& rho, double duration, double tau_a,
                                         double tau_b) {
  if (!(duration >= 0.0) || !(tau_a > 0.0) || !(tau_b > 0.0)) {
    throw std::invalid_argument("apply_storage_decay: need duration >= 0 and taus > 0");
  }
  const double fa = std::exp(-duration / tau_a);
  const double fb = std::exp(-duration / tau_b);
  Matrix4 m = rho.matrix();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (detail::differs_a(i, j)) m(i, j) *= fa;
      if (detail::differs_b(i, j)) m(i, j) *= fb;
    }
  }
  return DensityMatrix::unchecked(m);
}

/// Two-qubit depolarization toward I/4 at rate 1/tau.
inline DensityMatrix apply_depolarizing(const DensityMatrix& rho, double duration, double tau) {
  if (!(duration >= 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("apply_depolarizing: need duration >= 0 and tau > 0");
  }
  const double keep = std::exp(-duration / tau);
  Matrix4 m = keep * rho.matrix() + (1.0 - keep) * Matrix4::Identity() / 4.0;
  return DensityMatrix::unchecked(m);
}

/// Local Z rotations |d> -> e^{i phi}|d> on each node. A Gaussian average over
/// phases with variance 2t/tau reproduces apply_storage_decay.
inline DensityMatrix apply_local_phases(const DensityMatrix& rho, double phi_a, double phi_b) {
  Vector4 d;
  for (int i = 0; i < 4; ++i) {
    double phase = ((i >> 1) & 1) * phi_a + (i & 1) * phi_b;
    d(i) = std::polar(1.0, phase);
  }
  Matrix4 m = d.asDiagonal() * rho.matrix() * d.conjugate().asDiagonal();
  return DensityMatrix::unchecked(m);
}

/// Pauli Z on node A; maps PsiMinus onto PsiPlus.
inline DensityMatrix apply_z_on_a(const DensityMatrix& rho) {
  Matrix4 zi = kron(pauli::z(), pauli::identity());
  return DensityMatrix::unchecked(zi * rho.matrix() * zi);
}

/// Diagonal fallback state with Bell fidelity exactly `f`; the remaining
/// weight goes to |uu> and |dd> in the no-detection proportions.
inline DensityMatrix fallback_state(double f, double alpha) {
  if (!(f >= 0.0 && f <= 0.5)) {
    throw std::invalid_argument("fallback fidelity must be in [0, 1/2]");
  }
  const double uu = alpha * alpha;
  const double dd = (1.0 - alpha) * (1.0 - alpha);
  const double rest = 1.0 - 2.0 * f;
  const double share = uu + dd > 0.0 ? uu / (uu + dd) : 0.5;
  return DensityMatrix::diagonal({rest * share, f, f, rest * (1.0 - share)});
}

}  // namespace qlink
