#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qlink {

using Complex = std::complex<double>;
using Matrix4 = Eigen::Matrix4cd;
using Vector4 = Eigen::Vector4cd;
using Matrix2 = Eigen::Matrix2cd;

// Two-qubit computational basis. Node A is the most significant qubit and
// |up> (m_s = 0) is the 0 state, so the fixed order is {uu, ud, du, dd}.
enum class Spin : int { Up = 0, Down = 1 };

inline constexpr int kUpUp = 0;
inline constexpr int kUpDown = 1;
inline constexpr int kDownUp = 2;
inline constexpr int kDownDown = 3;

inline constexpr int basis_index(Spin a, Spin b) {
  return 2 * static_cast<int>(a) + static_cast<int>(b);
}

struct InvariantReport {
  double hermiticity_error = 0.0;
  double trace_error = 0.0;
  double min_eigenvalue = 0.0;

  bool ok() const {
    return hermiticity_error <= 1e-12 && trace_error <= 1e-12 && min_eigenvalue >= -1e-10;
  }
};

inline InvariantReport check_invariants(const Matrix4& m) {
  InvariantReport r;
  r.hermiticity_error = (m - m.adjoint()).cwiseAbs().maxCoeff();
  r.trace_error = std::abs(m.trace() - Complex(1.0, 0.0));
  Eigen::SelfAdjointEigenSolver<Matrix4> solver(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  r.min_eigenvalue = solver.eigenvalues().minCoeff();
  return r;
}

/// Hermitian, unit-trace, positive semidefinite 4x4 two-qubit state.
///
/// Public construction validates; channel code inside the library builds
/// outputs through `unchecked` since every channel is trace preserving and
/// completely positive by construction.
class DensityMatrix {
 public:
  DensityMatrix() : m_(Matrix4::Identity() / 4.0) {}

  static DensityMatrix from_matrix(const Matrix4& m) {
    InvariantReport r = check_invariants(m);
    if (!r.ok()) {
      throw std::invalid_argument(
          "not a density matrix: hermiticity error " + std::to_string(r.hermiticity_error) +
          ", trace error " + std::to_string(r.trace_error) + ", min eigenvalue " +
          std::to_string(r.min_eigenvalue));
    }
    return DensityMatrix(m);
  }

  static DensityMatrix unchecked(const Matrix4& m) { return DensityMatrix(m); }

  static DensityMatrix fully_mixed() { return DensityMatrix(); }

  static DensityMatrix pure(const Vector4& psi) {
    double n = psi.norm();
    if (n == 0.0) {
      throw std::invalid_argument("pure state from zero vector");
    }
    Vector4 v = psi / n;
    return DensityMatrix(v * v.adjoint());
  }

  // Classical mixture; weights need not be normalized but must be >= 0.
  static DensityMatrix diagonal(const std::array<double, 4>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) {
        throw std::invalid_argument("negative population weight");
      }
      total += w;
    }
    if (total <= 0.0) {
      throw std::invalid_argument("all population weights are zero");
    }
    Matrix4 m = Matrix4::Zero();
    for (int i = 0; i < 4; ++i) {
      m(i, i) = weights[i] / total;
    }
    return DensityMatrix(m);
  }

  const Matrix4& matrix() const { return m_; }
  Complex operator()(int i, int j) const { return m_(i, j); }
  double population(int i) const { return m_(i, i).real(); }

  InvariantReport invariants() const { return check_invariants(m_); }

  // Row-major, real/imaginary interleaved; 32 numbers.
  std::array<double, 32> serialize() const {
    std::array<double, 32> out{};
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        out[2 * (4 * i + j)] = m_(i, j).real();
        out[2 * (4 * i + j) + 1] = m_(i, j).imag();
      }
    }
    return out;
  }

  static DensityMatrix deserialize(const std::array<double, 32>& flat) {
    Matrix4 m;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        m(i, j) = Complex(flat[2 * (4 * i + j)], flat[2 * (4 * i + j) + 1]);
      }
    }
    return from_matrix(m);
  }

 private:
  explicit DensityMatrix(const Matrix4& m) : m_(m) {}

  Matrix4 m_;
};

namespace pauli {

inline Matrix2 identity() { return Matrix2::Identity(); }

inline Matrix2 x() {
  Matrix2 m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

// Y|up> = i|down>.
inline Matrix2 y() {
  Matrix2 m;
  m << Complex(0.0, 0.0), Complex(0.0, -1.0), Complex(0.0, 1.0), Complex(0.0, 0.0);
  return m;
}

inline Matrix2 z() {
  Matrix2 m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

}  // namespace pauli

inline Matrix4 kron(const Matrix2& a, const Matrix2& b) {
  Matrix4 out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace qlink
