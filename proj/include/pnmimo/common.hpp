#ifndef PNMIMO_COMMON_HPP
#define PNMIMO_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pnmimo {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Antenna-to-oscillator wiring. Transmit oscillator i feeds antennas
/// [i*n_ot, (i+1)*n_ot), receive oscillator i feeds [i*n_or, (i+1)*n_or).
/// All indices in the code base are 0-based.
struct OscillatorGeometry {
  int o_t = 1;
  int o_r = 1;
  int n_ot = 1;
  int n_or = 1;

  int n_t() const { return o_t * n_ot; }
  int n_r() const { return o_r * n_or; }
  int n_osc() const { return o_t + o_r; }
  int n_pairs() const { return o_t * o_r; }
  /// Row of the sum process fed by transmit oscillator i and receive oscillator ir.
  int pair_index(int i, int ir) const { return i * o_r + ir; }
};

[[noreturn]] inline void throw_invalid(const std::string& what) {
  throw std::invalid_argument(what);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Seeded random stream. One stream per (frame, purpose); see random.hpp.
using Rng = std::mt19937_64;

/// Circular complex Gaussian draw with the given variance per real dimension.
inline Complex complex_gaussian(Rng& rng, double var_per_real) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const double s = std::sqrt(var_per_real);
  const double re = n01(rng);
  const double im = n01(rng);
  return {s * re, s * im};
}

}  // namespace pnmimo

#endif  // PNMIMO_COMMON_HPP
