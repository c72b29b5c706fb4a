#ifndef PNMIMO_PN_PROCESS_HPP
#define PNMIMO_PN_PROCESS_HPP

#include <cmath>
#include <vector>

#include "pnmimo/common.hpp"

namespace pnmimo {

/// Maps x to its representative in (-pi, pi].
template <typename Scalar>
Scalar wrap_phase(Scalar x) {
  using std::floor;
  using std::isfinite;
  if (!isfinite(x)) throw_invalid("wrap_phase: non-finite input");
  const Scalar two_pi = Scalar(kTwoPi);
  Scalar r = x - two_pi * floor((x + Scalar(kPi)) / two_pi);
  if (r <= -Scalar(kPi)) r += two_pi;
  if (r > Scalar(kPi)) r -= two_pi;
  return r;
}

/// Elementwise wrap of a dense expression.
template <typename Derived>
typename Derived::PlainObject wrap_phases(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](typename Derived::Scalar v) { return wrap_phase(v); });
}

enum class PnModel { wiener, mask };

/// One piece of a phase-noise mask: the level changes by `slope_db_per_decade`
/// per decade between f_start_hz and f_end_hz.
struct MaskSegment {
  double f_start_hz = 0.0;
  double f_end_hz = 0.0;
  double slope_db_per_decade = 0.0;
};

struct PnConfig {
  PnModel model = PnModel::wiener;
  double rho = 0.2;  ///< Wiener increment std dev [rad]
  std::vector<MaskSegment> mask_segments = {{2e3, 100e3, -3.0}, {100e3, 1e6, -2.0}, {1e6, 52e6, 0.0}};
  double mask_ref_level_dbc = -133.0;  ///< dBc/Hz at mask_ref_freq_hz
  double mask_ref_freq_hz = 100e3;
  double sample_rate_hz = 26e6;
  /// When > 0 the synthesized mask PSD is rescaled by a constant so the
  /// per-slot increment std equals this value. 0 uses the mask verbatim.
  double mask_equivalent_rho = 0.0;

  void validate() const;
};

/// Three-segment mask: -3, -2, 0 dB/decade over [2k,100k), [100k,1M),
/// [1M, 2*26M) Hz, -133 dBc/Hz at 100 kHz, fs = 26 MHz.
PnConfig reference_mask_config();

/// Atomic phase trajectories, one row per oscillator (transmit oscillators
/// first). Column 0 is the channel-estimation epoch; with the differential
/// convention it is identically zero.
struct PnTrajectory {
  RMatrix phases;
  bool differential = true;

  Index n_osc() const { return phases.rows(); }
  Index n_slots() const { return phases.cols(); }
};

/// Sum processes; row geometry.pair_index(i, ir) holds phi_i + phi_{O_t+ir}.
struct SumTrajectory {
  RMatrix phases;
  int o_t = 1;
  int o_r = 1;
};

PnTrajectory gen_wiener(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng);
PnTrajectory gen_mask(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng);
/// Dispatches on cfg.model.
PnTrajectory generate_pn(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng);

SumTrajectory atomic_to_sum(const PnTrajectory& traj, int o_t, int o_r);
/// Same map on a bare (O_t+O_r) x T matrix.
RMatrix atomic_to_sum(const RMatrix& atomic, int o_t, int o_r);

/// Mask level in dBc/Hz at frequency f. Below the first corner the first
/// corner's level is held; above the last corner the last level is held.
/// Returns -inf for a -inf reference level.
double mask_level_dbc(const PnConfig& cfg, double f_hz);

/// One-sided phase PSD in rad^2/Hz read straight off the mask.
double mask_psd(const PnConfig& cfg, double f_hz);

/// Expected variance of the per-slot increment of a verbatim (not rescaled)
/// gen_mask realization synthesized with FFT length nfft.
double mask_increment_variance(const PnConfig& cfg, Index nfft);

/// FFT length gen_mask uses for a trajectory of n_slots samples.
Index mask_fft_length(const PnConfig& cfg, int n_slots);

}  // namespace pnmimo

#endif  // PNMIMO_PN_PROCESS_HPP
