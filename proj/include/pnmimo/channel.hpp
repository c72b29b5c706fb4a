#ifndef PNMIMO_CHANNEL_HPP
#define PNMIMO_CHANNEL_HPP

#include <limits>

#include "pnmimo/common.hpp"

namespace pnmimo {

/// Link geometry, energies and frame dimensions.
struct SystemConfig {
  int n_t = 32;
  int n_r = 64;
  int o_t = 16;
  int o_r = 4;
  double e_s = 1.0;
  /// Channel-pilot energy; +inf means perfect CSI.
  double e_c = std::numeric_limits<double>::infinity();
  double sigma2 = 0.01;  ///< noise variance per real dimension
  double k_rice_db = 100.0;
  int l = 1086;  ///< data slots per frame
  int r = 60;    ///< data slots between phase-pilot blocks

  int n_ot() const { return n_t / o_t; }
  int n_or() const { return n_r / o_r; }
  bool perfect_csi() const { return std::isinf(e_c); }
  /// 1/E_C, zero for perfect CSI.
  double inv_e_c() const { return perfect_csi() ? 0.0 : 1.0 / e_c; }
  OscillatorGeometry geometry() const { return {o_t, o_r, n_ot(), n_or()}; }
  void validate() const;
};

/// Average transmitted-symbol energy over channel pilots and data,
/// (L E_s + N_t E_C) / (L + N_t). Requires finite E_C.
double average_symbol_energy(const SystemConfig& cfg);

/// sigma^2 per real dimension giving the requested E_s/N0 with N0 = 2 sigma^2.
double sigma2_from_es_n0_db(double e_s, double es_n0_db);

/// Rician block-fading matrix sqrt(K/(K+1)) H_los + sqrt(1/(K+1)) H_w.
CMatrix gen_rician(const SystemConfig& cfg, Rng& rng);

/// Applies the per-slot phase rotations of the atomic phases phi_slot
/// (transmit oscillators first): returns Phi_R * H * Phi_T.
CMatrix rotate_channel(const CMatrix& h, const OscillatorGeometry& geo, const RVector& phi_slot);

/// y = Phi_R H Phi_T x + z, z circular Gaussian with sigma2 per real dimension.
CVector apply_channel(const CMatrix& h, const OscillatorGeometry& geo, const RVector& phi_slot,
                      const CVector& x, double sigma2, Rng& rng);

/// Noisy channel estimate seen by the receiver. Block accessors return views
/// into h_hat.
struct EstimatedChannel {
  CMatrix h_hat;
  double e_c = std::numeric_limits<double>::infinity();
  OscillatorGeometry geo;

  bool perfect() const { return std::isinf(e_c); }

  /// N_or x N_ot block seen by receive oscillator rx and transmit oscillator tx.
  auto pair(int rx, int tx) { check_rx(rx), check_tx(tx); return h_hat.block(rx * geo.n_or, tx * geo.n_ot, geo.n_or, geo.n_ot); }
  auto pair(int rx, int tx) const { check_rx(rx), check_tx(tx); return h_hat.block(rx * geo.n_or, tx * geo.n_ot, geo.n_or, geo.n_ot); }
  /// N_r x N_ot columns fed by transmit oscillator tx.
  auto tx_col(int tx) { check_tx(tx); return h_hat.middleCols(tx * geo.n_ot, geo.n_ot); }
  auto tx_col(int tx) const { check_tx(tx); return h_hat.middleCols(tx * geo.n_ot, geo.n_ot); }
  /// N_or x N_t rows fed by receive oscillator rx.
  auto rx_row(int rx) { check_rx(rx); return h_hat.middleRows(rx * geo.n_or, geo.n_or); }
  auto rx_row(int rx) const { check_rx(rx); return h_hat.middleRows(rx * geo.n_or, geo.n_or); }

 private:
  void check_tx(int tx) const {
    if (tx < 0 || tx >= geo.o_t) throw std::out_of_range("EstimatedChannel: transmit oscillator out of range");
  }
  void check_rx(int rx) const {
    if (rx < 0 || rx >= geo.o_r) throw std::out_of_range("EstimatedChannel: receive oscillator out of range");
  }
};

/// Phi_R[0] H Phi_T[0] + Z_C with Z_C of variance sigma2/E_C per real
/// dimension; exact for perfect CSI (cfg.e_c = inf).
EstimatedChannel estimate_channel(const CMatrix& h, const RVector& phi0, const SystemConfig& cfg, Rng& rng);

}  // namespace pnmimo

#endif  // PNMIMO_CHANNEL_HPP
