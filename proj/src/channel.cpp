#include "pnmimo/channel.hpp"

namespace pnmimo {

void SystemConfig::validate() const {
  if (n_t <= 0 || n_r <= 0 || o_t <= 0 || o_r <= 0) throw_invalid("system: antenna and oscillator counts must be positive");
  if (n_t % o_t != 0) throw_invalid("system.o_t must divide system.n_t");
  if (n_r % o_r != 0) throw_invalid("system.o_r must divide system.n_r");
  if (!(e_s > 0.0)) throw_invalid("system.e_s must be > 0");
  if (!(e_c > 0.0)) throw_invalid("system.e_c must be > 0");
  if (!(sigma2 > 0.0)) throw_invalid("system.sigma2 must be > 0");
  if (l < 1) throw_invalid("system.l must be >= 1");
  if (r < 1) throw_invalid("system.r must be >= 1");
}

double average_symbol_energy(const SystemConfig& cfg) {
  if (cfg.perfect_csi()) throw_invalid("average_symbol_energy: undefined for perfect CSI");
  const double l = cfg.l;
  const double nt = cfg.n_t;
  return (l * cfg.e_s + nt * cfg.e_c) / (l + nt);
}

double sigma2_from_es_n0_db(double e_s, double es_n0_db) { return e_s / (2.0 * db_to_linear(es_n0_db)); }

CMatrix gen_rician(const SystemConfig& cfg, Rng& rng) {
  cfg.validate();
  const double k = db_to_linear(cfg.k_rice_db);
  const double a_los = std::sqrt(k / (k + 1.0));
  const double a_w = std::sqrt(1.0 / (k + 1.0));
  std::uniform_real_distribution<double> theta(0.0, kTwoPi);
  CMatrix h(cfg.n_r, cfg.n_t);
  for (Index c = 0; c < h.cols(); ++c)
    for (Index r = 0; r < h.rows(); ++r) {
      const Complex los = std::polar(1.0, theta(rng));
      h(r, c) = a_los * los + a_w * complex_gaussian(rng, 0.5);
    }
  return h;
}

CMatrix rotate_channel(const CMatrix& h, const OscillatorGeometry& geo, const RVector& phi_slot) {
  if (h.rows() != geo.n_r() || h.cols() != geo.n_t()) throw_invalid("rotate_channel: channel shape mismatch");
  if (phi_slot.size() != geo.n_osc()) throw_invalid("rotate_channel: expected O_t+O_r phases");
  CMatrix out(h.rows(), h.cols());
  for (int tx = 0; tx < geo.o_t; ++tx)
    for (int rx = 0; rx < geo.o_r; ++rx)
      out.block(rx * geo.n_or, tx * geo.n_ot, geo.n_or, geo.n_ot) =
          std::polar(1.0, phi_slot(tx) + phi_slot(geo.o_t + rx)) *
          h.block(rx * geo.n_or, tx * geo.n_ot, geo.n_or, geo.n_ot);
  return out;
}

CVector apply_channel(const CMatrix& h, const OscillatorGeometry& geo, const RVector& phi_slot, const CVector& x,
                      double sigma2, Rng& rng) {
  if (h.rows() != geo.n_r() || h.cols() != geo.n_t()) throw_invalid("apply_channel: channel shape mismatch");
  if (phi_slot.size() != geo.n_osc()) throw_invalid("apply_channel: expected O_t+O_r phases");
  if (x.size() != geo.n_t()) throw_invalid("apply_channel: x must have N_t entries");
  if (!(sigma2 >= 0.0)) throw_invalid("apply_channel: sigma2 must be >= 0");

  CVector xr(x.size());
  for (int tx = 0; tx < geo.o_t; ++tx)
    xr.segment(tx * geo.n_ot, geo.n_ot) = std::polar(1.0, phi_slot(tx)) * x.segment(tx * geo.n_ot, geo.n_ot);
  CVector y = h * xr;
  for (int rx = 0; rx < geo.o_r; ++rx) y.segment(rx * geo.n_or, geo.n_or) *= std::polar(1.0, phi_slot(geo.o_t + rx));
  // Noise is always drawn so stream consumption does not depend on sigma2.
  for (Index k = 0; k < y.size(); ++k) y(k) += complex_gaussian(rng, 1.0) * std::sqrt(sigma2);
  return y;
}

EstimatedChannel estimate_channel(const CMatrix& h, const RVector& phi0, const SystemConfig& cfg, Rng& rng) {
  if (!(cfg.e_c > 0.0)) throw_invalid("estimate_channel: E_C must be > 0 (use +inf for perfect CSI)");
  const OscillatorGeometry geo = cfg.geometry();
  EstimatedChannel est;
  est.geo = geo;
  est.e_c = cfg.e_c;
  est.h_hat = rotate_channel(h, geo, phi0);
  const double var = cfg.perfect_csi() ? 0.0 : cfg.sigma2 / cfg.e_c;
  for (Index c = 0; c < est.h_hat.cols(); ++c)
    for (Index r = 0; r < est.h_hat.rows(); ++r) est.h_hat(r, c) += complex_gaussian(rng, 1.0) * std::sqrt(var);
  return est;
}

}  // namespace pnmimo
