#include "pnmimo/pn_process.hpp"

#include <algorithm>
#include <bit>
#include <limits>

#include <unsupported/Eigen/FFT>

namespace pnmimo {

void PnConfig::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw_invalid("pn.rho must be finite and >= 0");
  if (!(sample_rate_hz > 0.0)) throw_invalid("pn.sample_rate_hz must be > 0");
  if (!(mask_equivalent_rho >= 0.0)) throw_invalid("pn.mask.equivalent_rho must be >= 0");
  if (model != PnModel::mask) return;
  if (mask_segments.empty()) throw_invalid("pn.mask.segments must not be empty");
  for (std::size_t k = 0; k < mask_segments.size(); ++k) {
    const auto& s = mask_segments[k];
    if (!(s.f_start_hz > 0.0) || !(s.f_end_hz > s.f_start_hz))
      throw_invalid("pn.mask.segments[" + std::to_string(k) + "]: need 0 < f_start < f_end");
    if (k > 0 && mask_segments[k - 1].f_end_hz != s.f_start_hz)
      throw_invalid("pn.mask.segments[" + std::to_string(k) + "]: not contiguous with previous segment");
  }
  if (!(mask_ref_freq_hz > 0.0)) throw_invalid("pn.mask.ref_freq_hz must be > 0");
}

PnConfig reference_mask_config() {
  PnConfig cfg;
  cfg.model = PnModel::mask;
  cfg.sample_rate_hz = 26e6;
  cfg.mask_segments = {{2e3, 100e3, -3.0}, {100e3, 1e6, -2.0}, {1e6, 2.0 * 26e6, 0.0}};
  cfg.mask_ref_level_dbc = -133.0;
  cfg.mask_ref_freq_hz = 100e3;
  return cfg;
}

PnTrajectory gen_wiener(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng) {
  if (n_osc <= 0 || n_slots <= 0) throw_invalid("gen_wiener: n_osc and n_slots must be positive");
  if (!(cfg.rho >= 0.0)) throw_invalid("gen_wiener: rho must be >= 0");
  PnTrajectory traj;
  traj.phases = RMatrix::Zero(n_osc, n_slots);
  std::normal_distribution<double> inc(0.0, 1.0);
  // Row-major draw order: oscillator 0's whole path first.
  for (int i = 0; i < n_osc; ++i)
    for (int n = 1; n < n_slots; ++n) traj.phases(i, n) = traj.phases(i, n - 1) + cfg.rho * inc(rng);
  return traj;
}

namespace {

struct SegmentLevels {
  std::vector<double> start_db;  // level at each segment's f_start
};

SegmentLevels segment_levels(const PnConfig& cfg) {
  const auto& seg = cfg.mask_segments;
  SegmentLevels out;
  out.start_db.resize(seg.size());
  const double fref = std::clamp(cfg.mask_ref_freq_hz, seg.front().f_start_hz, seg.back().f_end_hz);
  std::size_t r = 0;
  while (r + 1 < seg.size() && fref >= seg[r].f_end_hz) ++r;
  out.start_db[r] = cfg.mask_ref_level_dbc - seg[r].slope_db_per_decade * std::log10(fref / seg[r].f_start_hz);
  for (std::size_t k = r + 1; k < seg.size(); ++k)
    out.start_db[k] = out.start_db[k - 1] +
                      seg[k - 1].slope_db_per_decade * std::log10(seg[k - 1].f_end_hz / seg[k - 1].f_start_hz);
  for (std::size_t k = r; k-- > 0;)
    out.start_db[k] = out.start_db[k + 1] - seg[k].slope_db_per_decade * std::log10(seg[k].f_end_hz / seg[k].f_start_hz);
  return out;
}

}  // namespace

double mask_level_dbc(const PnConfig& cfg, double f_hz) {
  if (cfg.mask_segments.empty()) throw_invalid("mask_level_dbc: empty mask");
  if (std::isinf(cfg.mask_ref_level_dbc) && cfg.mask_ref_level_dbc < 0)
    return -std::numeric_limits<double>::infinity();
  const auto& seg = cfg.mask_segments;
  const auto lv = segment_levels(cfg);
  const double f = std::clamp(f_hz, seg.front().f_start_hz, seg.back().f_end_hz);
  std::size_t k = 0;
  while (k + 1 < seg.size() && f >= seg[k].f_end_hz) ++k;
  return lv.start_db[k] + seg[k].slope_db_per_decade * std::log10(f / seg[k].f_start_hz);
}

double mask_psd(const PnConfig& cfg, double f_hz) {
  const double db = mask_level_dbc(cfg, f_hz);
  return std::isinf(db) ? 0.0 : std::pow(10.0, db / 10.0);
}

Index mask_fft_length(const PnConfig& cfg, int n_slots) {
  const double f_low = cfg.mask_segments.empty() ? cfg.sample_rate_hz : cfg.mask_segments.front().f_start_hz;
  // Resolve the lowest corner with at least two bins.
  const double need = std::max(2.0 * n_slots, 2.0 * std::ceil(cfg.sample_rate_hz / f_low));
  const auto n = static_cast<std::uint64_t>(std::min(need, double(1 << 24)));
  return static_cast<Index>(std::max<std::uint64_t>(16, std::bit_ceil(n)));
}

namespace {

/// Per-bin amplitude sqrt(S(f_k) df) for k = 1 .. nfft/2-1.
RVector bin_amplitudes(const PnConfig& cfg, Index nfft) {
  const double df = cfg.sample_rate_hz / double(nfft);
  RVector c = RVector::Zero(nfft / 2);
  for (Index k = 1; k < nfft / 2; ++k) c(k) = std::sqrt(mask_psd(cfg, double(k) * df) * df);
  return c;
}

}  // namespace

double mask_increment_variance(const PnConfig& cfg, Index nfft) {
  const RVector c = bin_amplitudes(cfg, nfft);
  double v = 0.0;
  for (Index k = 1; k < nfft / 2; ++k) {
    const double s = std::sin(kPi * double(k) / double(nfft));
    v += c(k) * c(k) * 4.0 * s * s;
  }
  return v;
}

PnTrajectory gen_mask(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng) {
  if (n_osc <= 0 || n_slots <= 0) throw_invalid("gen_mask: n_osc and n_slots must be positive");
  if (cfg.mask_segments.empty()) throw_invalid("gen_mask: empty mask");
  cfg.validate();

  const Index nfft = mask_fft_length(cfg, n_slots);
  RVector amp = bin_amplitudes(cfg, nfft);
  if (cfg.mask_equivalent_rho > 0.0) {
    const double v = mask_increment_variance(cfg, nfft);
    if (v > 0.0) amp *= cfg.mask_equivalent_rho / std::sqrt(v);
  }

  PnTrajectory traj;
  traj.phases = RMatrix::Zero(n_osc, n_slots);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::FFT<double> fft;
  std::vector<Complex> spec(static_cast<std::size_t>(nfft));
  std::vector<Complex> time;
  const double half = double(nfft) / 2.0;
  for (int i = 0; i < n_osc; ++i) {
    std::fill(spec.begin(), spec.end(), Complex(0.0, 0.0));
    for (Index k = 1; k < nfft / 2; ++k) {
      const double a = n01(rng);
      const double b = n01(rng);
      const Complex v = half * amp(k) * Complex(a, -b);
      spec[static_cast<std::size_t>(k)] = v;
      spec[static_cast<std::size_t>(nfft - k)] = std::conj(v);
    }
    fft.inv(time, spec);
    const double x0 = time[0].real();
    for (int n = 0; n < n_slots; ++n) traj.phases(i, n) = time[static_cast<std::size_t>(n)].real() - x0;
  }
  return traj;
}

PnTrajectory generate_pn(const PnConfig& cfg, int n_osc, int n_slots, Rng& rng) {
  return cfg.model == PnModel::wiener ? gen_wiener(cfg, n_osc, n_slots, rng) : gen_mask(cfg, n_osc, n_slots, rng);
}

RMatrix atomic_to_sum(const RMatrix& atomic, int o_t, int o_r) {
  if (o_t <= 0 || o_r <= 0) throw_invalid("atomic_to_sum: oscillator counts must be positive");
  if (atomic.rows() != o_t + o_r) throw_invalid("atomic_to_sum: expected O_t+O_r rows");
  RMatrix sum(o_t * o_r, atomic.cols());
  for (int i = 0; i < o_t; ++i)
    for (int ir = 0; ir < o_r; ++ir) sum.row(i * o_r + ir) = atomic.row(i) + atomic.row(o_t + ir);
  return sum;
}

SumTrajectory atomic_to_sum(const PnTrajectory& traj, int o_t, int o_r) {
  return {atomic_to_sum(traj.phases, o_t, o_r), o_t, o_r};
}

}  // namespace pnmimo
