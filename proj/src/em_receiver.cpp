#include "pnmimo/em_receiver.hpp"

#include <algorithm>

#include "pnmimo/pn_process.hpp"

namespace pnmimo {

void ReceiverConfig::validate() const {
  if (max_rx_iters < 1) throw_invalid("receiver.max_rx_iters must be >= 1");
  if (ldpc_iters < 1) throw_invalid("receiver.ldpc_iters must be >= 1");
  if (detection == PhaseDetection::em && !(prior_rho > 0.0))
    throw_invalid("receiver.prior_rho must be > 0 when phase detection is enabled");
  sd.validate();
}

CMatrix lmmse_filter(const CMatrix& h_hat, double sigma2, double e_s, double e_c, int n_t) {
  if (!(sigma2 > 0.0) || !(e_s > 0.0) || !(e_c > 0.0)) throw_invalid("lmmse_filter: sigma2, E_s, E_C must be > 0");
  const double inv_ec = std::isinf(e_c) ? 0.0 : 1.0 / e_c;
  const double reg = sigma2 * (n_t * inv_ec + 1.0 / e_s);
  CMatrix gram = h_hat.adjoint() * h_hat;
  gram.diagonal().array() += reg;
  return gram.llt().solve(h_hat.adjoint());
}

namespace {

// Unit-gain normalization and effective noise from G = F H.
void stream_stats(const CMatrix& f, const CMatrix& h, double sigma2, double e_s, double e_c, RVector& gain,
                  RVector& noise) {
  const CMatrix g = f * h;
  const double inv_ec = std::isinf(e_c) ? 0.0 : 1.0 / e_c;
  const double n_eff = 2.0 * sigma2 * (1.0 + h.cols() * e_s * inv_ec);
  gain.resize(g.rows());
  noise.resize(g.rows());
  for (Index k = 0; k < g.rows(); ++k) {
    const double mu = g(k, k).real();
    const double leak = g.row(k).squaredNorm() - std::norm(g(k, k));
    const double var = e_s * leak + f.row(k).squaredNorm() * n_eff;
    gain(k) = mu;
    noise(k) = std::max(var / (mu * mu), 1e-300);
  }
}

}  // namespace

SlotOutput demodulate_slot(const EstimatedChannel& h, const RVector& phi_slot, const CVector& y, double sigma2,
                           double e_s) {
  const CMatrix h_eff = rotate_channel(h.h_hat, h.geo, phi_slot);
  if (y.size() != h_eff.rows()) throw_invalid("demodulate_slot: y length mismatch");
  const CMatrix f = lmmse_filter(h_eff, sigma2, e_s, h.e_c, h.geo.n_t());
  SlotOutput out;
  RVector gain;
  stream_stats(f, h_eff, sigma2, e_s, h.e_c, gain, out.noise);
  out.x = (f * y).cwiseQuotient(gain.cast<Complex>());
  return out;
}

Demodulator::Demodulator(const EstimatedChannel& h, double sigma2, double e_s) : geo_(h.geo) {
  f_ = lmmse_filter(h.h_hat, sigma2, e_s, h.e_c, h.geo.n_t());
  stream_stats(f_, h.h_hat, sigma2, e_s, h.e_c, gain_, noise_);
}

SlotOutput Demodulator::slot(const RVector& phi_slot, const CVector& y) const {
  if (phi_slot.size() != geo_.n_osc()) throw_invalid("Demodulator: expected O_t+O_r phases");
  if (y.size() != geo_.n_r()) throw_invalid("Demodulator: y length mismatch");
  CVector yr = y;
  for (int ir = 0; ir < geo_.o_r; ++ir)
    yr.segment(ir * geo_.n_or, geo_.n_or) *= std::polar(1.0, -phi_slot(geo_.o_t + ir));
  SlotOutput out;
  out.x = f_ * yr;
  for (int i = 0; i < geo_.o_t; ++i) out.x.segment(i * geo_.n_ot, geo_.n_ot) *= std::polar(1.0, -phi_slot(i));
  out.x = out.x.cwiseQuotient(gain_.cast<Complex>());
  out.noise = noise_;
  return out;
}

double sum_phase_mse(const PhaseEstimate& est, const RMatrix& sum_truth, const FrameLayout& layout, int o_t, int o_r) {
  if (sum_truth.cols() != layout.n_slots() || est.phi_hat.cols() != layout.n_slots())
    throw_invalid("sum_phase_mse: slot count mismatch");
  const RMatrix sum_est = atomic_to_sum(est.phi_hat, o_t, o_r);
  double acc = 0.0;
  for (int t : layout.data_slot)
    for (Index p = 0; p < sum_est.rows(); ++p) {
      const double e = wrap_phase(sum_est(p, t) - sum_truth(p, t));
      acc += e * e;
    }
  return acc / (double(layout.data_slot.size()) * double(sum_est.rows()));
}

OperationCounts count_ops(const SystemConfig& sys) {
  const double nt = sys.n_t, nr = sys.n_r, ot = sys.o_t, orr = sys.o_r;
  OperationCounts c;
  c.sums = 4 * nt * nt + 8 * nr * nt + 12 * orr + 11 * ot;
  c.products = 5 * nt * (nt - 1) + 10 * nr * nt + 7 * (orr + ot);
  c.divisions = ot + orr;
  c.lut_accesses = nt * (nt - 1) + 2 * nr * nt;
  return c;
}

namespace {

struct DecodePass {
  std::vector<std::vector<std::uint8_t>> info;   // per codeword
  std::vector<std::vector<std::uint8_t>> coded;  // per user, hard transmitted bits
  int converged = 0;
};

DecodePass demod_decode(const CMatrix& y, const PhaseEstimate& phase, const Demodulator& demod,
                        const ReceiverContext& ctx, int ldpc_iters) {
  const SystemConfig& sys = ctx.sys;
  const CodingLayout& cod = ctx.coding;
  const QamConstellation& qam = *ctx.qam;
  const int bps = qam.bits_per_symbol();
  const int n_ot = sys.n_ot();

  std::vector<std::vector<double>> llr(static_cast<std::size_t>(sys.o_t),
                                       std::vector<double>(static_cast<std::size_t>(cod.bits_per_user)));
  for (int d = 0; d < sys.l; ++d) {
    const int t = ctx.layout.data_slot[d];
    const SlotOutput s = demod.slot(phase.phi_hat.col(t), y.col(t));
    for (int u = 0; u < sys.o_t; ++u)
      for (int a = 0; a < n_ot; ++a) {
        const int k = u * n_ot + a;
        const std::size_t sym = static_cast<std::size_t>(a) * sys.l + d;
        qam.demap_llr(s.x(k), s.noise(k), std::span<double>(llr[u]).subspan(sym * bps, bps));
      }
  }

  DecodePass pass;
  pass.coded.resize(static_cast<std::size_t>(sys.o_t));
  for (int u = 0; u < sys.o_t; ++u) {
    pass.coded[u].reserve(static_cast<std::size_t>(cod.coded_bits_per_user()));
    for (int c = 0; c < cod.codewords_per_user; ++c) {
      const auto span = std::span<const double>(llr[u]).subspan(static_cast<std::size_t>(c) * cod.n, cod.n);
      LdpcDecodeResult r = ctx.code->decode(span, ldpc_iters);
      pass.converged += r.converged ? 1 : 0;
      pass.coded[u].insert(pass.coded[u].end(), r.transmitted.begin(), r.transmitted.end());
      pass.info.push_back(std::move(r.info));
    }
  }
  return pass;
}

long count_bit_errors(const std::vector<std::vector<std::uint8_t>>& a, const std::vector<std::vector<std::uint8_t>>& b) {
  if (a.size() != b.size()) throw_invalid("count_bit_errors: codeword count mismatch");
  long e = 0;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (std::size_t j = 0; j < a[c].size(); ++j) e += (a[c][j] != b[c][j]) ? 1 : 0;
  return e;
}

}  // namespace

ReceiverResult receive_frame(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                             const ReceiverContext& ctx, const ReceiverConfig& cfg, const GenieTruth* truth) {
  cfg.validate();
  if (!ctx.code || !ctx.qam) throw_invalid("receive_frame: context lacks code or constellation");
  const SystemConfig& sys = ctx.sys;
  const OscillatorGeometry geo = sys.geometry();
  if (y.rows() != sys.n_r || y.cols() != ctx.layout.n_slots()) throw_invalid("receive_frame: Y shape mismatch");

  ReceiverResult res;
  const bool em = cfg.detection == PhaseDetection::em;
  res.phase = em ? pilot_initial_estimate(y, h, known, ctx.layout)
                 : PhaseEstimate{RMatrix::Zero(geo.n_osc(), ctx.layout.n_slots())};
  const Demodulator demod(h, sys.sigma2, sys.e_s);
  const double rho2 = cfg.prior_rho * cfg.prior_rho;

  CMatrix x_hat;
  for (int l = 1; l <= cfg.max_rx_iters; ++l) {
    IterationDiag diag;
    diag.iteration = l;
    if (l >= 2 && em) {
      const PhaseObjective obj(h, y, x_hat, sys.sigma2, rho2);
      SdResult sd = detect_phases(res.phase, obj, cfg.sd, cfg.keep_sd_trace);
      res.phase = std::move(sd.estimate);
      diag.sd_steps = sd.steps;
      res.total_sd_steps += sd.steps;
      res.ops += sd.ops;
      if (cfg.keep_sd_trace) res.sd_trace.insert(res.sd_trace.end(), sd.trace.begin(), sd.trace.end());
    }
    DecodePass pass = demod_decode(y, res.phase, demod, ctx, cfg.ldpc_iters);
    x_hat = assemble_symbols(sys, ctx.layout, ctx.coding, *ctx.qam, known, pass.coded);
    res.info = std::move(pass.info);
    res.iterations = l;
    diag.converged_codewords = pass.converged;
    if (truth) {
      diag.bit_errors = count_bit_errors(res.info, truth->info);
      if (truth->sum_phases.size() > 0) diag.mse = sum_phase_mse(res.phase, truth->sum_phases, ctx.layout, geo.o_t, geo.o_r);
    }
    res.diag.push_back(diag);

    bool stop = false;
    switch (cfg.stopping) {
      case StoppingRule::genie:
        if (!truth) throw_invalid("receive_frame: genie stopping needs the truth");
        stop = diag.bit_errors == 0;
        break;
      case StoppingRule::syndrome:
        stop = pass.converged == static_cast<int>(res.info.size());
        break;
      case StoppingRule::none:
        break;
    }
    // Without phase detection later passes repeat the first one exactly.
    if (stop || !em) break;
  }
  return res;
}

}  // namespace pnmimo
