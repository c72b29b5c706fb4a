#include <doctest.h>

#include <cmath>

#include "pnmimo/em_receiver.hpp"
#include "pnmimo/frame.hpp"
#include "pnmimo/pn_process.hpp"

using namespace pnmimo;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CMatrix random_channel(Rng& rng, int n_r, int n_t) {
  CMatrix h(n_r, n_t);
  for (Index k = 0; k < h.size(); ++k) h(k) = complex_gaussian(rng, 0.5);
  return h;
}

EstimatedChannel perfect(const CMatrix& h, OscillatorGeometry g) {
  EstimatedChannel e;
  e.h_hat = h;
  e.e_c = kInf;
  e.geo = g;
  return e;
}

// y = Phi_R H Phi_T x without noise.
CVector rotate_through(const CMatrix& h, OscillatorGeometry g, const RVector& phi, const CVector& x) {
  CVector u = x;
  for (int a = 0; a < g.n_t(); ++a) u(a) *= std::polar(1.0, phi(a / g.n_ot));
  CVector y = h * u;
  for (int a = 0; a < g.n_r(); ++a) y(a) *= std::polar(1.0, phi(g.o_t + a / g.n_or));
  return y;
}

struct FrameSetup {
  SystemConfig sys;
  LdpcCode code = LdpcCode::nr_bg2();
  QamConstellation qam{64, 1.0};
  ReceiverContext ctx;
  KnownSymbols known;
  TxFrame tx;
  CMatrix h;
  CMatrix y;
  EstimatedChannel est;
  GenieTruth truth;

  FrameSetup(double snr_db, double rho, std::uint64_t seed, double e_c = kInf) {
    sys.n_t = 4;
    sys.n_r = 8;
    sys.o_t = 2;
    sys.o_r = 2;
    sys.l = 40;
    sys.r = 12;
    sys.e_c = e_c;
    sys.sigma2 = sigma2_from_es_n0_db(sys.e_s, snr_db);
    ctx.sys = sys;
    ctx.layout = make_layout(sys);
    ctx.coding = make_coding_layout(sys, code, qam, 0);
    ctx.code = &code;
    ctx.qam = &qam;
    Rng rng(seed);
    known = draw_known(sys, ctx.layout, ctx.coding, rng, rng);
    tx = build_frame(sys, ctx.layout, ctx.coding, code, qam, known, rng);
    h = gen_rician(sys, rng);
    PnConfig pc;
    pc.rho = rho;
    const PnTrajectory pn = generate_pn(pc, 4, ctx.layout.n_slots() + 1, rng);
    y = transmit_frame(h, sys.geometry(), pn, tx.x, sys.sigma2, rng);
    est = estimate_channel(h, pn.phases.col(0), sys, rng);
    truth.info = tx.info;
    truth.sum_phases = atomic_to_sum(pn.phases, 2, 2).rightCols(ctx.layout.n_slots());
  }
};

}  // namespace

// ----------------------------------------------------------- LMMSE filter

TEST_CASE("lmmse_filter: zero-forcing limit") {
  Rng rng(1);
  const CMatrix h = random_channel(rng, 8, 4);
  const CMatrix f = lmmse_filter(h, 1e-8, 1.0, kInf, 4);
  CHECK((f * h - CMatrix::Identity(4, 4)).norm() < 1e-3);
}

TEST_CASE("lmmse_filter: scaled identity gives the scalar formula") {
  const double c = 0.7, sigma2 = 0.05, e_s = 2.0, e_c = 4.0;
  const CMatrix f = lmmse_filter(CMatrix::Identity(3, 3) * c, sigma2, e_s, e_c, 3);
  const double expect = c / (c * c + sigma2 * (3.0 / e_c + 1.0 / e_s));
  CHECK((f - CMatrix::Identity(3, 3) * expect).norm() < 1e-14);
}

TEST_CASE("lmmse_filter: agrees with the push-through form") {
  Rng rng(2);
  for (double e_c : {kInf, 0.5}) {
    const CMatrix h = random_channel(rng, 6, 4);
    const double sigma2 = 0.3, e_s = 1.0;
    const double reg = sigma2 * (std::isinf(e_c) ? 0.0 : 4.0 / e_c) + sigma2 / e_s;
    CMatrix hh = h * h.adjoint();
    hh.diagonal().array() += reg;
    const CMatrix ref = h.adjoint() * hh.fullPivLu().inverse();
    CHECK((lmmse_filter(h, sigma2, e_s, e_c, 4) - ref).norm() < 1e-12);
  }
  CHECK_THROWS_AS(lmmse_filter(CMatrix::Identity(2, 2), 0.0, 1.0, kInf, 2), std::invalid_argument);
}

// ----------------------------------------------------------- demodulation

TEST_CASE("demodulate_slot: zero phase is filtering plus gain normalization") {
  Rng rng(3);
  const OscillatorGeometry g{2, 2, 2, 3};
  const CMatrix h = random_channel(rng, 6, 4);
  CVector y(6);
  for (Index k = 0; k < 6; ++k) y(k) = complex_gaussian(rng, 0.5);
  const double sigma2 = 0.1;
  const SlotOutput s = demodulate_slot(perfect(h, g), RVector::Zero(4), y, sigma2, 1.0);
  const CMatrix f = lmmse_filter(h, sigma2, 1.0, kInf, 4);
  const CMatrix gm = f * h;
  const CVector raw = f * y;
  for (int k = 0; k < 4; ++k) {
    CHECK(std::abs(s.x(k) - raw(k) / gm(k, k).real()) < 1e-12);
    double leak = 0.0;
    for (int j = 0; j < 4; ++j)
      if (j != k) leak += std::norm(gm(k, j));
    const double var = (leak + f.row(k).squaredNorm() * 2.0 * sigma2) / std::pow(gm(k, k).real(), 2);
    CHECK(s.noise(k) == doctest::Approx(var).epsilon(1e-12));
  }
}

TEST_CASE("demodulate_slot: noiseless rotated slot is recovered") {
  Rng rng(4);
  const OscillatorGeometry g{2, 2, 2, 4};
  const CMatrix h = random_channel(rng, 8, 4);
  const QamConstellation qam(64, 1.0);
  const RVector phi = RVector::Random(4) * 3.0;
  CVector x(4);
  for (int k = 0; k < 4; ++k) x(k) = qam.point(k * 13 + 1);
  const CVector y = rotate_through(h, g, phi, x);
  const SlotOutput s = demodulate_slot(perfect(h, g), phi, y, 1e-10, 1.0);
  CHECK((s.x - x).norm() < 1e-6);
  for (int k = 0; k < 4; ++k) CHECK(qam.hard_label(s.x(k)) == k * 13 + 1);
}

TEST_CASE("demodulate_slot: predicted noise matches Monte Carlo within 10%") {
  Rng rng(5);
  const OscillatorGeometry g{2, 2, 2, 2};
  const CMatrix h = random_channel(rng, 4, 4);  // square: leakage matters
  const QamConstellation qam(64, 1.0);
  const double sigma2 = 0.05;
  const RVector phi = RVector::Random(4);
  const EstimatedChannel e = perfect(h, g);
  RVector predicted;
  RVector err = RVector::Zero(4);
  std::uniform_int_distribution<int> sym(0, 63);
  const int n = 20000;
  for (int trial = 0; trial < n; ++trial) {
    CVector x(4);
    for (int k = 0; k < 4; ++k) x(k) = qam.point(sym(rng));
    CVector y = rotate_through(h, g, phi, x);
    for (Index k = 0; k < y.size(); ++k) y(k) += complex_gaussian(rng, sigma2);
    const SlotOutput s = demodulate_slot(e, phi, y, sigma2, 1.0);
    predicted = s.noise;
    for (int k = 0; k < 4; ++k) err(k) += std::norm(s.x(k) - x(k));
  }
  for (int k = 0; k < 4; ++k) CHECK(err(k) / n == doctest::Approx(predicted(k)).epsilon(0.1));
}

TEST_CASE("Demodulator matches per-slot demodulation") {
  Rng rng(6);
  const OscillatorGeometry g{4, 2, 2, 4};
  for (double e_c : {kInf, 2.0}) {
    EstimatedChannel e = perfect(random_channel(rng, 8, 8), g);
    e.e_c = e_c;
    const Demodulator d(e, 0.2, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const RVector phi = RVector::Random(6) * 3.0;
      CVector y(8);
      for (Index k = 0; k < 8; ++k) y(k) = complex_gaussian(rng, 0.5);
      const SlotOutput a = d.slot(phi, y);
      const SlotOutput b = demodulate_slot(e, phi, y, 0.2, 1.0);
      CHECK((a.x - b.x).norm() < 1e-10 * b.x.norm());
      CHECK((a.noise - b.noise).norm() < 1e-10 * b.noise.norm());
    }
    CHECK_THROWS_AS(d.slot(RVector::Zero(5), CVector::Zero(8)), std::invalid_argument);
  }
}

// ------------------------------------------------------- operation counts

TEST_CASE("count_ops: unit geometry") {
  SystemConfig s;
  s.n_t = s.n_r = s.o_t = s.o_r = 1;
  const OperationCounts c = count_ops(s);
  CHECK(c.sums == 35);
  CHECK(c.products == 24);
  CHECK(c.divisions == 2);
  CHECK(c.lut_accesses == 2);
}

TEST_CASE("count_ops: full-scale geometry per step and per SD run") {
  const SystemConfig s;  // 32 x 64, 16 + 4 oscillators
  const OperationCounts c = count_ops(s);
  CHECK(c.sums == 20704);
  CHECK(c.products == 25580);
  CHECK(c.divisions == 20);
  CHECK(c.lut_accesses == 5088);
  const OperationCounts m = c.scaled(202.23 / 1e6);
  CHECK(m.sums == doctest::Approx(4.192).epsilon(0.02));
  CHECK(m.products == doctest::Approx(5.179).epsilon(0.02));
  CHECK(m.divisions == doctest::Approx(0.004).epsilon(0.02));
  CHECK(m.lut_accesses == doctest::Approx(1.030).epsilon(0.02));
}

TEST_CASE("instrumented operations: per-evaluation cost tracks the closed form") {
  const SystemConfig s;
  Rng rng(7);
  EstimatedChannel e = perfect(random_channel(rng, s.n_r, s.n_t), s.geometry());
  const CMatrix y = CMatrix::Zero(s.n_r, 2), x = CMatrix::Zero(s.n_t, 2);
  const PhaseObjective obj(e, y, x, 0.1, 0.04);
  const OperationCounts per = obj.ops_per_slot_eval();
  const OperationCounts closed = count_ops(s);
  CHECK(per.sums / closed.sums == doctest::Approx(1.0).epsilon(0.5));
  CHECK(per.products / closed.products == doctest::Approx(1.0).epsilon(0.5));
  CHECK(per.lut_accesses <= closed.lut_accesses);
}

TEST_CASE("instrumented operations: frame totals cover one evaluation per step") {
  FrameSetup fs(14.0, 0.05, 7);
  ReceiverConfig rc;
  rc.stopping = StoppingRule::none;
  rc.max_rx_iters = 3;
  rc.prior_rho = 0.05;
  const ReceiverResult r = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, &fs.truth);
  REQUIRE(r.total_sd_steps > 0);
  const CMatrix x = CMatrix::Zero(fs.sys.n_t, fs.ctx.layout.n_slots());
  const PhaseObjective obj(fs.est, fs.y, x, fs.sys.sigma2, 0.0025);
  const double slots_steps = double(r.total_sd_steps) * fs.ctx.layout.n_slots();
  const OperationCounts per = obj.ops_per_slot_eval();
  CHECK(r.ops.sums >= slots_steps * per.sums);
  CHECK(r.ops.products >= slots_steps * per.products);
  CHECK(r.ops.lut_accesses >= slots_steps * per.lut_accesses);
  CHECK(r.ops.divisions > 0.0);
}

// ------------------------------------------------------------ receive_frame

namespace {

// Reference receiver without phase tracking: per data slot LMMSE from the
// push-through form, max-log LLRs, LDPC per codeword.
std::vector<std::vector<std::uint8_t>> baseline_receiver(const FrameSetup& fs) {
  const SystemConfig& s = fs.sys;
  const CMatrix& h = fs.est.h_hat;
  const double inv_ec = std::isinf(s.e_c) ? 0.0 : 1.0 / s.e_c;
  CMatrix hh = h * h.adjoint();
  hh.diagonal().array() += s.sigma2 * (s.n_t * inv_ec + 1.0 / s.e_s);
  const CMatrix f = h.adjoint() * hh.fullPivLu().inverse();
  const CMatrix g = f * h;
  const int bps = 6, n_ot = s.n_ot();
  std::vector<std::vector<double>> llr(s.o_t, std::vector<double>(fs.ctx.coding.bits_per_user));
  for (int d = 0; d < s.l; ++d) {
    const CVector z = f * fs.y.col(fs.ctx.layout.data_slot[d]);
    for (int k = 0; k < s.n_t; ++k) {
      const double mu = g(k, k).real();
      double leak = 0.0;
      for (int j = 0; j < s.n_t; ++j)
        if (j != k) leak += std::norm(g(k, j));
      const double var = (s.e_s * leak + f.row(k).squaredNorm() * 2.0 * s.sigma2 * (1.0 + s.n_t * s.e_s * inv_ec)) /
                         (mu * mu);
      const auto l = fs.qam.demap_llr(z(k) / mu, var);
      const std::size_t sym = static_cast<std::size_t>(k % n_ot) * s.l + d;
      std::copy(l.begin(), l.end(), llr[k / n_ot].begin() + static_cast<long>(sym * bps));
    }
  }
  std::vector<std::vector<std::uint8_t>> info;
  const int n = fs.ctx.coding.n;
  for (int u = 0; u < s.o_t; ++u)
    for (int c = 0; c < fs.ctx.coding.codewords_per_user; ++c)
      info.push_back(fs.code.decode(std::span<const double>(llr[u]).subspan(std::size_t(c) * n, n), 50).info);
  return info;
}

long errors(const std::vector<std::vector<std::uint8_t>>& a, const std::vector<std::vector<std::uint8_t>>& b) {
  long e = 0;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (std::size_t j = 0; j < a[c].size(); ++j) e += a[c][j] != b[c][j];
  return e;
}

}  // namespace

TEST_CASE("receive_frame: no phase noise and no detection equals the baseline receiver") {
  for (double snr : {10.0, 16.0, 22.0})
    for (double e_c : {kInf, 10.0}) {
      FrameSetup fs(snr, 0.0, 100 + static_cast<std::uint64_t>(snr), e_c);
      ReceiverConfig rc;
      rc.detection = PhaseDetection::none;
      rc.stopping = StoppingRule::none;
      const ReceiverResult r = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, &fs.truth);
      CHECK(r.iterations == 1);
      CHECK(r.total_sd_steps == 0);
      const auto ref = baseline_receiver(fs);
      REQUIRE(ref.size() == r.info.size());
      CHECK(errors(r.info, ref) == 0);
      CHECK(r.diag.back().bit_errors == errors(ref, fs.tx.info));
    }
}

TEST_CASE("receive_frame: high SNR without phase noise decodes cleanly") {
  FrameSetup fs(25.0, 0.0, 9);
  ReceiverConfig rc;
  const ReceiverResult r = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, &fs.truth);
  CHECK(r.diag.back().bit_errors == 0);
  CHECK(r.iterations == 1);
}

TEST_CASE("receive_frame: genie stop equals running exactly that many iterations") {
  FrameSetup fs(18.0, 0.03, 11);
  ReceiverConfig rc;
  rc.prior_rho = 0.03;
  rc.max_rx_iters = 6;
  const ReceiverResult a = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, &fs.truth);
  ReceiverConfig rc2 = rc;
  rc2.stopping = StoppingRule::none;
  rc2.max_rx_iters = a.iterations;
  const ReceiverResult b = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc2, &fs.truth);
  CHECK(b.iterations == a.iterations);
  CHECK(errors(a.info, b.info) == 0);
  CHECK(a.total_sd_steps == b.total_sd_steps);
  CHECK((a.phase.phi_hat - b.phase.phi_hat).norm() == 0.0);
  if (a.iterations < rc.max_rx_iters) CHECK(a.diag.back().bit_errors == 0);
  for (std::size_t k = 0; k + 1 < a.diag.size(); ++k) CHECK(a.diag[k].bit_errors > 0);
}

TEST_CASE("receive_frame: phase detection reduces the sum-phase error") {
  FrameSetup fs(20.0, 0.05, 12);
  ReceiverConfig rc;
  rc.prior_rho = 0.05;
  rc.stopping = StoppingRule::none;
  rc.max_rx_iters = 4;
  const ReceiverResult r = receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, &fs.truth);
  REQUIRE(r.diag.size() == 4);
  CHECK(r.diag.front().sd_steps == 0);
  CHECK(r.diag.back().mse < r.diag.front().mse);
  int steps = 0;
  for (const auto& d : r.diag) steps += d.sd_steps;
  CHECK(steps == r.total_sd_steps);
}

TEST_CASE("receive_frame: argument checks") {
  FrameSetup fs(15.0, 0.0, 13);
  ReceiverConfig rc;
  CHECK_THROWS_AS(receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, nullptr), std::invalid_argument);
  rc.stopping = StoppingRule::syndrome;
  CHECK_NOTHROW(receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc, nullptr));
  CHECK_THROWS_AS(receive_frame(fs.y.leftCols(3), fs.est, fs.known, fs.ctx, rc), std::invalid_argument);
  rc.max_rx_iters = 0;
  CHECK_THROWS_AS(receive_frame(fs.y, fs.est, fs.known, fs.ctx, rc), std::invalid_argument);
}

TEST_CASE("sum_phase_mse: wrapped error over data slots only") {
  SystemConfig s;
  s.n_t = 2;
  s.n_r = 2;
  s.o_t = 1;
  s.o_r = 1;
  s.l = 4;
  s.r = 2;
  const FrameLayout lay = make_layout(s);
  PhaseEstimate e{RMatrix::Zero(2, lay.n_slots())};
  RMatrix truth = RMatrix::Zero(1, lay.n_slots());
  for (int t = 0; t < lay.n_slots(); ++t) truth(0, t) = lay.is_pilot(t) ? 1.0 : 2.0 * kPi + 0.1;
  CHECK(sum_phase_mse(e, truth, lay, 1, 1) == doctest::Approx(0.01));
}
