#include "pnmimo/frame.hpp"

#include <algorithm>

namespace pnmimo {

FrameLayout make_layout(const SystemConfig& sys) {
  sys.validate();
  FrameLayout lay;
  lay.o_t = sys.o_t;
  lay.l = sys.l;
  lay.r = sys.r;
  auto add_block = [&] {
    lay.block_start.push_back(lay.n_slots());
    for (int i = 0; i < sys.o_t; ++i) lay.slot_kind.push_back(-1 - i);
  };
  int d = 0;
  while (d < sys.l) {
    add_block();
    const int run = std::min(sys.r, sys.l - d);
    for (int j = 0; j < run; ++j, ++d) {
      lay.data_slot.push_back(lay.n_slots());
      lay.slot_kind.push_back(d);
    }
  }
  add_block();
  return lay;
}

CodingLayout make_coding_layout(const SystemConfig& sys, const LdpcCode& code, const QamConstellation& qam,
                                int codewords_per_user) {
  CodingLayout c;
  c.bits_per_user = sys.n_ot() * sys.l * qam.bits_per_symbol();
  c.n = code.n();
  c.k = code.k();
  const int fit = c.bits_per_user / c.n;
  if (codewords_per_user <= 0) {
    c.codewords_per_user = fit;
  } else {
    if (codewords_per_user > fit) throw_invalid("frame.codewords_per_user: does not fit in the frame");
    c.codewords_per_user = codewords_per_user;
  }
  if (c.codewords_per_user < 1) throw_invalid("frame: frame too short for one codeword per user");
  return c;
}

KnownSymbols draw_known(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                        Rng& pilot_rng, Rng& filler_rng) {
  KnownSymbols k;
  k.pilots = CMatrix::Zero(sys.n_t, layout.n_slots());
  std::uniform_real_distribution<double> theta(0.0, kTwoPi);
  const double amp = std::sqrt(sys.e_s);
  const int n_ot = sys.n_ot();
  for (int t = 0; t < layout.n_slots(); ++t) {
    if (!layout.is_pilot(t)) continue;
    const int i = layout.pilot_osc(t);
    for (int a = 0; a < n_ot; ++a) k.pilots(i * n_ot + a, t) = std::polar(amp, theta(pilot_rng));
  }
  std::bernoulli_distribution bit(0.5);
  k.filler.resize(static_cast<std::size_t>(sys.o_t));
  for (auto& f : k.filler) {
    f.resize(static_cast<std::size_t>(coding.filler_bits_per_user()));
    for (auto& b : f) b = bit(filler_rng) ? 1 : 0;
  }
  return k;
}

CMatrix assemble_symbols(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                         const QamConstellation& qam, const KnownSymbols& known,
                         const std::vector<std::vector<std::uint8_t>>& coded_bits) {
  if (static_cast<int>(coded_bits.size()) != sys.o_t) throw_invalid("assemble_symbols: one stream per user expected");
  CMatrix x = known.pilots;
  const int n_ot = sys.n_ot();
  const int bps = qam.bits_per_symbol();
  std::vector<std::uint8_t> stream(static_cast<std::size_t>(coding.bits_per_user));
  for (int u = 0; u < sys.o_t; ++u) {
    if (static_cast<int>(coded_bits[u].size()) != coding.coded_bits_per_user())
      throw_invalid("assemble_symbols: coded stream length mismatch");
    std::copy(coded_bits[u].begin(), coded_bits[u].end(), stream.begin());
    std::copy(known.filler[u].begin(), known.filler[u].end(), stream.begin() + coding.coded_bits_per_user());
    for (int s = 0; s < n_ot * sys.l; ++s) {
      const Complex v = qam.map_one(std::span<const std::uint8_t>(stream).subspan(static_cast<std::size_t>(s) * bps, bps));
      x(u * n_ot + s / sys.l, layout.data_slot[s % sys.l]) = v;
    }
  }
  return x;
}

TxFrame build_frame(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                    const LdpcCode& code, const QamConstellation& qam, const KnownSymbols& known, Rng& data_rng) {
  TxFrame f;
  std::bernoulli_distribution bit(0.5);
  f.coded.resize(static_cast<std::size_t>(sys.o_t));
  for (int u = 0; u < sys.o_t; ++u) {
    f.coded[u].reserve(static_cast<std::size_t>(coding.coded_bits_per_user()));
    for (int c = 0; c < coding.codewords_per_user; ++c) {
      std::vector<std::uint8_t> info(static_cast<std::size_t>(code.k()));
      for (auto& b : info) b = bit(data_rng) ? 1 : 0;
      const auto cw = code.encode(info);
      f.coded[u].insert(f.coded[u].end(), cw.begin(), cw.end());
      f.info.push_back(std::move(info));
    }
  }
  f.x = assemble_symbols(sys, layout, coding, qam, known, f.coded);
  return f;
}

CMatrix transmit_frame(const CMatrix& h, const OscillatorGeometry& geo, const PnTrajectory& pn, const CMatrix& x,
                       double sigma2, Rng& noise_rng) {
  if (pn.n_slots() != x.cols() + 1) throw_invalid("transmit_frame: trajectory must cover the CE epoch plus every slot");
  CMatrix y(h.rows(), x.cols());
  for (Index t = 0; t < x.cols(); ++t) y.col(t) = apply_channel(h, geo, pn.phases.col(t + 1), x.col(t), sigma2, noise_rng);
  return y;
}

}  // namespace pnmimo
