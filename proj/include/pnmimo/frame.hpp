#ifndef PNMIMO_FRAME_HPP
#define PNMIMO_FRAME_HPP

#include <cstdint>
#include <vector>

#include "pnmimo/channel.hpp"
#include "pnmimo/ldpc.hpp"
#include "pnmimo/pn_process.hpp"
#include "pnmimo/qam.hpp"

namespace pnmimo {

/// Slot timeline of one frame, excluding the channel-estimation epoch.
///
/// Slots 0..T-1 map to trajectory columns 1..T. The frame is a sequence of
/// groups: a phase-pilot block of O_t slots (slot i of the block lights only
/// transmit oscillator i) followed by up to R data slots; a final pilot block
/// closes the frame.
struct FrameLayout {
  int o_t = 1;
  int l = 1;
  int r = 1;
  std::vector<int> data_slot;    ///< data index d -> slot
  std::vector<int> block_start;  ///< first slot of each pilot block
  /// Per slot: data index, or -1 - (pilot oscillator) for pilot slots.
  std::vector<int> slot_kind;

  int n_slots() const { return static_cast<int>(slot_kind.size()); }
  int n_blocks() const { return static_cast<int>(block_start.size()); }
  bool is_pilot(int t) const { return slot_kind[t] < 0; }
  /// Transmit oscillator lit in pilot slot t.
  int pilot_osc(int t) const { return -1 - slot_kind[t]; }
  /// Slot coordinate assigned to pilot block b (its centre).
  double block_time(int b) const { return block_start[b] + 0.5 * (o_t - 1); }
};

FrameLayout make_layout(const SystemConfig& sys);

/// How coded bits fill each user's stream. A user (transmit oscillator) owns
/// N_ot antennas x L data slots; stream symbol s goes to local antenna s / L,
/// data slot s % L. Codewords are concatenated from bit 0; the tail that does
/// not hold a whole codeword carries known filler bits.
struct CodingLayout {
  int bits_per_user = 0;
  int codewords_per_user = 0;
  int n = 0;  ///< transmitted bits per codeword
  int k = 0;

  int coded_bits_per_user() const { return codewords_per_user * n; }
  int filler_bits_per_user() const { return bits_per_user - coded_bits_per_user(); }
};

/// codewords_per_user <= 0 picks the largest count that fits.
CodingLayout make_coding_layout(const SystemConfig& sys, const LdpcCode& code, const QamConstellation& qam,
                                int codewords_per_user = 0);

/// Everything about a frame the receiver knows in advance.
struct KnownSymbols {
  CMatrix pilots;  ///< N_t x T, nonzero only on the lit antennas of pilot slots
  std::vector<std::vector<std::uint8_t>> filler;  ///< per user
};

/// Unit-modulus pilot and uniform filler draws.
KnownSymbols draw_known(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                        Rng& pilot_rng, Rng& filler_rng);

/// Builds the N_t x T symbol matrix from per-user coded streams (the
/// transmitted bits of each codeword, concatenated) plus the known symbols.
CMatrix assemble_symbols(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                         const QamConstellation& qam, const KnownSymbols& known,
                         const std::vector<std::vector<std::uint8_t>>& coded_bits);

/// Transmitter output for one frame.
struct TxFrame {
  std::vector<std::vector<std::uint8_t>> info;   ///< per codeword, user-major
  std::vector<std::vector<std::uint8_t>> coded;  ///< per user, concatenated transmitted bits
  CMatrix x;                                     ///< N_t x T
};

TxFrame build_frame(const SystemConfig& sys, const FrameLayout& layout, const CodingLayout& coding,
                    const LdpcCode& code, const QamConstellation& qam, const KnownSymbols& known, Rng& data_rng);

/// Received block for a whole frame: column t is slot t.
CMatrix transmit_frame(const CMatrix& h, const OscillatorGeometry& geo, const PnTrajectory& pn, const CMatrix& x,
                       double sigma2, Rng& noise_rng);

}  // namespace pnmimo

#endif  // PNMIMO_FRAME_HPP
