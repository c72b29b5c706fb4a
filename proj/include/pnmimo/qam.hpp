#ifndef PNMIMO_QAM_HPP
#define PNMIMO_QAM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "pnmimo/common.hpp"

namespace pnmimo {

/// Square Gray-labelled M-QAM scaled to average energy E_s.
///
/// Labelling: a symbol carries bits b0..b{2m-1} (b0 first on the wire). The
/// first m bits select the in-phase level, the last m the quadrature level;
/// each is the Gray code of the level index p, MSB first, where level p has
/// amplitude (2p - (sqrt(M)-1)). So 000000 is the corner point (-7 - 7j)
/// times sqrt(E_s/42) for 64-QAM.
///
/// LLR sign convention: positive means bit 0 is more likely.
class QamConstellation {
 public:
  explicit QamConstellation(int order = 64, double e_s = 1.0);

  int order() const { return order_; }
  int bits_per_symbol() const { return 2 * bits_per_axis_; }
  double energy() const { return e_s_; }
  /// Point of the given label (label bit b0 is the MSB).
  Complex point(int label) const { return points_[static_cast<std::size_t>(label)]; }
  const std::vector<Complex>& points() const { return points_; }

  /// Maps a bit stream (length divisible by bits_per_symbol) to symbols.
  CVector map(std::span<const std::uint8_t> bits) const;
  Complex map_one(std::span<const std::uint8_t> bits) const;

  /// Max-log bit LLRs of one observation, written to llr (size bits_per_symbol).
  void demap_llr(Complex y, double noise_var, std::span<double> llr) const;
  std::vector<double> demap_llr(Complex y, double noise_var) const;

  /// Label of the nearest constellation point.
  int hard_label(Complex y) const;
  void label_bits(int label, std::span<std::uint8_t> bits) const;

 private:
  int order_;
  int bits_per_axis_;
  int levels_;
  double e_s_;
  double scale_;
  std::vector<Complex> points_;
  std::vector<int> gray_;      // level index -> Gray code
  std::vector<int> inv_gray_;  // Gray code -> level index
};

}  // namespace pnmimo

#endif  // PNMIMO_QAM_HPP
