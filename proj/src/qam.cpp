#include "pnmimo/qam.hpp"

#include <algorithm>
#include <bit>
#include <limits>

namespace pnmimo {

QamConstellation::QamConstellation(int order, double e_s) : order_(order), e_s_(e_s) {
  if (order < 4 || !std::has_single_bit(static_cast<unsigned>(order)) || std::countr_zero(unsigned(order)) % 2 != 0)
    throw_invalid("QamConstellation: order must be a power of 4");
  if (!(e_s > 0.0)) throw_invalid("QamConstellation: E_s must be > 0");
  bits_per_axis_ = std::countr_zero(unsigned(order)) / 2;
  levels_ = 1 << bits_per_axis_;
  scale_ = std::sqrt(e_s / (2.0 * (order - 1) / 3.0));
  gray_.resize(static_cast<std::size_t>(levels_));
  inv_gray_.resize(static_cast<std::size_t>(levels_));
  for (int p = 0; p < levels_; ++p) {
    gray_[p] = p ^ (p >> 1);
    inv_gray_[gray_[p]] = p;
  }
  points_.resize(static_cast<std::size_t>(order));
  for (int label = 0; label < order; ++label) {
    const int gi = label >> bits_per_axis_;
    const int gq = label & (levels_ - 1);
    const double ai = 2.0 * inv_gray_[gi] - (levels_ - 1);
    const double aq = 2.0 * inv_gray_[gq] - (levels_ - 1);
    points_[label] = scale_ * Complex(ai, aq);
  }
}

Complex QamConstellation::map_one(std::span<const std::uint8_t> bits) const {
  int label = 0;
  for (int b = 0; b < bits_per_symbol(); ++b) label = (label << 1) | (bits[b] & 1);
  return points_[label];
}

CVector QamConstellation::map(std::span<const std::uint8_t> bits) const {
  const auto bps = static_cast<std::size_t>(bits_per_symbol());
  if (bits.size() % bps != 0) throw_invalid("qam map: bit count not a multiple of bits per symbol");
  CVector out(static_cast<Index>(bits.size() / bps));
  for (Index s = 0; s < out.size(); ++s) out(s) = map_one(bits.subspan(static_cast<std::size_t>(s) * bps, bps));
  return out;
}

void QamConstellation::demap_llr(Complex y, double noise_var, std::span<double> llr) const {
  if (!(noise_var > 0.0)) throw_invalid("qam demap: noise variance must be > 0");
  if (llr.size() != static_cast<std::size_t>(bits_per_symbol())) throw_invalid("qam demap: llr span size");
  // Square QAM with per-axis Gray labels: the distance splits into I and Q
  // terms, so each bit only needs a minimum over one axis.
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    const double v = (axis == 0 ? y.real() : y.imag()) / scale_;
    for (int b = 0; b < bits_per_axis_; ++b) {
      double min0 = inf;
      double min1 = inf;
      const int mask = 1 << (bits_per_axis_ - 1 - b);
      for (int p = 0; p < levels_; ++p) {
        const double a = 2.0 * p - (levels_ - 1);
        const double d = (v - a) * (v - a);
        if (gray_[p] & mask)
          min1 = std::min(min1, d);
        else
          min0 = std::min(min0, d);
      }
      llr[axis * bits_per_axis_ + b] = (min1 - min0) * scale_ * scale_ / noise_var;
    }
  }
}

std::vector<double> QamConstellation::demap_llr(Complex y, double noise_var) const {
  std::vector<double> out(static_cast<std::size_t>(bits_per_symbol()));
  demap_llr(y, noise_var, out);
  return out;
}

int QamConstellation::hard_label(Complex y) const {
  auto nearest = [&](double v) {
    const double p = std::round((v / scale_ + (levels_ - 1)) / 2.0);
    return std::clamp(static_cast<int>(p), 0, levels_ - 1);
  };
  return (gray_[nearest(y.real())] << bits_per_axis_) | gray_[nearest(y.imag())];
}

void QamConstellation::label_bits(int label, std::span<std::uint8_t> bits) const {
  const int bps = bits_per_symbol();
  for (int b = 0; b < bps; ++b) bits[b] = static_cast<std::uint8_t>((label >> (bps - 1 - b)) & 1);
}

}  // namespace pnmimo
