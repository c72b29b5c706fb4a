#ifndef PNMIMO_LDPC_HPP
#define PNMIMO_LDPC_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "pnmimo/common.hpp"

namespace pnmimo {

struct LdpcDecodeResult {
  std::vector<std::uint8_t> info;         ///< hard decisions on the k information bits
  std::vector<std::uint8_t> hard;         ///< hard decisions on every code variable
  std::vector<std::uint8_t> transmitted;  ///< hard decisions on the n transmitted bits
  bool converged = false;                 ///< syndrome reached zero
  int iterations = 0;
};

/// Binary LDPC code over n_vars variables, of which n are transmitted (the
/// rest are punctured, i.e. decoded from LLR 0). Encoding is systematic on
/// info_positions().
class LdpcCode {
 public:
  /// 38.212 base graph 2 for k_info information bits rate-matched to e
  /// transmitted bits (redundancy version 0, no repetition). Filler bits are
  /// known zeros and are removed from the variable set; the first 2Z
  /// systematic bits are punctured.
  static LdpcCode nr_bg2(int k_info = 83, int e = 104);

  /// Code from explicit check rows (variable indices per check).
  /// transmitted: variable indices in transmission order; empty = all, in order.
  static LdpcCode from_checks(std::vector<std::vector<int>> checks, int n_vars, std::vector<int> transmitted = {});

  /// MacKay alist text format. Every column is transmitted on import.
  static LdpcCode from_alist(std::istream& in);
  void to_alist(std::ostream& out) const;

  int n() const { return static_cast<int>(transmitted_.size()); }
  int k() const { return static_cast<int>(info_pos_.size()); }
  int n_vars() const { return n_vars_; }
  int n_checks() const { return static_cast<int>(checks_.size()); }
  double rate() const { return double(k()) / double(n()); }
  int lifting_size() const { return lifting_; }
  const std::vector<std::vector<int>>& checks() const { return checks_; }
  const std::vector<int>& info_positions() const { return info_pos_; }
  const std::vector<int>& transmitted_positions() const { return transmitted_; }

  /// All n_vars code bits for the given k info bits.
  std::vector<std::uint8_t> encode_full(std::span<const std::uint8_t> info) const;
  /// The n transmitted bits.
  std::vector<std::uint8_t> encode(std::span<const std::uint8_t> info) const;
  std::vector<std::uint8_t> select_transmitted(std::span<const std::uint8_t> full) const;
  bool syndrome_ok(std::span<const std::uint8_t> full) const;

  /// Flooding sum-product decoding from n channel LLRs (positive = bit 0),
  /// stopping as soon as the syndrome is zero.
  LdpcDecodeResult decode(std::span<const double> llr, int max_iters = 50) const;

 private:
  void build();

  int n_vars_ = 0;
  int lifting_ = 0;
  std::vector<std::vector<int>> checks_;
  std::vector<int> transmitted_;
  std::vector<int> info_pos_;
  // Encoder: one bitmask over all variables per solved (pivot) variable.
  std::vector<int> pivot_var_;
  std::vector<std::vector<std::uint64_t>> pivot_rows_;
  // Decoder edge layout (check-major).
  std::vector<int> edge_var_;
  std::vector<int> check_ptr_;
  std::vector<std::vector<int>> var_edges_;
  std::vector<int> var_to_tx_;  // -1 when punctured
};

}  // namespace pnmimo

#endif  // PNMIMO_LDPC_HPP
