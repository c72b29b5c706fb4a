#include "pnmimo/ldpc.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pnmimo {

namespace {

struct Bg2Entry {
  int row;
  int col;
  std::array<int, 8> shift;
};

#include "nr_bg2_table.inc"

constexpr int kBg2Rows = 42;
constexpr int kBg2InfoCols = 10;

// 38.212 Table 5.3.2-1, lifting sizes grouped by set index.
constexpr std::array<std::array<int, 8>, 8> kLiftingSets = {{
    {2, 4, 8, 16, 32, 64, 128, 256},
    {3, 6, 12, 24, 48, 96, 192, 384},
    {5, 10, 20, 40, 80, 160, 320, 0},
    {7, 14, 28, 56, 112, 224, 0, 0},
    {9, 18, 36, 72, 144, 288, 0, 0},
    {11, 22, 44, 88, 176, 352, 0, 0},
    {13, 26, 52, 104, 208, 0, 0, 0},
    {15, 30, 60, 120, 240, 0, 0, 0},
}};

int bg2_kb(int k) {
  if (k > 640) return 10;
  if (k > 560) return 9;
  if (k > 192) return 8;
  return 6;
}

// Smallest lifting size z with kb * z >= k, and its set index.
std::pair<int, int> select_lifting(int kb, int k) {
  int best = 0;
  int best_set = -1;
  for (int s = 0; s < 8; ++s)
    for (int z : kLiftingSets[s])
      if (z > 0 && kb * z >= k && (best == 0 || z < best)) best = z, best_set = s;
  if (best == 0) throw_invalid("nr_bg2: information length too large");
  return {best, best_set};
}

using BitRow = std::vector<std::uint64_t>;

bool get_bit(const BitRow& r, int j) { return (r[j >> 6] >> (j & 63)) & 1ULL; }
void set_bit(BitRow& r, int j) { r[j >> 6] |= 1ULL << (j & 63); }

}  // namespace

LdpcCode LdpcCode::nr_bg2(int k_info, int e) {
  if (k_info <= 0 || e <= 0) throw_invalid("nr_bg2: lengths must be positive");
  const int kb = bg2_kb(k_info);
  const auto [z, set] = select_lifting(kb, k_info);
  const int k_full = kBg2InfoCols * z;  // systematic columns incl. filler
  const int n_cb = 50 * z;              // circular buffer after the 2Z punctured bits
  const int fillers = k_full - k_info;
  if (e > n_cb - fillers) throw_invalid("nr_bg2: rate matching with repetition is not supported");

  // rv0 bit selection: walk the circular buffer from position 2Z, skip filler.
  std::vector<int> selected;  // mother-code column indices
  for (int j = 0; static_cast<int>(selected.size()) < e; ++j) {
    const int col = 2 * z + (j % n_cb);
    if (col >= k_info && col < k_full) continue;
    selected.push_back(col);
  }
  const int last_base_col = *std::max_element(selected.begin(), selected.end()) / z;
  const int rows = std::max(4, last_base_col - kBg2InfoCols + 1);
  const int cols = kBg2InfoCols + rows;
  if (rows > kBg2Rows) throw_invalid("nr_bg2: transmitted length exceeds the base graph");

  // Mother columns -> variable index, filler columns dropped.
  std::vector<int> var_of(static_cast<std::size_t>(cols * z), -1);
  int nv = 0;
  for (int c = 0; c < cols * z; ++c)
    if (c < k_info || c >= k_full) var_of[c] = nv++;

  std::vector<std::vector<int>> checks(static_cast<std::size_t>(rows * z));
  for (const auto& entry : kBg2Table) {
    if (entry.row >= rows || entry.col >= cols) continue;
    const int shift = entry.shift[set] % z;
    for (int t = 0; t < z; ++t) {
      const int col = entry.col * z + (t + shift) % z;
      if (var_of[col] >= 0) checks[entry.row * z + t].push_back(var_of[col]);
    }
  }
  std::vector<int> tx;
  tx.reserve(selected.size());
  for (int col : selected) tx.push_back(var_of[col]);

  LdpcCode code = from_checks(std::move(checks), nv, std::move(tx));
  code.lifting_ = z;
  return code;
}

LdpcCode LdpcCode::from_checks(std::vector<std::vector<int>> checks, int n_vars, std::vector<int> transmitted) {
  if (n_vars <= 0) throw_invalid("LdpcCode: n_vars must be positive");
  for (auto& row : checks) {
    for (int v : row)
      if (v < 0 || v >= n_vars) throw_invalid("LdpcCode: variable index out of range");
    std::sort(row.begin(), row.end());
    if (std::adjacent_find(row.begin(), row.end()) != row.end()) throw_invalid("LdpcCode: repeated edge in a check");
  }
  if (transmitted.empty()) {
    transmitted.resize(static_cast<std::size_t>(n_vars));
    std::iota(transmitted.begin(), transmitted.end(), 0);
  }
  LdpcCode code;
  code.n_vars_ = n_vars;
  code.checks_ = std::move(checks);
  code.transmitted_ = std::move(transmitted);
  code.build();
  return code;
}

void LdpcCode::build() {
  const int m = n_checks();
  const int words = (n_vars_ + 63) / 64;

  // Gaussian elimination over GF(2), pivots searched from the last column
  // backwards so that, for staircase parity structures, the parity columns
  // are the solved ones and the code stays systematic on the leading columns.
  std::vector<BitRow> rows(static_cast<std::size_t>(m), BitRow(static_cast<std::size_t>(words), 0));
  for (int c = 0; c < m; ++c)
    for (int v : checks_[c]) set_bit(rows[c], v);
  std::vector<bool> is_pivot(static_cast<std::size_t>(n_vars_), false);
  pivot_var_.clear();
  int rank = 0;
  for (int col = n_vars_ - 1; col >= 0 && rank < m; --col) {
    int sel = -1;
    for (int r = rank; r < m; ++r)
      if (get_bit(rows[r], col)) {
        sel = r;
        break;
      }
    if (sel < 0) continue;
    std::swap(rows[rank], rows[sel]);
    for (int r = 0; r < m; ++r)
      if (r != rank && get_bit(rows[r], col))
        for (int w = 0; w < words; ++w) rows[r][w] ^= rows[rank][w];
    is_pivot[col] = true;
    pivot_var_.push_back(col);
    ++rank;
  }
  pivot_rows_.assign(rows.begin(), rows.begin() + rank);
  // Clear the pivot's own bit: parity = popcount(row & codeword-without-pivots).
  for (int r = 0; r < rank; ++r) pivot_rows_[r][pivot_var_[r] >> 6] &= ~(1ULL << (pivot_var_[r] & 63));

  info_pos_.clear();
  for (int v = 0; v < n_vars_; ++v)
    if (!is_pivot[v]) info_pos_.push_back(v);

  edge_var_.clear();
  check_ptr_.assign(1, 0);
  var_edges_.assign(static_cast<std::size_t>(n_vars_), {});
  for (int c = 0; c < m; ++c) {
    for (int v : checks_[c]) {
      var_edges_[v].push_back(static_cast<int>(edge_var_.size()));
      edge_var_.push_back(v);
    }
    check_ptr_.push_back(static_cast<int>(edge_var_.size()));
  }
  var_to_tx_.assign(static_cast<std::size_t>(n_vars_), -1);
  for (std::size_t t = 0; t < transmitted_.size(); ++t) {
    const int v = transmitted_[t];
    if (v < 0 || v >= n_vars_) throw_invalid("LdpcCode: transmitted index out of range");
    var_to_tx_[v] = static_cast<int>(t);
  }
}

std::vector<std::uint8_t> LdpcCode::encode_full(std::span<const std::uint8_t> info) const {
  if (static_cast<int>(info.size()) != k()) throw_invalid("ldpc encode: info length mismatch");
  std::vector<std::uint8_t> cw(static_cast<std::size_t>(n_vars_), 0);
  BitRow packed(static_cast<std::size_t>((n_vars_ + 63) / 64), 0);
  for (int j = 0; j < k(); ++j)
    if (info[j] & 1) {
      cw[info_pos_[j]] = 1;
      set_bit(packed, info_pos_[j]);
    }
  for (std::size_t r = 0; r < pivot_var_.size(); ++r) {
    int parity = 0;
    for (std::size_t w = 0; w < packed.size(); ++w) parity ^= std::popcount(pivot_rows_[r][w] & packed[w]) & 1;
    cw[pivot_var_[r]] = static_cast<std::uint8_t>(parity);
  }
  return cw;
}

std::vector<std::uint8_t> LdpcCode::select_transmitted(std::span<const std::uint8_t> full) const {
  std::vector<std::uint8_t> out(transmitted_.size());
  for (std::size_t t = 0; t < transmitted_.size(); ++t) out[t] = full[transmitted_[t]];
  return out;
}

std::vector<std::uint8_t> LdpcCode::encode(std::span<const std::uint8_t> info) const {
  return select_transmitted(encode_full(info));
}

bool LdpcCode::syndrome_ok(std::span<const std::uint8_t> full) const {
  if (static_cast<int>(full.size()) != n_vars_) throw_invalid("ldpc syndrome: length mismatch");
  for (const auto& row : checks_) {
    int p = 0;
    for (int v : row) p ^= full[v] & 1;
    if (p) return false;
  }
  return true;
}

LdpcDecodeResult LdpcCode::decode(std::span<const double> llr, int max_iters) const {
  if (static_cast<int>(llr.size()) != n()) throw_invalid("ldpc decode: llr length mismatch");
  const std::size_t n_edges = edge_var_.size();
  std::vector<double> ch(static_cast<std::size_t>(n_vars_), 0.0);
  for (int v = 0; v < n_vars_; ++v)
    if (var_to_tx_[v] >= 0) ch[v] = llr[var_to_tx_[v]];

  std::vector<double> q(n_edges);  // variable -> check
  std::vector<double> r(n_edges, 0.0);
  for (std::size_t e = 0; e < n_edges; ++e) q[e] = ch[edge_var_[e]];

  LdpcDecodeResult res;
  res.hard.assign(static_cast<std::size_t>(n_vars_), 0);
  std::vector<double> t;
  std::vector<double> suffix;
  constexpr double kClamp = 1.0 - 1e-15;
  for (int it = 1; it <= max_iters; ++it) {
    for (int c = 0; c < n_checks(); ++c) {
      const int b = check_ptr_[c];
      const int deg = check_ptr_[c + 1] - b;
      t.resize(static_cast<std::size_t>(deg));
      suffix.resize(static_cast<std::size_t>(deg) + 1);
      for (int j = 0; j < deg; ++j) t[j] = std::tanh(0.5 * q[b + j]);
      suffix[deg] = 1.0;
      for (int j = deg - 1; j >= 0; --j) suffix[j] = suffix[j + 1] * t[j];
      double prefix = 1.0;
      for (int j = 0; j < deg; ++j) {
        const double p = std::clamp(prefix * suffix[j + 1], -kClamp, kClamp);
        r[b + j] = 2.0 * std::atanh(p);
        prefix *= t[j];
      }
    }
    for (int v = 0; v < n_vars_; ++v) {
      double total = ch[v];
      for (int e : var_edges_[v]) total += r[e];
      for (int e : var_edges_[v]) q[e] = total - r[e];
      res.hard[v] = total < 0.0 ? 1 : 0;
    }
    res.iterations = it;
    if (syndrome_ok(res.hard)) {
      res.converged = true;
      break;
    }
  }
  if (max_iters <= 0)
    for (int v = 0; v < n_vars_; ++v) res.hard[v] = ch[v] < 0.0 ? 1 : 0;
  res.info.resize(info_pos_.size());
  for (std::size_t j = 0; j < info_pos_.size(); ++j) res.info[j] = res.hard[info_pos_[j]];
  res.transmitted = select_transmitted(res.hard);
  return res;
}

LdpcCode LdpcCode::from_alist(std::istream& in) {
  int n = 0, m = 0, max_col = 0, max_row = 0;
  if (!(in >> n >> m >> max_col >> max_row) || n <= 0 || m <= 0) throw_invalid("alist: bad header");
  std::vector<int> col_deg(static_cast<std::size_t>(n)), row_deg(static_cast<std::size_t>(m));
  for (auto& d : col_deg)
    if (!(in >> d)) throw_invalid("alist: truncated column degrees");
  for (auto& d : row_deg)
    if (!(in >> d)) throw_invalid("alist: truncated row degrees");
  // Column lists are redundant with the row lists; read and skip them.
  for (int c = 0; c < n; ++c)
    for (int j = 0; j < max_col; ++j) {
      int x = 0;
      if (!(in >> x)) throw_invalid("alist: truncated column lists");
    }
  std::vector<std::vector<int>> checks(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < max_row; ++j) {
      int x = 0;
      if (!(in >> x)) throw_invalid("alist: truncated row lists");
      if (x > 0) checks[r].push_back(x - 1);
    }
  for (int r = 0; r < m; ++r)
    if (static_cast<int>(checks[r].size()) != row_deg[r]) throw_invalid("alist: row degree mismatch");
  return from_checks(std::move(checks), n);
}

void LdpcCode::to_alist(std::ostream& out) const {
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(n_vars_));
  for (int c = 0; c < n_checks(); ++c)
    for (int v : checks_[c]) cols[v].push_back(c);
  std::size_t max_col = 0, max_row = 0;
  for (const auto& c : cols) max_col = std::max(max_col, c.size());
  for (const auto& r : checks_) max_row = std::max(max_row, r.size());
  out << n_vars_ << ' ' << n_checks() << '\n' << max_col << ' ' << max_row << '\n';
  for (std::size_t c = 0; c < cols.size(); ++c) out << cols[c].size() << (c + 1 < cols.size() ? ' ' : '\n');
  for (std::size_t r = 0; r < checks_.size(); ++r) out << checks_[r].size() << (r + 1 < checks_.size() ? ' ' : '\n');
  auto emit = [&](const std::vector<int>& list, std::size_t width) {
    for (std::size_t j = 0; j < width; ++j) out << (j < list.size() ? list[j] + 1 : 0) << (j + 1 < width ? ' ' : '\n');
  };
  for (const auto& c : cols) emit(c, max_col);
  for (const auto& r : checks_) emit(r, max_row);
}

}  // namespace pnmimo
