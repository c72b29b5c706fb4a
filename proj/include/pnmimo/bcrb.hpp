#ifndef PNMIMO_BCRB_HPP
#define PNMIMO_BCRB_HPP

// Bayesian information matrix of the sum phase processes and its
// block-tridiagonal inverse. Header-only; Scalar is a real floating type.

#include <vector>

#include <Eigen/Dense>

#include "pnmimo/common.hpp"

namespace pnmimo::bcrb {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Atomic -> sum map: row i*O_r + ir has ones in columns i and O_t + ir.
template <typename Scalar = double>
Mat<Scalar> incidence_matrix(int o_t, int o_r) {
  if (o_t <= 0 || o_r <= 0) throw_invalid("incidence_matrix: counts must be positive");
  Mat<Scalar> a = Mat<Scalar>::Zero(o_t * o_r, o_t + o_r);
  for (int i = 0; i < o_t; ++i)
    for (int ir = 0; ir < o_r; ++ir) {
      a(i * o_r + ir, i) = Scalar(1);
      a(i * o_r + ir, o_t + ir) = Scalar(1);
    }
  return a;
}

/// Minimum-norm sum -> atomic map, the Moore-Penrose pseudo-inverse of A.
template <typename Scalar = double>
Mat<Scalar> jacobian(int o_t, int o_r) {
  const Mat<Scalar> a = incidence_matrix<Scalar>(o_t, o_r);
  return a.completeOrthogonalDecomposition().pseudoInverse();
}

/// Per-slot observation information of the atomic phases for known symbols
/// of energy e_s: (e_s/sigma2) [[Gamma_T, Omega^T], [Omega, Gamma_R]].
template <typename Scalar = double>
Mat<Scalar> build_m0y(const CMatrix& h, double sigma2, int o_t, int o_r, double e_s = 1.0) {
  if (!(sigma2 > 0.0)) throw_invalid("build_m0y: sigma2 must be > 0");
  if (h.cols() % o_t != 0 || h.rows() % o_r != 0) throw_invalid("build_m0y: oscillators must divide the antenna counts");
  const Index n_ot = h.cols() / o_t;
  const Index n_or = h.rows() / o_r;
  Mat<Scalar> m = Mat<Scalar>::Zero(o_t + o_r, o_t + o_r);
  for (int i = 0; i < o_t; ++i)
    for (int ir = 0; ir < o_r; ++ir) {
      const Scalar w = Scalar(h.block(ir * n_or, i * n_ot, n_or, n_ot).squaredNorm());
      m(i, i) += w;                      // Gamma_T
      m(o_t + ir, o_t + ir) += w;        // Gamma_R
      m(o_t + ir, i) = m(i, o_t + ir) = w;  // Omega
    }
  return m * Scalar(e_s / sigma2);
}

template <typename Scalar = double>
struct BimBlocks {
  Mat<Scalar> m0_tilde_y;  ///< atomic observation block
  Mat<Scalar> a;           ///< incidence matrix
  Mat<Scalar> j;           ///< sum -> atomic map
  Mat<Scalar> m0;          ///< J^T (M0Y + 2/rho^2 I) J
  Mat<Scalar> m1;          ///< J^T (-1/rho^2 I) J
  int o_t = 1;
  int o_r = 1;
};

template <typename Scalar = double>
BimBlocks<Scalar> make_blocks(const Mat<Scalar>& m0y, int o_t, int o_r, Scalar rho2) {
  if (!(rho2 > Scalar(0))) throw_invalid("bcrb: rho^2 must be > 0");
  BimBlocks<Scalar> b;
  b.o_t = o_t;
  b.o_r = o_r;
  b.m0_tilde_y = m0y;
  b.a = incidence_matrix<Scalar>(o_t, o_r);
  b.j = jacobian<Scalar>(o_t, o_r);
  const Index n = o_t + o_r;
  const Mat<Scalar> eye = Mat<Scalar>::Identity(n, n);
  b.m0 = b.j.transpose() * (m0y + (Scalar(2) / rho2) * eye) * b.j;
  b.m1 = b.j.transpose() * (-(Scalar(1) / rho2) * eye) * b.j;
  return b;
}

/// Diagonal blocks of the inverse of the symmetric block-tridiagonal matrix
/// with every diagonal block d and every off-diagonal block b (n_blocks
/// blocks). Forward and backward Schur recursions; d must keep every Schur
/// complement positive definite.
template <typename Scalar = double>
std::vector<Mat<Scalar>> block_tridiag_inverse_diag(const Mat<Scalar>& d, const Mat<Scalar>& b, int n_blocks) {
  if (n_blocks < 1) throw_invalid("block_tridiag_inverse_diag: need at least one block");
  const Index p = d.rows();
  const Mat<Scalar> eye = Mat<Scalar>::Identity(p, p);
  // left[n] = b S_{n-1}^{-1} b^T contribution from blocks < n; right[n] from blocks > n.
  std::vector<Mat<Scalar>> left(static_cast<std::size_t>(n_blocks), Mat<Scalar>::Zero(p, p));
  std::vector<Mat<Scalar>> right(static_cast<std::size_t>(n_blocks), Mat<Scalar>::Zero(p, p));
  for (int n = 1; n < n_blocks; ++n) {
    const Mat<Scalar> s = d - left[n - 1];
    left[n] = b.transpose() * s.ldlt().solve(b);
  }
  for (int n = n_blocks - 2; n >= 0; --n) {
    const Mat<Scalar> s = d - right[n + 1];
    right[n] = b * s.ldlt().solve(b.transpose());
  }
  std::vector<Mat<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n_blocks));
  for (int n = 0; n < n_blocks; ++n) out.push_back((d - left[n] - right[n]).ldlt().solve(eye));
  return out;
}

template <typename Scalar = double>
struct BoundResult {
  Mat<Scalar> per_slot;  ///< (O_t*O_r) x L lower bounds on the sum-phase MSE
  Scalar mean = Scalar(0);
};

/// diag(M^+) for the sum-coordinate BIM with L diagonal blocks. The atomic
/// BIM is inverted by the block recursion and mapped through A; the common
/// mode that A annihilates is an eigenvector of every atomic block, so this
/// equals the diagonal of the pseudo-inverse of M (and of its inverse when
/// M is nonsingular).
template <typename Scalar = double>
BoundResult<Scalar> assemble_and_bound(const BimBlocks<Scalar>& blocks, Scalar rho2, int l) {
  if (l < 1) throw_invalid("bcrb: L must be >= 1");
  if (!(rho2 > Scalar(0))) throw_invalid("bcrb: rho^2 must be > 0");
  const Index n = blocks.o_t + blocks.o_r;
  const Mat<Scalar> eye = Mat<Scalar>::Identity(n, n);
  const Mat<Scalar> d = blocks.m0_tilde_y + (Scalar(2) / rho2) * eye;
  const Mat<Scalar> b = -(Scalar(1) / rho2) * eye;
  const auto g = block_tridiag_inverse_diag<Scalar>(d, b, l);
  BoundResult<Scalar> res;
  res.per_slot.resize(blocks.a.rows(), l);
  for (int t = 0; t < l; ++t) res.per_slot.col(t) = (blocks.a * g[t] * blocks.a.transpose()).diagonal();
  res.mean = res.per_slot.mean();
  return res;
}

/// Dense sum-coordinate BIM, for tests and small L only.
template <typename Scalar = double>
Mat<Scalar> assemble_dense(const BimBlocks<Scalar>& blocks, int l) {
  const Index p = blocks.m0.rows();
  Mat<Scalar> m = Mat<Scalar>::Zero(p * l, p * l);
  for (int t = 0; t < l; ++t) {
    m.block(t * p, t * p, p, p) = blocks.m0;
    if (t + 1 < l) {
      m.block(t * p, (t + 1) * p, p, p) = blocks.m1;
      m.block((t + 1) * p, t * p, p, p) = blocks.m1;
    }
  }
  return m;
}

}  // namespace pnmimo::bcrb

#endif  // PNMIMO_BCRB_HPP
