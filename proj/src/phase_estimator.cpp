#include "pnmimo/phase_estimator.hpp"

#include <algorithm>
#include <cmath>

#include "pnmimo/bcrb.hpp"
#include "pnmimo/pn_process.hpp"

namespace pnmimo {

void SdConfig::validate() const {
  if (!(theta > 0.0)) throw_invalid("receiver.sd.theta must be > 0");
  if (max_steps < 1) throw_invalid("receiver.sd.max_steps must be >= 1");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw_invalid("receiver.sd.armijo_c must be in (0, 1)");
  if (!(lambda_init > 0.0)) throw_invalid("receiver.sd.lambda_init must be > 0");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw_invalid("receiver.sd.backtrack_factor must be in (0, 1)");
  if (max_backtracks < 0) throw_invalid("receiver.sd.max_backtracks must be >= 0");
}

// ---------------------------------------------------------------- pilots

RMatrix pilot_coarse_estimate(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                              const FrameLayout& layout) {
  const OscillatorGeometry& geo = h.geo;
  if (y.cols() != layout.n_slots() || known.pilots.cols() != layout.n_slots())
    throw_invalid("pilot_coarse_estimate: slot count mismatch");
  if (layout.o_t != geo.o_t) throw_invalid("pilot_coarse_estimate: layout and channel disagree on O_t");
  RMatrix sums(geo.n_pairs(), layout.n_blocks());
  for (int b = 0; b < layout.n_blocks(); ++b) {
    for (int i = 0; i < geo.o_t; ++i) {
      const int t = layout.block_start[b] + i;
      if (t >= layout.n_slots() || !layout.is_pilot(t) || layout.pilot_osc(t) != i)
        throw_invalid("pilot_coarse_estimate: missing pilot slot");
      const CVector p = known.pilots.col(t).segment(i * geo.n_ot, geo.n_ot);
      for (int ir = 0; ir < geo.o_r; ++ir) {
        const CVector ref = h.pair(ir, i) * p;
        const Complex z = ref.dot(y.col(t).segment(ir * geo.n_or, geo.n_or));  // ref^H y
        sums(geo.pair_index(i, ir), b) = std::arg(z);
      }
    }
  }
  return sums;
}

RVector sum_to_atomic_ls(const RVector& sums, int o_t, int o_r) {
  if (sums.size() != Index(o_t) * o_r) throw_invalid("sum_to_atomic_ls: expected O_t*O_r sums");
  return bcrb::jacobian<double>(o_t, o_r) * sums;
}

RMatrix sum_to_atomic_ls(const RMatrix& sums, int o_t, int o_r) {
  if (sums.rows() != Index(o_t) * o_r) throw_invalid("sum_to_atomic_ls: expected O_t*O_r rows");
  const RMatrix a = bcrb::incidence_matrix<double>(o_t, o_r);
  const RMatrix j = bcrb::jacobian<double>(o_t, o_r);
  RMatrix atomic(o_t + o_r, sums.cols());
  RVector pred = RVector::Zero(sums.rows());
  for (Index b = 0; b < sums.cols(); ++b) {
    RVector s(sums.rows());
    for (Index k = 0; k < s.size(); ++k) s(k) = pred(k) + wrap_phase(sums(k, b) - pred(k));
    atomic.col(b) = j * s;
    pred = a * atomic.col(b);
  }
  return atomic;
}

PhaseEstimate interpolate_init(const RMatrix& atomic_at_pilots, const std::vector<double>& times, int n_slots) {
  const Index nb = atomic_at_pilots.cols();
  if (nb < 1 || static_cast<Index>(times.size()) != nb) throw_invalid("interpolate_init: need one time per pilot block");
  if (n_slots < 1) throw_invalid("interpolate_init: n_slots must be >= 1");
  for (Index b = 1; b < nb; ++b)
    if (!(times[b] > times[b - 1])) throw_invalid("interpolate_init: pilot times must increase");
  RMatrix v = atomic_at_pilots;
  for (Index b = 1; b < nb; ++b)
    for (Index r = 0; r < v.rows(); ++r) v(r, b) = v(r, b - 1) + wrap_phase(v(r, b) - v(r, b - 1));

  PhaseEstimate est;
  est.phi_hat.resize(v.rows(), n_slots);
  Index seg = 0;
  for (int t = 0; t < n_slots; ++t) {
    if (t <= times.front()) {
      est.phi_hat.col(t) = v.col(0);
      continue;
    }
    if (t >= times.back()) {
      est.phi_hat.col(t) = v.col(nb - 1);
      continue;
    }
    while (times[seg + 1] < t) ++seg;
    const double a = (t - times[seg]) / (times[seg + 1] - times[seg]);
    est.phi_hat.col(t) = (1.0 - a) * v.col(seg) + a * v.col(seg + 1);
  }
  return est;
}

PhaseEstimate pilot_initial_estimate(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                                     const FrameLayout& layout) {
  const RMatrix sums = pilot_coarse_estimate(y, h, known, layout);
  const RMatrix atomic = sum_to_atomic_ls(sums, h.geo.o_t, h.geo.o_r);
  std::vector<double> times(static_cast<std::size_t>(layout.n_blocks()));
  for (int b = 0; b < layout.n_blocks(); ++b) times[b] = layout.block_time(b);
  return interpolate_init(atomic, times, layout.n_slots());
}

// ------------------------------------------------------------- objective

PhaseObjective::PhaseObjective(const EstimatedChannel& h, const CMatrix& y, const CMatrix& x_hat, double sigma2,
                               double rho2, double likelihood_weight)
    : h_(h), y_(y), x_hat_(x_hat) {
  if (!(sigma2 > 0.0)) throw_invalid("phase objective: sigma2 must be > 0");
  if (!(rho2 > 0.0)) throw_invalid("phase objective: rho2 must be > 0");
  if (!(likelihood_weight >= 0.0)) throw_invalid("phase objective: likelihood weight must be >= 0");
  if (h.h_hat.rows() != y.rows() || h.h_hat.cols() != x_hat.rows() || y.cols() != x_hat.cols())
    throw_invalid("phase objective: shape mismatch");
  inv_rho2_ = std::isinf(rho2) ? 0.0 : 1.0 / rho2;
  const double inv_ec = h.perfect() ? 0.0 : 1.0 / h.e_c;
  weight_ = likelihood_weight / (sigma2 * (1.0 + inv_ec * x_hat.colwise().squaredNorm().array()))
                                    .transpose();
}

double PhaseObjective::likelihood(const RMatrix& phi, RMatrix* grad) const {
  const OscillatorGeometry& g = h_.geo;
  const Index t_len = y_.cols();
  if (phi.rows() != g.n_osc() || phi.cols() != t_len) throw_invalid("phase objective: Phi shape mismatch");
  if (weight_.isZero(0.0)) return 0.0;

  CMatrix u = x_hat_;
  for (int i = 0; i < g.o_t; ++i) {
    const Eigen::RowVectorXcd e = phi.row(i).unaryExpr([](double p) { return std::polar(1.0, p); });
    u.middleRows(i * g.n_ot, g.n_ot).array().rowwise() *= e.array();
  }
  CMatrix w = y_;
  for (int ir = 0; ir < g.o_r; ++ir) {
    const Eigen::RowVectorXcd e = phi.row(g.o_t + ir).unaryExpr([](double p) { return std::polar(1.0, -p); });
    w.middleRows(ir * g.n_or, g.n_or).array().rowwise() *= e.array();
  }
  const CMatrix v = h_.h_hat * u;
  const CMatrix r = w - v;
  // Re{v^H w} - |v|^2/2 = (|w|^2 - |w - v|^2) / 2
  const RVector per_slot = 0.5 * (w.colwise().squaredNorm() - r.colwise().squaredNorm()).transpose();
  const double value = per_slot.dot(weight_);

  if (grad) {
    const CMatrix q = h_.h_hat.adjoint() * r;
    const RMatrix gt = (u.conjugate().array() * q.array()).imag().matrix();
    const RMatrix gr = (v.conjugate().array() * w.array()).imag().matrix();
    for (int i = 0; i < g.o_t; ++i)
      grad->row(i) = gt.middleRows(i * g.n_ot, g.n_ot).colwise().sum().cwiseProduct(weight_.transpose());
    for (int ir = 0; ir < g.o_r; ++ir)
      grad->row(g.o_t + ir) = gr.middleRows(ir * g.n_or, g.n_or).colwise().sum().cwiseProduct(weight_.transpose());
  }
  return value;
}

double PhaseObjective::prior(const RMatrix& phi, RMatrix* grad) const {
  if (inv_rho2_ == 0.0 || phi.cols() < 2) return 0.0;
  const Index t_len = phi.cols();
  double value = 0.0;
  for (Index r = 0; r < phi.rows(); ++r)
    for (Index n = 1; n < t_len; ++n) {
      const double d = wrap_phase(phi(r, n) - phi(r, n - 1));
      value -= 0.5 * d * d * inv_rho2_;
      if (grad) {
        (*grad)(r, n) -= d * inv_rho2_;
        (*grad)(r, n - 1) += d * inv_rho2_;
      }
    }
  return value;
}

double PhaseObjective::value(const RMatrix& phi) const { return likelihood(phi, nullptr) + prior(phi, nullptr); }

double PhaseObjective::value_and_gradient(const RMatrix& phi, RMatrix& grad) const {
  grad = RMatrix::Zero(phi.rows(), phi.cols());
  const double v = likelihood(phi, &grad);
  return v + prior(phi, &grad);
}

RMatrix PhaseObjective::gradient(const RMatrix& phi) const {
  RMatrix g;
  value_and_gradient(phi, g);
  return g;
}

OperationCounts PhaseObjective::ops_per_slot_eval() const {
  const OscillatorGeometry& g = h_.geo;
  const double nt = g.n_t(), nr = g.n_r(), ot = g.o_t, orr = g.o_r, no = g.n_osc();
  OperationCounts c;
  c.lut_accesses = no;
  // rotations of x and y
  c.products += 4 * (nt + nr);
  c.sums += 2 * (nt + nr);
  // V = H U and Q = H^H R
  c.products += 2 * 4 * nr * nt;
  c.sums += 2 * (2 * nr * nt) + 2 * nr * (nt - 1) + 2 * nt * (nr - 1);
  // R = W - V
  c.sums += 2 * nr;
  // (|w|^2 - |r|^2)/2, weighted
  c.products += 2 * 2 * nr + 2;
  c.sums += 2 * (2 * nr - 1) + 1;
  // Im{conj(u) q}, Im{conj(v) w}, group sums, weights
  c.products += 2 * (nt + nr) + no;
  c.sums += (nt + nr) + (nt - ot) + (nr - orr);
  // prior: increment, square, two gradient updates
  c.products += 2 * no;
  c.sums += 4 * no;
  return c;
}

double objective(const RMatrix& phi, const CMatrix& x_hat, const EstimatedChannel& h, const CMatrix& y, double sigma2,
                 double rho2) {
  return PhaseObjective(h, y, x_hat, sigma2, rho2).value(phi);
}

RMatrix gradient(const RMatrix& phi, const CMatrix& x_hat, const EstimatedChannel& h, const CMatrix& y, double sigma2,
                 double rho2) {
  return PhaseObjective(h, y, x_hat, sigma2, rho2).gradient(phi);
}

// ------------------------------------------------------------ step sizes

ArmijoResult armijo_first_step(const RMatrix& phi0, const RMatrix& grad0, double g0, const ObjectiveFn& eval,
                               const SdConfig& cfg) {
  ArmijoResult res;
  const double gn2 = grad0.squaredNorm();
  double lambda = cfg.lambda_init;
  for (int k = 0; k <= cfg.max_backtracks; ++k) {
    const double g = eval(phi0 + lambda * grad0);
    ++res.evaluations;
    res.lambda = lambda;
    res.g = g;
    if (g >= g0 + cfg.armijo_c * lambda * gn2) return res;
    lambda *= cfg.backtrack_factor;
  }
  res.flagged = true;
  return res;
}

double bb_step(const RMatrix& phi_prev, const RMatrix& phi_prev2, const RMatrix& grad_prev, const RMatrix& grad_prev2,
               double fallback) {
  const RMatrix dg = grad_prev - grad_prev2;
  const double den = dg.squaredNorm();
  if (!(den > 0.0) || !std::isfinite(den)) return fallback;
  const double lambda = std::abs((phi_prev - phi_prev2).cwiseProduct(dg).sum()) / den;
  return std::isfinite(lambda) && lambda > 0.0 ? lambda : fallback;
}

// --------------------------------------------------------------- ascent

SdResult detect_phases(const PhaseEstimate& init, const PhaseObjective& obj, const SdConfig& cfg, bool keep_trace) {
  cfg.validate();
  SdResult res;
  const OperationCounts per_eval = obj.ops_per_slot_eval().scaled(double(obj.n_slots()));
  const double n_entries = double(init.phi_hat.size());

  RMatrix phi = init.phi_hat;
  RMatrix grad;
  double g = obj.value_and_gradient(phi, grad);
  res.evaluations = 1;
  res.ops += per_eval;
  if (keep_trace) res.trace.push_back({0, g, 0.0, 0});

  RMatrix phi_prev, grad_prev;
  double lambda = cfg.lambda_init;
  for (int m = 1; m <= cfg.max_steps; ++m) {
    int backtracks = 0;
    double g_new;
    RMatrix phi_new, grad_new;
    if (m == 1) {
      // Every candidate is evaluated with its gradient; the last one is the accepted point.
      const ArmijoResult a = armijo_first_step(
          phi, grad, g, [&](const RMatrix& p) { return obj.value_and_gradient(p, grad_new); }, cfg);
      lambda = a.lambda;
      g_new = a.g;
      backtracks = a.evaluations - 1;
      res.armijo_flagged = a.flagged;
      phi_new = phi + lambda * grad;
      res.ops.sums += a.evaluations * 2 * n_entries + n_entries;  // candidates and |grad|^2
      res.ops.products += a.evaluations * 2 * n_entries + n_entries;
    } else {
      lambda = bb_step(phi, phi_prev, grad, grad_prev, lambda);
      res.ops.sums += 4 * n_entries;  // differences and dot products
      res.ops.products += 2 * n_entries;
      res.ops.divisions += 1;
      phi_new = phi + lambda * grad;
      res.ops.sums += n_entries;
      res.ops.products += n_entries;
      g_new = obj.value_and_gradient(phi_new, grad_new);
    }
    res.evaluations += 1 + backtracks;
    res.backtracks += backtracks;
    res.ops += per_eval.scaled(1.0 + backtracks);
    res.steps = m;
    if (keep_trace) res.trace.push_back({m, g_new, lambda, backtracks});

    phi_prev = std::move(phi);
    grad_prev = std::move(grad);
    phi = std::move(phi_new);
    grad = std::move(grad_new);
    const double g_old = g;
    g = g_new;
    res.ops.divisions += 1;
    if (std::abs(g - g_old) < cfg.theta * std::abs(g_old)) break;
  }
  res.estimate.phi_hat = std::move(phi);
  return res;
}

}  // namespace pnmimo
