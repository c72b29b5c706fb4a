#ifndef PNMIMO_PHASE_ESTIMATOR_HPP
#define PNMIMO_PHASE_ESTIMATOR_HPP

#include <functional>
#include <limits>
#include <vector>

#include "pnmimo/channel.hpp"
#include "pnmimo/frame.hpp"

namespace pnmimo {

/// Atomic phase estimates, (O_t+O_r) x T, one column per frame slot (pilot
/// slots included). Differential with respect to the CE epoch.
struct PhaseEstimate {
  RMatrix phi_hat;
};

/// Real-operation tallies. A complex multiply counts as 4 products and 2
/// sums, a complex add as 2 sums, one e^{j phi} as one table access.
struct OperationCounts {
  double sums = 0.0;
  double products = 0.0;
  double divisions = 0.0;
  double lut_accesses = 0.0;

  OperationCounts& operator+=(const OperationCounts& o) {
    sums += o.sums;
    products += o.products;
    divisions += o.divisions;
    lut_accesses += o.lut_accesses;
    return *this;
  }
  OperationCounts scaled(double s) const { return {sums * s, products * s, divisions * s, lut_accesses * s}; }
};

struct SdConfig {
  double theta = 1e-6;
  int max_steps = 300;
  double armijo_c = 0.5;
  double lambda_init = 1.0;
  double backtrack_factor = 0.5;
  int max_backtracks = 60;

  void validate() const;
};

/// Sum-phase estimates at each pilot block: (O_t*O_r) x n_blocks, row
/// geometry.pair_index(i, ir). Values are wrapped to (-pi, pi].
RMatrix pilot_coarse_estimate(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                              const FrameLayout& layout);

/// Minimum-norm least-squares atomic phases for one set of pair sums.
RVector sum_to_atomic_ls(const RVector& sums, int o_t, int o_r);

/// Block-by-block version: each block's sums are first unwrapped against the
/// sums predicted by the previous block's solution (zero before the first).
RMatrix sum_to_atomic_ls(const RMatrix& sums, int o_t, int o_r);

/// Piecewise-linear interpolation of atomic values given at (fractional)
/// slot times onto slots 0..n_slots-1, constant outside the first and last
/// time. Each row is unwrapped along time first.
PhaseEstimate interpolate_init(const RMatrix& atomic_at_pilots, const std::vector<double>& times, int n_slots);

/// Pilot estimate, LS mapping and interpolation in one call.
PhaseEstimate pilot_initial_estimate(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                                     const FrameLayout& layout);

/// Objective g(Phi) = sum_n w_n [Re{u_n^H H^H w_n} - 1/2 |H u_n|^2] + log prior,
/// with u_n = Phi_T x_n, w_n = Phi_R^H y_n, weight 1/(sigma2 (1 + |x_n|^2/E_C))
/// and a Wiener prior on the increments of each row.
class PhaseObjective {
 public:
  /// rho2 = +inf removes the prior; likelihood_weight scales the data term.
  PhaseObjective(const EstimatedChannel& h, const CMatrix& y, const CMatrix& x_hat, double sigma2, double rho2,
                 double likelihood_weight = 1.0);

  double value(const RMatrix& phi) const;
  RMatrix gradient(const RMatrix& phi) const;
  double value_and_gradient(const RMatrix& phi, RMatrix& grad) const;

  Index n_slots() const { return y_.cols(); }
  const OscillatorGeometry& geometry() const { return h_.geo; }
  const RVector& slot_weights() const { return weight_; }

  /// Operations charged per slot by one value_and_gradient call.
  OperationCounts ops_per_slot_eval() const;

 private:
  double likelihood(const RMatrix& phi, RMatrix* grad) const;
  double prior(const RMatrix& phi, RMatrix* grad) const;

  const EstimatedChannel& h_;
  const CMatrix& y_;
  const CMatrix& x_hat_;
  double inv_rho2_;
  RVector weight_;
};

/// Free-function forms.
double objective(const RMatrix& phi, const CMatrix& x_hat, const EstimatedChannel& h, const CMatrix& y, double sigma2,
                 double rho2);
RMatrix gradient(const RMatrix& phi, const CMatrix& x_hat, const EstimatedChannel& h, const CMatrix& y, double sigma2,
                 double rho2);

struct ArmijoResult {
  double lambda = 0.0;
  double g = 0.0;         ///< objective at the accepted point
  int evaluations = 0;
  bool flagged = false;   ///< no candidate passed within max_backtracks
};

using ObjectiveFn = std::function<double(const RMatrix&)>;

/// Backtracking from lambda_init by backtrack_factor until
/// g(phi0 + lambda grad0) >= g0 + c lambda |grad0|^2.
ArmijoResult armijo_first_step(const RMatrix& phi0, const RMatrix& grad0, double g0, const ObjectiveFn& eval,
                               const SdConfig& cfg);

/// |dPhi . dGrad| / |dGrad|^2, or `fallback` when the denominator vanishes.
double bb_step(const RMatrix& phi_prev, const RMatrix& phi_prev2, const RMatrix& grad_prev, const RMatrix& grad_prev2,
               double fallback);

struct SdTraceRow {
  int step = 0;
  double g = 0.0;
  double lambda = 0.0;
  int backtracks = 0;
};

struct SdResult {
  PhaseEstimate estimate;
  int steps = 0;
  int evaluations = 0;  ///< objective evaluations, the initial one included
  int backtracks = 0;   ///< rejected Armijo candidates
  bool armijo_flagged = false;
  OperationCounts ops;
  std::vector<SdTraceRow> trace;  ///< filled when requested; row 0 is the start point
};

/// Gradient ascent: Armijo first step, Barzilai-Borwein afterwards, stop on
/// relative objective change below theta or after max_steps steps.
SdResult detect_phases(const PhaseEstimate& init, const PhaseObjective& obj, const SdConfig& cfg,
                       bool keep_trace = false);

}  // namespace pnmimo

#endif  // PNMIMO_PHASE_ESTIMATOR_HPP
