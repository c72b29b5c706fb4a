#ifndef PNMIMO_EM_RECEIVER_HPP
#define PNMIMO_EM_RECEIVER_HPP

#include <cstdint>
#include <vector>

#include "pnmimo/channel.hpp"
#include "pnmimo/frame.hpp"
#include "pnmimo/ldpc.hpp"
#include "pnmimo/phase_estimator.hpp"
#include "pnmimo/qam.hpp"

namespace pnmimo {

enum class StoppingRule { genie, syndrome, none };
enum class PhaseDetection { em, none };

struct ReceiverConfig {
  int max_rx_iters = 10;
  StoppingRule stopping = StoppingRule::genie;
  PhaseDetection detection = PhaseDetection::em;
  SdConfig sd;
  /// Wiener increment std assumed by the phase prior.
  double prior_rho = 0.2;
  int ldpc_iters = 50;
  bool keep_sd_trace = false;

  void validate() const;
};

/// F = (H^H H + sigma2 (N_t/E_C + 1/E_s) I)^{-1} H^H; perfect CSI drops N_t/E_C.
CMatrix lmmse_filter(const CMatrix& h_hat, double sigma2, double e_s, double e_c, int n_t);

struct SlotOutput {
  CVector x;        ///< equalized symbols, unit gain per stream
  RVector noise;    ///< effective complex noise variance per stream
};

/// Per-slot demodulation from scratch: rotate H_hat by the slot phases, build
/// the LMMSE filter on it and normalize each stream by its own gain. Noise
/// variance: inter-stream leakage E_s sum_{j != k} |(FH)_kj|^2 plus filtered
/// noise |f_k|^2 2 sigma2 (1 + N_t E_s / E_C).
SlotOutput demodulate_slot(const EstimatedChannel& h, const RVector& phi_slot, const CVector& y, double sigma2,
                           double e_s);

/// Same result with the filter computed once per frame; each slot only
/// rotates input and output (Phi_T^H F Phi_R^H).
class Demodulator {
 public:
  Demodulator(const EstimatedChannel& h, double sigma2, double e_s);
  SlotOutput slot(const RVector& phi_slot, const CVector& y) const;
  const CMatrix& filter() const { return f_; }

 private:
  OscillatorGeometry geo_;
  CMatrix f_;
  RVector gain_;
  RVector noise_;
};

/// Ground truth used by the genie stopping rule and by diagnostics only.
struct GenieTruth {
  std::vector<std::vector<std::uint8_t>> info;  ///< per codeword, user-major
  RMatrix sum_phases;                           ///< (O_t*O_r) x T, slot t = trajectory column t+1
};

struct IterationDiag {
  int iteration = 0;
  int sd_steps = 0;
  long bit_errors = -1;  ///< -1 without truth
  double mse = -1.0;     ///< wrapped sum-phase MSE over data slots, -1 without truth
  int converged_codewords = 0;
};

struct ReceiverResult {
  std::vector<std::vector<std::uint8_t>> info;  ///< decoded info bits per codeword
  int iterations = 0;
  int total_sd_steps = 0;
  PhaseEstimate phase;  ///< estimate used by the last demodulation
  std::vector<IterationDiag> diag;
  std::vector<SdTraceRow> sd_trace;  ///< concatenated over iterations when requested
  OperationCounts ops;
};

/// Everything fixed for a frame geometry.
struct ReceiverContext {
  SystemConfig sys;
  FrameLayout layout;
  CodingLayout coding;
  const LdpcCode* code = nullptr;
  const QamConstellation* qam = nullptr;
};

/// Iterative receiver. Iteration 1 demodulates with the pilot-based phases;
/// iteration l >= 2 first refines the phases by gradient ascent using the
/// symbols rebuilt at iteration l-1.
ReceiverResult receive_frame(const CMatrix& y, const EstimatedChannel& h, const KnownSymbols& known,
                             const ReceiverContext& ctx, const ReceiverConfig& cfg, const GenieTruth* truth = nullptr);

/// Wrapped sum-phase MSE over data slots.
double sum_phase_mse(const PhaseEstimate& est, const RMatrix& sum_truth, const FrameLayout& layout, int o_t, int o_r);

/// Closed-form operation counts per steepest-descent step per slot. The
/// oscillator counts O_t and O_r enter the linear terms.
OperationCounts count_ops(const SystemConfig& sys);

}  // namespace pnmimo

#endif  // PNMIMO_EM_RECEIVER_HPP
