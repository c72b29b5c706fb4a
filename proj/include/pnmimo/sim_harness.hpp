#ifndef PNMIMO_SIM_HARNESS_HPP
#define PNMIMO_SIM_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnmimo/channel.hpp"
#include "pnmimo/em_receiver.hpp"
#include "pnmimo/pn_process.hpp"

namespace pnmimo {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid or unreadable configuration. The message starts with the key path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { ber, mse, bcrb, opcount };

struct ExperimentConfig {
  Mode mode = Mode::ber;
  SystemConfig system;
  PnConfig pn;
  ReceiverConfig receiver;
  std::vector<double> snr_db_list;  ///< E_s/N0 points
  int max_frames = 200;
  int max_frame_errors = 100;
  std::uint64_t seed = 1;
  std::string output_path;
  int codewords_per_user = 0;  ///< 0 = as many as fit
  int ldpc_k = 83;
  int ldpc_n = 104;
  std::string ldpc_alist;      ///< optional parity-check import
  int bcrb_channel_draws = 20;
  // Execution options; they never change results.
  int workers = 1;
  bool timing = false;
  std::string sd_trace_path;   ///< per-step trace of frame 0 at each SNR

  void validate() const;
};

/// Built-in presets, identical to configs/<name>.json.
ExperimentConfig preset(const std::string& name);

ExperimentConfig parse_config_text(const std::string& text);
/// Reads and parses a JSON file; keys absent from the file keep their defaults.
ExperimentConfig parse_config(const std::string& path);
/// Overlay a JSON document on an existing configuration.
ExperimentConfig apply_config_text(const ExperimentConfig& base, const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a over the result-relevant part of the configuration.
std::uint64_t config_hash(const ExperimentConfig& cfg);

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct MetricRow {
  double snr_db = 0.0;
  double ber = 0.0;
  double mse_sum_phase_rad2 = 0.0;
  double bcrb_rad2 = 0.0;
  double avg_rx_iters = 0.0;
  double avg_total_sd_steps = 0.0;
  long frames = 0;
  long frame_errors = 0;
  double wallclock_s = 0.0;
};

/// One simulated frame.
struct FrameOutcome {
  long bit_errors = 0;
  long bits = 0;
  double mse = 0.0;
  int rx_iters = 0;
  int sd_steps = 0;
  OperationCounts ops;
  std::vector<IterationDiag> diag;
  std::vector<SdTraceRow> sd_trace;
};

/// Shared per-experiment state (code, constellation, layouts).
class Simulator {
 public:
  explicit Simulator(const ExperimentConfig& cfg);

  /// Frame `index` at the given E_s/N0; every draw comes from streams keyed
  /// on (seed, index, purpose), so results do not depend on call order.
  FrameOutcome run_frame(long index, double snr_db, bool keep_trace = false) const;

  /// Average sum-phase bound over bcrb_channel_draws channel draws.
  double bcrb(double snr_db) const;

  const ExperimentConfig& config() const { return cfg_; }
  const ReceiverContext& context() const { return ctx_; }
  const LdpcCode& code() const { return code_; }

 private:
  ExperimentConfig cfg_;
  LdpcCode code_;
  QamConstellation qam_;
  ReceiverContext ctx_;
};

std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg);

std::string csv_header(const ExperimentConfig& cfg);
std::string csv_row(const MetricRow& row);
void write_csv(const std::string& path, const ExperimentConfig& cfg, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_csv(const std::string& path);

/// Reference point; NaN fields are not compared.
struct ReferencePoint {
  double snr_db = 0.0;
  double ber = 0.0;
  double avg_rx_iters = 0.0;
  double avg_total_sd_steps = 0.0;
  std::string label;
};

/// CSV with header label,snr_db,ber,avg_rx_iters,avg_total_sd_steps; blank cells are NaN.
std::vector<ReferencePoint> read_reference(std::istream& in);

/// Aligned table of the rows; with references, each reference is matched to
/// the row closest in SNR and the differences are appended.
std::string summarize(const std::vector<MetricRow>& rows, const std::vector<ReferencePoint>* reference = nullptr);

/// Mega-operations per slot from the closed-form counts and the measured
/// average SD steps per frame (steps per iteration times iterations).
OperationCounts total_mega_ops(const SystemConfig& sys, double avg_total_sd_steps);

}  // namespace pnmimo

#endif  // PNMIMO_SIM_HARNESS_HPP
