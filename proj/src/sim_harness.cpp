#include "pnmimo/sim_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pnmimo/bcrb.hpp"
#include "pnmimo/frame.hpp"
#include "pnmimo/random.hpp"

namespace pnmimo {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

// Strict object reader: every key must be consumed, otherwise the first
// unknown one is reported with its full path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }
  ~ObjectReader() = default;

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::runtime_error("expected a boolean");
        out = v->get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::runtime_error("expected an integer");
        out = v->get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        out = number(*v);
      } else {
        if (!v->is_string()) throw std::runtime_error("expected a string");
        out = v->get<std::string>();
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      config_error(key_path(key), e.what());
    }
  }

  static double number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf" || s == "+inf") return kInf;
      if (s == "-inf") return -kInf;
    }
    throw std::runtime_error("expected a number (or \"inf\" / \"-inf\")");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) config_error(key_path(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string stopping_name(StoppingRule s) {
  switch (s) {
    case StoppingRule::genie: return "genie";
    case StoppingRule::syndrome: return "syndrome";
    case StoppingRule::none: return "none";
  }
  return "genie";
}

void read_system(const json& j, SystemConfig& s, int& codewords) {
  ObjectReader r(j, "system");
  r.get("n_t", s.n_t);
  r.get("n_r", s.n_r);
  r.get("o_t", s.o_t);
  r.get("o_r", s.o_r);
  r.get("e_s", s.e_s);
  if (const json* v = r.find("e_c")) {
    try {
      s.e_c = v->is_null() ? kInf : ObjectReader::number(*v);
    } catch (const std::exception& e) {
      config_error("system.e_c", e.what());
    }
  }
  r.get("k_rice_db", s.k_rice_db);
  r.get("l", s.l);
  r.get("r", s.r);
  r.get("codewords_per_user", codewords);
  r.finish();
}

void read_pn(const json& j, PnConfig& pn) {
  ObjectReader r(j, "pn");
  std::string model;
  r.get("model", model);
  if (!model.empty()) {
    if (model == "wiener")
      pn.model = PnModel::wiener;
    else if (model == "mask")
      pn.model = PnModel::mask;
    else
      config_error("pn.model", "expected \"wiener\" or \"mask\"");
  }
  r.get("rho", pn.rho);
  if (const json* m = r.find("mask")) {
    ObjectReader mr(*m, "pn.mask");
    if (const json* segs = mr.find("segments")) {
      if (!segs->is_array()) config_error("pn.mask.segments", "expected an array");
      pn.mask_segments.clear();
      for (std::size_t k = 0; k < segs->size(); ++k) {
        const std::string p = "pn.mask.segments[" + std::to_string(k) + "]";
        const json& s = (*segs)[k];
        if (!s.is_array() || s.size() != 3) config_error(p, "expected [f_start_hz, f_end_hz, slope_db_per_decade]");
        try {
          pn.mask_segments.push_back({ObjectReader::number(s[0]), ObjectReader::number(s[1]), ObjectReader::number(s[2])});
        } catch (const std::exception& e) {
          config_error(p, e.what());
        }
      }
    }
    mr.get("ref_level_dbc", pn.mask_ref_level_dbc);
    mr.get("ref_freq_hz", pn.mask_ref_freq_hz);
    mr.get("sample_rate_hz", pn.sample_rate_hz);
    mr.get("equivalent_rho", pn.mask_equivalent_rho);
    mr.finish();
  }
  r.finish();
}

void read_receiver(const json& j, ReceiverConfig& rc, bool& prior_given) {
  ObjectReader r(j, "receiver");
  r.get("max_rx_iters", rc.max_rx_iters);
  std::string s;
  r.get("stopping", s);
  if (!s.empty()) {
    if (s == "genie")
      rc.stopping = StoppingRule::genie;
    else if (s == "syndrome")
      rc.stopping = StoppingRule::syndrome;
    else if (s == "none")
      rc.stopping = StoppingRule::none;
    else
      config_error("receiver.stopping", "expected \"genie\", \"syndrome\" or \"none\"");
  }
  std::string d;
  r.get("detection", d);
  if (!d.empty()) {
    if (d == "em")
      rc.detection = PhaseDetection::em;
    else if (d == "none")
      rc.detection = PhaseDetection::none;
    else
      config_error("receiver.detection", "expected \"em\" or \"none\"");
  }
  if (r.find("prior_rho")) {
    prior_given = true;
    r.get("prior_rho", rc.prior_rho);
  }
  r.get("ldpc_iters", rc.ldpc_iters);
  if (const json* sd = r.find("sd")) {
    ObjectReader sr(*sd, "receiver.sd");
    sr.get("theta", rc.sd.theta);
    sr.get("max_steps", rc.sd.max_steps);
    sr.get("armijo_c", rc.sd.armijo_c);
    sr.get("lambda_init", rc.sd.lambda_init);
    sr.get("backtrack_factor", rc.sd.backtrack_factor);
    sr.get("max_backtracks", rc.sd.max_backtracks);
    sr.finish();
  }
  r.finish();
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

// Prior std of the receiver when the file does not set one.
double default_prior_rho(const PnConfig& pn) {
  double rho = pn.model == PnModel::mask ? pn.mask_equivalent_rho : pn.rho;
  return rho > 0.0 ? rho : 1e-3;
}

ExperimentConfig overlay(ExperimentConfig cfg, const json& j) {
  ObjectReader r(j, "");
  std::string mode;
  r.get("mode", mode);
  if (!mode.empty()) {
    try {
      cfg.mode = parse_mode(mode);
    } catch (const std::exception&) {
      config_error("mode", "expected ber, mse, bcrb or opcount");
    }
  }
  if (const json* v = r.find("seed")) {
    if (!v->is_number_unsigned()) config_error("seed", "expected a non-negative integer");
    cfg.seed = v->get<std::uint64_t>();
  }
  if (const json* v = r.find("snr_db")) {
    if (!v->is_array()) config_error("snr_db", "expected an array of numbers");
    cfg.snr_db_list.clear();
    for (const auto& x : *v) {
      if (!x.is_number()) config_error("snr_db", "expected an array of numbers");
      cfg.snr_db_list.push_back(x.get<double>());
    }
  }
  r.get("max_frames", cfg.max_frames);
  r.get("max_frame_errors", cfg.max_frame_errors);
  r.get("output", cfg.output_path);
  r.get("workers", cfg.workers);
  r.get("timing", cfg.timing);
  r.get("sd_trace", cfg.sd_trace_path);
  if (const json* v = r.find("system")) read_system(*v, cfg.system, cfg.codewords_per_user);
  bool pn_given = false;
  if (const json* v = r.find("pn")) {
    read_pn(*v, cfg.pn);
    pn_given = true;
  }
  bool prior_given = false;
  if (const json* v = r.find("receiver")) read_receiver(*v, cfg.receiver, prior_given);
  if (pn_given && !prior_given) cfg.receiver.prior_rho = default_prior_rho(cfg.pn);
  if (const json* v = r.find("ldpc")) {
    ObjectReader lr(*v, "ldpc");
    lr.get("k", cfg.ldpc_k);
    lr.get("n", cfg.ldpc_n);
    lr.get("alist", cfg.ldpc_alist);
    lr.finish();
  }
  if (const json* v = r.find("bcrb")) {
    ObjectReader br(*v, "bcrb");
    br.get("channel_draws", cfg.bcrb_channel_draws);
    br.finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg, bool with_execution) {
  json j;
  j["mode"] = mode_name(cfg.mode);
  j["seed"] = cfg.seed;
  j["snr_db"] = cfg.snr_db_list;
  j["max_frames"] = cfg.max_frames;
  j["max_frame_errors"] = cfg.max_frame_errors;
  const SystemConfig& s = cfg.system;
  j["system"] = {{"n_t", s.n_t},           {"n_r", s.n_r}, {"o_t", s.o_t},
                 {"o_r", s.o_r},           {"e_s", s.e_s}, {"e_c", s.perfect_csi() ? json(nullptr) : json(s.e_c)},
                 {"k_rice_db", s.k_rice_db}, {"l", s.l},   {"r", s.r},
                 {"codewords_per_user", cfg.codewords_per_user}};
  json segs = json::array();
  for (const auto& m : cfg.pn.mask_segments) segs.push_back({m.f_start_hz, m.f_end_hz, m.slope_db_per_decade});
  j["pn"] = {{"model", cfg.pn.model == PnModel::wiener ? "wiener" : "mask"},
             {"rho", cfg.pn.rho},
             {"mask",
              {{"segments", segs},
               {"ref_level_dbc", number_json(cfg.pn.mask_ref_level_dbc)},
               {"ref_freq_hz", cfg.pn.mask_ref_freq_hz},
               {"sample_rate_hz", cfg.pn.sample_rate_hz},
               {"equivalent_rho", cfg.pn.mask_equivalent_rho}}}};
  const ReceiverConfig& rc = cfg.receiver;
  j["receiver"] = {{"max_rx_iters", rc.max_rx_iters},
                   {"stopping", stopping_name(rc.stopping)},
                   {"detection", rc.detection == PhaseDetection::em ? "em" : "none"},
                   {"prior_rho", rc.prior_rho},
                   {"ldpc_iters", rc.ldpc_iters},
                   {"sd",
                    {{"theta", rc.sd.theta},
                     {"max_steps", rc.sd.max_steps},
                     {"armijo_c", rc.sd.armijo_c},
                     {"lambda_init", rc.sd.lambda_init},
                     {"backtrack_factor", rc.sd.backtrack_factor},
                     {"max_backtracks", rc.sd.max_backtracks}}}};
  j["ldpc"] = {{"k", cfg.ldpc_k}, {"n", cfg.ldpc_n}, {"alist", cfg.ldpc_alist}};
  j["bcrb"] = {{"channel_draws", cfg.bcrb_channel_draws}};
  if (with_execution) {
    j["output"] = cfg.output_path;
    j["workers"] = cfg.workers;
    j["timing"] = cfg.timing;
    j["sd_trace"] = cfg.sd_trace_path;
  }
  return j;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

LdpcCode load_code(const ExperimentConfig& cfg) {
  if (!cfg.ldpc_alist.empty()) {
    std::ifstream in(cfg.ldpc_alist);
    if (!in) throw ConfigError("ldpc.alist: cannot open " + cfg.ldpc_alist);
    try {
      return LdpcCode::from_alist(in);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("ldpc.alist: ") + e.what());
    }
  }
  try {
    return LdpcCode::nr_bg2(cfg.ldpc_k, cfg.ldpc_n);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ldpc: ") + e.what());
  }
}

}  // namespace

// ------------------------------------------------------------------ config

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::ber: return "ber";
    case Mode::mse: return "mse";
    case Mode::bcrb: return "bcrb";
    case Mode::opcount: return "opcount";
  }
  return "ber";
}

Mode parse_mode(const std::string& s) {
  if (s == "ber") return Mode::ber;
  if (s == "mse") return Mode::mse;
  if (s == "bcrb") return Mode::bcrb;
  if (s == "opcount") return Mode::opcount;
  throw ConfigError("mode: expected ber, mse, bcrb or opcount");
}

void ExperimentConfig::validate() const {
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
  wrap([&] { system.validate(); });
  wrap([&] { pn.validate(); });
  wrap([&] { receiver.validate(); });
  if (snr_db_list.empty()) throw ConfigError("snr_db: list must not be empty");
  for (double s : snr_db_list)
    if (!std::isfinite(s)) throw ConfigError("snr_db: values must be finite");
  if (max_frames < 1) throw ConfigError("max_frames: must be >= 1");
  if (max_frame_errors < 1) throw ConfigError("max_frame_errors: must be >= 1");
  if (codewords_per_user < 0) throw ConfigError("system.codewords_per_user: must be >= 0");
  if (bcrb_channel_draws < 1) throw ConfigError("bcrb.channel_draws: must be >= 1");
  if (workers < 1) throw ConfigError("workers: must be >= 1");
}

ExperimentConfig parse_config_text(const std::string& text) { return apply_config_text(ExperimentConfig{}, text); }

ExperimentConfig apply_config_text(const ExperimentConfig& base, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: JSON parse error: ") + e.what());
  }
  return overlay(base, j);
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg, true).dump(2) + "\n"; }

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json(cfg, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.pn.model = PnModel::wiener;
  c.pn.rho = 0.2;
  c.receiver.prior_rho = 0.2;
  c.receiver.max_rx_iters = 10;
  c.receiver.sd.theta = 1e-6;
  c.receiver.sd.max_steps = 300;
  const PnConfig mask = reference_mask_config();
  c.pn.mask_segments = mask.mask_segments;
  c.pn.mask_ref_level_dbc = mask.mask_ref_level_dbc;
  c.pn.mask_ref_freq_hz = mask.mask_ref_freq_hz;
  c.pn.sample_rate_hz = mask.sample_rate_hz;
  c.pn.mask_equivalent_rho = 0.2;
  if (name == "paper") {
    c.system = SystemConfig{};  // 32 x 64, O_t = 16, O_r = 4, L = 1086, R = 60
    c.snr_db_list = {6, 8, 10, 12, 14};
    c.max_frames = 1000000;
    c.max_frame_errors = 100;
    return c;
  }
  if (name == "desk") {
    c.system.n_t = 8;
    c.system.n_r = 16;
    c.system.o_t = 4;
    c.system.o_r = 2;
    c.system.l = 120;
    c.system.r = 24;
    c.snr_db_list = {9, 12, 15};
    c.codewords_per_user = 3;  // 12 codewords per frame
    c.max_frames = 200;
    c.max_frame_errors = 100;
    return c;
  }
  throw ConfigError("preset: unknown preset \"" + name + "\" (expected paper or desk)");
}

// --------------------------------------------------------------- simulator

Simulator::Simulator(const ExperimentConfig& cfg)
    : cfg_(cfg), code_(load_code(cfg)), qam_(64, cfg.system.e_s) {
  cfg_.validate();
  ctx_.sys = cfg_.system;
  try {
    ctx_.layout = make_layout(cfg_.system);
    ctx_.coding = make_coding_layout(cfg_.system, code_, qam_, cfg_.codewords_per_user);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
  ctx_.code = &code_;
  ctx_.qam = &qam_;
}

FrameOutcome Simulator::run_frame(long index, double snr_db, bool keep_trace) const {
  const auto fi = static_cast<std::uint64_t>(index);
  ReceiverContext ctx = ctx_;
  ctx.code = &code_;
  ctx.qam = &qam_;
  ctx.sys.sigma2 = sigma2_from_es_n0_db(cfg_.system.e_s, snr_db);
  const SystemConfig& sys = ctx.sys;
  const OscillatorGeometry geo = sys.geometry();

  Rng r_channel = make_stream(cfg_.seed, fi, StreamPurpose::channel);
  Rng r_pn = make_stream(cfg_.seed, fi, StreamPurpose::phase_noise);
  Rng r_data = make_stream(cfg_.seed, fi, StreamPurpose::data);
  Rng r_noise = make_stream(cfg_.seed, fi, StreamPurpose::awgn);
  Rng r_csi = make_stream(cfg_.seed, fi, StreamPurpose::csi_error);
  Rng r_pilot = make_stream(cfg_.seed, fi, StreamPurpose::pilots);
  Rng r_filler = make_stream(cfg_.seed, fi, StreamPurpose::filler);

  const CMatrix h = gen_rician(sys, r_channel);
  const PnTrajectory pn = generate_pn(cfg_.pn, geo.n_osc(), ctx.layout.n_slots() + 1, r_pn);
  const KnownSymbols known = draw_known(sys, ctx.layout, ctx.coding, r_pilot, r_filler);
  const TxFrame tx = build_frame(sys, ctx.layout, ctx.coding, code_, qam_, known, r_data);
  const CMatrix y = transmit_frame(h, geo, pn, tx.x, sys.sigma2, r_noise);
  const EstimatedChannel est = estimate_channel(h, pn.phases.col(0), sys, r_csi);

  GenieTruth truth;
  truth.info = tx.info;
  truth.sum_phases = atomic_to_sum(pn.phases, geo.o_t, geo.o_r).rightCols(ctx.layout.n_slots());

  ReceiverConfig rc = cfg_.receiver;
  if (cfg_.mode == Mode::mse) rc.stopping = StoppingRule::none;
  rc.keep_sd_trace = keep_trace;
  const ReceiverResult res = receive_frame(y, est, known, ctx, rc, &truth);

  FrameOutcome out;
  out.bit_errors = res.diag.back().bit_errors;
  out.bits = static_cast<long>(tx.info.size()) * code_.k();
  out.mse = res.diag.back().mse;
  out.rx_iters = res.iterations;
  out.sd_steps = res.total_sd_steps;
  out.ops = res.ops;
  out.diag = res.diag;
  out.sd_trace = res.sd_trace;
  return out;
}

double Simulator::bcrb(double snr_db) const {
  const double rho = cfg_.pn.model == PnModel::mask && cfg_.pn.mask_equivalent_rho > 0.0 ? cfg_.pn.mask_equivalent_rho
                                                                                         : cfg_.pn.rho;
  if (!(rho > 0.0)) return kNaN;
  const SystemConfig& sys = cfg_.system;
  const double sigma2 = sigma2_from_es_n0_db(sys.e_s, snr_db);
  const int t_len = ctx_.layout.n_slots();
  double acc = 0.0;
  for (int d = 0; d < cfg_.bcrb_channel_draws; ++d) {
    Rng r = make_stream(cfg_.seed, static_cast<std::uint64_t>(d), StreamPurpose::channel);
    const CMatrix h = gen_rician(sys, r);
    const auto m0y = bcrb::build_m0y<double>(h, sigma2, sys.o_t, sys.o_r, sys.e_s);
    const auto blocks = bcrb::make_blocks<double>(m0y, sys.o_t, sys.o_r, rho * rho);
    const auto bound = bcrb::assemble_and_bound<double>(blocks, rho * rho, t_len);
    double s = 0.0;
    for (int t : ctx_.layout.data_slot) s += bound.per_slot.col(t).mean();
    acc += s / double(ctx_.layout.data_slot.size());
  }
  return acc / cfg_.bcrb_channel_draws;
}

// ------------------------------------------------------------------ runner

namespace {

std::vector<FrameOutcome> run_batch(const Simulator& sim, long first, int count, double snr, int workers,
                                    bool trace_first) {
  std::vector<FrameOutcome> out(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(count));
  auto job = [&](int k) {
    try {
      out[k] = sim.run_frame(first + k, snr, trace_first && first + k == 0);
    } catch (...) {
      errs[k] = std::current_exception();
    }
  };
  if (workers <= 1 || count == 1) {
    for (int k = 0; k < count; ++k) job(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(workers, count); ++w)
      pool.emplace_back([&, w] {
        for (int k = w; k < count; k += workers) job(k);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

void write_trace(std::ofstream& out, double snr, const std::vector<SdTraceRow>& trace) {
  int iteration = 1;
  for (const auto& r : trace) {
    if (r.step == 0) ++iteration;
    out << fmt(snr) << ',' << iteration << ',' << r.step << ',' << fmt(r.g) << ',' << fmt(r.lambda) << ','
        << r.backtracks << '\n';
  }
}

}  // namespace

std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Simulator sim(cfg);
  std::vector<MetricRow> rows;
  std::ofstream trace;
  if (!cfg.sd_trace_path.empty()) {
    trace.open(cfg.sd_trace_path);
    if (!trace) throw std::runtime_error("cannot write " + cfg.sd_trace_path);
    trace << "snr_db,rx_iteration,step,g,lambda,backtracks\n";
  }
  std::ofstream ops_out;
  if (cfg.mode == Mode::opcount && !cfg.output_path.empty()) {
    ops_out.open(cfg.output_path + ".ops.csv");
    if (!ops_out) throw std::runtime_error("cannot write " + cfg.output_path + ".ops.csv");
    ops_out << "snr_db,avg_total_sd_steps,formula_sums_M,formula_products_M,formula_divisions_M,formula_lut_M,"
               "measured_sums_M,measured_products_M,measured_divisions_M,measured_lut_M\n";
  }

  for (double snr : cfg.snr_db_list) {
    const auto t0 = std::chrono::steady_clock::now();
    MetricRow row;
    row.snr_db = snr;
    row.bcrb_rad2 = sim.bcrb(snr);
    if (cfg.mode == Mode::bcrb) {
      row.ber = kNaN;
      row.mse_sum_phase_rad2 = kNaN;
    } else {
      const bool stop_on_errors = cfg.mode != Mode::mse;
      long bit_errors = 0, bits = 0;
      double mse = 0.0, iters = 0.0, steps = 0.0;
      OperationCounts ops;
      bool done = false;
      for (long first = 0; first < cfg.max_frames && !done;) {
        const int count = static_cast<int>(std::min<long>(cfg.workers, cfg.max_frames - first));
        const auto batch = run_batch(sim, first, count, snr, cfg.workers, trace.is_open());
        for (const auto& f : batch) {
          if (trace.is_open() && row.frames == 0) write_trace(trace, snr, f.sd_trace);
          bit_errors += f.bit_errors;
          bits += f.bits;
          mse += f.mse;
          iters += f.rx_iters;
          steps += f.sd_steps;
          ops += f.ops;
          ++row.frames;
          row.frame_errors += f.bit_errors > 0 ? 1 : 0;
          if (stop_on_errors && row.frame_errors >= cfg.max_frame_errors) {
            done = true;
            break;
          }
        }
        first += count;
      }
      const double nf = double(row.frames);
      row.ber = bits > 0 ? double(bit_errors) / double(bits) : kNaN;
      row.mse_sum_phase_rad2 = mse / nf;
      row.avg_rx_iters = iters / nf;
      row.avg_total_sd_steps = steps / nf;
      if (ops_out.is_open()) {
        const OperationCounts f = total_mega_ops(cfg.system, row.avg_total_sd_steps);
        const OperationCounts m = ops.scaled(1.0 / (nf * sim.context().layout.n_slots() * 1e6));
        ops_out << fmt(snr) << ',' << fmt(row.avg_total_sd_steps) << ',' << fmt(f.sums) << ',' << fmt(f.products)
                << ',' << fmt(f.divisions) << ',' << fmt(f.lut_accesses) << ',' << fmt(m.sums) << ','
                << fmt(m.products) << ',' << fmt(m.divisions) << ',' << fmt(m.lut_accesses) << '\n';
      }
    }
    if (cfg.timing) row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  if (!cfg.output_path.empty()) write_csv(cfg.output_path, cfg, rows);
  return rows;
}

OperationCounts total_mega_ops(const SystemConfig& sys, double avg_total_sd_steps) {
  return count_ops(sys).scaled(avg_total_sd_steps / 1e6);
}

// --------------------------------------------------------------------- CSV

std::string csv_header(const ExperimentConfig& cfg) {
  std::ostringstream s;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  s << "# pnmimo " << kVersion << " mode=" << mode_name(cfg.mode) << " seed=" << cfg.seed << " config_hash=" << hash
    << '\n'
    << "snr_db,ber,mse_sum_phase_rad2,bcrb_rad2,avg_rx_iters,avg_total_sd_steps,frames,frame_errors,wallclock_s\n";
  return s.str();
}

std::string csv_row(const MetricRow& r) {
  std::ostringstream s;
  s << fmt(r.snr_db) << ',' << fmt(r.ber) << ',' << fmt(r.mse_sum_phase_rad2) << ',' << fmt(r.bcrb_rad2) << ','
    << fmt(r.avg_rx_iters) << ',' << fmt(r.avg_total_sd_steps) << ',' << r.frames << ',' << r.frame_errors << ','
    << fmt(r.wallclock_s) << '\n';
  return s.str();
}

void write_csv(const std::string& path, const ExperimentConfig& cfg, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv_header(cfg);
  for (const auto& r : rows) out << csv_row(r);
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s) {
  if (s.empty()) return kNaN;
  if (s == "nan") return kNaN;
  return std::stod(s);
}

}  // namespace

std::vector<MetricRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<MetricRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto c = split(line);
    if (c.size() != 9) throw std::runtime_error("malformed row in " + path);
    MetricRow r;
    r.snr_db = to_double(c[0]);
    r.ber = to_double(c[1]);
    r.mse_sum_phase_rad2 = to_double(c[2]);
    r.bcrb_rad2 = to_double(c[3]);
    r.avg_rx_iters = to_double(c[4]);
    r.avg_total_sd_steps = to_double(c[5]);
    r.frames = std::stol(c[6]);
    r.frame_errors = std::stol(c[7]);
    r.wallclock_s = to_double(c[8]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<ReferencePoint> read_reference(std::istream& in) {
  std::vector<ReferencePoint> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    auto c = split(line);
    c.resize(5);
    ReferencePoint p;
    p.label = c[0];
    p.snr_db = to_double(c[1]);
    p.ber = to_double(c[2]);
    p.avg_rx_iters = to_double(c[3]);
    p.avg_total_sd_steps = to_double(c[4]);
    out.push_back(p);
  }
  return out;
}

std::string summarize(const std::vector<MetricRow>& rows, const std::vector<ReferencePoint>* reference) {
  std::ostringstream s;
  s << std::setw(8) << "snr_db" << std::setw(13) << "ber" << std::setw(13) << "mse" << std::setw(13) << "bcrb"
    << std::setw(9) << "iters" << std::setw(10) << "sd_steps" << std::setw(9) << "frames" << std::setw(9) << "f_err"
    << '\n';
  for (const auto& r : rows) {
    s << std::setw(8) << fmt(r.snr_db) << std::setw(13) << std::setprecision(4) << r.ber << std::setw(13) << r.mse_sum_phase_rad2
      << std::setw(13) << r.bcrb_rad2 << std::setw(9) << std::setprecision(3) << r.avg_rx_iters << std::setw(10)
      << std::setprecision(5) << r.avg_total_sd_steps << std::setw(9) << r.frames << std::setw(9) << r.frame_errors
      << '\n';
  }
  if (reference && !reference->empty() && !rows.empty()) {
    s << "\nreference comparison (row nearest in SNR)\n";
    s << std::setw(10) << "label" << std::setw(9) << "ref_snr" << std::setw(9) << "row_snr" << std::setw(10)
      << "ref_iters" << std::setw(11) << "d_iters" << std::setw(11) << "ref_steps" << std::setw(11) << "d_steps" << std::setw(12) << "ber/ref" << '\n';
    for (const auto& p : *reference) {
      const auto it = std::min_element(rows.begin(), rows.end(), [&](const MetricRow& a, const MetricRow& b) {
        return std::abs(a.snr_db - p.snr_db) < std::abs(b.snr_db - p.snr_db);
      });
      auto delta = [](double a, double b) { return std::isnan(b) ? kNaN : a - b; };
      s << std::setw(10) << p.label << std::setw(9) << fmt(p.snr_db) << std::setw(9) << fmt(it->snr_db)
        << std::setw(10) << std::setprecision(4) << p.avg_rx_iters << std::setw(11)
        << delta(it->avg_rx_iters, p.avg_rx_iters) << std::setw(11) << p.avg_total_sd_steps << std::setw(11) << delta(it->avg_total_sd_steps, p.avg_total_sd_steps) << std::setw(12)
        << (std::isnan(p.ber) ? kNaN : it->ber / p.ber) << '\n';
    }
  }
  return s.str();
}

}  // namespace pnmimo
