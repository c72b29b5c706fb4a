#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pnmimo/sim_harness.hpp"

using namespace pnmimo;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "system": {"n_t": 4, "n_r": 8, "o_t": 2, "o_r": 2, "l": 40, "r": 12},
  "pn": {"model": "wiener", "rho": 0.05},
  "receiver": {"prior_rho": 0.05, "max_rx_iters": 3},
  "snr_db": [14, 20],
  "max_frames": 4,
  "bcrb": {"channel_draws": 3}
})";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pnmimo_test_sim_harness";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PNMIMO_SIMULATE_EXE) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

// ----------------------------------------------------------------- config

TEST_CASE("config: minimal document keeps the defaults") {
  const ExperimentConfig c = parse_config_text(R"({"system": {"n_t": 8, "n_r": 16, "o_t": 4, "o_r": 2}, "snr_db": [10]})");
  const ExperimentConfig d;
  CHECK(c.system.n_t == 8);
  CHECK(c.system.l == d.system.l);
  CHECK(c.mode == Mode::ber);
  CHECK(c.seed == d.seed);
  CHECK(c.receiver.max_rx_iters == 10);
  CHECK(c.receiver.sd.theta == 1e-6);
  CHECK(std::isinf(c.system.e_c));
  CHECK(c.max_frames == d.max_frames);
}

TEST_CASE("config: invalid values name their key") {
  CHECK(error_of(R"({"pn": {"rho": -0.1}})").find("pn.rho") != std::string::npos);
  CHECK(error_of(R"({"system": {"o_t": 3}})").find("system") != std::string::npos);
  CHECK(error_of(R"({"receiver": {"sd": {"theta": 0}}})").find("theta") != std::string::npos);
  CHECK(error_of(R"({"mode": "fast"})").find("mode") != std::string::npos);
  CHECK_FALSE(error_of("{not json").empty());
  CHECK(error_of("{}").find("snr_db") != std::string::npos);
}

TEST_CASE("config: unknown keys are reported with their path") {
  CHECK(error_of(R"({"receiver": {"sd": {"thetta": 1e-6}}})").find("receiver.sd.thetta") != std::string::npos);
  CHECK(error_of(R"({"bogus": 1})").find("bogus") != std::string::npos);
}

TEST_CASE("config: special values") {
  const ExperimentConfig c = parse_config_text(R"({"system": {"e_c": 10}, "pn": {"model": "mask"}, "snr_db": [3]})");
  CHECK(c.system.e_c == 10.0);
  CHECK(c.pn.model == PnModel::mask);
  CHECK(std::isinf(parse_config_text(R"({"system": {"e_c": null}, "snr_db": [3]})").system.e_c));
  CHECK(std::isinf(parse_config_text(R"({"system": {"e_c": "inf"}, "snr_db": [3]})").system.e_c));
  CHECK(error_of(R"({"snr_db": ["inf"]})").find("snr_db") != std::string::npos);
  CHECK(error_of(R"({"pn": {"rho": "inf"}, "snr_db": [3]})").find("pn.rho") != std::string::npos);
}

TEST_CASE("config: shipped files equal the presets and survive a round trip") {
  for (const std::string name : {"paper", "desk"}) {
    const ExperimentConfig file = parse_config(std::string(PNMIMO_CONFIG_DIR) + "/" + name + ".json");
    const ExperimentConfig pre = preset(name);
    CHECK(serialize_config(file) == serialize_config(pre));
    CHECK(config_hash(file) == config_hash(pre));
    const ExperimentConfig again = parse_config_text(serialize_config(file));
    CHECK(serialize_config(again) == serialize_config(file));
  }
  const ExperimentConfig p = preset("paper");
  CHECK(p.system.n_t == 32);
  CHECK(p.system.n_r == 64);
  CHECK(p.system.o_t == 16);
  CHECK(p.system.o_r == 4);
  CHECK(p.system.l == 1086);
  CHECK(p.system.r == 60);
  CHECK_THROWS_AS(preset("huge"), ConfigError);
  CHECK_THROWS_AS(parse_config("/nonexistent/x.json"), ConfigError);
}

TEST_CASE("config: hash ignores execution options only") {
  ExperimentConfig a = parse_config_text(kTiny);
  ExperimentConfig b = a;
  b.workers = 8;
  b.timing = true;
  b.output_path = "x.csv";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config: overlay keeps unspecified keys of the base") {
  const ExperimentConfig base = preset("desk");
  const ExperimentConfig c = apply_config_text(base, R"({"seed": 9, "system": {"l": 48}})");
  CHECK(c.seed == 9);
  CHECK(c.system.l == 48);
  CHECK(c.system.n_t == base.system.n_t);
  CHECK(c.pn.rho == base.pn.rho);
}

TEST_CASE("mode names") {
  for (Mode m : {Mode::ber, Mode::mse, Mode::bcrb, Mode::opcount}) CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("x"), ConfigError);
}

// ------------------------------------------------------------- experiments

TEST_CASE("run_frame is a pure function of (seed, frame, SNR)") {
  const Simulator sim(parse_config_text(kTiny));
  const FrameOutcome a = sim.run_frame(3, 14.0);
  const FrameOutcome b = sim.run_frame(3, 14.0);
  const FrameOutcome c = sim.run_frame(2, 14.0);
  CHECK(a.bit_errors == b.bit_errors);
  CHECK(a.mse == b.mse);
  CHECK(a.sd_steps == b.sd_steps);
  CHECK(a.bits == c.bits);
  CHECK(a.bits > 0);
  CHECK((a.mse != c.mse || a.sd_steps != c.sd_steps));
}

TEST_CASE("run_experiment: identical seeds give identical CSV files") {
  ExperimentConfig c = parse_config_text(kTiny);
  c.seed = 42;
  c.output_path = scratch("seed42_a.csv").string();
  run_experiment(c);
  c.output_path = scratch("seed42_b.csv").string();
  c.workers = 3;
  run_experiment(c);
  const std::string a = slurp(scratch("seed42_a.csv")), b = slurp(scratch("seed42_b.csv"));
  CHECK(!a.empty());
  CHECK(a == b);
  CHECK(a.find("seed=42") != std::string::npos);
}

TEST_CASE("run_experiment: rows, counts and CSV round trip") {
  ExperimentConfig c = parse_config_text(kTiny);
  c.output_path = scratch("rows.csv").string();
  const auto rows = run_experiment(c);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.frames == 4);
    CHECK(r.ber >= 0.0);
    CHECK(r.ber <= 1.0);
    CHECK(r.avg_rx_iters >= 1.0);
    CHECK(r.avg_rx_iters <= 3.0);
    CHECK(r.bcrb_rad2 > 0.0);
    CHECK(r.wallclock_s == 0.0);
  }
  CHECK(rows[1].bcrb_rad2 < rows[0].bcrb_rad2);
  const auto back = read_csv(c.output_path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(back[k].snr_db == rows[k].snr_db);
    CHECK(back[k].ber == doctest::Approx(rows[k].ber).epsilon(1e-9));
    CHECK(back[k].avg_total_sd_steps == doctest::Approx(rows[k].avg_total_sd_steps).epsilon(1e-9));
    CHECK(back[k].frames == rows[k].frames);
  }
}

TEST_CASE("run_experiment: frame-error target stops early") {
  ExperimentConfig c = parse_config_text(kTiny);
  c.snr_db_list = {0.0};
  c.max_frames = 20;
  c.max_frame_errors = 2;
  c.workers = 1;
  const auto rows = run_experiment(c);
  CHECK(rows[0].frame_errors >= 2);
  CHECK(rows[0].frames < 20);
}

TEST_CASE("bcrb mode: decreasing in SNR, other metrics absent") {
  ExperimentConfig c = parse_config_text(kTiny);
  c.mode = Mode::bcrb;
  c.snr_db_list = {0, 5, 10, 15, 20, 25};
  const auto rows = run_experiment(c);
  for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k].bcrb_rad2 < rows[k - 1].bcrb_rad2);
  CHECK(std::isnan(rows[0].ber));
  CHECK(std::isnan(rows[0].mse_sum_phase_rad2));
}

TEST_CASE("mse mode runs every iteration") {
  ExperimentConfig c = parse_config_text(kTiny);
  c.mode = Mode::mse;
  c.max_frames = 2;
  const auto rows = run_experiment(c);
  for (const auto& r : rows) {
    CHECK(r.avg_rx_iters == 3.0);
    CHECK(r.mse_sum_phase_rad2 > 0.0);
  }
}

// ---------------------------------------------------------------- summary

TEST_CASE("summarize: table and reference deltas") {
  MetricRow r;
  r.snr_db = 9.0;
  r.ber = 2e-4;
  r.avg_rx_iters = 5.0;
  r.avg_total_sd_steps = 240.0;
  r.frames = 10;
  const std::string one = summarize({r});
  CHECK(one.find("snr_db") != std::string::npos);
  CHECK(one.find("240") != std::string::npos);

  std::ifstream ref(std::string(PNMIMO_CONFIG_DIR) + "/paper_reference.csv");
  const auto pts = read_reference(ref);
  REQUIRE(pts.size() == 9);
  CHECK(pts[0].snr_db == doctest::Approx(9.18));
  CHECK(pts[0].avg_rx_iters == doctest::Approx(4.87));
  CHECK(pts[0].avg_total_sd_steps == doctest::Approx(246.52));
  const std::string cmp = summarize({r}, &pts);
  CHECK(cmp.find("4.87") != std::string::npos);
  CHECK(cmp.find("0.13") != std::string::npos);  // 5.00 - 4.87

  std::istringstream blanks("label,snr_db,ber,avg_rx_iters,avg_total_sd_steps\nx,10,,3,\n");
  const auto b = read_reference(blanks);
  REQUIRE(b.size() == 1);
  CHECK(std::isnan(b[0].ber));
  CHECK(std::isnan(b[0].avg_total_sd_steps));
  CHECK(b[0].avg_rx_iters == 3.0);
}

TEST_CASE("total_mega_ops scales the closed form by the step count") {
  const SystemConfig s;
  const OperationCounts m = total_mega_ops(s, 202.23);
  CHECK(m.sums == doctest::Approx(count_ops(s).sums * 202.23 / 1e6));
  CHECK(m.lut_accesses == doctest::Approx(1.029).epsilon(0.01));
}

// --------------------------------------------------------------------- CLI

TEST_CASE("cli: exit codes") {
  const fs::path cfg = scratch("tiny.json");
  spit(cfg, kTiny);
  const fs::path out = scratch("cli.csv");
  fs::remove(out);
  CHECK(run_cli("--config " + cfg.string() + " --frames 1 --snr 20 --seed 5 --out " + out.string()) == 0);
  CHECK(fs::exists(out));
  const auto rows = read_csv(out.string());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].snr_db == 20.0);
  CHECK(rows[0].frames == 1);
  CHECK(run_cli("--config " + cfg.string() + " --mode bcrb --snr 10,20") == 0);

  const fs::path bad = scratch("bad.json");
  spit(bad, R"({"pn": {"rho": -1}})");
  CHECK(run_cli("--config " + bad.string()) == 2);
  spit(bad, R"({"unknown_key": 1})");
  CHECK(run_cli("--config " + bad.string()) == 2);
  CHECK(run_cli("--config /nonexistent.json") == 2);
  CHECK(run_cli("--preset desk --snr abc") == 2);
  CHECK(run_cli("--preset desk --frames 0 --mode bcrb") == 2);
  CHECK(run_cli("--no-such-flag") == 2);
  CHECK(run_cli("--preset paper --print-config") == 0);
}
