#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qlink/qlink.hpp"

namespace fs = std::filesystem;
using namespace qlink;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonArgs {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<std::string> overrides;
  std::string cycles_json;
};

void add_common(CLI::App* app, CommonArgs& args, bool need_config) {
  auto* opt = app->add_option("-c,--config", args.config, "configuration file");
  if (need_config) opt->required()->check(CLI::ExistingFile);
  app->add_option("-s,--seed", args.seed,
                  "master seed (default: scenario.seed, " + std::to_string(kDefaultSeed) + ")");
  app->add_option("-t,--threads", args.threads, "worker threads; results do not depend on it");
  app->add_option("--override", args.overrides, "key=value, repeatable")->take_all();
}

SweepSpec load_spec(const CommonArgs& args) {
  RawConfig raw = args.config.empty() ? RawConfig{} : load_config_file(args.config);
  for (const std::string& o : args.overrides) apply_override(raw, o);
  SweepSpec spec = build_spec(raw);
  if (args.seed) spec.seed = *args.seed;
  if (args.threads) spec.threads = *args.threads;
  return spec;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> parse_eta_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : detail::split_list(text)) {
    double v = detail::parse_double(item);
    if (!(v > 0.0)) throw std::invalid_argument("eta values must be > 0, got " + item);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty eta list");
  return out;
}

int run_analytic(const std::string& eta_text, int points, const std::string& out_dir) {
  std::vector<double> etas;
  try {
    etas = parse_eta_list(eta_text);
  } catch (const std::invalid_argument& e) {
    std::cerr << "analytic: --eta: " << e.what() << '\n';
    return kExitConfig;
  }
  fs::create_directories(out_dir);

  std::ostringstream curves;
  curves << "eta,p_succ,fidelity\n";
  for (double eta : etas) {
    for (const auto& p : f_succ_curve(eta, points)) {
      curves << fmt(p.eta) << ',' << fmt(p.p_succ) << ',' << fmt(p.fidelity) << '\n';
    }
  }

  std::ostringstream fmax;
  fmax << "eta,fidelity\n";
  std::vector<double> grid = etas;
  for (int i = -20; i <= 20; ++i) grid.push_back(std::pow(10.0, i / 10.0));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (double eta : grid) fmax << fmt(eta) << ',' << fmt(f_det_max(eta)) << '\n';

  const double threshold = threshold_eta();
  std::ostringstream thr;
  thr << "eta,fidelity\n" << fmt(threshold) << ',' << fmt(f_det_max(threshold)) << '\n';

  std::ostringstream rates;
  rates << "alpha,fidelity,rate_hz,two_photon_rate_hz,rate_advantage\n";
  std::vector<double> alphas;
  for (int i = 1; i <= 30; ++i) alphas.push_back(0.01 * i);
  AttemptParams attempt;
  for (const auto& p : heralded_fidelity_curve(alphas, NoiseModel::calibrated(0.05), attempt)) {
    rates << fmt(p.alpha) << ',' << fmt(p.fidelity) << ',' << fmt(p.rate_hz) << ','
          << fmt(two_photon_rate(attempt)) << ',' << fmt(rate_advantage(p.alpha, attempt.p_det)) << '\n';
  }

  atomic_write(fs::path(out_dir) / "f_succ.csv", curves.str());
  atomic_write(fs::path(out_dir) / "f_det_max.csv", fmax.str());
  atomic_write(fs::path(out_dir) / "threshold.csv", thr.str());
  atomic_write(fs::path(out_dir) / "rates.csv", rates.str());
  std::printf("analytic: %zu curves, threshold eta %.4f, wrote %s\n", etas.size(), threshold,
              out_dir.c_str());
  return 0;
}

int run_phase(const CommonArgs& args, double duration, double dt, bool no_stabilize) {
  SweepSpec spec = load_spec(args);
  Rng rng = make_stream(spec.seed, 0, 0);
  auto t0 = std::chrono::steady_clock::now();
  auto samples = phase_trajectory(spec.phase, spec.setup.stabilizer, duration, dt, !no_stabilize, rng);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& s : samples) {
    sum += s.theta_rad;
    sum2 += s.theta_rad * s.theta_rad;
  }
  const double n = static_cast<double>(samples.size());
  const double sd = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)));
  const std::string out = args.output.empty() ? "phase.csv" : args.output;
  atomic_write(out, phase_trajectory_csv(samples));
  std::printf("phase: %zu samples, residual std %.2f deg, %.2f s wall, wrote %s\n", samples.size(),
              rad_to_deg(sd), seconds_since(t0), out.c_str());
  return 0;
}

int run_scenario(const CommonArgs& args, bool first_point_only) {
  SweepSpec spec = load_spec(args);
  if (first_point_only) {
    GridPoint p = grid_points(spec).front();
    spec.alphas = {p.alpha};
    spec.delivery_rates_hz = {p.delivery_rate_hz > 0.0 ? p.delivery_rate_hz : 9.9};
    spec.storage_times = {p.storage_s};
    spec.phis = {p.phi};
  }
  auto t0 = std::chrono::steady_clock::now();
  std::ostringstream records;
  CycleSink sink;
  long long index = 0;
  if (!args.cycles_json.empty()) {
    sink = [&](std::size_t, long long, const CycleRecord& r) {
      records << cycle_record_json(index++, r) << '\n';
    };
  }
  RunStats stats = run_sweep(spec, sink);
  const std::string out = args.output.empty() ? std::string(to_string(spec.scenario)) + ".csv" : args.output;
  atomic_write(out, run_stats_csv(stats));
  if (!args.cycles_json.empty()) atomic_write(args.cycles_json, records.str());
  std::printf("%s: %zu points, %lld cycles, %.2f s wall, wrote %s\n",
              first_point_only ? "simulate" : "sweep", stats.points.size(),
              static_cast<long long>(stats.points.size()) * spec.cycles_per_point, seconds_since(t0),
              out.c_str());
  return 0;
}

int run_validate(const CommonArgs& args, bool print_defaults) {
  if (print_defaults) {
    std::cout << default_config_text();
    return 0;
  }
  if (args.config.empty()) {
    std::cerr << "validate-config: --config is required\n";
    return kExitConfig;
  }
  SweepSpec spec = load_spec(args);
  std::printf("ok: %s (%s, %zu points, %lld cycles per point)\n", args.config.c_str(),
              to_string(spec.scenario), grid_points(spec).size(), spec.cycles_per_point);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heralded entanglement link simulator"};
  app.require_subcommand(1);

  std::string eta_text = "0.1,1,10";
  int curve_points = 99;
  std::string analytic_dir = "analytic";
  auto* analytic = app.add_subcommand("analytic", "closed-form curves, threshold and rate tables");
  analytic->add_option("--eta", eta_text, "comma-separated link efficiencies");
  analytic->add_option("--points", curve_points, "points per curve")->check(CLI::Range(1, 1000000));
  analytic->add_option("-o,--output", analytic_dir, "output directory");

  CommonArgs phase_args;
  double duration = 60.0;
  double dt = 1e-3;
  bool no_stabilize = false;
  auto* phase = app.add_subcommand("phase", "phase trajectory under stabilization");
  add_common(phase, phase_args, false);
  phase->add_option("--duration", duration, "seconds")->check(CLI::NonNegativeNumber);
  phase->add_option("--dt", dt, "sample spacing in seconds")->check(CLI::PositiveNumber);
  phase->add_flag("--no-stabilize", no_stabilize, "free-running drift");
  phase->add_option("-o,--output", phase_args.output, "trajectory CSV (default phase.csv)");

  CommonArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "first grid point of the configured scenario");
  add_common(simulate, sim_args, false);
  simulate->add_option("-o,--output", sim_args.output, "point CSV");
  simulate->add_option("--cycles-json", sim_args.cycles_json, "per-cycle NDJSON stream");

  CommonArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "full parameter sweep");
  add_common(sweep, sweep_args, true);
  sweep->add_option("-o,--output", sweep_args.output, "point CSV");
  sweep->add_option("--cycles-json", sweep_args.cycles_json, "per-cycle NDJSON stream");

  CommonArgs val_args;
  bool print_defaults = false;
  auto* validate = app.add_subcommand("validate-config", "parse and check a configuration");
  add_common(validate, val_args, false);
  validate->add_flag("--defaults", print_defaults, "print every key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*analytic) return run_analytic(eta_text, curve_points, analytic_dir);
    if (*phase) return run_phase(phase_args, duration, dt, no_stabilize);
    if (*simulate) return run_scenario(sim_args, true);
    if (*sweep) return run_scenario(sweep_args, false);
    if (*validate) return run_validate(val_args, print_defaults);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
