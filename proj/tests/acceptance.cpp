// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "analytic_oracle.hpp"
#include "qlink/qlink.hpp"
#include "test_support.hpp"

using namespace qlink;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string config_path(const std::string& name) { return std::string(QLINK_SOURCE_DIR) + "/configs/" + name; }

SweepSpec load(const std::string& name, const std::vector<std::string>& overrides = {}) {
  RawConfig raw = load_config_file(config_path(name));
  for (const std::string& o : overrides) apply_override(raw, o);
  return build_spec(raw);
}

struct Result {
  bool pass;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

Result criterion_1() {
  auto t0 = Clock::now();
  double worst = 0.0;
  for (double eta : {0.25, 0.5, 0.83, 1.0, 2.0, 8.0, 50.0}) {
    worst = std::max(worst, std::abs(f_det_max(eta) - oracle::max_delivered_fidelity(eta)));
  }
  double dt = seconds_since(t0);
  return {worst <= 1e-6 && dt < 1.0, format("max |closed form - brute force| = %.2e, %.3f s", worst, dt)};
}

Result criterion_2() {
  double root = threshold_eta();
  double grid_root = NAN;
  for (long i = 1; i <= 20000; ++i) {
    double eta = i * 1e-4;
    if (f_det_max(eta) >= 0.5) {
      grid_root = eta;
      break;
    }
  }
  bool ok = root >= 0.82 && root <= 0.84 && std::abs(root - grid_root) <= 1e-4 &&
            std::abs(oracle::max_delivered_fidelity(root) - 0.5) < 1e-6;
  return {ok, format("bisection %.6f, grid scan %.4f", root, grid_root)};
}

Result criterion_3(double& tau_out) {
  SweepSpec spec = load("storage.cfg");
  auto t0 = Clock::now();
  RunStats st = run_sweep(spec);
  double dt = seconds_since(t0);
  long long trajectories = spec.cycles_per_point * static_cast<long long>(st.points.size());
  tau_out = st.decay ? st.decay->tau : NAN;
  bool ok = st.decay && st.decay->ok && tau_out >= 0.180 && tau_out <= 0.220 && trajectories >= 10000 && dt < 10.0;
  return {ok, format("tau = %.1f ms from %lld trajectories, %.2f s", 1e3 * tau_out, trajectories, dt)};
}

struct AlphaRun {
  RunStats stats;
  double seconds_per_point = 0.0;
};

Result criteria_4_5(AlphaRun& run, bool rates) {
  RunStats& st = run.stats;
  if (st.points.empty()) {
    SweepSpec spec = load("tradeoff.cfg", {"grid.alpha=0.05, 0.3"});
    auto t0 = Clock::now();
    st = run_sweep(spec);
    run.seconds_per_point = seconds_since(t0) / static_cast<double>(st.points.size());
  }
  const PointStats& lo = st.points[0];
  const PointStats& hi = st.points[1];
  if (rates) {
    bool ok = within(lo.herald_rate_hz, 6.0, 0.9) && within(hi.herald_rate_hz, 39.0, 5.85) &&
              rate_advantage(0.1, 4e-4) == 1000.0;
    return {ok, format("rate %.2f Hz at alpha 0.05, %.2f Hz at alpha 0.3, advantage %.17g", lo.herald_rate_hz,
                       hi.herald_rate_hz, rate_advantage(0.1, 4e-4))};
  }
  bool ok = within(lo.heralded_fidelity.value, 0.81, 0.04) && within(hi.heralded_fidelity.value, 0.60, 0.04) &&
            lo.heralded >= 100000 && hi.heralded >= 100000 && run.seconds_per_point < 60.0;
  return {ok, format("F = %.4f(%.0f) at alpha 0.05, %.4f(%.0f) at alpha 0.3, %lld/%lld heralds, %.1f s per point",
                     lo.heralded_fidelity.value, 1e4 * lo.heralded_fidelity.se, hi.heralded_fidelity.value,
                     1e4 * hi.heralded_fidelity.se, lo.heralded, hi.heralded, run.seconds_per_point)};
}

Result criterion_6(RunStats& st) {
  SweepSpec spec = load("delivery.cfg");
  auto t0 = Clock::now();
  st = run_sweep(spec);
  double dt = seconds_since(t0);
  const PointStats* p = nullptr;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    if (st.points[i].point.alpha == 0.2 && st.points[i].point.delivery_rate_hz == 9.9) idx = i, p = &st.points[i];
  }
  if (!p) return {false, "no alpha 0.2 / 9.9 Hz point in the delivery config"};
  double re = classical_fallback_reanalysis(st, 0.5).points[idx].fidelity.value;
  long long total = spec.cycles_per_point * static_cast<long long>(st.points.size());
  bool ok = within(p->fidelity.value, 0.56, 0.03) && within(re, 0.62, 0.03) && total >= 42000 && dt < 300.0;
  return {ok, format("delivered F = %.4f(%.0f), reanalysed %.4f, %lld cycles, %.1f s", p->fidelity.value,
                     1e4 * p->fidelity.se, re, total, dt)};
}

Result criterion_7(const RunStats& st) {
  long long off = 0, n = 0;
  for (const PointStats& p : st.points) {
    off += p.offline;
    n += p.cycles;
  }
  double f = static_cast<double>(off) / n;
  return {within(f, 0.008, 0.004) && n >= 42000, format("offline %.3f%% of %lld cycles", 100.0 * f, n)};
}

Result criterion_8() {
  StabilizerConfig s;
  PhaseProcess p = calibrated_phase_process(s);
  Rng rng = make_stream(kDefaultSeed, 8, 0);
  const int cycles = 20000;
  double sum2 = 0.0;
  for (int i = 0; i < cycles; ++i) {
    p = stabilize(p, s, rng).process;
    double u = uniform01(rng) * s.interval;
    p = evolve_phase(p, u, rng);
    sum2 += p.theta() * p.theta();
    p = evolve_phase(p, s.interval - u, rng);
  }
  double sd = rad_to_deg(std::sqrt(sum2 / cycles));

  std::normal_distribution<double> g(0.0, deg_to_rad(14.3));
  std::vector<double> c(1000000);
  for (double& x : c) x = std::cos(g(rng));
  auto m = test_util::mean_se(c);
  double cf = coherence_factor(deg_to_rad(14.3));
  bool ok = within(sd, 14.3, 1.0) && within(cf, 0.9693, 1e-4) && within(m.mean, cf, std::max(1e-4, 3.0 * m.se));
  return {ok, format("residual %.2f deg over %d cycles; coherence factor %.5f, Monte Carlo %.5f", sd, cycles, cf,
                     m.mean)};
}

Result criterion_9() {
  std::string detail;
  bool ok = true;

  Rng rng = make_stream(kDefaultSeed, 9, 0);
  int bad_invariants = 0;
  double worst_identity = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto rho = test_util::random_state(rng);
    double t = 2.0 * uniform01(rng);
    double ta = 0.01 + uniform01(rng), tb = 0.01 + uniform01(rng);
    NoiseModel n;
    n.alpha = uniform01(rng);
    n.p_det = uniform01(rng);
    n.p_dark = 1e-3 * uniform01(rng);
    n.visibility = uniform01(rng);
    n.p_dbl = uniform01(rng);
    n.sigma_theta = 2.0 * uniform01(rng);
    for (const DensityMatrix& d :
         {apply_storage_decay(rho, t, ta, tb), apply_depolarizing(rho, t, ta),
          apply_local_phases(rho, 6.0 * uniform01(rng), -3.0 * uniform01(rng)), apply_z_on_a(rho),
          heralded_state(n, i % 2), photon_heralded_state(n, i % 2, 6.0 * uniform01(rng) - 3.0),
          no_detection_state(n.alpha, n.p_det), fallback_state(0.5 * uniform01(rng), n.alpha)}) {
      bad_invariants += !d.invariants().ok();
    }
    double xx = correlator(rho, ReadoutBasis::x(), ReadoutBasis::x());
    double yy = correlator(rho, ReadoutBasis::y(), ReadoutBasis::y());
    double zz = correlator(rho, ReadoutBasis::z(), ReadoutBasis::z());
    for (auto v : {BellVariant::PsiPlus, BellVariant::PsiMinus}) {
      worst_identity = std::max(worst_identity, std::abs(fidelity_from_correlators(xx, yy, zz, v) - fidelity(rho, {v, 0.0})));
    }
  }
  ok = ok && bad_invariants == 0 && worst_identity <= 1e-12;
  detail += format("invariant violations %d, identity error %.1e", bad_invariants, worst_identity);

  NodeConfig node;
  node.alpha = 0.1;
  StationConfig station;
  const double p = enumerate_attempt_outcomes(node, node, station).herald();
  const long long trials = 10000000;
  long long hits = 0;
  Rng arng = make_stream(kDefaultSeed, 9, 1);
  for (long long i = 0; i < trials; ++i) hits += run_attempt(node, node, station, arng).has_value();
  const double z = (static_cast<double>(hits) / trials - p) / std::sqrt(p * (1 - p) / trials);
  ok = ok && std::abs(z) <= 3.0;
  detail += format("; herald MC z = %.2f", z);

  SweepSpec spec = load("delivery.cfg", {"scenario.cycles_per_point=60"});
  std::string ref;
  bool same = true;
  for (unsigned threads : {1u, 4u, 16u}) {
    spec.threads = threads;
    std::string out;
    RunStats st = run_sweep(spec, [&](std::size_t, long long c, const CycleRecord& r) { out += cycle_record_json(c, r); });
    out += run_stats_csv(st);
    if (ref.empty()) ref = out;
    same = same && out == ref;
  }
  ok = ok && same;
  detail += same ? "; identical at 1/4/16 threads" : "; output differs across thread counts";
  return {ok, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::function<Result()>& fn) {
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += !r.pass;
    std::printf("%s criterion %d: %s\n", r.pass ? "PASS" : "FAIL", id, r.detail.c_str());
    std::fflush(stdout);
  };

  double tau = NAN;
  AlphaRun alpha;
  RunStats delivery;
  report(1, criterion_1);
  report(2, criterion_2);
  report(3, [&] { return criterion_3(tau); });
  report(4, [&] { return criteria_4_5(alpha, true); });
  report(5, [&] { return criteria_4_5(alpha, false); });
  report(6, [&] { return criterion_6(delivery); });
  report(7, [&] { return criterion_7(delivery); });
  report(8, criterion_8);
  report(9, criterion_9);

  if (alpha.stats.points.size() == 2 && std::isfinite(tau)) {
    DecayFit fit;
    fit.tau = tau;
    fit.ok = true;
    EtaReport e = eta_report(alpha.stats.points[1], fit);
    std::printf("info: link efficiency at alpha 0.3 = %.2f (herald rate %.2f Hz x tau %.1f ms)\n", e.eta, e.r_ent,
                1e3 * tau);
  }
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
