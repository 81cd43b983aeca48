#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "qlink/link_analytics.hpp"
#include "qlink/phase_control.hpp"
#include "qlink/protocol_engine.hpp"
#include "qlink/quantum_state.hpp"
#include "qlink/rng.hpp"

namespace qlink {

inline constexpr std::uint64_t kDefaultSeed = 12345;
inline constexpr std::size_t kMaxBases = 8;

enum class Scenario { AlphaSweep, StorageSweep, DeliverySweep, PhiSweep };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::AlphaSweep:
      return "alpha";
    case Scenario::StorageSweep:
      return "storage";
    case Scenario::DeliverySweep:
      return "delivery";
    case Scenario::PhiSweep:
      return "phi";
  }
  return "?";
}

struct BasisPair {
  ReadoutBasis a;
  ReadoutBasis b;
  std::string label;
};

inline BasisPair basis_xx() { return {ReadoutBasis::x(), ReadoutBasis::x(), "xx"}; }
inline BasisPair basis_yy() { return {ReadoutBasis::y(), ReadoutBasis::y(), "yy"}; }
inline BasisPair basis_zz() { return {ReadoutBasis::z(), ReadoutBasis::z(), "zz"}; }

struct TomographySettings {
  std::vector<BasisPair> bases{basis_xx(), basis_yy(), basis_zz()};
  int shots = 1;  // per basis per cycle
  double readout_error_a = 0.0;
  double readout_error_b = 0.0;

  void validate() const {
    if (bases.empty() || bases.size() > kMaxBases) {
      throw std::invalid_argument("tomography.bases must list 1 to 8 bases");
    }
    if (shots < 1) throw std::invalid_argument("tomography.shots must be >= 1");
    if (!(readout_error_a >= 0.0 && readout_error_a <= 0.5) ||
        !(readout_error_b >= 0.0 && readout_error_b <= 0.5)) {
      throw std::invalid_argument("tomography readout errors must be in [0, 1/2]");
    }
  }

  int index_of(const std::string& label) const {
    for (std::size_t i = 0; i < bases.size(); ++i) {
      if (bases[i].label == label) return static_cast<int>(i);
    }
    return -1;
  }
};

enum class StorageInitial { Bell, Heralded };

struct SweepSpec {
  Scenario scenario = Scenario::DeliverySweep;
  LinkSetup setup{};
  PhaseProcess phase = calibrated_phase_process();
  std::vector<double> alphas{0.12, 0.2};
  std::vector<double> delivery_rates_hz{7.0, 8.0, 9.0, 9.9, 11.0, 12.0};
  std::vector<double> storage_times{0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4};
  std::vector<double> phis{};
  long long cycles_per_point = 1500;
  TomographySettings tomography{};
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 0;  // 0: hardware concurrency
  double alpha = 0.1;    // storage (heralded initial state) and phi scenarios
  double herald_cap = 10.0;  // s; bound on a stop-at-herald run
  StorageInitial storage_initial = StorageInitial::Bell;

  void validate() const {
    if (cycles_per_point < 1) throw std::invalid_argument("scenario.cycles_per_point must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("scenario.alpha must be in [0, 1]");
    if (!(herald_cap > 0.0)) throw std::invalid_argument("scenario.herald_cap_s must be > 0");
    tomography.validate();
    phase.validate();
    auto non_empty = [](const std::vector<double>& v, const char* name) {
      if (v.empty()) throw std::invalid_argument(std::string("grid.") + name + " must not be empty");
    };
    auto check_alpha = [](const std::vector<double>& v) {
      for (double a : v) {
        if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("grid.alpha values must be in [0, 1]");
      }
    };
    switch (scenario) {
      case Scenario::AlphaSweep:
        non_empty(alphas, "alpha");
        check_alpha(alphas);
        break;
      case Scenario::DeliverySweep:
        non_empty(alphas, "alpha");
        non_empty(delivery_rates_hz, "delivery_rate_hz");
        check_alpha(alphas);
        for (double r : delivery_rates_hz) {
          if (!(r > 0.0)) throw std::invalid_argument("grid.delivery_rate_hz values must be > 0");
        }
        break;
      case Scenario::StorageSweep:
        non_empty(storage_times, "storage_s");
        for (double t : storage_times) {
          if (!(t >= 0.0)) throw std::invalid_argument("grid.storage_s values must be >= 0");
        }
        break;
      case Scenario::PhiSweep:
        non_empty(phis, "phi_deg");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("phi sweep needs alpha in (0, 1)");
        break;
    }
  }
};

struct GridPoint {
  double alpha = 0.0;
  double delivery_rate_hz = 0.0;
  double storage_s = 0.0;
  double phi = 0.0;
};

inline std::vector<GridPoint> grid_points(const SweepSpec& spec) {
  std::vector<GridPoint> out;
  switch (spec.scenario) {
    case Scenario::AlphaSweep:
      for (double a : spec.alphas) out.push_back({.alpha = a});
      break;
    case Scenario::DeliverySweep:
      for (double a : spec.alphas)
        for (double r : spec.delivery_rates_hz) out.push_back({.alpha = a, .delivery_rate_hz = r});
      break;
    case Scenario::StorageSweep:
      for (double t : spec.storage_times) out.push_back({.alpha = spec.alpha, .storage_s = t});
      break;
    case Scenario::PhiSweep:
      for (double p : spec.phis) out.push_back({.alpha = spec.alpha, .phi = p});
      break;
  }
  return out;
}

/// Link setup for one grid point. Run-until-herald scenarios (alpha, phi) attempt
/// until a herald with stabilization interleaved every stabilizer interval;
/// delivery cycles stabilize once at the start and store until the deadline.
inline LinkSetup configure_point(const SweepSpec& spec, const GridPoint& point) {
  LinkSetup s = spec.setup;
  s.set_alpha(point.alpha);
  switch (spec.scenario) {
    case Scenario::AlphaSweep:
    case Scenario::PhiSweep:
    case Scenario::StorageSweep:
      s.cycle.stop_at_herald = true;
      s.cycle.stabilize_at_start = false;
      s.cycle.stabilize_interval = s.stabilizer.interval;
      s.cycle.max_cr_retries = 0;
      s.cycle.delivery_interval = spec.herald_cap;
      break;
    case Scenario::DeliverySweep:
      s.cycle.stop_at_herald = false;
      s.cycle.stabilize_at_start = true;
      s.cycle.stabilize_interval = 0.0;
      s.cycle.delivery_interval = 1.0 / point.delivery_rate_hz;
      break;
  }
  return s;
}

/// Compact per-cycle result kept for aggregation and the record stream.
struct CycleRecord {
  Outcome outcome = Outcome::NoHerald;
  double herald_time = std::numeric_limits<double>::quiet_NaN();
  int detector = -1;
  double fidelity = 0.0;  // exact fidelity of the delivered state with its target
  TimingLedger timings;
  std::array<std::int32_t, kMaxBases> sums{};  // sum of +-1 tomography outcomes per basis
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

/// Mean of n +-1 outcomes summing to `sum`. The standard error uses the
/// add-one smoothed probability so it stays positive when every shot agrees.
inline Estimate correlator_estimate(long long sum, long long n) {
  if (n <= 0) {
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  const double mean = static_cast<double>(sum) / static_cast<double>(n);
  const double plus = 0.5 * static_cast<double>(sum + n);
  const double p = (plus + 1.0) / (static_cast<double>(n) + 2.0);
  return {mean, 2.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

/// Fidelity with PsiPlus from measured correlators; errors add in quadrature.
inline Estimate fidelity_estimate(const Estimate& xx, const Estimate& yy, const Estimate& zz) {
  return {fidelity_from_correlators(xx.value, yy.value, zz.value, BellVariant::PsiPlus),
          0.25 * std::sqrt(xx.se * xx.se + yy.se * yy.se + zz.se * zz.se)};
}

struct PointStats {
  GridPoint point;
  long long cycles = 0;
  long long heralded = 0;
  long long no_herald = 0;
  long long offline = 0;
  double frac_heralded = 0.0;
  double frac_no_herald = 0.0;
  double frac_offline = 0.0;
  std::vector<Estimate> correlators;                 // all cycles, per basis
  std::array<std::vector<Estimate>, 2> by_detector;  // heralded cycles split by detector
  Estimate fidelity{};
  Estimate heralded_fidelity{};
  Estimate failed_fidelity{};
  double exact_fidelity = 0.0;
  double exact_heralded_fidelity = std::numeric_limits<double>::quiet_NaN();
  double mean_herald_time = std::numeric_limits<double>::quiet_NaN();
  double herald_rate_hz = 0.0;
  double throughput_hz = 0.0;
  double elapsed_s = 0.0;  // simulated time consumed
};

struct DecayFit {
  double tau = 0.0;
  double amplitude = 0.0;
  double floor = 0.0;
  double rms = 0.0;
  bool ok = false;
};

struct RunStats {
  Scenario scenario = Scenario::DeliverySweep;
  std::vector<std::string> basis_labels;
  std::vector<PointStats> points;
  std::optional<DecayFit> decay;
};

/// Weighted least squares for y = floor + a exp(-t / tau) with the floor
/// fixed; a is solved in closed form for each tau and tau by Brent search.
inline DecayFit fit_exponential_decay(const std::vector<double>& t, const std::vector<double>& y,
                                      const std::vector<double>& se, double floor) {
  if (t.size() != y.size() || t.size() != se.size() || t.size() < 2) {
    throw std::invalid_argument("fit_exponential_decay: need matching arrays of >= 2 points");
  }
  double t_max = *std::max_element(t.begin(), t.end());
  if (!(t_max > 0.0)) {
    throw std::invalid_argument("fit_exponential_decay: need a positive time");
  }
  std::vector<double> w(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    w[i] = se[i] > 0.0 ? 1.0 / (se[i] * se[i]) : 1.0;
  }
  auto amplitude_for = [&](double tau) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double e = std::exp(-t[i] / tau);
      num += w[i] * e * (y[i] - floor);
      den += w[i] * e * e;
    }
    return num / den;
  };
  auto cost = [&](double log_tau) {
    double tau = std::exp(log_tau);
    double a = amplitude_for(tau);
    double c = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      double r = y[i] - floor - a * std::exp(-t[i] / tau);
      c += w[i] * r * r;
    }
    return c;
  };
  auto best = boost::math::tools::brent_find_minima(cost, std::log(t_max * 1e-3), std::log(t_max * 1e3),
                                                    40);
  DecayFit fit;
  fit.tau = std::exp(best.first);
  fit.amplitude = amplitude_for(fit.tau);
  fit.floor = floor;
  double ss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double r = y[i] - floor - fit.amplitude * std::exp(-t[i] / fit.tau);
    ss += r * r;
  }
  fit.rms = std::sqrt(ss / static_cast<double>(t.size()));
  fit.ok = fit.amplitude > 0.0 && std::isfinite(fit.tau);
  return fit;
}

namespace detail {

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  constexpr std::size_t chunk = 64;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned k = 0; k < threads; ++k) {
    pool.emplace_back([&] {
      for (std::size_t start = next.fetch_add(chunk); start < n; start = next.fetch_add(chunk)) {
        std::size_t stop = std::min(n, start + chunk);
        for (std::size_t i = start; i < stop; ++i) body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

inline std::int32_t sample_shots(const DensityMatrix& rho, const BasisPair& basis,
                                 const TomographySettings& tomo, Rng& rng) {
  double e = correlator(rho, basis.a, basis.b) * (1.0 - 2.0 * tomo.readout_error_a) *
             (1.0 - 2.0 * tomo.readout_error_b);
  double p_plus = std::clamp(0.5 * (1.0 + e), 0.0, 1.0);
  if (tomo.shots == 1) {
    return bernoulli(rng, p_plus) ? 1 : -1;
  }
  auto k = std::binomial_distribution<std::int32_t>(tomo.shots, p_plus)(rng);
  return 2 * k - tomo.shots;
}

// Run-until-herald cycles start mid-way through a stabilization interval.
inline PhaseProcess warm_phase(const SweepSpec& spec, const LinkSetup& setup, Rng& rng) {
  PhaseProcess p = randomize_phase(spec.phase, rng);
  if (setup.cycle.stabilize_interval > 0.0) {
    p = stabilize(p, setup.stabilizer, rng).process;
    p = evolve_phase(p, uniform01(rng) * setup.cycle.stabilize_interval, rng);
  }
  return p;
}

inline CycleRecord simulate_engine_cycle(const SweepSpec& spec, const LinkSetup& setup,
                                         const std::vector<BasisPair>& bases, bool pauli_frame,
                                         Rng& rng) {
  PhaseProcess phase = warm_phase(spec, setup, rng);
  CycleOutcome o = run_cycle(setup, phase, rng);
  CycleRecord r;
  r.outcome = o.outcome;
  if (o.herald_time) r.herald_time = *o.herald_time;
  r.detector = o.detector;
  r.fidelity = o.fidelity();
  r.timings = o.timings;
  DensityMatrix measured = o.delivered_state;
  if (pauli_frame && o.target.variant == BellVariant::PsiMinus) {
    measured = apply_z_on_a(measured);
  }
  for (std::size_t k = 0; k < bases.size(); ++k) {
    r.sums[k] = sample_shots(measured, bases[k], spec.tomography, rng);
  }
  return r;
}

inline DensityMatrix storage_initial_state(const SweepSpec& spec) {
  if (spec.storage_initial == StorageInitial::Bell) {
    return bell_state(BellKind{});
  }
  NoiseModel n = NoiseModel::calibrated(spec.alpha);
  n.p_det = spec.setup.station.p_det;
  n.p_dark = spec.setup.station.p_dark;
  n.visibility = spec.setup.station.visibility;
  n.p_dbl = spec.setup.station.p_dbl;
  n.exact_weight = spec.setup.station.exact_weight;
  return heralded_state(n, 0);
}

// One stochastic storage trajectory: Gaussian local phases with variance
// 2t/tau per node (dephasing) or a jump to I/4 (depolarizing).
inline CycleRecord simulate_storage_trajectory(const SweepSpec& spec, const DensityMatrix& initial,
                                               double t, Rng& rng) {
  const double ta = spec.setup.node_a.tau_coh;
  const double tb = spec.setup.node_b.tau_coh;
  DensityMatrix rho = initial;
  switch (spec.setup.cycle.storage) {
    case StorageChannel::Dephasing:
      rho = apply_local_phases(rho, gaussian(rng, std::sqrt(2.0 * t / ta)),
                               gaussian(rng, std::sqrt(2.0 * t / tb)));
      break;
    case StorageChannel::Depolarizing:
      if (!bernoulli(rng, std::exp(-t * (1.0 / ta + 1.0 / tb)))) {
        rho = DensityMatrix::fully_mixed();
      }
      break;
    case StorageChannel::None:
      break;
  }
  CycleRecord r;
  r.outcome = Outcome::Heralded;
  r.detector = 0;
  r.fidelity = fidelity(rho, BellKind{});
  r.timings.storage_ns = to_ns(t);
  for (std::size_t k = 0; k < spec.tomography.bases.size(); ++k) {
    r.sums[k] = sample_shots(rho, spec.tomography.bases[k], spec.tomography, rng);
  }
  return r;
}

inline std::vector<BasisPair> point_bases(const SweepSpec& spec, const GridPoint& point) {
  if (spec.scenario != Scenario::PhiSweep) {
    return spec.tomography.bases;
  }
  ReadoutBasis swept = ReadoutBasis::rotated(point.phi);
  return {{swept, ReadoutBasis::x(), "phi_x"}, {swept, ReadoutBasis::y(), "phi_y"}};
}

inline PointStats aggregate(const GridPoint& point, const std::vector<BasisPair>& bases,
                            const CycleRecord* records, long long n, int tomo_shots) {
  PointStats s;
  s.point = point;
  s.cycles = n;
  const std::size_t nb = bases.size();
  std::vector<long long> all(nb, 0), her(nb, 0), fail(nb, 0);
  std::array<std::vector<long long>, 2> det{std::vector<long long>(nb, 0), std::vector<long long>(nb, 0)};
  std::array<long long, 2> det_n{0, 0};
  double fid_sum = 0.0, her_fid_sum = 0.0, herald_time_sum = 0.0;
  std::int64_t elapsed_ns = 0;
  for (long long i = 0; i < n; ++i) {
    const CycleRecord& r = records[i];
    fid_sum += r.fidelity;
    elapsed_ns += r.timings.total_ns();
    bool h = r.outcome == Outcome::Heralded;
    switch (r.outcome) {
      case Outcome::Heralded:
        ++s.heralded;
        her_fid_sum += r.fidelity;
        herald_time_sum += r.herald_time;
        break;
      case Outcome::NoHerald:
        ++s.no_herald;
        break;
      case Outcome::Offline:
        ++s.offline;
        break;
    }
    for (std::size_t k = 0; k < nb; ++k) {
      all[k] += r.sums[k];
      (h ? her : fail)[k] += r.sums[k];
      if (h && (r.detector == 0 || r.detector == 1)) det[r.detector][k] += r.sums[k];
    }
    if (h && (r.detector == 0 || r.detector == 1)) ++det_n[r.detector];
  }
  const double dn = static_cast<double>(n);
  s.frac_heralded = static_cast<double>(s.heralded) / dn;
  s.frac_no_herald = static_cast<double>(s.no_herald) / dn;
  s.frac_offline = 1.0 - s.frac_heralded - s.frac_no_herald;
  s.exact_fidelity = fid_sum / dn;
  if (s.heralded > 0) {
    s.exact_heralded_fidelity = her_fid_sum / static_cast<double>(s.heralded);
    s.mean_herald_time = herald_time_sum / static_cast<double>(s.heralded);
  }
  s.elapsed_s = static_cast<double>(elapsed_ns) * 1e-9;
  if (s.elapsed_s > 0.0) {
    s.herald_rate_hz = static_cast<double>(s.heralded) / s.elapsed_s;
    s.throughput_hz = dn / s.elapsed_s;
  }
  const long long shots = tomo_shots;
  for (std::size_t k = 0; k < nb; ++k) {
    s.correlators.push_back(correlator_estimate(all[k], n * shots));
    for (int d = 0; d < 2; ++d) {
      s.by_detector[d].push_back(correlator_estimate(det[d][k], det_n[d] * shots));
    }
  }
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t k = 0; k < nb; ++k) {
    if (bases[k].label == "xx") ix = static_cast<int>(k);
    if (bases[k].label == "yy") iy = static_cast<int>(k);
    if (bases[k].label == "zz") iz = static_cast<int>(k);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.fidelity = s.heralded_fidelity = s.failed_fidelity = {nan, nan};
  if (ix >= 0 && iy >= 0 && iz >= 0) {
    s.fidelity = fidelity_estimate(s.correlators[ix], s.correlators[iy], s.correlators[iz]);
    long long nh = s.heralded * shots;
    long long nf = (n - s.heralded) * shots;
    if (nh > 0) {
      s.heralded_fidelity = fidelity_estimate(correlator_estimate(her[ix], nh),
                                              correlator_estimate(her[iy], nh),
                                              correlator_estimate(her[iz], nh));
    }
    if (nf > 0) {
      s.failed_fidelity = fidelity_estimate(correlator_estimate(fail[ix], nf),
                                            correlator_estimate(fail[iy], nf),
                                            correlator_estimate(fail[iz], nf));
    }
  }
  return s;
}

}  // namespace detail

/// Receives every cycle in (point, cycle) order after a sweep finishes.
using CycleSink = std::function<void(std::size_t point, long long cycle, const CycleRecord&)>;

/// Runs every grid point of `spec`. Each (point, cycle) pair owns an RNG
/// stream derived from the master seed, so results do not depend on the
/// number of worker threads.
inline RunStats run_sweep(const SweepSpec& spec, const CycleSink& sink = nullptr) {
  spec.validate();
  const std::vector<GridPoint> points = grid_points(spec);
  std::vector<LinkSetup> setups;
  std::vector<std::vector<BasisPair>> bases;
  for (const GridPoint& p : points) {
    setups.push_back(configure_point(spec, p));
    setups.back().validate();
    bases.push_back(detail::point_bases(spec, p));
  }
  const DensityMatrix storage_initial = detail::storage_initial_state(spec);
  const auto per_point = static_cast<std::size_t>(spec.cycles_per_point);
  std::vector<CycleRecord> records(points.size() * per_point);

  detail::parallel_for(records.size(), spec.threads, [&](std::size_t idx) {
    const std::size_t ip = idx / per_point;
    const std::size_t ic = idx % per_point;
    Rng rng = make_stream(spec.seed, ip, ic);
    if (spec.scenario == Scenario::StorageSweep) {
      records[idx] = detail::simulate_storage_trajectory(spec, storage_initial, points[ip].storage_s, rng);
    } else {
      records[idx] = detail::simulate_engine_cycle(spec, setups[ip], bases[ip],
                                                   spec.scenario != Scenario::PhiSweep, rng);
    }
  });

  RunStats stats;
  stats.scenario = spec.scenario;
  for (const auto& b : bases.front()) stats.basis_labels.push_back(b.label);
  for (std::size_t ip = 0; ip < points.size(); ++ip) {
    stats.points.push_back(detail::aggregate(points[ip], bases[ip], records.data() + ip * per_point,
                                             spec.cycles_per_point, spec.tomography.shots));
  }
  if (sink) {
    for (std::size_t idx = 0; idx < records.size(); ++idx) {
      sink(idx / per_point, static_cast<long long>(idx % per_point), records[idx]);
    }
  }

  if (spec.scenario == Scenario::StorageSweep) {
    for (PointStats& p : stats.points) {
      p.herald_rate_hz = p.throughput_hz = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (spec.scenario == Scenario::StorageSweep && points.size() >= 2) {
    std::vector<double> t, y, se;
    for (const PointStats& p : stats.points) {
      if (!std::isfinite(p.fidelity.value)) break;
      t.push_back(p.point.storage_s);
      y.push_back(p.fidelity.value);
      se.push_back(p.fidelity.se);
    }
    if (t.size() == points.size()) {
      double floor = 0.25;
      if (spec.setup.cycle.storage == StorageChannel::Dephasing) {
        floor = 0.5 * (storage_initial.population(kUpDown) + storage_initial.population(kDownUp));
      }
      stats.decay = fit_exponential_decay(t, y, se, floor);
    }
  }
  return stats;
}

/// Replaces the contribution of every non-heralded cycle with a fallback
/// state of fidelity `f_unent`; heralded contributions are unchanged.
inline RunStats classical_fallback_reanalysis(const RunStats& stats, double f_unent) {
  if (!(f_unent >= 0.0 && f_unent <= 0.5)) {
    throw std::invalid_argument("classical_fallback_reanalysis: f_unent must be in [0, 1/2]");
  }
  RunStats out = stats;
  for (PointStats& p : out.points) {
    const double h = p.frac_heralded;
    if (p.heralded == 0) {
      p.fidelity = {f_unent, 0.0};
      p.exact_fidelity = f_unent;
    } else {
      p.fidelity = {h * p.heralded_fidelity.value + (1.0 - h) * f_unent, h * p.heralded_fidelity.se};
      p.exact_fidelity = h * p.exact_heralded_fidelity + (1.0 - h) * f_unent;
    }
    p.failed_fidelity = {f_unent, 0.0};
  }
  return out;
}

struct SinusoidFit {
  double amplitude = 0.0;
  double phase = 0.0;  // y = amplitude cos(phi - phase)
};

/// Linear least squares for y = c cos(phi) + s sin(phi).
inline SinusoidFit fit_sinusoid(const std::vector<double>& phi, const std::vector<double>& y) {
  double cc = 0, ss = 0, cs = 0, yc = 0, ys = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    double c = std::cos(phi[i]), s = std::sin(phi[i]);
    cc += c * c;
    ss += s * s;
    cs += c * s;
    yc += y[i] * c;
    ys += y[i] * s;
  }
  double det = cc * ss - cs * cs;
  if (std::abs(det) < 1e-12) {
    throw std::invalid_argument("fit_sinusoid: phase grid does not determine a sinusoid");
  }
  double a = (yc * ss - ys * cs) / det;
  double b = (ys * cc - yc * cs) / det;
  return {std::hypot(a, b), std::atan2(b, a)};
}

struct PhiRow {
  double phi = 0.0;
  std::array<Estimate, 2> phi_x{};  // <(cos phi X + sin phi Y) X> for detector 0, 1
  std::array<Estimate, 2> phi_y{};  // <(cos phi X + sin phi Y) Y>
};

struct PhiTable {
  std::vector<PhiRow> rows;
  std::array<SinusoidFit, 2> fit_x{};  // per detector
};

/// Readout-basis sweep at node A for both heralding detectors.
inline PhiTable phi_sweep(double alpha, const std::vector<double>& phi_grid, SweepSpec spec) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("phi_sweep: alpha must be in (0, 1)");
  }
  spec.scenario = Scenario::PhiSweep;
  spec.alpha = alpha;
  spec.phis = phi_grid;
  RunStats stats = run_sweep(spec);
  PhiTable table;
  std::array<std::vector<double>, 2> ys;
  for (const PointStats& p : stats.points) {
    PhiRow row;
    row.phi = p.point.phi;
    for (int d = 0; d < 2; ++d) {
      row.phi_x[d] = p.by_detector[d][0];
      row.phi_y[d] = p.by_detector[d][1];
      ys[d].push_back(row.phi_x[d].value);
    }
    table.rows.push_back(row);
  }
  for (int d = 0; d < 2; ++d) {
    table.fit_x[d] = fit_sinusoid(phi_grid, ys[d]);
  }
  return table;
}

struct EtaReport {
  double r_ent = 0.0;
  double r_dec = 0.0;
  double eta = 0.0;
  std::string warning;
};

inline EtaReport eta_report(double r_ent, double r_dec) {
  EtaReport r{r_ent, r_dec, 0.0, {}};
  if (!(r_dec > 0.0)) {
    r.warning = "decoherence rate unavailable";
    return r;
  }
  if (!(r_ent > 0.0)) {
    r.warning = "no heralds: link efficiency is degenerate";
    return r;
  }
  r.eta = link_efficiency(r_ent, r_dec);
  return r;
}

/// Entanglement rate from a herald-throughput point, decoherence rate from a
/// storage fit.
inline EtaReport eta_report(const PointStats& rate_point, const DecayFit& storage) {
  if (!storage.ok || !(storage.tau > 0.0)) {
    EtaReport r{rate_point.herald_rate_hz, 0.0, 0.0, "storage fit failed"};
    return r;
  }
  return eta_report(rate_point.herald_rate_hz, 1.0 / storage.tau);
}

}  // namespace qlink
