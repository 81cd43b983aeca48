#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/phase_control.hpp"
#include "qlink/quantum_state.hpp"
#include "qlink/rng.hpp"

namespace qlink {

/// Per-node pass probability such that both nodes pass a check round with
/// probability 0.8; three failed rounds at the start of a cycle then happen in
/// 0.2^3 = 0.8% of cycles.
inline constexpr double kCalibratedCheckPass = 0.894427190999916;
inline constexpr double kCalibratedCheckDuration = 160e-6;

struct NodeConfig {
  double alpha = 0.2;
  double tau_coh = 0.290;  // s, single-node coherence under decoupling
  double cr_pass_prob = kCalibratedCheckPass;
  double cr_check_duration = kCalibratedCheckDuration;  // s
  double init_duration = 0.0;  // s of spin reset added to every attempt

  void validate(const std::string& name) const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument(name + ".alpha must be in [0, 1]");
    if (!(tau_coh > 0.0)) throw std::invalid_argument(name + ".tau_coh must be > 0");
    if (!(cr_pass_prob > 0.0 && cr_pass_prob <= 1.0))
      throw std::invalid_argument(name + ".cr_pass_prob must be in (0, 1]");
    if (!(cr_check_duration >= 0.0)) throw std::invalid_argument(name + ".cr_check_duration must be >= 0");
    if (!(init_duration >= 0.0)) throw std::invalid_argument(name + ".init_duration must be >= 0");
  }
};

struct StationConfig {
  double p_det = 4.0e-4;
  double p_dark = NoiseModel::kCalibratedDarkCount;
  double visibility = 0.90;
  double p_dbl = 0.13;
  bool exact_weight = false;

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string("station.") + name + " must be in [0, 1]");
      }
    };
    unit(p_det, "p_det");
    unit(p_dark, "p_dark");
    unit(visibility, "visibility");
    unit(p_dbl, "p_double_excitation");
  }
};

enum class StorageChannel { Dephasing, Depolarizing, None };
enum class FailedState { NoDetection, Override };

struct CycleConfig {
  double delivery_interval = 1.0 / 9.9;  // s
  int batch_size = 250;
  double t_attempt = 5.5e-6;  // s
  bool stabilize_at_start = true;
  double stabilize_interval = 0.0;  // s; > 0 interleaves stabilization between batches
  int max_cr_retries = 3;           // 0: retry without limit
  double readout_duration = 0.0;    // s
  bool stop_at_herald = false;      // end the cycle at the herald instead of storing
  StorageChannel storage = StorageChannel::Dephasing;
  FailedState failed_state = FailedState::NoDetection;
  double f_unent_override = 0.04;

  void validate() const {
    if (!(t_attempt > 0.0)) throw std::invalid_argument("cycle.attempt_duration must be > 0");
    if (!(delivery_interval > t_attempt))
      throw std::invalid_argument("cycle.delivery_interval must exceed the attempt duration");
    if (batch_size < 1) throw std::invalid_argument("cycle.batch_size must be >= 1");
    if (!(stabilize_interval >= 0.0)) throw std::invalid_argument("cycle.stabilize_interval must be >= 0");
    if (max_cr_retries < 0) throw std::invalid_argument("cycle.max_cr_retries must be >= 0");
    if (!(readout_duration >= 0.0) || !(readout_duration < delivery_interval))
      throw std::invalid_argument("cycle.readout_duration must be in [0, delivery_interval)");
    if (!(f_unent_override >= 0.0 && f_unent_override <= 0.5))
      throw std::invalid_argument("cycle.f_unent_override must be in [0, 1/2]");
  }
};

/// Everything one cycle needs besides the phase process and the RNG.
struct LinkSetup {
  NodeConfig node_a{};
  NodeConfig node_b{.tau_coh = 0.680};
  StationConfig station{};
  CycleConfig cycle{};
  StabilizerConfig stabilizer{};

  void validate() const {
    node_a.validate("node.a");
    node_b.validate("node.b");
    station.validate();
    cycle.validate();
    stabilizer.validate();
    if (node_a.alpha != node_b.alpha) {
      throw std::invalid_argument("node.a.alpha and node.b.alpha must be equal");
    }
  }

  void set_alpha(double alpha) {
    node_a.alpha = alpha;
    node_b.alpha = alpha;
  }

  // Photon-conditioned state model; the optical phase enters per herald.
  NoiseModel noise() const {
    NoiseModel n;
    n.alpha = node_a.alpha;
    n.p_det = station.p_det;
    n.p_dark = station.p_dark;
    n.visibility = station.visibility;
    n.p_dbl = station.p_dbl;
    n.sigma_theta = 0.0;
    n.exact_weight = station.exact_weight;
    return n;
  }
};

enum class Outcome { Heralded, NoHerald, Offline };
enum class HeraldCause { Photon, DarkCount };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Heralded:
      return "heralded";
    case Outcome::NoHerald:
      return "no_herald";
    case Outcome::Offline:
      return "offline";
  }
  return "?";
}

inline const char* to_string(HeraldCause c) {
  return c == HeraldCause::Photon ? "photon" : "dark_count";
}

struct HeraldEvent {
  int detector = 0;
  HeraldCause cause = HeraldCause::Photon;
};

/// Exact per-attempt outcome probabilities from the 64-leaf tree of
/// {dark, lost, to detector 0, to detector 1} per node times dark counts per
/// detector. Two-click events are failures.
struct AttemptProbabilities {
  double photon[2] = {0.0, 0.0};
  double dark[2] = {0.0, 0.0};
  double double_click = 0.0;
  double none = 0.0;

  double herald() const { return photon[0] + photon[1] + dark[0] + dark[1]; }
};

inline AttemptProbabilities enumerate_attempt_outcomes(const NodeConfig& a, const NodeConfig& b,
                                                       const StationConfig& station) {
  auto branches = [&](double alpha) {
    const double p = station.p_det;
    // dark, bright-lost, to detector 0, to detector 1
    return std::array<double, 4>{1.0 - alpha, alpha * (1.0 - p), 0.5 * alpha * p, 0.5 * alpha * p};
  };
  const auto ba = branches(a.alpha);
  const auto bb = branches(b.alpha);
  const double pd = station.p_dark;
  AttemptProbabilities out;
  for (int ia = 0; ia < 4; ++ia) {
    for (int ib = 0; ib < 4; ++ib) {
      int photons[2] = {(ia == 2) + (ib == 2), (ia == 3) + (ib == 3)};
      for (int d0 = 0; d0 < 2; ++d0) {
        for (int d1 = 0; d1 < 2; ++d1) {
          double w = ba[ia] * bb[ib] * (d0 ? pd : 1.0 - pd) * (d1 ? pd : 1.0 - pd);
          bool click0 = photons[0] > 0 || d0;
          bool click1 = photons[1] > 0 || d1;
          if (click0 && click1) {
            out.double_click += w;
          } else if (!click0 && !click1) {
            out.none += w;
          } else {
            int det = click0 ? 0 : 1;
            if (photons[det] > 0) {
              out.photon[det] += w;
            } else {
              out.dark[det] += w;
            }
          }
        }
      }
    }
  }
  return out;
}

/// One entanglement attempt sampled branch by branch.
inline std::optional<HeraldEvent> run_attempt(const NodeConfig& a, const NodeConfig& b,
                                               const StationConfig& station, Rng& rng) {
  int photons[2] = {0, 0};
  for (const NodeConfig* node : {&a, &b}) {
    if (bernoulli(rng, node->alpha) && bernoulli(rng, station.p_det)) {
      ++photons[bernoulli(rng, 0.5) ? 1 : 0];
    }
  }
  bool dark0 = bernoulli(rng, station.p_dark);
  bool dark1 = bernoulli(rng, station.p_dark);
  bool click0 = photons[0] > 0 || dark0;
  bool click1 = photons[1] > 0 || dark1;
  if (click0 == click1) {
    return std::nullopt;
  }
  int det = click0 ? 0 : 1;
  return HeraldEvent{det, photons[det] > 0 ? HeraldCause::Photon : HeraldCause::DarkCount};
}

/// Nanosecond bookkeeping of where a cycle's time went. The entries always
/// sum to the time the cycle consumed.
struct TimingLedger {
  std::int64_t stabilization_ns = 0;
  std::int64_t state_check_ns = 0;
  std::int64_t attempts_ns = 0;
  std::int64_t storage_ns = 0;
  std::int64_t readout_ns = 0;
  std::int64_t idle_ns = 0;

  std::int64_t total_ns() const {
    return stabilization_ns + state_check_ns + attempts_ns + storage_ns + readout_ns + idle_ns;
  }
};

struct CycleOutcome {
  Outcome outcome = Outcome::NoHerald;
  std::optional<double> herald_time;  // s from cycle start
  int detector = -1;
  std::optional<HeraldCause> cause;
  long long attempts = 0;
  int stabilizations = 0;
  int failed_stabilizations = 0;
  double phase_at_herald = 0.0;
  DensityMatrix delivered_state;
  BellKind target{};
  TimingLedger timings;

  double fidelity() const { return qlink::fidelity(delivered_state, target); }
  double duration() const { return static_cast<double>(timings.total_ns()) * 1e-9; }
};

inline std::int64_t to_ns(double seconds) { return std::llround(seconds * 1e9); }

/// One delivery cycle: optional stabilization, then {state checks until both
/// nodes pass, up to batch_size attempts} until a herald or the deadline.
/// A heralded state is stored until the deadline (or returned immediately in
/// stop_at_herald mode). A cycle whose very first check sequence exhausts
/// max_cr_retries never attempts and is Offline.
inline CycleOutcome run_cycle(const LinkSetup& setup, PhaseProcess& phase, Rng& rng) {
  setup.validate();
  const CycleConfig& c = setup.cycle;
  const std::int64_t deadline = to_ns(c.delivery_interval);
  const std::int64_t readout = to_ns(c.readout_duration);
  const std::int64_t attempt_end = deadline - readout;
  const std::int64_t t_att = to_ns(c.t_attempt + std::max(setup.node_a.init_duration,
                                                            setup.node_b.init_duration));
  const std::int64_t check_ns =
      to_ns(std::max(setup.node_a.cr_check_duration, setup.node_b.cr_check_duration));
  const std::int64_t stab_ns = to_ns(setup.stabilizer.duration);
  const std::int64_t stab_interval = to_ns(c.stabilize_interval);
  if (t_att <= 0) {
    throw std::invalid_argument("attempt duration rounds to zero nanoseconds");
  }

  const AttemptProbabilities probs =
      enumerate_attempt_outcomes(setup.node_a, setup.node_b, setup.station);
  const double p_herald = probs.herald();
  const NoiseModel noise = setup.noise();
  const double t0 = phase.time;

  CycleOutcome out;
  TimingLedger& ledger = out.timings;
  std::int64_t clock = 0;

  auto advance_phase = [&](std::int64_t t) {
    double dt = t0 + static_cast<double>(t) * 1e-9 - phase.time;
    phase = evolve_phase(phase, std::max(0.0, dt), rng);
  };
  auto run_stabilization = [&] {
    std::int64_t spend = std::min(stab_ns, attempt_end - clock);
    if (spend <= 0) {
      return;
    }
    advance_phase(clock);
    StabilizeResult r = stabilize(phase, setup.stabilizer, rng);
    phase = r.process;
    ++out.stabilizations;
    if (!r.succeeded) {
      ++out.failed_stabilizations;
    }
    clock += spend;
    ledger.stabilization_ns += spend;
  };

  std::int64_t next_stab = stab_interval > 0
                               ? std::max<std::int64_t>(0, stab_interval - to_ns(phase.since_stabilization))
                               : 0;
  if (c.stabilize_at_start) {
    next_stab = stab_interval;
    run_stabilization();
  }

  bool attempted = false;
  bool heralded = false;
  bool offline = false;
  int first_sequence_failures = 0;
  HeraldEvent event;

  while (true) {
    if (stab_interval > 0 && clock >= next_stab) {
      next_stab = clock + stab_interval;
      run_stabilization();
    }

    bool passed = false;
    while (clock + check_ns <= attempt_end) {
      clock += check_ns;
      ledger.state_check_ns += check_ns;
      bool pass_a = bernoulli(rng, setup.node_a.cr_pass_prob);
      bool pass_b = bernoulli(rng, setup.node_b.cr_pass_prob);
      if (pass_a && pass_b) {
        passed = true;
        break;
      }
      if (!attempted && c.max_cr_retries > 0 && ++first_sequence_failures >= c.max_cr_retries) {
        break;
      }
    }
    if (!passed) {
      offline = !attempted;
      break;
    }

    const std::int64_t room = (attempt_end - clock) / t_att;
    const std::int64_t n = std::min<std::int64_t>(c.batch_size, room);
    if (n <= 0) {
      break;
    }
    attempted = true;

    std::int64_t failures = n;
    if (p_herald >= 1.0) {
      failures = 0;
    } else if (p_herald > 0.0) {
      failures = std::geometric_distribution<std::int64_t>(p_herald)(rng);
    }
    if (failures < n) {
      clock += (failures + 1) * t_att;
      ledger.attempts_ns += (failures + 1) * t_att;
      out.attempts += failures + 1;
      double u = uniform01(rng) * p_herald;
      const double cum[4] = {probs.photon[0], probs.photon[0] + probs.photon[1],
                             probs.photon[0] + probs.photon[1] + probs.dark[0], p_herald};
      int slot = 0;
      while (slot < 3 && u >= cum[slot]) {
        ++slot;
      }
      event.detector = slot % 2;
      event.cause = slot < 2 ? HeraldCause::Photon : HeraldCause::DarkCount;
      heralded = true;
      break;
    }
    clock += n * t_att;
    ledger.attempts_ns += n * t_att;
    out.attempts += n;
  }

  if (heralded) {
    out.outcome = Outcome::Heralded;
    out.herald_time = static_cast<double>(clock) * 1e-9;
    out.detector = event.detector;
    out.cause = event.cause;
    out.target = BellKind::for_detector(event.detector);
    advance_phase(clock);
    out.phase_at_herald = phase.theta();
    DensityMatrix rho = event.cause == HeraldCause::Photon
                            ? photon_heralded_state(noise, event.detector, out.phase_at_herald)
                            : no_detection_state(noise.alpha, noise.p_det);
    if (!c.stop_at_herald) {
      const std::int64_t stored = attempt_end - clock;
      const double t = static_cast<double>(stored) * 1e-9;
      const double ta = setup.node_a.tau_coh;
      const double tb = setup.node_b.tau_coh;
      switch (c.storage) {
        case StorageChannel::Dephasing:
          rho = apply_storage_decay(rho, t, ta, tb);
          break;
        case StorageChannel::Depolarizing:
          rho = apply_depolarizing(rho, t, 1.0 / (1.0 / ta + 1.0 / tb));
          break;
        case StorageChannel::None:
          break;
      }
      ledger.storage_ns += stored;
      clock = attempt_end;
    }
    out.delivered_state = rho;
  } else {
    out.outcome = offline ? Outcome::Offline : Outcome::NoHerald;
    out.target = BellKind{};
    if (offline) {
      out.delivered_state = DensityMatrix::fully_mixed();
    } else if (c.failed_state == FailedState::Override) {
      out.delivered_state = fallback_state(c.f_unent_override, noise.alpha);
    } else {
      out.delivered_state = no_detection_state(noise.alpha, noise.p_det);
    }
    ledger.idle_ns += attempt_end - clock;
    clock = attempt_end;
  }
  ledger.readout_ns += readout;
  clock += readout;
  advance_phase(clock);
  return out;
}

inline CycleOutcome run_cycle(const NodeConfig& node_a, const NodeConfig& node_b,
                              const StationConfig& station, const CycleConfig& cycle,
                              const StabilizerConfig& stabilizer, PhaseProcess& phase, Rng& rng) {
  LinkSetup setup{node_a, node_b, station, cycle, stabilizer};
  return run_cycle(setup, phase, rng);
}

struct HeraldTimeHistogram {
  std::vector<double> samples;  // herald times in s, in cycle order
  std::vector<double> edges;
  std::vector<long long> counts;
  long long misses = 0;  // runs that hit the cycle cap without a herald

  double mean() const {
    double s = 0.0;
    for (double t : samples) s += t;
    return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
  }
};

/// Herald times of `n_samples` independent runs that stop at the first herald.
inline HeraldTimeHistogram herald_time_distribution(LinkSetup setup, const PhaseProcess& phase,
                                                    long long n_samples, int bins, Rng& rng) {
  if (n_samples < 1 || bins < 1) {
    throw std::invalid_argument("herald_time_distribution: need n_samples >= 1 and bins >= 1");
  }
  setup.cycle.stop_at_herald = true;
  HeraldTimeHistogram h;
  for (long long i = 0; i < n_samples; ++i) {
    PhaseProcess p = phase;
    CycleOutcome o = run_cycle(setup, p, rng);
    if (o.herald_time) {
      h.samples.push_back(*o.herald_time);
    } else {
      ++h.misses;
    }
  }
  double hi = 0.0;
  for (double t : h.samples) hi = std::max(hi, t);
  if (hi <= 0.0) hi = setup.cycle.delivery_interval;
  for (int i = 0; i <= bins; ++i) {
    h.edges.push_back(hi * i / bins);
  }
  h.counts.assign(bins, 0);
  for (double t : h.samples) {
    int k = std::min(bins - 1, static_cast<int>(t / hi * bins));
    ++h.counts[k];
  }
  return h;
}

}  // namespace qlink
