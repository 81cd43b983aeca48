#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "qlink/phase_control.hpp"
#include "test_support.hpp"

using namespace qlink;

namespace {

constexpr double kPi = std::numbers::pi;

// Residual std sampled at a uniformly random time inside each interval.
double residual_std(PhaseProcess p, const StabilizerConfig& s, int cycles, bool stabilize_on, Rng& rng) {
  double sum2 = 0.0;
  for (int i = 0; i < cycles; ++i) {
    if (stabilize_on) p = stabilize(p, s, rng).process;
    double u = uniform01(rng) * s.interval;
    p = evolve_phase(p, u, rng);
    double th = p.theta();
    sum2 += th * th;
    p = evolve_phase(p, s.interval - u, rng);
  }
  return std::sqrt(sum2 / cycles);
}

}  // namespace

TEST(WrapPhase, Range) {
  EXPECT_DOUBLE_EQ(wrap_phase(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_phase(-kPi), kPi);
  EXPECT_NEAR(wrap_phase(3.0 * kPi + 0.1), -kPi + 0.1, 1e-12);
  Rng rng = make_stream(5, 0);
  for (int i = 0; i < 10000; ++i) {
    double w = wrap_phase(200.0 * (uniform01(rng) - 0.5));
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
  }
}

TEST(CoherenceFactor, Values) {
  EXPECT_EQ(coherence_factor(0.0), 1.0);
  EXPECT_NEAR(deg_to_rad(14.3), 0.2496, 1e-4);
  EXPECT_NEAR(coherence_factor(deg_to_rad(14.3)), 0.9693, 1e-4);
  EXPECT_LT(coherence_factor(50.0), 1e-300);
  EXPECT_THROW(coherence_factor(-1.0), std::invalid_argument);
  double prev = 1.0;
  for (int i = 1; i < 100; ++i) {
    double c = coherence_factor(0.05 * i);
    EXPECT_LT(c, prev);
    prev = c;
  }
}

TEST(CoherenceFactor, MonteCarloAverageOfCosine) {
  Rng rng = make_stream(5, 1);
  std::normal_distribution<double> g(0.0, deg_to_rad(14.3));
  std::vector<double> c(1000000);
  for (double& x : c) x = std::cos(g(rng));
  auto m = test_util::mean_se(c);
  EXPECT_NEAR(m.mean, coherence_factor(deg_to_rad(14.3)), 3.0 * m.se);
}

TEST(EvolvePhase, ZeroStepIsIdentity) {
  PhaseProcess p = calibrated_phase_process();
  p.drift = 0.7;
  Rng rng = make_stream(5, 2);
  PhaseProcess q = evolve_phase(p, 0.0, rng);
  EXPECT_EQ(q.drift, p.drift);
  EXPECT_EQ(q.time, p.time);
  EXPECT_THROW(evolve_phase(p, -1.0, rng), std::invalid_argument);
}

TEST(EvolvePhase, NoiselessMeanDecay) {
  PhaseProcess p;
  p.diffusion = 0.0;
  p.osc_amp = 0.0;
  p.drift = 0.3;
  Rng rng = make_stream(5, 3);
  for (double dt : {0.01, 0.5, 3.0}) {
    EXPECT_NEAR(evolve_phase(p, dt, rng).theta(), 0.3 * std::exp(-dt / p.tau_corr), 1e-15);
  }
}

TEST(EvolvePhase, StationaryVarianceMatchesOu) {
  PhaseProcess p;
  p.osc_amp = 0.0;
  p.diffusion = 0.01;
  Rng rng = make_stream(5, 4);
  std::vector<double> x;
  for (int i = 0; i < 20000; ++i) {
    p = evolve_phase(p, 10.0, rng);  // 5 correlation times apart
    x.push_back(p.drift * p.drift);
  }
  auto m = test_util::mean_se(x);
  EXPECT_NEAR(m.mean, 0.5 * p.diffusion * p.tau_corr, 3.0 * m.se);
}

TEST(EstimatePhase, Examples) {
  EXPECT_NEAR(*estimate_phase(500, 500), kPi / 2, 1e-15);
  EXPECT_NEAR(*estimate_phase(1000, 0), 0.0, 1e-15);
  EXPECT_NEAR(*estimate_phase(0, 1000), kPi, 1e-15);
  EXPECT_FALSE(estimate_phase(0, 0).has_value());
  EXPECT_THROW(estimate_phase(-1, 3), std::invalid_argument);
}

TEST(EstimatePhase, MonteCarloMatchesDeltaMethod) {
  const double theta = deg_to_rad(30.0);
  const int n = 10000;
  const double p0 = 0.5 * (1.0 + std::cos(theta));
  Rng rng = make_stream(5, 5);
  std::binomial_distribution<int> counts(n, p0);
  std::vector<double> est;
  for (int i = 0; i < 20000; ++i) {
    int c0 = counts(rng);
    est.push_back(*estimate_phase(c0, n - c0));
  }
  auto m = test_util::mean_se(est);
  double var = 0.0;
  for (double e : est) var += (e - m.mean) * (e - m.mean);
  const double sd = std::sqrt(var / est.size());
  // d(acos v)/dv = -1/sin(theta), var(v) = 4 p0 (1 - p0) / n = sin^2(theta) / n.
  const double delta_sd = 1.0 / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(rad_to_deg(m.mean), 30.0, 1.0);
  EXPECT_NEAR(sd, delta_sd, 0.03 * delta_sd);
}

TEST(EstimatePhase, BiasBelowBinomialStd) {
  Rng rng = make_stream(5, 6);
  for (int n : {1000, 10000}) {
    for (double deg : {20.0, 60.0, 120.0}) {
      const double theta = deg_to_rad(deg);
      std::binomial_distribution<int> counts(n, 0.5 * (1.0 + std::cos(theta)));
      double sum = 0.0;
      const int trials = 4000;
      for (int i = 0; i < trials; ++i) {
        int c0 = counts(rng);
        sum += *estimate_phase(c0, n - c0);
      }
      EXPECT_LT(std::abs(sum / trials - theta), 1.0 / std::sqrt(static_cast<double>(n))) << n << " " << deg;
    }
  }
}

TEST(Stabilize, NoiselessStepZeroesPhase) {
  StabilizerConfig s;
  s.shot_noise = false;
  s.actuation_noise = 0.0;
  Rng rng = make_stream(5, 7);
  for (double th : {0.4, -0.4, 2.5, -2.5}) {
    PhaseProcess p;
    p.osc_amp = 0.0;
    p.drift = th;
    auto r = stabilize(p, s, rng);
    EXPECT_TRUE(r.succeeded);
    EXPECT_NEAR(r.process.theta(), 0.0, 1e-12) << th;
    EXPECT_EQ(r.process.since_stabilization, 0.0);
  }
}

TEST(Stabilize, GainZeroLeavesFreeProcess) {
  StabilizerConfig s;
  s.gain = 0.0;
  PhaseProcess p = calibrated_phase_process();
  p.osc_amp = 0.0;
  Rng rng = make_stream(5, 8);
  std::vector<double> x;
  for (int i = 0; i < 20000; ++i) {
    p = stabilize(p, s, rng).process;
    p = evolve_phase(p, 10.0, rng);
    x.push_back(p.drift * p.drift);
  }
  auto m = test_util::mean_se(x);
  EXPECT_NEAR(m.mean, p.free_drift_std() * p.free_drift_std(), 3.0 * m.se);
}

TEST(Stabilize, ReportsFailureWithoutLight) {
  StabilizerConfig s;
  s.photon_budget = 1.0;
  s.max_failures = 1;
  PhaseProcess p;
  p.drift = 0.5;
  Rng rng = make_stream(5, 9);
  int failures = 0;
  for (int i = 0; i < 2000; ++i) failures += stabilize(p, s, rng).succeeded ? 0 : 1;
  // P(no photon in the direct half) = exp(-0.5).
  EXPECT_NEAR(failures / 2000.0, std::exp(-0.5), 0.04);
}

TEST(Stabilize, CalibratedResidualStd) {
  StabilizerConfig s;
  PhaseProcess p = calibrated_phase_process(s);
  Rng rng = make_stream(5, 10);
  double sd = rad_to_deg(residual_std(p, s, 100000, true, rng));
  EXPECT_NEAR(sd, 14.3, 0.5);
}

TEST(Stabilize, CalibrationFormulaWithoutShotNoise) {
  StabilizerConfig s;
  s.shot_noise = false;
  PhaseProcess p = calibrated_phase_process(s);
  Rng rng = make_stream(5, 11);
  EXPECT_NEAR(rad_to_deg(residual_std(p, s, 100000, true, rng)), 14.3, 0.5);
}

TEST(Stabilize, HelpsForEveryDiffusion) {
  StabilizerConfig s;
  // Below ~0.015 rad^2/s the sampled oscillation kick outweighs the drift it removes.
  for (double d : {0.02, 0.05, 0.2, 0.383, 1.0, 4.0}) {
    PhaseProcess p;
    p.diffusion = d;
    Rng a = make_stream(5, 12), b = make_stream(5, 13);
    EXPECT_LT(residual_std(p, s, 5000, true, a), residual_std(p, s, 5000, false, b)) << d;
  }
}

TEST(Stabilize, CalibrationRejectsUnreachableTarget) {
  PhaseProcess p;
  p.sigma_ss = deg_to_rad(3.0);
  EXPECT_THROW(calibrate_diffusion(p, StabilizerConfig{}), std::invalid_argument);
}

TEST(PhaseTrajectory, EventsAndWrapping) {
  StabilizerConfig s;
  Rng rng = make_stream(5, 14);
  auto tr = phase_trajectory(calibrated_phase_process(s), s, 1.0, 1e-3, true, rng);
  ASSERT_EQ(tr.size(), 1001u);
  EXPECT_EQ(tr.front().event, "start");
  int stab = 0;
  for (const auto& x : tr) {
    if (x.event == "stabilize") ++stab;
    EXPECT_GT(x.theta_rad, -kPi);
    EXPECT_LE(x.theta_rad, kPi);
  }
  EXPECT_EQ(stab, 5);
}
