#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "qlink/experiment_harness.hpp"
#include "qlink/link_analytics.hpp"
#include "qlink/phase_control.hpp"

namespace qlink {

/// Fixed-format number; NaN is written as an empty field.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string run_stats_csv(const RunStats& stats) {
  std::ostringstream out;
  const Scenario s = stats.scenario;
  std::vector<std::string> head;
  switch (s) {
    case Scenario::AlphaSweep:
      head = {"alpha"};
      break;
    case Scenario::DeliverySweep:
      head = {"alpha", "delivery_rate_hz"};
      break;
    case Scenario::StorageSweep:
      head = {"storage_s"};
      break;
    case Scenario::PhiSweep:
      head = {"alpha", "phi_rad"};
      break;
  }
  for (const char* c : {"cycles", "frac_heralded", "frac_no_herald", "frac_offline"}) head.push_back(c);
  if (s == Scenario::PhiSweep) {
    for (int d = 0; d < 2; ++d) {
      for (const auto& l : stats.basis_labels) {
        std::string name = "d" + std::to_string(d) + "_" + l;
        head.push_back(name);
        head.push_back(name + "_se");
      }
    }
  } else {
    for (const auto& l : stats.basis_labels) {
      head.push_back(l);
      head.push_back(l + "_se");
    }
  }
  for (const char* c : {"fidelity", "fidelity_se", "heralded_fidelity", "heralded_fidelity_se",
                        "failed_fidelity", "failed_fidelity_se", "fidelity_exact",
                        "heralded_fidelity_exact", "mean_herald_time_s", "herald_rate_hz",
                        "throughput_hz"}) {
    head.push_back(c);
  }
  for (std::size_t i = 0; i < head.size(); ++i) out << (i ? "," : "") << head[i];
  out << '\n';

  for (const PointStats& p : stats.points) {
    std::vector<std::string> row;
    switch (s) {
      case Scenario::AlphaSweep:
        row = {fmt(p.point.alpha)};
        break;
      case Scenario::DeliverySweep:
        row = {fmt(p.point.alpha), fmt(p.point.delivery_rate_hz)};
        break;
      case Scenario::StorageSweep:
        row = {fmt(p.point.storage_s)};
        break;
      case Scenario::PhiSweep:
        row = {fmt(p.point.alpha), fmt(p.point.phi)};
        break;
    }
    row.push_back(std::to_string(p.cycles));
    row.push_back(fmt(p.frac_heralded));
    row.push_back(fmt(p.frac_no_herald));
    row.push_back(fmt(p.frac_offline));
    auto add = [&row](const Estimate& e) {
      row.push_back(fmt(e.value));
      row.push_back(fmt(e.se));
    };
    if (s == Scenario::PhiSweep) {
      for (int d = 0; d < 2; ++d)
        for (const Estimate& e : p.by_detector[d]) add(e);
    } else {
      for (const Estimate& e : p.correlators) add(e);
    }
    add(p.fidelity);
    add(p.heralded_fidelity);
    add(p.failed_fidelity);
    row.push_back(fmt(p.exact_fidelity));
    row.push_back(fmt(p.exact_heralded_fidelity));
    row.push_back(fmt(p.mean_herald_time));
    row.push_back(fmt(p.herald_rate_hz));
    row.push_back(fmt(p.throughput_hz));
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  if (stats.decay) {
    const DecayFit& f = *stats.decay;
    out << "# decay_fit tau_s=" << fmt(f.tau) << " amplitude=" << fmt(f.amplitude)
        << " floor=" << fmt(f.floor) << " rms=" << fmt(f.rms) << " ok=" << (f.ok ? "true" : "false")
        << '\n';
  }
  return out.str();
}

/// One line of the per-cycle record stream.
inline std::string cycle_record_json(long long cycle, const CycleRecord& r) {
  nlohmann::ordered_json j;
  j["cycle"] = cycle;
  j["outcome"] = to_string(r.outcome);
  j["herald_time_s"] = std::isnan(r.herald_time) ? nlohmann::ordered_json() : nlohmann::ordered_json(r.herald_time);
  j["detector"] = r.detector < 0 ? nlohmann::ordered_json() : nlohmann::ordered_json(r.detector);
  j["fidelity"] = r.fidelity;
  j["timings"] = {{"stabilization_s", r.timings.stabilization_ns * 1e-9},
                  {"state_check_s", r.timings.state_check_ns * 1e-9},
                  {"attempts_s", r.timings.attempts_ns * 1e-9},
                  {"storage_s", r.timings.storage_ns * 1e-9},
                  {"readout_s", r.timings.readout_ns * 1e-9},
                  {"idle_s", r.timings.idle_ns * 1e-9}};
  return j.dump();
}

inline std::string phase_trajectory_csv(const std::vector<PhaseSample>& samples) {
  std::ostringstream out;
  out << "time_s,theta_rad,event\n";
  for (const PhaseSample& s : samples) {
    out << fmt(s.time_s) << ',' << fmt(s.theta_rad) << ',' << s.event << '\n';
  }
  return out.str();
}

}  // namespace qlink
