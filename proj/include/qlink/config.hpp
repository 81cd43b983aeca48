#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/experiment_harness.hpp"

// Configuration files are line based:
//
//   # comment
//   [node.a]
//   tau_coh_s = 0.290
//
// Section names join with keys using dots, so the entry above is
// `node.a.tau_coh_s`. Lists are comma separated. Every key has a default
// (see config_schema()), so an empty file is a valid delivery sweep.

namespace qlink {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& key, const std::string& what)
      : std::runtime_error(format(source, line, key, what)), line_(line), key_(key) {}

  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  static std::string format(const std::string& source, int line, const std::string& key,
                            const std::string& what) {
    std::string out = source;
    if (line > 0) out += ":" + std::to_string(line);
    if (!key.empty()) out += ": " + key;
    return out + ": " + what;
  }

  int line_;
  std::string key_;
};

struct ConfigEntry {
  std::string value;
  int line = 0;  // 0 for command-line overrides
  std::string source;
};

using RawConfig = std::map<std::string, ConfigEntry>;

namespace detail {

inline std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    out.push_back(trim(item));
  }
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_double(item));
  if (out.empty()) throw std::invalid_argument("expected a non-empty list");
  return out;
}

inline double parse_unit(const std::string& s) {
  double v = parse_double(s);
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("value " + s + " out of range [0, 1]");
  return v;
}

inline std::vector<double> parse_units(const std::string& s) {
  std::vector<double> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_unit(item));
  if (out.empty()) throw std::invalid_argument("expected a non-empty list");
  return out;
}

inline int parse_int_in(const std::string& s, long long lo, long long hi) {
  long long v = parse_int(s);
  if (v < lo || v > hi) {
    throw std::invalid_argument("value " + s + " out of range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

inline std::vector<BasisPair> parse_bases(const std::string& s) {
  std::vector<BasisPair> out;
  for (const std::string& item : split_list(s)) {
    if (item == "xx") {
      out.push_back(basis_xx());
    } else if (item == "yy") {
      out.push_back(basis_yy());
    } else if (item == "zz") {
      out.push_back(basis_zz());
    } else {
      throw std::invalid_argument("unknown basis '" + item + "' (expected xx, yy or zz)");
    }
  }
  return out;
}

}  // namespace detail

/// Parsed configuration plus the phase diffusion setting, which may be
/// "auto" and is resolved after the stabilizer settings are known.
struct LoadedConfig {
  SweepSpec spec;
  bool auto_diffusion = true;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string doc;
  std::function<void(LoadedConfig&, const std::string&)> apply;
};

inline const std::vector<ConfigKey>& config_schema() {
  using namespace detail;
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> k;
    auto add = [&k](std::string key, std::string def, std::string doc,
                    std::function<void(LoadedConfig&, const std::string&)> fn) {
      k.push_back({std::move(key), std::move(def), std::move(doc), std::move(fn)});
    };
    auto node_keys = [&add](const std::string& name, double tau) {
      auto pick = [name](LoadedConfig& c) -> NodeConfig& {
        return name == "a" ? c.spec.setup.node_a : c.spec.setup.node_b;
      };
      std::ostringstream tau_text;
      tau_text << tau;
      add("node." + name + ".tau_coh_s", tau_text.str(), "spin coherence time under decoupling",
          [pick](LoadedConfig& c, const std::string& v) { pick(c).tau_coh = parse_double(v); });
      add("node." + name + ".cr_pass_prob", "0.894427191", "probability that one state check passes",
          [pick](LoadedConfig& c, const std::string& v) { pick(c).cr_pass_prob = parse_unit(v); });
      add("node." + name + ".cr_check_duration_s", "160e-6", "duration of one state-check round",
          [pick](LoadedConfig& c, const std::string& v) { pick(c).cr_check_duration = parse_double(v); });
      add("node." + name + ".init_duration_s", "0", "spin reset added to every attempt",
          [pick](LoadedConfig& c, const std::string& v) { pick(c).init_duration = parse_double(v); });
    };

    add("scenario.kind", "delivery", "alpha | storage | delivery | phi",
        [](LoadedConfig& c, const std::string& v) {
          if (v == "alpha") c.spec.scenario = Scenario::AlphaSweep;
          else if (v == "storage") c.spec.scenario = Scenario::StorageSweep;
          else if (v == "delivery") c.spec.scenario = Scenario::DeliverySweep;
          else if (v == "phi") c.spec.scenario = Scenario::PhiSweep;
          else throw std::invalid_argument("unknown scenario '" + v + "'");
        });
    add("scenario.seed", std::to_string(kDefaultSeed), "master seed",
        [](LoadedConfig& c, const std::string& v) { c.spec.seed = parse_u64(v); });
    add("scenario.threads", "0", "worker threads (0: all cores); does not change results",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.threads = static_cast<unsigned>(parse_int_in(v, 0, 4096));
        });
    add("scenario.cycles_per_point", "1500", "cycles (or storage trajectories) per grid point",
        [](LoadedConfig& c, const std::string& v) { c.spec.cycles_per_point = parse_int(v); });
    add("scenario.alpha", "0.1", "bright-state population for storage and phi scenarios",
        [](LoadedConfig& c, const std::string& v) { c.spec.alpha = parse_unit(v); });
    add("scenario.herald_cap_s", "10", "upper bound on one run-until-herald sequence",
        [](LoadedConfig& c, const std::string& v) { c.spec.herald_cap = parse_double(v); });

    add("grid.alpha", "0.12, 0.2", "alpha values (alpha and delivery scenarios)",
        [](LoadedConfig& c, const std::string& v) { c.spec.alphas = parse_units(v); });
    add("grid.delivery_rate_hz", "7, 8, 9, 9.9, 11, 12", "delivery rates (delivery scenario)",
        [](LoadedConfig& c, const std::string& v) { c.spec.delivery_rates_hz = parse_doubles(v); });
    add("grid.storage_s", "0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4", "storage times (storage scenario)",
        [](LoadedConfig& c, const std::string& v) { c.spec.storage_times = parse_doubles(v); });
    add("grid.phi_deg", "0, 30, 60, 90, 120, 150, 180, 210, 240, 270, 300, 330",
        "readout angles at node A (phi scenario)", [](LoadedConfig& c, const std::string& v) {
          c.spec.phis.clear();
          for (double d : parse_doubles(v)) c.spec.phis.push_back(deg_to_rad(d));
        });

    node_keys("a", 0.290);
    node_keys("b", 0.680);

    add("station.p_det", "4e-4", "detection probability of an emitted photon",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.station.p_det = parse_unit(v); });
    add("station.p_dark", "6.18572165e-7", "dark-count probability per detector per attempt",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.station.p_dark = parse_unit(v); });
    add("station.visibility", "0.90", "two-photon indistinguishability",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.station.visibility = parse_unit(v); });
    add("station.p_double_excitation", "0.13", "double-excitation probability",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.station.p_dbl = parse_unit(v); });
    add("station.exact_bright_weight", "false", "use the herald-conditioned |uu> weight",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.station.exact_weight = parse_bool(v); });

    add("cycle.batch_size", "250", "attempts between state checks",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.cycle.batch_size = parse_int_in(v, 1, 100000000);
        });
    add("cycle.attempt_duration_s", "5.5e-6", "duration of one entanglement attempt",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.cycle.t_attempt = parse_double(v); });
    add("cycle.max_cr_retries", "3", "failed first check rounds before a cycle is offline (0: unlimited)",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.cycle.max_cr_retries = parse_int_in(v, 0, 1000000);
        });
    add("cycle.readout_duration_s", "0", "readout time charged after storage",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.cycle.readout_duration = parse_double(v);
        });
    add("cycle.storage_channel", "dephasing", "dephasing | depolarizing | none",
        [](LoadedConfig& c, const std::string& v) {
          if (v == "dephasing") c.spec.setup.cycle.storage = StorageChannel::Dephasing;
          else if (v == "depolarizing") c.spec.setup.cycle.storage = StorageChannel::Depolarizing;
          else if (v == "none") c.spec.setup.cycle.storage = StorageChannel::None;
          else throw std::invalid_argument("unknown storage channel '" + v + "'");
        });
    add("cycle.failed_state", "no_detection", "no_detection | override",
        [](LoadedConfig& c, const std::string& v) {
          if (v == "no_detection") c.spec.setup.cycle.failed_state = FailedState::NoDetection;
          else if (v == "override") c.spec.setup.cycle.failed_state = FailedState::Override;
          else throw std::invalid_argument("unknown failed state '" + v + "'");
        });
    add("cycle.f_unent_override", "0.04", "fidelity of the override failed state",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.cycle.f_unent_override = parse_unit(v);
        });

    add("phase.tau_corr_s", "2", "correlation time of the drift (inf: random walk)",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.phase.tau_corr = v == "inf" ? std::numeric_limits<double>::infinity() : parse_double(v);
        });
    add("phase.diffusion", "auto", "drift diffusion in rad^2/s; auto matches sigma_ss_deg",
        [](LoadedConfig& c, const std::string& v) {
          c.auto_diffusion = v == "auto";
          if (!c.auto_diffusion) c.spec.phase.diffusion = parse_double(v);
        });
    add("phase.sigma_ss_deg", "14.3", "target stabilized residual std",
        [](LoadedConfig& c, const std::string& v) { c.spec.phase.sigma_ss = deg_to_rad(parse_double(v)); });
    add("phase.osc_amp_deg", "10", "amplitude of the mechanical oscillation",
        [](LoadedConfig& c, const std::string& v) { c.spec.phase.osc_amp = deg_to_rad(parse_double(v)); });
    add("phase.osc_freq_hz", "31", "frequency of the mechanical oscillation",
        [](LoadedConfig& c, const std::string& v) { c.spec.phase.osc_freq = parse_double(v); });

    add("stabilizer.interval_s", "0.18", "time between stabilizations",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.stabilizer.interval = parse_double(v); });
    add("stabilizer.photon_budget", "1e4", "mean detected photons per estimate",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.stabilizer.photon_budget = parse_double(v);
        });
    add("stabilizer.gain", "1", "feedback gain",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.stabilizer.gain = parse_double(v); });
    add("stabilizer.actuation_noise_deg", "0.5", "std of the applied correction error",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.stabilizer.actuation_noise = deg_to_rad(parse_double(v));
        });
    add("stabilizer.duration_s", "0.010", "time charged per stabilization",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.stabilizer.duration = parse_double(v); });
    add("stabilizer.shot_noise", "true", "sample photon counts (false: expected counts)",
        [](LoadedConfig& c, const std::string& v) { c.spec.setup.stabilizer.shot_noise = parse_bool(v); });
    add("stabilizer.max_failures", "3", "retries when no light is detected",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.setup.stabilizer.max_failures = parse_int_in(v, 1, 1000);
        });

    add("tomography.bases", "xx, yy, zz", "correlators sampled per cycle",
        [](LoadedConfig& c, const std::string& v) { c.spec.tomography.bases = parse_bases(v); });
    add("tomography.shots", "1", "readouts per basis per cycle",
        [](LoadedConfig& c, const std::string& v) {
          c.spec.tomography.shots = parse_int_in(v, 1, 100000000);
        });
    add("tomography.readout_error_a", "0", "symmetric readout flip probability at node A",
        [](LoadedConfig& c, const std::string& v) { c.spec.tomography.readout_error_a = parse_unit(v); });
    add("tomography.readout_error_b", "0", "symmetric readout flip probability at node B",
        [](LoadedConfig& c, const std::string& v) { c.spec.tomography.readout_error_b = parse_unit(v); });

    add("storage.initial", "bell", "bell | heralded (state heralded at scenario.alpha)",
        [](LoadedConfig& c, const std::string& v) {
          if (v == "bell") c.spec.storage_initial = StorageInitial::Bell;
          else if (v == "heralded") c.spec.storage_initial = StorageInitial::Heralded;
          else throw std::invalid_argument("unknown initial state '" + v + "'");
        });
    return k;
  }();
  return schema;
}

inline const ConfigKey* find_config_key(const std::string& key) {
  for (const ConfigKey& k : config_schema()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

inline RawConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    auto hash = line.find('#');
    std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) {
        throw ConfigError(source, number, "", "malformed section header '" + body + "'");
      }
      section = detail::trim(body.substr(1, body.size() - 2));
      continue;
    }
    auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source, number, "", "expected key = value");
    }
    std::string key = detail::trim(body.substr(0, eq));
    std::string value = detail::trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(source, number, "", "empty key");
    std::string path = section.empty() ? key : section + "." + key;
    if (!find_config_key(path)) {
      throw ConfigError(source, number, path, "unknown key");
    }
    if (raw.count(path)) {
      throw ConfigError(source, number, path,
                        "duplicate key (first set on line " + std::to_string(raw[path].line) + ")");
    }
    raw[path] = {value, number, source};
  }
  return raw;
}

inline RawConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path, 0, "", "cannot open file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

/// Applies a `key=value` override; the key must exist in the schema.
inline void apply_override(RawConfig& raw, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--override", 0, "", "expected key=value, got '" + assignment + "'");
  }
  std::string key = detail::trim(assignment.substr(0, eq));
  if (!find_config_key(key)) {
    throw ConfigError("--override", 0, key, "unknown key");
  }
  raw[key] = {detail::trim(assignment.substr(eq + 1)), 0, "--override"};
}

/// Builds and validates a sweep specification from defaults plus `raw`.
inline SweepSpec build_spec(const RawConfig& raw) {
  LoadedConfig c;
  for (const ConfigKey& k : config_schema()) {
    auto it = raw.find(k.key);
    const std::string& value = it == raw.end() ? k.default_value : it->second.value;
    try {
      k.apply(c, value);
    } catch (const std::invalid_argument& e) {
      if (it == raw.end()) throw;
      throw ConfigError(it->second.source, it->second.line, k.key, e.what());
    }
  }
  auto source = [&] { return raw.empty() ? std::string("<config>") : raw.begin()->second.source; };
  try {
    if (c.auto_diffusion) {
      c.spec.phase.diffusion = calibrate_diffusion(c.spec.phase, c.spec.setup.stabilizer);
    }
    c.spec.validate();
    for (const GridPoint& p : grid_points(c.spec)) {
      configure_point(c.spec, p).validate();
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source(), 0, "", e.what());
  }
  return c.spec;
}

/// Documented defaults as a config file.
inline std::string default_config_text() {
  std::ostringstream out;
  std::string section;
  for (const ConfigKey& k : config_schema()) {
    auto dot = k.key.rfind('.');
    std::string sec = k.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << "# " << k.doc << '\n' << k.key.substr(dot + 1) << " = " << k.default_value << '\n';
  }
  return out.str();
}

}  // namespace qlink
