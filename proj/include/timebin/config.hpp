// Run configuration: a single JSON file covering every module, strictly
// validated (unknown keys rejected, units in the key names).
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "timebin/common.hpp"
#include "timebin/engine.hpp"
#include "timebin/sim.hpp"

namespace timebin {

struct AnalysisParams {
  double bin_width = 0.05e-9;       // histogram bin [s]
  double histogram_range = 7e-9;    // pairing span / histogram half-range [s]
  double peak_window = 1.5e-9;      // full integration window per peak [s]
  int phase_points = 13;            // scan grid size over one period

  void validate(double bin_separation) const {
    if (!(bin_width > 0) || !(histogram_range > 0))
      throw ConfigError("analysis: bin width and range must be > 0");
    if (!(peak_window > 0) || !(peak_window < bin_separation))
      throw ConfigError("analysis: peak window must satisfy 0 < window < bin separation");
    if (phase_points < 4) throw ConfigError("analysis: a scan needs at least 4 phase points");
  }
};

struct WitnessParams {
  double threshold_sigmas = 5.0;

  void validate() const {
    if (!(threshold_sigmas > 0)) throw ConfigError("witness: threshold must be > 0");
  }
};

struct RunConfig {
  EngineConfig engine;
  std::optional<CoherenceWeights> weights; // absent: derived from engine
  SourceParams source;
  ChannelParams channel;
  DetectorParams detector_a;
  DetectorParams detector_b;
  AnalysisParams analysis;
  WitnessParams witness;
  std::optional<std::uint64_t> seed; // mandatory for simulation subcommands
  double duration = 1.0;             // s
  std::string out_dir = "out";

  ExperimentParams experiment() const {
    ExperimentParams p;
    p.engine = engine;
    p.weights = weights;
    p.source = source;
    p.channel = channel;
    p.detector_a = detector_a;
    p.detector_b = detector_b;
    p.duration = duration;
    p.seed = seed.value_or(0);
    return p;
  }

  void validate() const {
    engine.validate();
    if (weights) weights->validate();
    source.validate();
    channel.validate();
    detector_a.validate();
    detector_b.validate();
    analysis.validate(engine.bin_separation);
    witness.validate();
    if (duration < 0) throw ConfigError("run: duration must be >= 0");
  }
};

namespace cfg_detail {

using nlohmann::json;

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in '" + where + "'");
}

inline double get_num(const json& j, const std::string& key, double fallback,
                      const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError("config: '" + where + "." + key + "' must be a number");
  return j[key].get<double>();
}

inline void parse_engine(const json& j, EngineConfig& e) {
  require_keys(j, {"phase_a_rad", "phase_b_rad", "transcriber_phase_rad", "bin_separation_ns",
                   "pump_coherence_ns", "photon_coherence_ps", "analyzer_mismatch_mm",
                   "source_mode"},
               "engine");
  e.phase_a = get_num(j, "phase_a_rad", e.phase_a, "engine");
  e.phase_b = get_num(j, "phase_b_rad", e.phase_b, "engine");
  e.transcriber_phase = get_num(j, "transcriber_phase_rad", e.transcriber_phase, "engine");
  e.bin_separation = get_num(j, "bin_separation_ns", e.bin_separation * 1e9, "engine") * 1e-9;
  e.pump_coherence_time =
      get_num(j, "pump_coherence_ns", e.pump_coherence_time * 1e9, "engine") * 1e-9;
  e.photon_coherence_time =
      get_num(j, "photon_coherence_ps", e.photon_coherence_time * 1e12, "engine") * 1e-12;
  e.analyzer_mismatch =
      get_num(j, "analyzer_mismatch_mm", e.analyzer_mismatch * 1e3, "engine") * 1e-3;
  if (j.contains("source_mode")) {
    const auto mode = j["source_mode"].get<std::string>();
    if (mode == "transcribed")
      e.source_mode = SourceMode::transcribed;
    else if (mode == "bypass")
      e.source_mode = SourceMode::bypass;
    else
      throw ConfigError("config: engine.source_mode must be 'transcribed' or 'bypass'");
  }
}

inline void parse_detector(const json& j, DetectorParams& d, const std::string& where) {
  require_keys(j, {"efficiency", "dark_rate_hz", "jitter_sigma_ns", "dead_time_ns", "mode",
                   "gate_delay_ns", "gate_width_ns"},
               where);
  d.efficiency = get_num(j, "efficiency", d.efficiency, where);
  d.dark_rate = get_num(j, "dark_rate_hz", d.dark_rate, where);
  d.jitter_sigma = get_num(j, "jitter_sigma_ns", d.jitter_sigma * 1e9, where) * 1e-9;
  d.dead_time = get_num(j, "dead_time_ns", d.dead_time * 1e9, where) * 1e-9;
  if (j.contains("mode")) {
    const auto mode = j["mode"].get<std::string>();
    if (mode == "free_running")
      d.mode = DetectorMode::free_running;
    else if (mode == "gated")
      d.mode = DetectorMode::gated;
    else
      throw ConfigError("config: " + where + ".mode must be 'free_running' or 'gated'");
  }
  if (j.contains("gate_width_ns") || j.contains("gate_delay_ns")) {
    GateParams g;
    g.delay = get_num(j, "gate_delay_ns", 0.0, where) * 1e-9;
    g.width = get_num(j, "gate_width_ns", 0.0, where) * 1e-9;
    d.gate = g;
  }
}

} // namespace cfg_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using cfg_detail::get_num;
  using cfg_detail::require_keys;
  RunConfig cfg;
  require_keys(j, {"engine", "weights", "source", "channel", "detector_a", "detector_b",
                   "analysis", "witness", "run"},
               "<root>");
  if (j.contains("engine")) cfg_detail::parse_engine(j["engine"], cfg.engine);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    require_keys(w, {"nu", "mu"}, "weights");
    CoherenceWeights defaults = CoherenceWeights::from_config(cfg.engine);
    CoherenceWeights ww;
    ww.nu = get_num(w, "nu", defaults.nu, "weights");
    ww.mu = get_num(w, "mu", defaults.mu, "weights");
    cfg.weights = ww;
  }
  if (j.contains("source")) {
    const auto& s = j["source"];
    require_keys(s, {"brightness_pairs_per_s_mw_ghz", "pump_power_mw", "bandwidth_ghz",
                     "multipair_budget"},
                 "source");
    cfg.source.brightness =
        get_num(s, "brightness_pairs_per_s_mw_ghz", cfg.source.brightness, "source");
    cfg.source.pump_power = get_num(s, "pump_power_mw", cfg.source.pump_power, "source");
    cfg.source.bandwidth = get_num(s, "bandwidth_ghz", cfg.source.bandwidth, "source");
    cfg.source.multipair_budget =
        get_num(s, "multipair_budget", cfg.source.multipair_budget, "source");
  }
  if (j.contains("channel")) {
    const auto& c = j["channel"];
    require_keys(c, {"loss_db_alice", "loss_db_bob"}, "channel");
    cfg.channel.loss_db_alice = get_num(c, "loss_db_alice", cfg.channel.loss_db_alice, "channel");
    cfg.channel.loss_db_bob = get_num(c, "loss_db_bob", cfg.channel.loss_db_bob, "channel");
  }
  if (j.contains("detector_a")) cfg_detail::parse_detector(j["detector_a"], cfg.detector_a, "detector_a");
  if (j.contains("detector_b")) cfg_detail::parse_detector(j["detector_b"], cfg.detector_b, "detector_b");
  if (j.contains("analysis")) {
    const auto& a = j["analysis"];
    require_keys(a, {"bin_width_ns", "histogram_range_ns", "peak_window_ns", "phase_points"},
                 "analysis");
    cfg.analysis.bin_width = get_num(a, "bin_width_ns", cfg.analysis.bin_width * 1e9, "analysis") * 1e-9;
    cfg.analysis.histogram_range =
        get_num(a, "histogram_range_ns", cfg.analysis.histogram_range * 1e9, "analysis") * 1e-9;
    cfg.analysis.peak_window =
        get_num(a, "peak_window_ns", cfg.analysis.peak_window * 1e9, "analysis") * 1e-9;
    if (a.contains("phase_points")) {
      if (!a["phase_points"].is_number_integer())
        throw ConfigError("config: analysis.phase_points must be an integer");
      cfg.analysis.phase_points = a["phase_points"].get<int>();
    }
  }
  if (j.contains("witness")) {
    const auto& w = j["witness"];
    require_keys(w, {"threshold_sigmas"}, "witness");
    cfg.witness.threshold_sigmas =
        get_num(w, "threshold_sigmas", cfg.witness.threshold_sigmas, "witness");
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    require_keys(r, {"seed", "duration_s", "out_dir"}, "run");
    if (r.contains("seed")) {
      if (!r["seed"].is_number_unsigned() && !r["seed"].is_number_integer())
        throw ConfigError("config: run.seed must be a non-negative integer");
      const auto s = r["seed"].get<std::int64_t>();
      if (s < 0) throw ConfigError("config: run.seed must be a non-negative integer");
      cfg.seed = static_cast<std::uint64_t>(s);
    }
    cfg.duration = get_num(r, "duration_s", cfg.duration, "run");
    if (r.contains("out_dir")) cfg.out_dir = r["out_dir"].get<std::string>();
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

} // namespace timebin
