// Stochastic event-stream generation: Poissonian pair emission, per-photon
// loss, detector response (efficiency, jitter, dark counts, gating, dead
// time). Produces timestamped clicks for the analysis chain.
//
// Determinism: every per-pair draw uses an independent substream derived from
// (seed, pair index), and each dark-count stream has its own tag, so the
// event stream depends only on (params, seed), not on scheduling.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "timebin/common.hpp"
#include "timebin/engine.hpp"
#include "timebin/rng.hpp"
#include "timebin/witness.hpp"

namespace timebin {

struct SourceParams {
  double brightness = 2e4;    // generated pairs / (s * mW * GHz)
  double pump_power = 2.5;    // mW
  double bandwidth = 25.3;    // GHz (200 pm at 1540 nm)
  double multipair_budget = 0.01; // tolerated pair probability per detection window

  double pair_rate() const { return brightness * pump_power * bandwidth; }

  void validate() const {
    if (brightness < 0 || pump_power < 0 || bandwidth < 0)
      throw ConfigError("source: brightness, pump power and bandwidth must be >= 0");
    if (!(multipair_budget > 0))
      throw ConfigError("source: multipair budget must be positive");
  }
};

struct ChannelParams {
  double loss_db_alice = 2.5;
  double loss_db_bob = 2.5;

  double survival_alice() const { return std::pow(10.0, -loss_db_alice / 10.0); }
  double survival_bob() const { return std::pow(10.0, -loss_db_bob / 10.0); }

  void validate() const {
    if (loss_db_alice < 0 || loss_db_bob < 0) throw ConfigError("channel: loss must be >= 0 dB");
  }
};

enum class DetectorMode { free_running, gated };

/// Gate window applied around (trigger click time + delay).
struct GateParams {
  double delay = 0.0; // s
  double width = 0.0; // s, full width
};

struct DetectorParams {
  double efficiency = 0.20;
  double dark_rate = 1.1e4;            // counts/s per detector (one per port)
  double jitter_sigma = 0.4e-9 / 1.4142135623730951; // per detector; 0.4 ns in coincidence
  double dead_time = 1e-6;             // s per detector
  DetectorMode mode = DetectorMode::free_running;
  std::optional<GateParams> gate;      // required in gated mode

  void validate() const {
    if (!(efficiency >= 0.0 && efficiency <= 1.0))
      throw ConfigError("detector: efficiency must lie in [0, 1]");
    if (dark_rate < 0 || jitter_sigma < 0 || dead_time < 0)
      throw ConfigError("detector: rates and times must be >= 0");
    if (mode == DetectorMode::gated && (!gate || !(gate->width > 0)))
      throw ConfigError("detector: gated mode needs a gate width > 0");
  }
};

enum class Origin : std::uint8_t { photon, dark };

struct DetectionEvent {
  double time = 0.0; // s
  Party party = Party::alice;
  std::uint8_t port = 0;
  Origin origin = Origin::photon;
};

inline bool operator<(const DetectionEvent& a, const DetectionEvent& b) {
  if (a.time != b.time) return a.time < b.time;
  if (a.party != b.party) return a.party < b.party;
  if (a.port != b.port) return a.port < b.port;
  return a.origin < b.origin;
}

/// Homogeneous Poisson process on [0, duration). Deterministic given the rng
/// state.
inline std::vector<double> sample_emissions(double duration, double rate, Rng& rng) {
  std::vector<double> times;
  if (duration <= 0.0 || rate <= 0.0) return times;
  times.reserve(static_cast<std::size_t>(duration * rate * 1.1) + 16);
  double t = rng.exponential(rate);
  while (t < duration) {
    times.push_back(t);
    t += rng.exponential(rate);
  }
  return times;
}

inline std::vector<double> sample_emissions(double duration, double rate, std::uint64_t seed) {
  Rng rng(seed);
  return sample_emissions(duration, rate, rng);
}

struct ExperimentParams {
  EngineConfig engine;
  std::optional<CoherenceWeights> weights; // default: derived from engine
  SourceParams source;
  ChannelParams channel;
  DetectorParams detector_a;
  DetectorParams detector_b;
  double duration = 1.0; // s
  std::uint64_t seed = 1;

  CoherenceWeights effective_weights() const {
    return weights ? *weights : CoherenceWeights::from_config(engine);
  }

  void validate() const {
    engine.validate();
    if (weights) weights->validate();
    source.validate();
    channel.validate();
    detector_a.validate();
    detector_b.validate();
    if (duration < 0) throw ConfigError("duration must be >= 0");
  }
};

struct SimStats {
  std::int64_t pairs_emitted = 0;
  std::int64_t cross_pairs = 0;
  std::int64_t photon_clicks_alice = 0;
  std::int64_t photon_clicks_bob = 0;
  std::int64_t dark_clicks_alice = 0;
  std::int64_t dark_clicks_bob = 0;

  double singles_rate_alice(double duration) const {
    return duration > 0 ? static_cast<double>(photon_clicks_alice + dark_clicks_alice) / duration : 0.0;
  }
  double singles_rate_bob(double duration) const {
    return duration > 0 ? static_cast<double>(photon_clicks_bob + dark_clicks_bob) / duration : 0.0;
  }
};

struct SimResult {
  std::vector<DetectionEvent> events; // time-ordered, post detector model
  SimStats stats;
  std::vector<std::string> warnings;
};

/// Flat accidental-coincidence rate R_A * R_B * tau_w.
inline double accidental_rate(double singles_a, double singles_b, double window) {
  if (singles_a < 0 || singles_b < 0 || window < 0)
    throw std::invalid_argument("accidental_rate: inputs must be >= 0");
  return singles_a * singles_b * window;
}

namespace detail {

// Substream tags.
inline constexpr std::uint64_t kTagEmission = 0x70616972u;   // pair emission times
inline constexpr std::uint64_t kTagPairBase = 0xe0000000u;   // + pair index
inline constexpr std::uint64_t kTagDarkBase = 0xda000000u;   // + detector index

struct OutcomeSampler {
  struct Cell {
    int delta, port_a, port_b;
    double cum;
  };
  std::vector<Cell> cells;
  std::array<std::vector<PeakTimingAlternative>, 7> timing;

  explicit OutcomeSampler(const EngineConfig& cfg, const CoherenceWeights& w) {
    const auto dist = coincidence_distribution(cfg, w);
    double cum = 0.0;
    for (int d = -3; d <= 3; ++d)
      for (int pa = 0; pa < 2; ++pa)
        for (int pb = 0; pb < 2; ++pb) {
          const double p = dist.at(d, pa, pb);
          if (p <= 0.0) continue;
          cum += p;
          cells.push_back({d, pa, pb, cum});
        }
    // Guard against rounding: force the last cumulative to 1.
    if (!cells.empty()) cells.back().cum = 1.0;
    timing = peak_timing_alternatives(cfg);
    for (auto& alts : timing) {
      double sum = 0.0;
      for (const auto& a : alts) sum += a.weight;
      for (auto& a : alts) a.weight /= sum > 0 ? sum : 1.0;
    }
  }

  struct Draw {
    int port_a, port_b;
    int bin_a, bin_b;
  };

  Draw sample(Rng& rng) const {
    const double u = rng.uniform();
    const Cell* cell = &cells.back();
    for (const auto& c : cells)
      if (u < c.cum) {
        cell = &c;
        break;
      }
    const auto& alts = timing[static_cast<std::size_t>(cell->delta + 3)];
    const PeakTimingAlternative* alt = &alts.back();
    if (alts.size() > 1) {
      const double v = rng.uniform();
      double acc = 0.0;
      for (const auto& a : alts) {
        acc += a.weight;
        if (v < acc) {
          alt = &a;
          break;
        }
      }
    }
    return {cell->port_a, cell->port_b, alt->alice_bin, alt->bob_bin};
  }
};

/// Dead-time filter, one detector (party, port) at a time. Events must be
/// time-sorted.
inline std::vector<DetectionEvent> apply_dead_time(const std::vector<DetectionEvent>& events,
                                                   Party party, double dead_time) {
  if (dead_time <= 0.0) return events;
  std::array<double, 2> last{-1e30, -1e30};
  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (e.party == party) {
      auto& t = last[e.port];
      if (e.time - t < dead_time) continue;
      t = e.time;
    }
    out.push_back(e);
  }
  return out;
}

/// Keep Bob clicks lying in a gate around any trigger time + delay.
inline std::vector<DetectionEvent> apply_gate(const std::vector<DetectionEvent>& events,
                                              const std::vector<double>& triggers,
                                              const GateParams& gate) {
  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  std::size_t lo = 0;
  for (const auto& e : events) {
    if (e.party != Party::bob) {
      out.push_back(e);
      continue;
    }
    const double tmin = e.time - gate.delay - gate.width / 2.0;
    while (lo < triggers.size() && triggers[lo] < tmin) ++lo;
    if (lo < triggers.size() && triggers[lo] <= e.time - gate.delay + gate.width / 2.0)
      out.push_back(e);
  }
  return out;
}

} // namespace detail

/// Full pipeline: emission, outcome draw from the coincidence distribution,
/// loss/efficiency thinning, timing jitter, dark counts, gating, dead time.
inline SimResult simulate_experiment(const ExperimentParams& params) {
  params.validate();
  SimResult res;
  const double duration = params.duration;
  if (duration == 0.0) return res;

  const auto weights = params.effective_weights();
  const detail::OutcomeSampler sampler(params.engine, weights);
  const double ps_prob = postselect_cross(build_source_state(params.engine)).probability;
  const double bin = params.engine.bin_separation;

  const double rate = params.source.pair_rate();
  if (rate * bin > params.source.multipair_budget)
    res.warnings.push_back("multi-pair probability per window exceeds the configured budget");
  for (const auto* det : {&params.detector_a, &params.detector_b})
    if (det->mode == DetectorMode::gated && det->gate && det->gate->width < det->jitter_sigma)
      res.warnings.push_back("gate width below detector timing jitter");

  const double p_click_a = params.channel.survival_alice() * params.detector_a.efficiency;
  const double p_click_b = params.channel.survival_bob() * params.detector_b.efficiency;

  Rng emission_rng(derive_seed(params.seed, detail::kTagEmission));
  const auto emissions = sample_emissions(duration, rate, emission_rng);
  res.stats.pairs_emitted = static_cast<std::int64_t>(emissions.size());

  auto& events = res.events;
  events.reserve(emissions.size() / 4 + 1024);

  auto emit_click = [&](Party party, int port, double t, Rng& rng) {
    const auto& det = (party == Party::alice) ? params.detector_a : params.detector_b;
    const double jittered = t + (det.jitter_sigma > 0 ? rng.normal(0.0, det.jitter_sigma) : 0.0);
    if (jittered < 0.0) return;
    events.push_back({jittered, party, static_cast<std::uint8_t>(port), Origin::photon});
    if (party == Party::alice)
      ++res.stats.photon_clicks_alice;
    else
      ++res.stats.photon_clicks_bob;
  };

  for (std::size_t i = 0; i < emissions.size(); ++i) {
    Rng rng(derive_seed(params.seed, detail::kTagPairBase + i));
    const double t0 = emissions[i];
    if (rng.uniform() < ps_prob) {
      // One photon per party; observable outcome drawn from the engine.
      ++res.stats.cross_pairs;
      const auto draw = sampler.sample(rng);
      if (rng.bernoulli(p_click_a)) emit_click(Party::alice, draw.port_a, t0 + draw.bin_a * bin, rng);
      if (rng.bernoulli(p_click_b)) emit_click(Party::bob, draw.port_b, t0 + draw.bin_b * bin, rng);
    } else {
      // Both photons to the same party (transcribed mode only). They pass the
      // analyzer as independent single photons: random arm and port.
      const Party party = rng.bernoulli(0.5) ? Party::alice : Party::bob;
      const double p_click = (party == Party::alice) ? p_click_a : p_click_b;
      for (int src_bin : {0, 1}) {
        if (!rng.bernoulli(p_click)) continue;
        const int arm = rng.bernoulli(0.5) ? 1 : 0;
        const int port = rng.bernoulli(0.5) ? 1 : 0;
        emit_click(party, port, t0 + (src_bin + arm) * bin, rng);
      }
    }
  }

  // Independent dark-count processes, one per detector.
  int det_index = 0;
  for (Party party : {Party::alice, Party::bob}) {
    const auto& det = (party == Party::alice) ? params.detector_a : params.detector_b;
    for (int port = 0; port < 2; ++port, ++det_index) {
      Rng rng(derive_seed(params.seed, detail::kTagDarkBase + static_cast<std::uint64_t>(det_index)));
      for (double t : sample_emissions(duration, det.dark_rate, rng)) {
        events.push_back({t, party, static_cast<std::uint8_t>(port), Origin::dark});
        if (party == Party::alice)
          ++res.stats.dark_clicks_alice;
        else
          ++res.stats.dark_clicks_bob;
      }
    }
  }

  std::sort(events.begin(), events.end());

  // Detector post-processing: Alice dead time first (her accepted clicks act
  // as triggers), then Bob's gate, then Bob's dead time.
  events = detail::apply_dead_time(events, Party::alice, params.detector_a.dead_time);
  if (params.detector_b.mode == DetectorMode::gated && params.detector_b.gate) {
    std::vector<double> triggers;
    triggers.reserve(events.size() / 2);
    for (const auto& e : events)
      if (e.party == Party::alice) triggers.push_back(e.time);
    events = detail::apply_gate(events, triggers, *params.detector_b.gate);
  }
  events = detail::apply_dead_time(events, Party::bob, params.detector_b.dead_time);

  // Recount clicks after filtering.
  res.stats.photon_clicks_alice = res.stats.photon_clicks_bob = 0;
  res.stats.dark_clicks_alice = res.stats.dark_clicks_bob = 0;
  for (const auto& e : events) {
    if (e.party == Party::alice) {
      if (e.origin == Origin::photon)
        ++res.stats.photon_clicks_alice;
      else
        ++res.stats.dark_clicks_alice;
    } else {
      if (e.origin == Origin::photon)
        ++res.stats.photon_clicks_bob;
      else
        ++res.stats.dark_clicks_bob;
    }
  }
  return res;
}

/// Event stream of a classical strategy table: every trial produces one click
/// per party at the committed outcome's port, with the beam-splitter arm
/// randomness applied to the detection times.
struct StrategyStreamParams {
  StrategyTable table;
  double trial_rate = 1e5; // trials/s
  double duration = 1.0;
  std::uint64_t seed = 1;
  double bin_separation = 2e-9;
  double jitter_sigma = 0.0; // per detector
};

inline std::vector<DetectionEvent> simulate_strategy_stream(const StrategyStreamParams& p) {
  p.table.validate();
  std::vector<DetectionEvent> events;
  Rng emission_rng(derive_seed(p.seed, detail::kTagEmission));
  const auto trials = sample_emissions(p.duration, p.trial_rate, emission_rng);
  const double base_shift = 4.0 * p.bin_separation; // keep all times positive
  auto port_of = [](Outcome o, Rng& rng) {
    if (o == Outcome::random) return rng.bernoulli(0.5) ? 1 : 0;
    return o == Outcome::plus ? 0 : 1;
  };
  for (std::size_t i = 0; i < trials.size(); ++i) {
    Rng rng(derive_seed(p.seed, detail::kTagPairBase + i));
    const double t0 = trials[i] + base_shift;
    const int arm_a = rng.bernoulli(0.5) ? 1 : 0;
    const int arm_b = rng.bernoulli(0.5) ? 1 : 0;
    const Outcome oa = (arm_a == 0) ? p.table.a0 : p.table.a1;
    const Outcome ob = (arm_b == 0) ? p.table.b0 : p.table.b1;
    double ta = t0 + arm_a * p.bin_separation;
    double tb = t0 + (p.table.offset + arm_b) * p.bin_separation;
    if (p.jitter_sigma > 0) {
      ta += rng.normal(0.0, p.jitter_sigma);
      tb += rng.normal(0.0, p.jitter_sigma);
    }
    events.push_back({ta, Party::alice, static_cast<std::uint8_t>(port_of(oa, rng)), Origin::photon});
    events.push_back({tb, Party::bob, static_cast<std::uint8_t>(port_of(ob, rng)), Origin::photon});
  }
  std::sort(events.begin(), events.end());
  return events;
}

} // namespace timebin
