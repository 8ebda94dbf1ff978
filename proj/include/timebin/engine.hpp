// Two-photon amplitude model of the cross time-bin source, transcriber,
// post-selection and the two unbalanced analysis interferometers.
//
// Conventions used throughout:
//   * time bins are integers in units of the bin separation; bin 0 is the
//     short (early) transcriber output, bin 1 the long (late) one;
//   * relative delay delta = bob_bin - alice_bin, restricted to [-3, +3];
//   * each analyzer maps |tau> -> sum_{arm,port} (1/2) e^{i arm phi} s(port,arm)
//     |tau+arm, port> with s = +1 except s(port=1, arm=1) = -1, i.e. port 0 is
//     the constructive output at phi = 0.
//
// Coincidence probabilities come from summing interfering path amplitudes with
// pairwise overlap weights: paths whose absolute detection times differ by k
// bins overlap by mu^|k| (pump coherence), paths with identical times but the
// transcriber/analyzer delay roles swapped overlap by nu.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <optional>
#include <vector>

#include "timebin/common.hpp"

namespace timebin {

enum class SourceMode { transcribed, bypass };

struct EngineConfig {
  double phase_a = 0.0;            // phi_A [rad]
  double phase_b = 0.0;            // phi_B [rad]
  double transcriber_phase = 0.0;  // chi [rad], accumulated on the long arm
  double bin_separation = 2e-9;          // [s]
  double pump_coherence_time = 400e-9;   // [s]
  double photon_coherence_time = 17e-12; // [s]
  double analyzer_mismatch = 0.3e-3;     // [m]
  SourceMode source_mode = SourceMode::transcribed;

  void validate() const {
    if (!(bin_separation > 0.0) || !(pump_coherence_time > 0.0) ||
        !(photon_coherence_time > 0.0))
      throw ConfigError("engine: times must be strictly positive");
    if (!(analyzer_mismatch >= 0.0) || !std::isfinite(analyzer_mismatch))
      throw ConfigError("engine: analyzer_mismatch must be >= 0");
    if (!std::isfinite(phase_a) || !std::isfinite(phase_b) ||
        !std::isfinite(transcriber_phase))
      throw ConfigError("engine: phases must be finite");
  }
};

/// Scalar coherence weights entering the path-overlap matrix.
struct CoherenceWeights {
  double nu = 1.0; // overlap of the two T0-type paths (delay roles swapped)
  double mu = 1.0; // overlap per one-bin shift of the emission time

  void validate() const {
    if (!(nu >= 0.0 && nu <= 1.0) || !(mu >= 0.0 && mu <= 1.0))
      throw std::invalid_argument("coherence weights must lie in [0, 1]");
  }

  static CoherenceWeights ideal() { return {1.0, 1.0}; }

  /// Defaults derived from the physical configuration. Both photons swap
  /// their transcriber/analyzer delay roles between the two T0 paths, so the
  /// pair overlap is the per-photon Gaussian overlap squared.
  static CoherenceWeights from_config(const EngineConfig& cfg) {
    const double lc = kSpeedOfLight * cfg.photon_coherence_time;
    const double r = cfg.analyzer_mismatch / lc;
    CoherenceWeights w;
    w.nu = std::exp(-2.0 * r * r);
    w.mu = std::exp(-cfg.bin_separation / cfg.pump_coherence_time);
    return w;
  }
};

enum class Party : std::uint8_t { alice = 0, bob = 1 };

/// One coherent alternative for the emitted pair before any analyzer:
/// the early photon (transcriber short arm) and the late photon (long arm),
/// each routed to a party.
struct PairPath {
  std::complex<double> amplitude;
  Party early_party;
  int early_bin;
  Party late_party;
  int late_bin;
};

struct TwoPhotonPathSet {
  SourceMode mode = SourceMode::transcribed;
  std::vector<PairPath> paths;

  double norm() const {
    double n = 0.0;
    for (const auto& p : paths) n += std::norm(p.amplitude);
    return n;
  }
};

/// Post-selected path: exactly one photon per party.  emission_shift tracks
/// the emission-time offset (in bins) relative to the pair reference; it is 0
/// for every source path and only absolute-time differences matter downstream.
struct CrossPath {
  std::complex<double> amplitude;
  int alice_bin;
  int bob_bin;
  int emission_shift = 0;
};

struct CrossPathSet {
  SourceMode mode = SourceMode::transcribed;
  std::vector<CrossPath> paths;
};

struct PostselectResult {
  CrossPathSet state;       // renormalized
  double probability = 1.0; // fraction of pairs that survive post-selection
};

/// Single-photon analyzer amplitude for (arm, port) at interferometer phase.
/// The two-port map is unitary: port-0 intensity |1+e^{i phi}|^2/4, port-1
/// |1-e^{i phi}|^2/4.
inline std::complex<double> analyzer_amplitude(int arm, int port, double phase) {
  const double sign = (arm == 1 && port == 1) ? -1.0 : 1.0;
  return 0.5 * sign * std::polar(1.0, arm * phase);
}

/// State after transcriber (or bypass) and the 45-degree splitting stage.
inline TwoPhotonPathSet build_source_state(const EngineConfig& cfg) {
  cfg.validate();
  TwoPhotonPathSet set;
  set.mode = cfg.source_mode;
  if (cfg.source_mode == SourceMode::bypass) {
    // Deterministic split, both photons in the same bin; the transcriber and
    // its phase are not in the path.
    set.paths.push_back({{1.0, 0.0}, Party::alice, 0, Party::bob, 0});
    return set;
  }
  // (1/2)(|0_A 1_A> + |0_A 1_B> - |1_A 0_B> - |1_B 0_B>); the late photon
  // always carries the transcriber phase chi, making it a global factor.
  const std::complex<double> chi = std::polar(0.5, cfg.transcriber_phase);
  set.paths.push_back({chi, Party::alice, 0, Party::alice, 1});
  set.paths.push_back({chi, Party::alice, 0, Party::bob, 1});
  set.paths.push_back({-chi, Party::bob, 0, Party::alice, 1});
  set.paths.push_back({-chi, Party::bob, 0, Party::bob, 1});
  return set;
}

/// Keep one-photon-per-party paths and renormalize.
inline PostselectResult postselect_cross(const TwoPhotonPathSet& state) {
  PostselectResult out;
  out.state.mode = state.mode;
  double kept = 0.0;
  for (const auto& p : state.paths) {
    if (p.early_party == p.late_party) continue;
    const int alice_bin = (p.early_party == Party::alice) ? p.early_bin : p.late_bin;
    const int bob_bin = (p.early_party == Party::bob) ? p.early_bin : p.late_bin;
    out.state.paths.push_back({p.amplitude, alice_bin, bob_bin, 0});
    kept += std::norm(p.amplitude);
  }
  if (out.state.paths.empty())
    throw ConfigError("post-selection removed every path; no cross events possible");
  out.probability = kept;
  const double scale = 1.0 / std::sqrt(kept);
  for (auto& p : out.state.paths) p.amplitude *= scale;
  return out;
}

/// Fully resolved detection alternative after both analyzers.
struct DetectionPath {
  std::complex<double> amplitude;
  int alice_bin;  // absolute detection bin at Alice
  int bob_bin;
  int alice_port;
  int bob_port;
  int alice_pre_delay; // bins of delay acquired before the analyzer
  int bob_pre_delay;
};

inline std::vector<DetectionPath> enumerate_detection_paths(const EngineConfig& cfg) {
  const PostselectResult ps = postselect_cross(build_source_state(cfg));
  std::vector<DetectionPath> paths;
  paths.reserve(ps.state.paths.size() * 16);
  for (const auto& src : ps.state.paths) {
    for (int arm_a = 0; arm_a < 2; ++arm_a)
      for (int port_a = 0; port_a < 2; ++port_a)
        for (int arm_b = 0; arm_b < 2; ++arm_b)
          for (int port_b = 0; port_b < 2; ++port_b) {
            DetectionPath d;
            d.amplitude = src.amplitude *
                          analyzer_amplitude(arm_a, port_a, cfg.phase_a) *
                          analyzer_amplitude(arm_b, port_b, cfg.phase_b);
            d.alice_bin = src.alice_bin + arm_a + src.emission_shift;
            d.bob_bin = src.bob_bin + arm_b + src.emission_shift;
            d.alice_port = port_a;
            d.bob_port = port_b;
            d.alice_pre_delay = src.alice_bin;
            d.bob_pre_delay = src.bob_bin;
            paths.push_back(d);
          }
  }
  return paths;
}

/// Probability table over (delta, alice_port, bob_port) for post-selected
/// coincidences; sums to 1.
struct CoincidenceDistribution {
  static constexpr int kMaxDelta = 3;

  // prob[delta + 3][alice_port][bob_port]
  std::array<std::array<std::array<double, 2>, 2>, 7> prob{};
  double postselect_probability = 1.0;
  SourceMode mode = SourceMode::transcribed;

  double& at(int delta, int port_a, int port_b) {
    return prob[static_cast<std::size_t>(delta + kMaxDelta)][static_cast<std::size_t>(port_a)][static_cast<std::size_t>(port_b)];
  }
  double at(int delta, int port_a, int port_b) const {
    return prob[static_cast<std::size_t>(delta + kMaxDelta)][static_cast<std::size_t>(port_a)][static_cast<std::size_t>(port_b)];
  }

  double peak_total(int delta) const {
    double t = 0.0;
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) t += at(delta, p, q);
    return t;
  }

  double total() const {
    double t = 0.0;
    for (int d = -kMaxDelta; d <= kMaxDelta; ++d) t += peak_total(d);
    return t;
  }
};

/// Overlap weight between two detection paths of equal (delta, ports).
inline double path_overlap(const DetectionPath& a, const DetectionPath& b,
                           const CoherenceWeights& w) {
  const int k = a.alice_bin - b.alice_bin; // == bob_bin difference at equal delta
  if (k != 0) return std::pow(w.mu, std::abs(k));
  // Identical absolute times: either the very same path, or the transcriber
  // and analyzer delay roles are swapped between the two.
  if (a.alice_pre_delay == b.alice_pre_delay && a.bob_pre_delay == b.bob_pre_delay)
    return 1.0;
  return w.nu;
}

inline CoincidenceDistribution coincidence_distribution(const EngineConfig& cfg,
                                                        const CoherenceWeights& weights) {
  weights.validate();
  const auto paths = enumerate_detection_paths(cfg);
  CoincidenceDistribution dist;
  dist.mode = cfg.source_mode;
  dist.postselect_probability = postselect_cross(build_source_state(cfg)).probability;

  // Group by observable signature and sum c_i c_j^* O_ij.
  for (int delta = -CoincidenceDistribution::kMaxDelta;
       delta <= CoincidenceDistribution::kMaxDelta; ++delta) {
    for (int pa = 0; pa < 2; ++pa)
      for (int pb = 0; pb < 2; ++pb) {
        std::vector<const DetectionPath*> group;
        for (const auto& p : paths)
          if (p.bob_bin - p.alice_bin == delta && p.alice_port == pa && p.bob_port == pb)
            group.push_back(&p);
        double prob = 0.0;
        for (std::size_t i = 0; i < group.size(); ++i)
          for (std::size_t j = 0; j < group.size(); ++j) {
            const double o = path_overlap(*group[i], *group[j], weights);
            prob += o * std::real(group[i]->amplitude * std::conj(group[j]->amplitude));
          }
        dist.at(delta, pa, pb) = prob;
      }
  }
  return dist;
}

/// Port-sign correlator of one peak: [P(same ports) - P(opposite)] / P(peak),
/// with outcome +1 on port 0. Empty peak -> nullopt (must not enter S).
inline std::optional<double> port_correlator(const CoincidenceDistribution& dist, int delta) {
  const double tot = dist.peak_total(delta);
  if (tot <= 0.0) return std::nullopt;
  const double same = dist.at(delta, 0, 0) + dist.at(delta, 1, 1);
  const double diff = dist.at(delta, 0, 1) + dist.at(delta, 1, 0);
  return (same - diff) / tot;
}

/// Per-peak-class outcome-sign calibration. Chosen so the calibrated
/// correlator is +1 at the ideal point of the configured phases; the T0 and
/// T+-1 classes need independent signs (no global relabeling fixes both).
struct CalibrationSigns {
  int t0 = +1; // applied to the T0 correlator
  int t1 = +1; // applied to the T+-1 correlators
};

/// Signs derived from the engine's analytic prediction for this configuration.
inline CalibrationSigns calibration_signs(const CoincidenceDistribution& dist) {
  CalibrationSigns s;
  if (auto e0 = port_correlator(dist, 0); e0 && *e0 < 0.0) s.t0 = -1;
  double e1 = 0.0;
  int n = 0;
  for (int d : {-1, +1})
    if (auto e = port_correlator(dist, d); e) {
      e1 += *e;
      ++n;
    }
  if (n > 0 && e1 < 0.0) s.t1 = -1;
  return s;
}

/// Calibrated correlator (the convention under which ideal peaks read +1).
inline std::optional<double> correlator(const CoincidenceDistribution& dist, int delta,
                                        const CalibrationSigns& signs) {
  auto e = port_correlator(dist, delta);
  if (!e) return std::nullopt;
  if (delta == 0) return signs.t0 * *e;
  if (delta == 1 || delta == -1) return signs.t1 * *e;
  return *e;
}

struct ScanRow {
  double phase_a;
  int delta;
  int alice_port;
  int bob_port;
  double rate; // probability per post-selected coincidence
};

/// Per-peak, per-port-pair rates across a phase_a grid at fixed phase_b.
/// T0 rows depend on phase_a - phase_b only; T+-1 rows on phase_a + phase_b.
inline std::vector<ScanRow> fringe_scan(EngineConfig cfg, const CoherenceWeights& weights,
                                        const std::vector<double>& phase_grid) {
  if (phase_grid.empty()) throw std::invalid_argument("fringe_scan: empty phase grid");
  std::vector<ScanRow> rows;
  rows.reserve(phase_grid.size() * 28);
  for (double phi : phase_grid) {
    cfg.phase_a = phi;
    const auto dist = coincidence_distribution(cfg, weights);
    for (int d = -3; d <= 3; ++d)
      for (int pa = 0; pa < 2; ++pa)
        for (int pb = 0; pb < 2; ++pb)
          rows.push_back({phi, d, pa, pb, dist.at(d, pa, pb)});
  }
  return rows;
}

/// Diagonal (which-path) weights used by the stochastic simulator to assign
/// absolute bins once an observable outcome has been drawn.
struct PeakTimingAlternative {
  int alice_bin;
  int bob_bin;
  double weight; // relative within the peak
};

inline std::array<std::vector<PeakTimingAlternative>, 7>
peak_timing_alternatives(const EngineConfig& cfg) {
  const auto paths = enumerate_detection_paths(cfg);
  std::array<std::vector<PeakTimingAlternative>, 7> out;
  for (const auto& p : paths) {
    const int delta = p.bob_bin - p.alice_bin;
    if (delta < -3 || delta > 3) continue;
    auto& alts = out[static_cast<std::size_t>(delta + 3)];
    const double w = std::norm(p.amplitude);
    bool found = false;
    for (auto& a : alts)
      if (a.alice_bin == p.alice_bin && a.bob_bin == p.bob_bin) {
        a.weight += w;
        found = true;
      }
    if (!found) alts.push_back({p.alice_bin, p.bob_bin, w});
  }
  return out;
}

} // namespace timebin
