// The S witness: per-peak statistics, the linear functional over them, the
// classical (local hidden variable) strategy model under the trusted
// beam-splitter assumption, its exhaustive maximum, and S from measured data.
//
// S = sum_{x in {0,+-1}} P(T_x) E(T_x)
//   + 2 sum_{x = +-2} P(T_x) (1 - |E(T_x)|)
//   - sum_{x = +-3} P(T_x)
//
// The T+-2 term penalizes correlation magnitude. With a signed term a
// deterministic table (offset +-2, anticorrelated outcomes) would score S = 2;
// with the magnitude the exhaustive maximum over deterministic/random tables
// is exactly 1, for every outcome-sign calibration, while the ideal source
// reaches 1.25. Arbitrary per-trial mixtures of tables can reach at most 7/6
// (linear-programming maximum over the behavior polytope), still below 1.25.
#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "timebin/common.hpp"
#include "timebin/engine.hpp"

namespace timebin {

/// Normalized per-peak probabilities and correlators, delta in [-3, +3].
/// E may be absent where P = 0 (those terms vanish in S).
struct PeakStatistics {
  std::array<double, 7> p{};
  std::array<std::optional<double>, 7> e{};

  double& prob(int delta) { return p[static_cast<std::size_t>(delta + 3)]; }
  double prob(int delta) const { return p[static_cast<std::size_t>(delta + 3)]; }
  std::optional<double>& corr(int delta) { return e[static_cast<std::size_t>(delta + 3)]; }
  const std::optional<double>& corr(int delta) const {
    return e[static_cast<std::size_t>(delta + 3)];
  }

  void validate() const {
    double sum = 0.0;
    for (int d = -3; d <= 3; ++d) {
      if (prob(d) < -1e-12) throw std::invalid_argument("peak probability < 0");
      sum += prob(d);
      if (corr(d) && std::abs(*corr(d)) > 1.0 + 1e-9)
        throw std::invalid_argument("correlator outside [-1, 1]");
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("peak probabilities must sum to 1");
  }
};

/// The witness functional. Throws if a needed correlator is missing.
inline double s_metric(const PeakStatistics& stats) {
  double s = 0.0;
  for (int d : {0, 1, -1, 2, -2}) {
    const double pd = stats.prob(d);
    if (pd == 0.0) continue;
    if (!stats.corr(d))
      throw std::invalid_argument("s_metric: correlator undefined at a populated peak T" +
                                  std::to_string(d));
    const double ed = *stats.corr(d);
    if (d == 2 || d == -2)
      s += 2.0 * pd * (1.0 - std::abs(ed));
    else
      s += pd * ed;
  }
  s -= stats.prob(3) + stats.prob(-3);
  return s;
}

enum class Outcome : int { plus = +1, minus = -1, random = 0 };

/// Eve's table: a time offset and the four committed outcomes
/// a(tau_A), a(tau_A+1), b(tau_B), b(tau_B+1). `random` means an independent
/// fair coin at detection time.
struct StrategyTable {
  int offset = 0; // tau_B - tau_A, in [-3, 3]
  Outcome a0 = Outcome::plus;
  Outcome a1 = Outcome::plus;
  Outcome b0 = Outcome::plus;
  Outcome b1 = Outcome::plus;

  void validate() const {
    if (offset < -3 || offset > 3) throw std::invalid_argument("strategy offset outside [-3, 3]");
  }
};

inline char outcome_char(Outcome o) {
  return o == Outcome::plus ? '+' : (o == Outcome::minus ? '-' : 'r');
}

/// Exact per-peak behavior of a table, averaging over the four equally likely
/// beam-splitter arm choices; `beamsplitter_ratio` is the probability of the
/// long arm (0.5 for the balanced case). Events falling outside the seven
/// windows (possible only for |offset| = 3) are dropped and the remaining mass
/// renormalized.
inline PeakStatistics strategy_statistics(const StrategyTable& table,
                                          double beamsplitter_ratio = 0.5) {
  table.validate();
  if (!(beamsplitter_ratio > 0.0 && beamsplitter_ratio < 1.0))
    throw std::invalid_argument("beam-splitter ratio must lie in (0, 1)");
  const Outcome a[2] = {table.a0, table.a1};
  const Outcome b[2] = {table.b0, table.b1};
  std::array<double, 7> p{};
  std::array<double, 7> u{}; // correlation mass P*E
  double in_window = 0.0;
  for (int arm_a = 0; arm_a < 2; ++arm_a)
    for (int arm_b = 0; arm_b < 2; ++arm_b) {
      const double w = (arm_a ? beamsplitter_ratio : 1.0 - beamsplitter_ratio) *
                       (arm_b ? beamsplitter_ratio : 1.0 - beamsplitter_ratio);
      const int delta = table.offset + arm_b - arm_a;
      if (delta < -3 || delta > 3) continue;
      const int prod = static_cast<int>(a[arm_a]) * static_cast<int>(b[arm_b]);
      p[static_cast<std::size_t>(delta + 3)] += w;
      u[static_cast<std::size_t>(delta + 3)] += w * prod; // random entries contribute 0
      in_window += w;
    }
  PeakStatistics stats;
  for (int i = 0; i < 7; ++i) {
    stats.p[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(i)] / in_window;
    if (p[static_cast<std::size_t>(i)] > 0.0)
      stats.e[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)] / p[static_cast<std::size_t>(i)];
  }
  return stats;
}

/// Apply a fixed outcome-sign calibration to observed statistics. T+-2 peaks
/// are unaffected (only |E| enters S there).
inline PeakStatistics apply_calibration(PeakStatistics stats, const CalibrationSigns& signs) {
  if (stats.corr(0)) stats.corr(0) = signs.t0 * *stats.corr(0);
  for (int d : {-1, 1})
    if (stats.corr(d)) stats.corr(d) = signs.t1 * *stats.corr(d);
  return stats;
}

inline double s_metric(const StrategyTable& table, const CalibrationSigns& signs = {}) {
  return s_metric(apply_calibration(strategy_statistics(table), signs));
}

struct StrategyScore {
  StrategyTable table;
  double s;
};

struct ClassicalSearchResult {
  double s_max = 0.0;
  std::vector<StrategyScore> all;         // every table with its S value
  std::vector<StrategyTable> maximizers;  // tables attaining s_max
};

inline std::vector<StrategyTable> enumerate_strategy_tables() {
  const Outcome vals[3] = {Outcome::plus, Outcome::minus, Outcome::random};
  std::vector<StrategyTable> tables;
  tables.reserve(7 * 81);
  for (int off = -3; off <= 3; ++off)
    for (Outcome a0 : vals)
      for (Outcome a1 : vals)
        for (Outcome b0 : vals)
          for (Outcome b1 : vals) tables.push_back({off, a0, a1, b0, b1});
  return tables;
}

/// Exhaustive search over the 7 x 81 tables. All involved probabilities are
/// dyadic, so the maximum is exact in double precision.
inline ClassicalSearchResult classical_max(const CalibrationSigns& signs = {}) {
  ClassicalSearchResult res;
  res.all.reserve(7 * 81);
  for (const auto& t : enumerate_strategy_tables()) {
    const double s = s_metric(t, signs);
    res.all.push_back({t, s});
    if (s > res.s_max) res.s_max = s;
  }
  for (const auto& sc : res.all)
    if (sc.s == res.s_max) res.maximizers.push_back(sc.table);
  return res;
}

/// Per-peak statistics of an engine distribution under a fixed calibration.
inline PeakStatistics statistics_from_distribution(const CoincidenceDistribution& dist,
                                                   const CalibrationSigns& signs) {
  PeakStatistics stats;
  for (int d = -3; d <= 3; ++d) {
    stats.prob(d) = dist.peak_total(d);
    stats.corr(d) = correlator(dist, d, signs);
  }
  return stats;
}

/// S predicted by the amplitude model at its own calibrated working point.
/// Ideal weights and phase_a = phase_b = 0 (or the -pi/2, +pi/2 configuration)
/// give exactly 1.25.
inline double quantum_ideal_s(const EngineConfig& cfg, const CoherenceWeights& weights) {
  const auto dist = coincidence_distribution(cfg, weights);
  return s_metric(statistics_from_distribution(dist, calibration_signs(dist)));
}

enum class Verdict { classical_compatible, quantum };

struct SMetricReport {
  double s = 0.0;
  double sigma = 0.0;
  double n_sigma_above_classical = 0.0;
  Verdict verdict = Verdict::classical_compatible;
  PeakStatistics stats;             // calibrated
  CalibrationSigns signs;
  double threshold_sigmas = 5.0;
  bool t2_populated = false;        // lateral witness peaks carried data
  std::int64_t coincidences = 0;
};

inline Verdict decide(double s, double sigma, double threshold) {
  return (s - 1.0 > threshold * sigma) ? Verdict::quantum : Verdict::classical_compatible;
}

namespace detail {

/// First-order error propagation: multinomial covariance for P plus
/// independent per-peak correlator errors.
inline double propagate_s_error(const PeakStatistics& stats,
                                const std::array<double, 7>& e_err, double n_coinc) {
  // dS/dP coefficients
  std::array<double, 7> coeff{};
  for (int d = -3; d <= 3; ++d) {
    const auto i = static_cast<std::size_t>(d + 3);
    if (d == 0 || d == 1 || d == -1)
      coeff[i] = stats.corr(d) ? *stats.corr(d) : 0.0;
    else if (d == 2 || d == -2)
      coeff[i] = 2.0 * (1.0 - (stats.corr(d) ? std::abs(*stats.corr(d)) : 0.0));
    else
      coeff[i] = -1.0;
  }
  double mean_c = 0.0, mean_c2 = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    mean_c += coeff[i] * stats.p[i];
    mean_c2 += coeff[i] * coeff[i] * stats.p[i];
  }
  double var = (mean_c2 - mean_c * mean_c) / n_coinc;
  for (int d = -3; d <= 3; ++d) {
    const auto i = static_cast<std::size_t>(d + 3);
    const double dsde = (d == 0 || d == 1 || d == -1) ? stats.p[i]
                        : (d == 2 || d == -2)         ? 2.0 * stats.p[i]
                                                      : 0.0;
    var += dsde * dsde * e_err[i] * e_err[i];
  }
  return std::sqrt(var);
}

} // namespace detail

/// S from measured window counts and fitted fringe visibilities (the
/// experimental route): E = calibrated sign x visibility at T0 and T+-1,
/// E = fitted magnitude at T+-2. Requires statistics at T0, T+-1, T+-2.
inline SMetricReport s_from_measurements(const std::array<std::int64_t, 7>& window_counts,
                                         const std::array<double, 7>& visibility,
                                         const std::array<double, 7>& visibility_err,
                                         const CalibrationSigns& signs,
                                         double threshold_sigmas = 5.0) {
  std::int64_t total = 0;
  for (auto c : window_counts) {
    if (c < 0) throw std::invalid_argument("negative window count");
    total += c;
  }
  if (total <= 0) throw InsufficientStatsError("no coincidences in the peak windows");
  for (int d : {0, 1, -1, 2, -2})
    if (window_counts[static_cast<std::size_t>(d + 3)] <= 0)
      throw InsufficientStatsError("witness requires counts at T" + std::to_string(d));

  SMetricReport rep;
  rep.signs = signs;
  rep.threshold_sigmas = threshold_sigmas;
  rep.coincidences = total;
  rep.t2_populated = true;
  std::array<double, 7> e_err{};
  for (int d = -3; d <= 3; ++d) {
    const auto i = static_cast<std::size_t>(d + 3);
    rep.stats.p[i] = static_cast<double>(window_counts[i]) / static_cast<double>(total);
    if (d == 0)
      rep.stats.e[i] = signs.t0 * std::abs(visibility[i]);
    else if (d == 1 || d == -1)
      rep.stats.e[i] = signs.t1 * std::abs(visibility[i]);
    else if (d == 2 || d == -2)
      rep.stats.e[i] = std::abs(visibility[i]);
    e_err[i] = visibility_err[i];
  }
  // Calibrated visibilities are taken as positive magnitudes, so the signs
  // above already encode the working-point convention.
  for (int d : {0, 1, -1})
    rep.stats.corr(d) = std::abs(*rep.stats.corr(d));
  rep.s = s_metric(rep.stats);
  rep.sigma = detail::propagate_s_error(rep.stats, e_err, static_cast<double>(total));
  rep.n_sigma_above_classical = (rep.sigma > 0.0) ? (rep.s - 1.0) / rep.sigma : 0.0;
  rep.verdict = decide(rep.s, rep.sigma, threshold_sigmas);
  return rep;
}

/// S from port-resolved coincidence counting at fixed phases (used for
/// classical-strategy streams and the QKD channel check, where there is no
/// fringe to fit). counts[delta+3][port_a][port_b].
inline SMetricReport s_from_counts(
    const std::array<std::array<std::array<std::int64_t, 2>, 2>, 7>& counts,
    const CalibrationSigns& signs, double threshold_sigmas = 5.0) {
  std::array<std::int64_t, 7> window{};
  std::array<std::int64_t, 7> same{};
  std::int64_t total = 0;
  for (int d = -3; d <= 3; ++d) {
    const auto i = static_cast<std::size_t>(d + 3);
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) {
        const auto c = counts[i][static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
        if (c < 0) throw std::invalid_argument("negative coincidence count");
        window[i] += c;
        if (p == q) same[i] += c;
      }
    total += window[i];
  }
  if (total <= 0) throw InsufficientStatsError("no coincidences in the peak windows");

  SMetricReport rep;
  rep.signs = signs;
  rep.threshold_sigmas = threshold_sigmas;
  rep.coincidences = total;
  rep.t2_populated = window[1] > 0 && window[5] > 0;
  std::array<double, 7> e_err{};
  PeakStatistics raw;
  for (int d = -3; d <= 3; ++d) {
    const auto i = static_cast<std::size_t>(d + 3);
    raw.p[i] = static_cast<double>(window[i]) / static_cast<double>(total);
    if (window[i] > 0) {
      const double n = static_cast<double>(window[i]);
      const double e = (2.0 * static_cast<double>(same[i]) - n) / n;
      raw.e[i] = e;
      e_err[i] = std::sqrt(std::max(0.0, 1.0 - e * e) / n) + 1.0 / n;
    }
  }
  rep.stats = apply_calibration(raw, signs);
  rep.s = s_metric(rep.stats);
  rep.sigma = detail::propagate_s_error(rep.stats, e_err, static_cast<double>(total));
  rep.n_sigma_above_classical = (rep.sigma > 0.0) ? (rep.s - 1.0) / rep.sigma : 0.0;
  rep.verdict = decide(rep.s, rep.sigma, threshold_sigmas);
  return rep;
}

} // namespace timebin
