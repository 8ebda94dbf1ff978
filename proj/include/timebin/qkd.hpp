// Passive entanglement-based QKD post-processing: basis assignment by peak,
// sifting, QBER, usable-pair fraction, and the S-based channel check.
//
// Basis T0 <- the central peak, basis T1 <- the two first lateral peaks.
// T+-2 coincidences are reserved for the witness, T+-3 counted as alarms.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "timebin/common.hpp"
#include "timebin/engine.hpp"
#include "timebin/histogram.hpp"
#include "timebin/witness.hpp"

namespace timebin {

enum class Basis : std::uint8_t { t0 = 0, t1 = 1 };

struct SiftedBit {
  Basis basis;
  std::uint8_t alice;
  std::uint8_t bob;
};

struct SiftedKey {
  std::vector<SiftedBit> bits;
  std::array<std::int64_t, 2> per_basis{};     // sifted bits per basis
  std::array<std::int64_t, 7> window_counts{}; // coincidences per delta window
  std::int64_t witness_reserved = 0;           // T+-2
  std::int64_t alarms = 0;                     // T+-3
  std::int64_t out_of_window = 0;              // paired but between peaks

  std::int64_t in_window_total() const {
    std::int64_t t = 0;
    for (auto c : window_counts) t += c;
    return t;
  }
  /// Fraction of in-window coincidences usable as key (T0 and T+-1).
  double usable_fraction() const {
    const auto t = in_window_total();
    return t > 0 ? static_cast<double>(per_basis[0] + per_basis[1]) / static_cast<double>(t) : 0.0;
  }
};

/// Assign coincidences to bases by peak index and extract bits from ports.
/// Alice: bit = port. Bob: bit = port, flipped where the per-basis
/// calibration sign is negative, so the calibrated ideal has QBER 0.
inline SiftedKey sift(const std::vector<Coincidence>& coincidences, double bin_separation,
                      double window, const CalibrationSigns& signs) {
  if (!(window > 0.0) || !(window < bin_separation))
    throw std::invalid_argument("sift window must satisfy 0 < window < bin separation");
  SiftedKey key;
  for (const auto& c : coincidences) {
    const double k = std::round(c.dt() / bin_separation);
    if (k < -3 || k > 3 || std::abs(c.dt() - k * bin_separation) > window / 2.0) {
      ++key.out_of_window;
      continue;
    }
    const int delta = static_cast<int>(k);
    ++key.window_counts[static_cast<std::size_t>(delta + 3)];
    if (delta == 0) {
      const std::uint8_t bob = signs.t0 < 0 ? static_cast<std::uint8_t>(1 - c.port_bob) : c.port_bob;
      key.bits.push_back({Basis::t0, c.port_alice, bob});
      ++key.per_basis[0];
    } else if (delta == 1 || delta == -1) {
      const std::uint8_t bob = signs.t1 < 0 ? static_cast<std::uint8_t>(1 - c.port_bob) : c.port_bob;
      key.bits.push_back({Basis::t1, c.port_alice, bob});
      ++key.per_basis[1];
    } else if (delta == 2 || delta == -2) {
      ++key.witness_reserved;
    } else {
      ++key.alarms;
    }
  }
  return key;
}

struct QberReport {
  struct PerBasis {
    std::int64_t bits = 0;
    std::int64_t errors = 0;
    bool defined = false;
    double qber = 0.0;
    double stderr_qber = 0.0;
  };
  PerBasis t0, t1;
};

/// Per-basis fraction of anticorrelated bits. An empty basis is flagged
/// rather than reported as zero.
inline QberReport qber(const SiftedKey& key) {
  QberReport rep;
  for (const auto& b : key.bits) {
    auto& acc = (b.basis == Basis::t0) ? rep.t0 : rep.t1;
    ++acc.bits;
    if (b.alice != b.bob) ++acc.errors;
  }
  for (auto* acc : {&rep.t0, &rep.t1}) {
    if (acc->bits > 0) {
      acc->defined = true;
      const double n = static_cast<double>(acc->bits);
      acc->qber = static_cast<double>(acc->errors) / n;
      acc->stderr_qber = std::sqrt(std::max(acc->qber * (1.0 - acc->qber), 1.0 / n) / n);
    }
  }
  return rep;
}

enum class ChannelDecision { accept, abort };

/// Accept the channel only when S sits above the classical bound by the
/// requested number of standard errors.
inline ChannelDecision channel_check(const SMetricReport& report, double threshold_sigmas) {
  return (report.s - 1.0 > threshold_sigmas * report.sigma) ? ChannelDecision::accept
                                                            : ChannelDecision::abort;
}

} // namespace timebin
