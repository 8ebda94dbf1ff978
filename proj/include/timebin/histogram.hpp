// Arrival-time-difference histograms, peak-window integration, fringe fits
// and raw/net visibilities.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "timebin/common.hpp"
#include "timebin/engine.hpp"
#include "timebin/sim.hpp"

namespace timebin {

/// One Alice-Bob click pair within the pairing span.
struct Coincidence {
  double t_alice = 0.0;
  double t_bob = 0.0;
  std::uint8_t port_alice = 0;
  std::uint8_t port_bob = 0;

  double dt() const { return t_bob - t_alice; }
};

/// Start-multi-stop pairing: every Alice click pairs with every Bob click
/// with |t_B - t_A| <= span. Events must be time-ordered.
inline std::vector<Coincidence> find_coincidences(std::span<const DetectionEvent> events,
                                                  double span) {
  if (!(span > 0.0)) throw std::invalid_argument("pairing span must be > 0");
  std::vector<DetectionEvent> alice, bob;
  for (const auto& e : events)
    (e.party == Party::alice ? alice : bob).push_back(e);
  std::vector<Coincidence> out;
  std::size_t lo = 0;
  for (const auto& a : alice) {
    while (lo < bob.size() && bob[lo].time < a.time - span) ++lo;
    for (std::size_t j = lo; j < bob.size() && bob[j].time <= a.time + span; ++j)
      out.push_back({a.time, bob[j].time, a.port, bob[j].port});
  }
  return out;
}

/// Counts of (B time - A time) differences over [-range, +range).
struct Histogram {
  double bin_width = 0.0;
  double range = 0.0; // half-span
  std::vector<std::int64_t> counts;

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double center(std::size_t i) const {
    return -range + (static_cast<double>(i) + 0.5) * bin_width;
  }
};

inline Histogram build_histogram(std::span<const DetectionEvent> events, double bin_width,
                                 double range) {
  if (!(bin_width > 0.0) || !(range > 0.0))
    throw std::invalid_argument("histogram bin width and range must be > 0");
  Histogram h;
  h.bin_width = bin_width;
  h.range = range;
  h.counts.assign(static_cast<std::size_t>(std::ceil(2.0 * range / bin_width)), 0);
  for (const auto& c : find_coincidences(events, range)) {
    const double x = c.dt() + range;
    const auto idx = static_cast<std::size_t>(x / bin_width);
    if (idx < h.counts.size()) ++h.counts[idx];
  }
  return h;
}

/// Sum histogram counts within +-window/2 of each peak center k * separation,
/// k in [-3, 3]. Windows must not overlap.
inline std::array<std::int64_t, 7> integrate_peaks(const Histogram& h, double bin_separation,
                                                   double window) {
  if (!(window > 0.0) || !(window < bin_separation))
    throw std::invalid_argument("peak window must satisfy 0 < window < bin separation");
  std::array<std::int64_t, 7> out{};
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double t = h.center(i);
    const double k = std::round(t / bin_separation);
    if (k < -3 || k > 3) continue;
    if (std::abs(t - k * bin_separation) <= window / 2.0)
      out[static_cast<std::size_t>(k) + 3] += h.counts[i];
  }
  return out;
}

/// Per-peak 2x2 port-resolved coincidence counts, straight from click pairs.
struct PeakPortCounts {
  std::array<std::array<std::array<std::int64_t, 2>, 2>, 7> n{};
  std::int64_t out_of_window = 0;

  std::int64_t& at(int delta, int port_a, int port_b) {
    return n[static_cast<std::size_t>(delta + 3)][static_cast<std::size_t>(port_a)][static_cast<std::size_t>(port_b)];
  }
  std::int64_t at(int delta, int port_a, int port_b) const {
    return n[static_cast<std::size_t>(delta + 3)][static_cast<std::size_t>(port_a)][static_cast<std::size_t>(port_b)];
  }
  std::int64_t window_total(int delta) const {
    std::int64_t t = 0;
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) t += at(delta, p, q);
    return t;
  }
  std::array<std::int64_t, 7> window_totals() const {
    std::array<std::int64_t, 7> w{};
    for (int d = -3; d <= 3; ++d) w[static_cast<std::size_t>(d + 3)] = window_total(d);
    return w;
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (int d = -3; d <= 3; ++d) t += window_total(d);
    return t;
  }
};

inline PeakPortCounts count_peak_ports(const std::vector<Coincidence>& coincidences,
                                       double bin_separation, double window) {
  if (!(window > 0.0) || !(window < bin_separation))
    throw std::invalid_argument("peak window must satisfy 0 < window < bin separation");
  PeakPortCounts out;
  for (const auto& c : coincidences) {
    const double k = std::round(c.dt() / bin_separation);
    if (k < -3 || k > 3 || std::abs(c.dt() - k * bin_separation) > window / 2.0) {
      ++out.out_of_window;
      continue;
    }
    ++out.at(static_cast<int>(k), c.port_alice, c.port_bob);
  }
  return out;
}

/// Least-squares fit of R(phi) = R0 (1 + V cos(phi + phi0)).
struct VisibilityFit {
  double visibility = 0.0;
  double phase_offset = 0.0; // rad
  double mean_rate = 0.0;    // R0
  double visibility_err = 0.0;
  double phase_offset_err = 0.0;
  double mean_err = 0.0;
  double residual_rms = 0.0;
  bool degenerate = false; // constant scan; phase undefined
};

/// Linear least squares in (a, b, c) for R = a + b cos phi + c sin phi, then
/// V = sqrt(b^2+c^2)/a, phi0 = atan2(-c, b). Needs >= 4 points spanning at
/// least one period.
inline VisibilityFit fit_visibility(std::span<const std::pair<double, double>> points) {
  if (points.size() < 4) throw std::invalid_argument("visibility fit needs >= 4 points");
  double lo = points[0].first, hi = points[0].first;
  for (const auto& [phi, r] : points) {
    lo = std::min(lo, phi);
    hi = std::max(hi, phi);
  }
  if (hi - lo < 2.0 * kPi - 1e-9)
    throw std::invalid_argument("phase grid must span at least one period");

  // Normal equations for the 3-parameter linear model.
  double m[3][3] = {};
  double rhs[3] = {};
  for (const auto& [phi, r] : points) {
    const double x[3] = {1.0, std::cos(phi), std::sin(phi)};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) m[i][j] += x[i] * x[j];
      rhs[i] += x[i] * r;
    }
  }
  // Gaussian elimination with partial pivoting; also accumulate the inverse
  // for parameter covariances.
  double aug[3][6] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) aug[i][j] = m[i][j];
    aug[i][3 + i] = 1.0;
  }
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r2 = col + 1; r2 < 3; ++r2)
      if (std::abs(aug[r2][col]) > std::abs(aug[piv][col])) piv = r2;
    if (std::abs(aug[piv][col]) < 1e-30) throw std::invalid_argument("degenerate phase grid");
    std::swap(aug[piv], aug[col]);
    const double d = aug[col][col];
    for (int j = 0; j < 6; ++j) aug[col][j] /= d;
    for (int r2 = 0; r2 < 3; ++r2) {
      if (r2 == col) continue;
      const double f = aug[r2][col];
      for (int j = 0; j < 6; ++j) aug[r2][j] -= f * aug[col][j];
    }
  }
  double inv[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv[i][j] = aug[i][3 + j];
  double sol[3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) sol[i] += inv[i][j] * rhs[j];

  const double a = sol[0], b = sol[1], c = sol[2];
  double rss = 0.0;
  for (const auto& [phi, r] : points) {
    const double e = r - (a + b * std::cos(phi) + c * std::sin(phi));
    rss += e * e;
  }
  const auto dof = static_cast<double>(points.size()) - 3.0;
  const double s2 = dof > 0 ? rss / dof : 0.0;

  VisibilityFit fit;
  fit.mean_rate = a;
  fit.residual_rms = std::sqrt(rss / static_cast<double>(points.size()));
  fit.mean_err = std::sqrt(std::max(0.0, inv[0][0] * s2));
  const double r_amp = std::hypot(b, c);
  if (a <= 0.0 || r_amp < 1e-12 * std::max(1.0, std::abs(a))) {
    fit.degenerate = true;
    fit.visibility = 0.0;
    fit.phase_offset = 0.0;
    fit.phase_offset_err = std::numeric_limits<double>::infinity();
    fit.visibility_err = a > 0.0 ? std::sqrt(std::max(0.0, (inv[1][1] + inv[2][2]) * s2)) / a : 0.0;
    return fit;
  }
  fit.visibility = std::min(r_amp / a, 1.0); // clamp against shot-noise overshoot
  fit.phase_offset = std::atan2(-c, b);
  // First-order propagation through V = r/a and phi0 = atan2(-c, b).
  const double dv_da = -r_amp / (a * a);
  const double dv_db = b / (r_amp * a);
  const double dv_dc = c / (r_amp * a);
  double var_v = 0.0;
  const double grad_v[3] = {dv_da, dv_db, dv_dc};
  const double grad_p[3] = {0.0, c / (r_amp * r_amp), -b / (r_amp * r_amp)};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) var_v += grad_v[i] * grad_v[j] * inv[i][j] * s2;
  double var_p = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) var_p += grad_p[i] * grad_p[j] * inv[i][j] * s2;
  fit.visibility_err = std::sqrt(std::max(0.0, var_v));
  fit.phase_offset_err = std::sqrt(std::max(0.0, var_p));
  return fit;
}

inline VisibilityFit fit_visibility(const std::vector<std::pair<double, double>>& points) {
  return fit_visibility(std::span<const std::pair<double, double>>(points));
}

/// Flat accidental-floor subtraction for per-peak window counts. Negative
/// corrected counts are clamped to zero and flagged.
struct NetCounts {
  std::array<double, 7> counts{};
  bool clamped = false;
};

inline NetCounts net_correction(const std::array<std::int64_t, 7>& raw,
                                double accidentals_per_window) {
  if (accidentals_per_window < 0)
    throw std::invalid_argument("accidental estimate must be >= 0");
  NetCounts out;
  for (std::size_t i = 0; i < 7; ++i) {
    const double v = static_cast<double>(raw[i]) - accidentals_per_window;
    if (v < 0.0) {
      out.counts[i] = 0.0;
      out.clamped = true;
    } else {
      out.counts[i] = v;
    }
  }
  return out;
}

/// Net fringe: subtract a flat floor from every scan point, then refit.
inline VisibilityFit net_visibility(std::span<const std::pair<double, double>> points,
                                    double floor) {
  std::vector<std::pair<double, double>> corrected;
  corrected.reserve(points.size());
  for (const auto& [phi, r] : points) corrected.push_back({phi, std::max(0.0, r - floor)});
  return fit_visibility(corrected);
}

} // namespace timebin
