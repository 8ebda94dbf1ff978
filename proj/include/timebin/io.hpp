// File formats: the line-oriented event stream, CSV tables, and JSON
// summaries. Column orders are fixed; numbers are printed with snprintf so
// identical inputs give byte-identical files.
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "timebin/histogram.hpp"
#include "timebin/qkd.hpp"
#include "timebin/sim.hpp"
#include "timebin/witness.hpp"

namespace timebin {

inline std::string peak_label(int delta) {
  if (delta == 0) return "T0";
  return delta > 0 ? "T+" + std::to_string(delta) : "T-" + std::to_string(-delta);
}

inline std::string format_num(double v, int precision = 9) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// ---- event stream: "party,port,time_ns,origin" ----

inline void write_events(std::ostream& out, const std::vector<DetectionEvent>& events) {
  out << "# party,port,time_ns,origin\n";
  for (const auto& e : events) {
    out << (e.party == Party::alice ? 'A' : 'B') << ',' << static_cast<int>(e.port) << ','
        << format_num(e.time * 1e9, 6) << ',' << (e.origin == Origin::photon ? "photon" : "dark")
        << '\n';
  }
}

inline std::vector<DetectionEvent> parse_events(std::istream& in) {
  std::vector<DetectionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string party, port, time_ns, origin;
    if (!std::getline(ss, party, ',') || !std::getline(ss, port, ',') ||
        !std::getline(ss, time_ns, ',') || !std::getline(ss, origin))
      throw ConfigError("event stream: malformed line " + std::to_string(lineno));
    DetectionEvent e;
    if (party == "A")
      e.party = Party::alice;
    else if (party == "B")
      e.party = Party::bob;
    else
      throw ConfigError("event stream: bad party on line " + std::to_string(lineno));
    if (port == "0")
      e.port = 0;
    else if (port == "1")
      e.port = 1;
    else
      throw ConfigError("event stream: bad port on line " + std::to_string(lineno));
    try {
      e.time = std::stod(time_ns) * 1e-9;
    } catch (...) {
      throw ConfigError("event stream: bad time on line " + std::to_string(lineno));
    }
    if (origin == "photon")
      e.origin = Origin::photon;
    else if (origin == "dark")
      e.origin = Origin::dark;
    else
      throw ConfigError("event stream: bad origin on line " + std::to_string(lineno));
    events.push_back(e);
  }
  std::sort(events.begin(), events.end());
  return events;
}

// ---- CSV tables ----

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "delay_ns,counts\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out << format_num(h.center(i) * 1e9, 6) << ',' << h.counts[i] << '\n';
}

struct ScanPointRecord {
  double phase_a = 0.0;
  double phase_b = 0.0;
  int delta = 0;
  std::int64_t counts = 0;
  double fitted = 0.0; // fitted curve value at this phase
};

inline void write_scan_csv(std::ostream& out, const std::vector<ScanPointRecord>& rows) {
  out << "phase_a_rad,phase_b_rad,peak,counts,fitted\n";
  for (const auto& r : rows)
    out << format_num(r.phase_a, 9) << ',' << format_num(r.phase_b, 9) << ',' << peak_label(r.delta)
        << ',' << r.counts << ',' << format_num(r.fitted, 3) << '\n';
}

inline void write_strategies_csv(std::ostream& out, const ClassicalSearchResult& res) {
  out << "offset,a0,a1,b0,b1,s,is_max\n";
  for (const auto& sc : res.all) {
    out << sc.table.offset << ',' << outcome_char(sc.table.a0) << ',' << outcome_char(sc.table.a1)
        << ',' << outcome_char(sc.table.b0) << ',' << outcome_char(sc.table.b1) << ','
        << format_num(sc.s, 6) << ',' << (sc.s == res.s_max ? 1 : 0) << '\n';
  }
}

// ---- sifted key ----

inline void write_key(std::ostream& out, const SiftedKey& key) {
  for (const auto& b : key.bits)
    out << (b.basis == Basis::t0 ? "T0" : "T1") << ' ' << static_cast<int>(b.alice) << ' '
        << static_cast<int>(b.bob) << '\n';
}

// ---- JSON summaries ----

inline nlohmann::json peak_stats_json(const PeakStatistics& stats) {
  nlohmann::json per_peak;
  for (int d = -3; d <= 3; ++d) {
    nlohmann::json entry;
    entry["P"] = stats.prob(d);
    if (stats.corr(d))
      entry["E"] = *stats.corr(d);
    else
      entry["E"] = nullptr;
    per_peak[peak_label(d)] = entry;
  }
  return per_peak;
}

inline nlohmann::json witness_report_json(const SMetricReport& rep, const std::string& method,
                                          double classical_bound, double quantum_prediction) {
  nlohmann::json j;
  j["S"] = rep.s;
  j["sigma"] = rep.sigma;
  j["n_sigma"] = rep.n_sigma_above_classical;
  j["verdict"] = rep.verdict == Verdict::quantum ? "quantum" : "classical-compatible";
  j["threshold_sigmas"] = rep.threshold_sigmas;
  j["coincidences"] = rep.coincidences;
  j["t2_populated"] = rep.t2_populated;
  j["method"] = method;
  j["calibration"] = {{"t0_sign", rep.signs.t0}, {"t1_sign", rep.signs.t1}};
  j["classical_max"] = classical_bound;
  j["quantum_ideal"] = quantum_prediction;
  j["per_peak"] = peak_stats_json(rep.stats);
  return j;
}

inline nlohmann::json qkd_summary_json(const SiftedKey& key, const QberReport& q,
                                       const SMetricReport& rep, ChannelDecision decision) {
  nlohmann::json j;
  j["usable_fraction"] = key.usable_fraction();
  auto basis_json = [](const QberReport::PerBasis& b) {
    nlohmann::json bj;
    bj["bits"] = b.bits;
    bj["errors"] = b.errors;
    if (b.defined) {
      bj["qber"] = b.qber;
      bj["stderr"] = b.stderr_qber;
    } else {
      bj["qber"] = nullptr;
      bj["stderr"] = nullptr;
    }
    return bj;
  };
  j["qber"] = {{"T0", basis_json(q.t0)}, {"T1", basis_json(q.t1)}};
  nlohmann::json windows;
  for (int d = -3; d <= 3; ++d)
    windows[peak_label(d)] = key.window_counts[static_cast<std::size_t>(d + 3)];
  j["counters"] = {{"windows", windows},
                   {"witness_reserved", key.witness_reserved},
                   {"alarms", key.alarms},
                   {"out_of_window", key.out_of_window}};
  j["channel_check"] = {{"S", rep.s},
                        {"sigma", rep.sigma},
                        {"n_sigma", rep.n_sigma_above_classical},
                        {"threshold_sigmas", rep.threshold_sigmas},
                        {"verdict", decision == ChannelDecision::accept ? "accept" : "abort"}};
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << content;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

} // namespace timebin
