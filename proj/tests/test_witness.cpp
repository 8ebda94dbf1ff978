#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "timebin/witness.hpp"

using namespace timebin;
using Catch::Approx;

namespace {

PeakStatistics make_stats(std::initializer_list<std::pair<int, double>> probs,
                          std::initializer_list<std::pair<int, double>> corrs) {
  PeakStatistics s;
  for (auto [d, p] : probs) s.prob(d) = p;
  for (auto [d, e] : corrs) s.corr(d) = e;
  return s;
}

// Independent strategy oracle: dict-style enumeration of the four arm pairs.
struct OracleBehavior {
  std::map<int, double> p, u;
};
OracleBehavior oracle_behavior(const StrategyTable& t) {
  OracleBehavior b;
  const int a[2] = {static_cast<int>(t.a0), static_cast<int>(t.a1)};
  const int bo[2] = {static_cast<int>(t.b0), static_cast<int>(t.b1)};
  double kept = 0.0;
  for (int aa = 0; aa < 2; ++aa)
    for (int ab = 0; ab < 2; ++ab) {
      const int d = t.offset + ab - aa;
      if (d < -3 || d > 3) continue;
      b.p[d] += 0.25;
      b.u[d] += 0.25 * a[aa] * bo[ab];
      kept += 0.25;
    }
  for (auto& [d, v] : b.p) v /= kept;
  for (auto& [d, v] : b.u) v /= kept;
  return b;
}
double oracle_s(const OracleBehavior& b) {
  double s = 0.0;
  for (int d : {0, 1, -1}) {
    auto it = b.u.find(d);
    if (it != b.u.end()) s += it->second;
  }
  for (int d : {2, -2}) {
    auto ip = b.p.find(d);
    if (ip == b.p.end()) continue;
    s += 2.0 * (ip->second - std::abs(b.u.at(d)));
  }
  for (int d : {3, -3}) {
    auto ip = b.p.find(d);
    if (ip != b.p.end()) s -= ip->second;
  }
  return s;
}

} // namespace

TEST_CASE("s_metric on the reference behaviors") {
  // Ideal source statistics.
  auto ideal = make_stats({{0, 0.25}, {1, 0.25}, {-1, 0.25}, {2, 0.125}, {-2, 0.125}},
                          {{0, 1.0}, {1, 1.0}, {-1, 1.0}, {2, 0.0}, {-2, 0.0}});
  ideal.validate();
  CHECK(s_metric(ideal) == Approx(1.25).margin(1e-15));

  // All mass in an alarm window: only the penalty term remains.
  auto alarms = make_stats({{3, 1.0}}, {});
  CHECK(s_metric(alarms) == Approx(-1.0).margin(1e-15));

  // Uniform 95% visibilities at the key peaks.
  auto vis = make_stats({{0, 0.25}, {1, 0.25}, {-1, 0.25}, {2, 0.125}, {-2, 0.125}},
                        {{0, 0.95}, {1, 0.95}, {-1, 0.95}, {2, 0.0}, {-2, 0.0}});
  CHECK(s_metric(vis) == Approx(1.2125).margin(1e-15));

  // Missing correlator at a populated peak is rejected.
  auto bad = make_stats({{0, 0.5}, {1, 0.5}}, {{0, 1.0}});
  CHECK_THROWS_AS(s_metric(bad), std::invalid_argument);

  // Anticorrelation at T+-2 is penalized exactly like correlation.
  auto anti = make_stats({{0, 0.5}, {2, 0.5}}, {{0, 1.0}, {2, -1.0}});
  auto corr = make_stats({{0, 0.5}, {2, 0.5}}, {{0, 1.0}, {2, 1.0}});
  CHECK(s_metric(anti) == Approx(s_metric(corr)).margin(1e-15));
}

TEST_CASE("strategy statistics: the paper's three strategies") {
  SECTION("(a) equal signals, all outcomes equal") {
    const StrategyTable t{0, Outcome::plus, Outcome::plus, Outcome::plus, Outcome::plus};
    const auto st = strategy_statistics(t);
    CHECK(st.prob(0) == Approx(0.5).margin(1e-15));
    CHECK(st.prob(1) == Approx(0.25).margin(1e-15));
    CHECK(st.prob(-1) == Approx(0.25).margin(1e-15));
    CHECK(st.prob(2) == 0.0);
    CHECK(*st.corr(0) == 1.0);
    CHECK(*st.corr(1) == 1.0);
    CHECK(s_metric(st) == 1.0);
  }
  SECTION("(b) one-bin offset, last outcome random") {
    const StrategyTable t{+1, Outcome::plus, Outcome::plus, Outcome::plus, Outcome::random};
    const auto st = strategy_statistics(t);
    CHECK(st.prob(1) == Approx(0.5).margin(1e-15));
    CHECK(*st.corr(1) == Approx(0.5).margin(1e-15));
    CHECK(st.prob(0) == Approx(0.25).margin(1e-15));
    CHECK(*st.corr(0) == 1.0);
    CHECK(st.prob(2) == Approx(0.25).margin(1e-15));
    CHECK(*st.corr(2) == 0.0);
    CHECK(s_metric(st) == 1.0);
  }
  SECTION("(c) two-bin offset, edges random") {
    const StrategyTable t{+2, Outcome::random, Outcome::plus, Outcome::plus, Outcome::random};
    const auto st = strategy_statistics(t);
    CHECK(st.prob(2) == Approx(0.5).margin(1e-15));
    CHECK(*st.corr(2) == 0.0);
    CHECK(st.prob(1) == Approx(0.25).margin(1e-15));
    CHECK(*st.corr(1) == 1.0);
    CHECK(st.prob(3) == Approx(0.25).margin(1e-15));
    CHECK(s_metric(st) == 1.0); // 1/4 + 1 - 1/4
  }
}

TEST_CASE("strategy statistics match the enumeration oracle exactly") {
  for (const auto& t : enumerate_strategy_tables()) {
    const auto st = strategy_statistics(t);
    const auto ob = oracle_behavior(t);
    double sum = 0.0;
    for (int d = -3; d <= 3; ++d) {
      sum += st.prob(d);
      const auto it = ob.p.find(d);
      const double expect = (it == ob.p.end()) ? 0.0 : it->second;
      CHECK(st.prob(d) == Approx(expect).margin(1e-15));
      if (st.prob(d) > 0.0)
        CHECK(st.prob(d) * *st.corr(d) == Approx(ob.u.at(d)).margin(1e-15));
    }
    CHECK(sum == Approx(1.0).margin(1e-12));
    CHECK(s_metric(st) == Approx(oracle_s(ob)).margin(1e-15));
  }
}

TEST_CASE("anticorrelated T+-2 table does not break the bound") {
  // With a signed T+-2 term this table would score 2; the magnitude form
  // keeps it at 0.
  const StrategyTable t{+2, Outcome::minus, Outcome::plus, Outcome::plus, Outcome::minus};
  const auto st = strategy_statistics(t);
  CHECK(st.prob(2) == Approx(0.5).margin(1e-15));
  CHECK(*st.corr(2) == Approx(-1.0).margin(1e-15));
  CHECK(*st.corr(1) == Approx(1.0).margin(1e-15));
  CHECK(s_metric(st) == Approx(0.0).margin(1e-15));
}

TEST_CASE("exhaustive classical search") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = classical_max();
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  CHECK(res.s_max == 1.0); // exact: all involved values are dyadic rationals
  CHECK(res.all.size() == 7 * 81);
  CHECK_FALSE(res.maximizers.empty());
  for (const auto& sc : res.all) CHECK(sc.s <= 1.0);
  CHECK(dt < 1.0);

  SECTION("restricted searches") {
    double max_off0 = -10.0, max_off3 = -10.0;
    for (const auto& sc : res.all) {
      if (sc.table.offset == 0) max_off0 = std::max(max_off0, sc.s);
      if (std::abs(sc.table.offset) == 3) max_off3 = std::max(max_off3, sc.s);
    }
    CHECK(max_off0 == 1.0);
    CHECK(max_off3 <= 1e-15); // only penalty/neutral terms reachable
  }

  SECTION("bound holds under every calibration sign pattern") {
    for (int s0 : {+1, -1})
      for (int s1 : {+1, -1}) {
        const auto r = classical_max({s0, s1});
        CHECK(r.s_max == 1.0);
        CHECK(r.maximizers.size() == res.maximizers.size());
      }
  }
}

TEST_CASE("mixtures of strategies") {
  // Behavior of a mixture: convex combination of (P, P*E).
  struct Behavior {
    std::array<double, 7> p{}, u{};
  };
  auto behavior_of = [](const StrategyTable& t) {
    Behavior b;
    const auto st = strategy_statistics(t);
    for (int i = 0; i < 7; ++i) {
      const auto k = static_cast<std::size_t>(i);
      b.p[k] = st.p[k];
      b.u[k] = st.e[k] ? st.p[k] * *st.e[k] : 0.0;
    }
    return b;
  };
  auto s_of_behavior = [](const Behavior& b) {
    PeakStatistics st;
    for (int i = 0; i < 7; ++i) {
      const auto k = static_cast<std::size_t>(i);
      st.p[k] = b.p[k];
      if (b.p[k] > 0.0) st.e[k] = b.u[k] / b.p[k];
    }
    return s_metric(st);
  };

  const auto tables = enumerate_strategy_tables();
  std::mt19937_64 rng(7);
  auto uni = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  SECTION("same-signed T+-2 correlations mix linearly and stay below 1") {
    int checked = 0;
    while (checked < 500) {
      const auto& ta = tables[rng() % tables.size()];
      const auto& tb = tables[rng() % tables.size()];
      const auto ba = behavior_of(ta), bb = behavior_of(tb);
      if (ba.u[1] * bb.u[1] < 0.0 || ba.u[5] * bb.u[5] < 0.0) continue; // opposite signs
      const double lam = uni();
      Behavior mix;
      for (std::size_t i = 0; i < 7; ++i) {
        mix.p[i] = lam * ba.p[i] + (1 - lam) * bb.p[i];
        mix.u[i] = lam * ba.u[i] + (1 - lam) * bb.u[i];
      }
      const double s = s_of_behavior(mix);
      CHECK(s == Approx(lam * s_of_behavior(ba) + (1 - lam) * s_of_behavior(bb)).margin(1e-12));
      CHECK(s <= 1.0 + 1e-12);
      ++checked;
    }
  }

  SECTION("arbitrary mixtures stay at or below 7/6") {
    double worst = 0.0;
    for (int trial = 0; trial < 20000; ++trial) {
      const std::size_t k = 2 + rng() % 3;
      Behavior mix;
      double wsum = 0.0;
      std::vector<std::pair<Behavior, double>> comps;
      for (std::size_t j = 0; j < k; ++j) comps.push_back({behavior_of(tables[rng() % tables.size()]), uni() + 1e-3});
      for (auto& [b, w] : comps) wsum += w;
      for (auto& [b, w] : comps)
        for (std::size_t i = 0; i < 7; ++i) {
          mix.p[i] += w / wsum * b.p[i];
          mix.u[i] += w / wsum * b.u[i];
        }
      worst = std::max(worst, s_of_behavior(mix));
    }
    CHECK(worst <= 7.0 / 6.0 + 1e-12);

    // The linear-programming maximizer attains 7/6 exactly.
    const StrategyTable m1{+1, Outcome::plus, Outcome::plus, Outcome::plus, Outcome::plus};
    const StrategyTable m2{+2, Outcome::plus, Outcome::minus, Outcome::minus, Outcome::plus};
    const auto b1 = behavior_of(m1), b2 = behavior_of(m2);
    Behavior mix;
    for (std::size_t i = 0; i < 7; ++i) {
      mix.p[i] = (2.0 * b1.p[i] + b2.p[i]) / 3.0;
      mix.u[i] = (2.0 * b1.u[i] + b2.u[i]) / 3.0;
    }
    CHECK(s_of_behavior(mix) == Approx(7.0 / 6.0).margin(1e-12));
  }
}

TEST_CASE("quantum ideal value") {
  EngineConfig cfg;
  CHECK(quantum_ideal_s(cfg, CoherenceWeights::ideal()) == Approx(1.25).margin(1e-12));

  // Alternate working point, same value.
  cfg.phase_a = -kPi / 2.0;
  cfg.phase_b = kPi / 2.0;
  CHECK(quantum_ideal_s(cfg, CoherenceWeights::ideal()) == Approx(1.25).margin(1e-12));

  // No coherence: flat fringes, only the T+-2 term contributes.
  cfg = {};
  CHECK(quantum_ideal_s(cfg, {0.0, 0.0}) == Approx(0.5).margin(1e-12));

  // Default physical weights.
  const auto w = CoherenceWeights::from_config(cfg);
  CHECK(quantum_ideal_s(cfg, w) == Approx(0.25 * (w.nu + 2.0 * w.mu) + 0.5).margin(1e-12));

  // Separation from the classical bound in the ideal engine.
  CHECK(quantum_ideal_s({}, CoherenceWeights::ideal()) - classical_max().s_max ==
        Approx(0.25).margin(1e-12));
}

TEST_CASE("s from measured visibilities") {
  std::array<std::int64_t, 7> counts{0, 12500, 25000, 25000, 25000, 12500, 0};
  std::array<double, 7> vis{0, 0.0, 0.95, 0.95, 0.95, 0.0, 0};
  std::array<double, 7> err{0, 0.01, 0.005, 0.005, 0.005, 0.01, 0};

  const auto rep = s_from_measurements(counts, vis, err, {-1, +1}, 5.0);
  CHECK(rep.s == Approx(1.2125).margin(1e-12));
  CHECK(rep.sigma > 0.0);
  CHECK(rep.sigma < 0.01);
  CHECK(rep.verdict == Verdict::quantum);
  CHECK(rep.coincidences == 100000);

  // Error scales roughly as 1/sqrt(N) for the P part; with fixed fit errors
  // the total shrinks when counts grow.
  std::array<std::int64_t, 7> big{};
  for (std::size_t i = 0; i < 7; ++i) big[i] = counts[i] * 100;
  const auto rep2 = s_from_measurements(big, vis, err, {-1, +1}, 5.0);
  CHECK(rep2.sigma <= rep.sigma);

  // Missing lateral statistics are rejected.
  std::array<std::int64_t, 7> no_t2{0, 0, 25000, 25000, 25000, 12500, 0};
  CHECK_THROWS_AS(s_from_measurements(no_t2, vis, err, {-1, +1}, 5.0), InsufficientStatsError);
}

TEST_CASE("s from port counting") {
  SECTION("classical stream, strategy (a)") {
    std::array<std::array<std::array<std::int64_t, 2>, 2>, 7> counts{};
    counts[3][0][0] = 50000; // T0, both port 0
    counts[4][0][0] = 25000;
    counts[2][0][0] = 25000;
    const auto rep = s_from_counts(counts, {+1, +1}, 5.0);
    CHECK(rep.s == Approx(1.0).margin(1e-12));
    CHECK_FALSE(rep.t2_populated);
    CHECK(rep.verdict == Verdict::classical_compatible);
  }

  SECTION("ideal quantum counts") {
    // Expected counts from the calibrated ideal distribution at N = 320000.
    const auto dist = coincidence_distribution(EngineConfig{}, CoherenceWeights::ideal());
    std::array<std::array<std::array<std::int64_t, 2>, 2>, 7> counts{};
    for (int d = -3; d <= 3; ++d)
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q)
          counts[static_cast<std::size_t>(d + 3)][static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] =
              static_cast<std::int64_t>(std::llround(320000 * dist.at(d, p, q)));
    const auto rep = s_from_counts(counts, calibration_signs(dist), 5.0);
    CHECK(rep.s == Approx(1.25).margin(1e-9));
    CHECK(rep.t2_populated);
    CHECK(rep.verdict == Verdict::quantum);
    CHECK(rep.n_sigma_above_classical > 5.0);
  }

  SECTION("empty input rejected") {
    std::array<std::array<std::array<std::int64_t, 2>, 2>, 7> counts{};
    CHECK_THROWS_AS(s_from_counts(counts, {+1, +1}, 5.0), InsufficientStatsError);
  }
}
