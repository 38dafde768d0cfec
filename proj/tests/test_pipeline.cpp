#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "aigrad/error.hpp"
#include "aigrad/noise.hpp"
#include "aigrad/pipeline.hpp"
#include "doctest.h"

using namespace aigrad;

namespace {

// Allan variance straight from the definition, one block mean at a time.
double brute_allan(const std::vector<double>& y, std::size_t m, bool overlapping) {
  const auto mean = [&](std::size_t start) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += y[start + i];
    return s / static_cast<double>(m);
  };
  double acc = 0.0;
  std::size_t count = 0;
  const std::size_t step = overlapping ? 1 : m;
  for (std::size_t j = 0; j + 2 * m <= y.size(); j += step) {
    const double d = mean(j + m) - mean(j);
    acc += d * d;
    ++count;
  }
  return std::sqrt(acc / (2.0 * static_cast<double>(count)));
}

std::vector<double> white(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  Rng rng = make_stream(seed);
  std::normal_distribution<double> unit;
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * unit(rng);
  return v;
}

RunConfig protocol_run(int n_shots, double noise_rms) {
  RunConfig cfg;
  cfg.noise.mode = DetectionNoiseMode::kTechnical;
  cfg.noise.tech_detection_rms = noise_rms;
  cfg.schedule.n_shots = n_shots;
  return cfg;
}

}  // namespace

TEST_CASE("grouping") {
  SUBCASE("single configuration, group of 72") {
    RunConfig cfg = protocol_run(720, 0.001);
    cfg.schedule.modulation_period = 0;
    cfg.schedule.k_reversal = false;
    const auto shots = simulate_run(cfg);
    const auto groups = group_and_fit(shots, 72, {}, {true, UncertaintyMethod::kLinearized});
    CHECK(groups.size() == 10);
    CHECK(groups[3].first_index == 216);
    CHECK(groups[3].last_index == 287);
  }

  SUBCASE("standard protocol: two 360-point ellipses per block") {
    RunConfig cfg = protocol_run(2880, 0.001);
    cfg.injection.phi_c1 = 0.2;
    cfg.injection.phi_c2 = 0.1;
    const auto shots = simulate_run(cfg);
    const auto groups = group_and_fit(shots, 360, {}, {true, UncertaintyMethod::kLinearized});
    REQUIRE(groups.size() == 8);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto& g = groups[i];
      CHECK(g.n_shots == 360);
      CHECK(g.segment == static_cast<int>(i / 2));
      CHECK(g.k_sign == (i % 2 == 0 ? 1 : -1));
      // The group never leaves its block of 720 cycles.
      CHECK(g.first_index / 720 == g.last_index / 720);
      for (const auto& s : shots) {
        if (s.index >= g.first_index && s.index <= g.last_index) {
          CHECK(s.mass_config == g.mass_config);
        }
      }
    }
    const auto series = k_reversal_series(groups);
    REQUIRE(series.size() == 4);
    CHECK(series[0].mass_config == MassConfig::kC1);
    CHECK(series[0].phi == doctest::Approx(0.4).epsilon(0.05));
    CHECK(series[1].phi == doctest::Approx(0.2).epsilon(0.1));
    const auto pairs = pair_configurations(series);
    CHECK(pairs.size() == 2);
  }

  SUBCASE("estimated ratio") {
    RunConfig cfg = protocol_run(720, 2e-4);
    cfg.schedule.modulation_period = 0;
    cfg.schedule.k_reversal = false;
    cfg.injection.xi_lower = cfg.injection.xi_upper = 1.04;
    const auto shots = simulate_run(cfg);
    XiHandling xi;
    xi.mode = XiMode::kEstimated;
    const auto r = group_and_fit_report(shots, 360, xi, {true, UncertaintyMethod::kLinearized});
    CHECK(r.xi_lower == doctest::Approx(1.04).epsilon(0.01));
    CHECK(r.groups.size() == 2);
    CHECK(r.groups[0].xi_lower == r.xi_lower);
  }

  CHECK_THROWS_AS(group_and_fit({}, 35), GroupTooSmall);
}

TEST_CASE("k reversal phase") {
  FitReport d, r;
  d.converged = r.converged = true;
  d.params.phi = r.params.phi = 1.2;
  d.dphi = r.dphi = 0.5e-3;
  const PhaseValue same = k_reversal_phase(d, r);
  CHECK(same.phi == 0.0);
  CHECK(same.dphi == doctest::Approx(0.7071e-3).epsilon(1e-4));
  r.converged = false;
  CHECK_THROWS_AS(k_reversal_phase(d, r), NotConverged);
}

TEST_CASE("double difference") {
  std::vector<PhasePair> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back({i * 1.0, 0.3 + 0.01 * i, 1e-3, 0.3 + 0.01 * i, 2e-3});
  const DoubleDifference zero = double_difference(pairs);
  CHECK(zero.mean == 0.0);
  CHECK(zero.chi2 == 0.0);

  SUBCASE("equal errors give the arithmetic mean") {
    std::vector<PhasePair> p;
    const std::vector<double> d{0.1, 0.4, -0.2, 0.3};
    for (double v : d) p.push_back({0.0, v, 0.1, 0.0, 0.1});
    const DoubleDifference r = double_difference(p);
    CHECK(r.mean == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(r.error == doctest::Approx(std::sqrt(0.02 / 4)).epsilon(1e-15));
  }

  SUBCASE("exchange of configurations negates the mean") {
    Rng rng = make_stream(4);
    std::normal_distribution<double> u;
    std::vector<PhasePair> p, q;
    for (int i = 0; i < 12; ++i) {
      const double e1 = 1e-3 * (1 + 0.1 * i), e2 = 0.8e-3;
      p.push_back({0.0, 0.5 + e1 * u(rng), e1, 0.5 + e2 * u(rng), e2});
      q.push_back({0.0, p.back().phi2, e2, p.back().phi1, e1});
    }
    CHECK(double_difference(q).mean == -double_difference(p).mean);
    CHECK(double_difference(q).chi2 == doctest::Approx(double_difference(p).chi2).epsilon(1e-12));
  }

  SUBCASE("white pairs give unit reduced chi2") {
    // 30 pairs at 0.74 mrad per point: the mean error is exact, chi2 is
    // judged on the average over realizations.
    Rng rng = make_stream(9);
    std::normal_distribution<double> u;
    const double per_point = 0.74e-3, each = per_point / std::sqrt(2.0);
    double chi2_sum = 0.0;
    const int reps = 2000;
    double err = 0.0;
    for (int k = 0; k < reps; ++k) {
      std::vector<PhasePair> p;
      for (int i = 0; i < 30; ++i) p.push_back({0.0, each * u(rng), each, each * u(rng), each});
      const DoubleDifference r = double_difference(p);
      chi2_sum += r.chi2_reduced;
      err = r.error;
    }
    CHECK(err == doctest::Approx(0.74e-3 / std::sqrt(30.0)).epsilon(1e-12));
    CHECK(chi2_sum / reps == doctest::Approx(1.0).epsilon(0.03));
  }

  CHECK_THROWS_AS(double_difference({}), NoPairs);
  std::vector<PhasePair> bad{{0.0, 1.0, 0.0, 1.0, 0.0}};
  CHECK_THROWS_AS(double_difference(bad), DomainError);
}

TEST_CASE("Allan deviation") {
  const std::vector<double> flat(64, 3.5);
  const AllanResult c = allan_deviation(flat, 1.0);
  for (double s : c.sigmas) CHECK(s == 0.0);

  const auto w = white(1 << 16, 21);
  for (const AllanMode mode : {AllanMode::kNonOverlapping, AllanMode::kOverlapping}) {
    const AllanResult r = allan_deviation(w, 1.9, mode);
    for (std::size_t i = 0; i < r.taus.size(); ++i) {
      if (i > 0) CHECK(r.taus[i] == 2.0 * r.taus[i - 1]);
      const auto m = static_cast<std::size_t>(std::llround(r.taus[i] / 1.9));
      CHECK(r.sigmas[i] ==
            doctest::Approx(brute_allan(w, m, mode == AllanMode::kOverlapping)).epsilon(1e-9));
    }
    CHECK(allan_slope(r, 0.0, 1.9 * 1024) == doctest::Approx(-0.5).epsilon(0.1));
  }

  std::vector<double> ramp(4096);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 1e-3 * static_cast<double>(i);
  const AllanResult lr = allan_deviation(ramp, 1.0);
  CHECK(allan_slope(lr) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lr.sigmas[0] == doctest::Approx(1e-3 / std::sqrt(2.0)).epsilon(1e-9));

  CHECK_THROWS_AS(allan_deviation(std::vector<double>(7, 1.0), 1.0), SeriesTooShort);
  const AllanResult small = allan_deviation(std::vector<double>(8, 1.0), 1.0);
  for (std::size_t n : small.counts) CHECK(n >= 2);

  const SensitivityConventions sc = sensitivity_at_one_second(0.015, 1.9);
  CHECK(sc.times_sqrt_cycle == doctest::Approx(0.015 * std::sqrt(1.9)));
  CHECK(sc.over_sqrt_cycle == doctest::Approx(0.015 / std::sqrt(1.9)));
}

TEST_CASE("monitor correlation") {
  TimeSeries phi;
  for (int i = 0; i < 1000; ++i) phi.time.push_back(1.9 * i);
  phi.value = white(1000, 3);
  std::map<std::string, TimeSeries> mon;
  mon["copy"] = phi;
  mon["noise"] = {phi.time, white(1000, 4)};
  TimeSeries shifted = phi;
  for (auto& t : shifted.time) t += 0.5;  // within half a cycle
  mon["shifted"] = shifted;
  const auto r = correlate_monitors(phi, mon, 0.95);
  CHECK(r.at("copy").r == doctest::Approx(1.0));
  CHECK(r.at("shifted").r == doctest::Approx(1.0));
  CHECK(r.at("copy").n == 1000);
  // 3 sigma of the null distribution is 3 / sqrt(1000) = 0.095.
  CHECK(std::abs(r.at("noise").r) < 0.1);

  std::map<std::string, TimeSeries> flat{{"flat", {phi.time, std::vector<double>(1000, 2.0)}}};
  CHECK_THROWS_AS(correlate_monitors(phi, flat, 0.95), ConstantSeries);
  std::map<std::string, TimeSeries> far{{"far", {{1e9, 2e9, 3e9}, {1.0, 2.0, 3.0}}}};
  CHECK_THROWS_AS(correlate_monitors(phi, far, 0.95), ConstantSeries);
}

TEST_CASE("sensitivity budget") {
  const auto& ledger = SensitivityLedger::builtin();
  std::map<std::string, double> zero;
  for (const auto& p : ledger.parameters()) zero[p] = 0.0;
  const Budget z = noise_budget(ledger, zero);
  CHECK(z.total_mean == 0.0);
  CHECK(z.total_diff == 0.0);

  const Budget tilt = noise_budget(ledger, {{"raman_mirror_ew_tilt", 0.010}});
  CHECK(tilt.rows[0].phi_mean.value == doctest::Approx(0.37e-3));
  CHECK_FALSE(tilt.rows[0].phi_mean.bound);
  CHECK(tilt.rows[0].phi_diff.bound);
  CHECK(tilt.total_diff == 0.0);
  CHECK(tilt.bound_total_diff == doctest::Approx(0.05e-3));

  const Budget mot = noise_budget(ledger, {{"mot_power_ratio", 0.5}});
  CHECK(mot.rows[0].phi_mean.value == doctest::Approx(0.40e-3));
  CHECK(mot.rows[0].phi_diff.value == doctest::Approx(5e-6));

  // Monotone in every input.
  const auto day = ledger_rms(ledger, Timescale::kDay);
  const Budget base = noise_budget(ledger, day);
  for (const auto& [name, v] : day) {
    auto more = day;
    more[name] = 1.5 * v;
    const Budget b = noise_budget(ledger, more);
    CHECK(b.total_mean >= base.total_mean);
    CHECK(b.total_diff >= base.total_diff);
  }
  for (std::size_t i = 1; i < base.rows.size(); ++i) {
    const auto key = [](const BudgetRow& r) {
      return std::max(r.phi_mean.bound ? 0.0 : r.phi_mean.value, r.phi_diff.bound ? 0.0 : r.phi_diff.value);
    };
    CHECK(key(base.rows[i - 1]) >= key(base.rows[i]));
  }
  CHECK_THROWS_AS(noise_budget(ledger, {{"flux_capacitor", 1.0}}), UnknownParameter);
}

TEST_CASE("zero-current extrapolation") {
  const double curv = 22e-6 / 1e-6;  // 22 urad/mA^2 in rad/A^2
  std::vector<CurrentPoint> pts;
  for (double ma : {-30.0, -15.0, 0.0, 10.0, 20.0, 35.0}) {
    const double i = ma * 1e-3;
    pts.push_back({i, 0.580 + curv * i * i, 1e-3});
  }
  const ZeroCurrentFit p = extrapolate_zero_current(pts, ParabolaModel::kParabola);
  CHECK(p.phi0 == doctest::Approx(0.580).epsilon(1e-12));
  CHECK(p.curvature == doctest::Approx(curv).epsilon(1e-10));

  SUBCASE("flat data give the mean") {
    std::vector<CurrentPoint> g;
    for (double ma : {-2.0, -1.0, 0.0, 1.0, 2.0}) g.push_back({ma * 1e-3, 0.6, 1e-3});
    const ZeroCurrentFit f = extrapolate_zero_current(g, ParabolaModel::kParabola);
    CHECK(f.phi0 == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(std::abs(f.curvature) < 1e-6);
  }

  SUBCASE("linear term moves the vertex") {
    const double vertex = 2e-6;  // A
    std::vector<CurrentPoint> l;
    for (double ma : {-30.0, -15.0, 0.0, 10.0, 20.0, 35.0}) {
      const double i = ma * 1e-3;
      l.push_back({i, 0.580 + curv * (i - vertex) * (i - vertex), 1e-3});
    }
    const ZeroCurrentFit f = extrapolate_zero_current(l, ParabolaModel::kParabolaLinear);
    CHECK(f.vertex == doctest::Approx(vertex).epsilon(1e-6));
    CHECK(f.stray_field == doctest::Approx(vertex * 1.445e-3).epsilon(1e-6));
    CHECK(f.stray_field == doctest::Approx(3e-9).epsilon(0.05));
    CHECK(f.vertex_error > 0.0);
  }

  std::vector<CurrentPoint> three{{0.0, 1.0, 1e-3}, {0.01, 1.0, 1e-3}, {0.02, 1.0, 1e-3}, {0.02, 1.0, 1e-3}};
  CHECK_THROWS_AS(extrapolate_zero_current(three, ParabolaModel::kParabola), IllConditioned);
}
