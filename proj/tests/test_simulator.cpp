#include <cmath>
#include <numbers>
#include <vector>

#include "aigrad/ellipse.hpp"
#include "aigrad/error.hpp"
#include "aigrad/peak.hpp"
#include "aigrad/pipeline.hpp"
#include "aigrad/simulator.hpp"
#include "doctest.h"

using namespace aigrad;

namespace {

constexpr double kPi = std::numbers::pi;

RunConfig quiet_run(int n_shots) {
  RunConfig cfg;
  cfg.noise.mode = DetectionNoiseMode::kTechnical;
  cfg.noise.tech_detection_rms = 0.0;
  cfg.schedule.n_shots = n_shots;
  cfg.schedule.modulation_period = 0;
  cfg.schedule.k_reversal = false;
  cfg.schedule.group_size = 36;
  return cfg;
}

std::vector<PeakAreas> areas_of(const std::vector<ShotRecord>& shots, int k_sign = 0) {
  std::vector<PeakAreas> a;
  for (const auto& s : shots) {
    if (k_sign == 0 || s.k_sign == k_sign) a.push_back(s.areas);
  }
  return a;
}

double simpson(const DetectionTrace& tr) {
  const std::size_t n = tr.size() % 2 == 1 ? tr.size() : tr.size() - 1;
  double s = tr.values[0] + tr.values[n - 1];
  for (std::size_t i = 1; i + 1 < n; ++i) s += tr.values[i] * (i % 2 ? 4.0 : 2.0);
  return s * tr.dt / 3.0;
}

}  // namespace

TEST_CASE("noiseless run lies on the ellipse") {
  RunConfig cfg = quiet_run(100);
  const auto shots = simulate_run(cfg);
  REQUIRE(shots.size() == 100);
  const FitReport fit =
      fit_ellipse(populations_from_areas(areas_of(shots), 1.0, 1.0), {true, UncertaintyMethod::kNone});
  CHECK(std::abs(fit.params.phi - kPi / 2) < 1e-9);
  CHECK(fit.params.A == doctest::Approx(0.225).epsilon(1e-9));

  SUBCASE("distorted efficiency is undone with the true ratios") {
    cfg.injection.xi_lower = 1.03;
    cfg.injection.xi_upper = 0.97;
    cfg.injection.phi_common = 1.1;
    const auto d = simulate_run(cfg);
    const FitReport raw = fit_ellipse(populations_from_areas(areas_of(d), 1.0, 1.0),
                                      {true, UncertaintyMethod::kNone});
    const FitReport fixed = fit_ellipse(populations_from_areas(areas_of(d), 1.03, 0.97),
                                        {true, UncertaintyMethod::kNone});
    CHECK(std::abs(fixed.params.phi - 1.1) < 1e-9);
    CHECK(std::abs(raw.params.phi - 1.1) > 1e-4);
  }
}

TEST_CASE("projection noise at the default atom number") {
  RunConfig cfg = quiet_run(4000);
  cfg.noise.mode = DetectionNoiseMode::kQpn;
  const auto shots = simulate_run(cfg);
  const FitReport fit =
      fit_ellipse(populations_from_areas(areas_of(shots), 1.0, 1.0), {true, UncertaintyMethod::kNone});
  // Geometric residuals of isotropic noise carry the per-axis RMS.
  CHECK(fit.rms == doctest::Approx(0.0011).epsilon(0.05));

  SUBCASE("exact binomial draws agree") {
    cfg.noise.exact_binomial = true;
    cfg.schedule.n_shots = 2000;
    const auto b = simulate_run(cfg);
    const FitReport fb =
        fit_ellipse(populations_from_areas(areas_of(b), 1.0, 1.0), {true, UncertaintyMethod::kNone});
    CHECK(fb.rms == doctest::Approx(0.0011).epsilon(0.06));
  }
}

TEST_CASE("k reversal") {
  RunConfig cfg = quiet_run(720);
  cfg.schedule.k_reversal = true;
  cfg.noise.mode = DetectionNoiseMode::kQpn;
  cfg.noise.seed = 5;
  cfg.injection.phi_c1 = 0.3;

  const auto shots = simulate_run(cfg);
  for (std::size_t i = 0; i < shots.size(); ++i) CHECK(shots[i].k_sign == (i % 2 ? -1 : 1));

  const EllipseFitOptions fo{true, UncertaintyMethod::kLinearized};
  const auto phase_of = [&](const RunConfig& c) {
    const auto s = simulate_run(c);
    const FitReport d = fit_ellipse(populations_from_areas(areas_of(s, 1), 1.0, 1.0), fo);
    const FitReport r = fit_ellipse(populations_from_areas(areas_of(s, -1), 1.0, 1.0), fo);
    return k_reversal_phase(d, r);
  };
  const PhaseValue base = phase_of(cfg);
  CHECK(std::abs(base.phi - 0.6) < 4.0 * base.dphi);

  // A k-independent shift cancels exactly without noise. With noise the
  // shifted points sample the fit scatter differently, so the residual
  // change is judged on the average over realizations.
  RunConfig clean = quiet_run(720);
  clean.schedule.k_reversal = true;
  clean.injection.phi_c1 = 0.3;
  RunConfig clean_biased = clean;
  clean_biased.injection.phi_common += 0.010;
  CHECK(std::abs(phase_of(clean_biased).phi - phase_of(clean).phi) < 1e-9);

  double mean_change = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig a = cfg, b = cfg;
    a.noise.seed = b.noise.seed = seed;
    b.injection.phi_common += 0.010;
    mean_change += (phase_of(b).phi - phase_of(a).phi) / 10.0;
  }
  CHECK(std::abs(mean_change) < 10e-6);

  CHECK(true_shot_phase(cfg, MassConfig::kC1, 1) - true_shot_phase(cfg, MassConfig::kC1, -1) ==
        doctest::Approx(0.6));
}

TEST_CASE("seeded determinism") {
  RunConfig cfg = quiet_run(300);
  cfg.noise.mode = DetectionNoiseMode::kCombined;
  cfg.noise.contrast_jitter = 0.01;
  DriftChannel ch;
  ch.name = "probe_power";
  ch.white_rms = 0.1;
  ch.walk_step = 0.02;
  cfg.drift.channels.push_back(ch);
  const auto a = simulate_run(cfg), b = simulate_run(cfg);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].areas.a11 == b[i].areas.a11 && a[i].areas.a22 == b[i].areas.a22 &&
           a[i].monitors == b[i].monitors && a[i].time == b[i].time;
  }
  CHECK(same);
  cfg.noise.seed = 2;
  const auto c = simulate_run(cfg);
  CHECK(c[0].areas.a11 != a[0].areas.a11);
}

TEST_CASE("schedule bookkeeping") {
  RunConfig cfg = quiet_run(2880);
  cfg.schedule = Schedule{};
  cfg.schedule.n_shots = 2880;
  const auto shots = simulate_run(cfg);
  for (const auto& s : shots) {
    const int block = static_cast<int>(s.index) / 720;
    CHECK(s.mass_config == (block % 2 == 0 ? MassConfig::kC1 : MassConfig::kC2));
    CHECK(s.time == doctest::Approx(s.index * 1.9 + block * 300.0));
  }
  // A mass move costs dead time but no cycle index.
  CHECK(shots[720].index == 720);
  CHECK(shots[720].time - shots[719].time == doctest::Approx(301.9));

  Schedule bad;
  bad.group_size = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.group_size = 72;
  CHECK_NOTHROW(bad.validate());

  Injection inj;
  inj.phi_common = 0.5;
  inj.phi_c1 = 0.6;  // 0.5 - 0.6 < 0 for the reverse direction
  CHECK_THROWS_AS(inj.validate(true), ConfigError);
  CHECK_NOTHROW(inj.validate(false) );
  CHECK_EQ(mass_config_from_string("C2"), MassConfig::kC2);
  CHECK_THROWS_AS(mass_config_from_string("C3"), DomainError);

  RunConfig drift = quiet_run(10);
  drift.drift.channels.push_back({"unknown_channel"});
  CHECK_THROWS_AS(simulate_run(drift), ConfigError);
  drift.drift.channels[0].inert = true;
  CHECK_NOTHROW(simulate_run(drift));
}

TEST_CASE("ledger coupling moves the phase") {
  RunConfig cfg = quiet_run(72);
  DriftChannel tilt;
  tilt.name = "raman_mirror_ew_tilt";
  tilt.sine_amplitude = 0.01;  // mrad
  tilt.sine_period = 1e9;
  tilt.sine_phase = kPi / 2;   // constant 0.01 mrad over the run
  cfg.drift.channels.push_back(tilt);
  const auto shots = simulate_run(cfg);
  const FitReport fit =
      fit_ellipse(populations_from_areas(areas_of(shots), 1.0, 1.0), {true, UncertaintyMethod::kNone});
  CHECK(fit.params.phi - kPi / 2 == doctest::Approx(37e-3 * 0.01).epsilon(1e-6));
  CHECK(shots[3].monitors.at("raman_mirror_ew_tilt") == doctest::Approx(0.01));
}

TEST_CASE("servo suppresses a random walk") {
  // One day of cycles; a 0.023 %/cycle walk gives about 2 % RMS per day.
  RunConfig cfg = quiet_run(45474);
  DriftChannel ch;
  ch.name = "mot_power_ratio";
  ch.walk_step = 0.023;
  cfg.drift.channels.push_back(ch);
  const auto rms_of = [](const std::vector<ShotRecord>& s) {
    double m = 0.0, q = 0.0;
    for (const auto& r : s) m += r.monitors.at("mot_power_ratio");
    m /= static_cast<double>(s.size());
    for (const auto& r : s) q += std::pow(r.monitors.at("mot_power_ratio") - m, 2);
    return std::sqrt(q / static_cast<double>(s.size()));
  };
  const double free_rms = rms_of(simulate_run(cfg));
  cfg.servo_enabled = true;
  cfg.servo.channels = {"mot_power_ratio"};
  const double locked_rms = rms_of(simulate_run(cfg));
  MESSAGE("free " << free_rms << " %, servo " << locked_rms << " %");
  CHECK(free_rms > 1.0);
  CHECK(locked_rms < 0.3);

  cfg.servo.gain = 2.5;
  CHECK_THROWS_AS(simulate_run(cfg), ConfigError);
}

TEST_CASE("synthetic fluorescence traces") {
  const PeakAreas areas{0.8, 1.1, 0.6, 1.3};
  PeakShape shape;
  const auto peaks = peaks_for_shot(areas, shape);
  CHECK(peak_area(peaks[0]) == doctest::Approx(0.8).epsilon(1e-14));
  Rng rng = make_stream(1);
  TraceOptions opts;
  const TracePair tr = simulate_trace(peaks, opts, rng);
  CHECK(simpson(tr.f1) == doctest::Approx(0.8 + 0.6).epsilon(1e-6));
  CHECK(simpson(tr.f2) == doctest::Approx(1.1 + 1.3).epsilon(1e-6));

  SUBCASE("zero pedestal is the pure trace") {
    Rng r2 = make_stream(1);
    TraceOptions p = opts;
    p.pedestal.fraction = 0.0;
    p.pedestal.width_multiplier = 5.0;
    CHECK(simulate_trace(peaks, p, r2).f1.values == tr.f1.values);
  }

  SUBCASE("fit recovers the areas") {
    const PeakAreas got = areas_from_traces(tr, peak_windows(shape));
    CHECK(got.a11 == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(got.a22 == doctest::Approx(1.3).epsilon(1e-7));
  }

  SUBCASE("pedestal biases the area until the triple pulse removes it") {
    TraceOptions p = opts;
    p.pedestal.fraction = 0.3;
    Rng r3 = make_stream(2);
    const PeakAreas biased = areas_from_traces(simulate_trace(peaks, p, r3), peak_windows(shape));
    p.triple_pulse = true;
    const PeakAreas clean = areas_from_traces(simulate_trace(peaks, p, r3), peak_windows(shape));
    MESSAGE("single pulse " << biased.a11 / 0.8 - 1 << ", triple pulse " << clean.a11 / 0.8 - 1);
    CHECK(std::abs(biased.a11 / 0.8 - 1.0) > 0.01);
    CHECK(std::abs(clean.a11 / 0.8 - 1.0) < 0.005);
    CHECK(std::abs(clean.a12 / 0.6 - 1.0) < 0.005);
  }
}

TEST_CASE("Coriolis compensation scan") {
  PhysicsConfig phys;
  NoiseConfig noise;
  const double horizontal = phys.omega_earth * std::cos(phys.latitude);
  std::vector<double> rates;
  for (int i = -4; i <= 4; ++i) rates.push_back(horizontal + i * 0.25 * horizontal);
  const double sigma_v = 0.01;
  const auto scan = coriolis_compensation_scan(phys, noise, sigma_v, rates);
  REQUIRE(scan.size() == rates.size());

  std::size_t best_contrast = 0, best_error = 0;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (scan[i].contrast > scan[best_contrast].contrast) best_contrast = i;
    if (scan[i].phase_error < scan[best_error].phase_error) best_error = i;
  }
  CHECK(best_contrast == 4);
  CHECK(best_error == 4);
  CHECK(scan[4].contrast_factor == 1.0);
  // Common random numbers make the two wings equal to within fit noise.
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(scan[i].contrast_factor == doctest::Approx(scan[8 - i].contrast_factor).epsilon(1e-12));
    CHECK(scan[i].phase_error == doctest::Approx(scan[8 - i].phase_error).epsilon(0.05));
  }

  const auto cold = coriolis_compensation_scan(phys, noise, 1e-9, rates);
  for (const auto& p : cold) CHECK(p.contrast_factor == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(coriolis_compensation_scan(phys, noise, 0.0, rates), DomainError);
}
