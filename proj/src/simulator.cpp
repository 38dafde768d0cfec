#include "aigrad/simulator.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "aigrad/error.hpp"

namespace aigrad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2Pi = 2.5066282746310002;

bool inside_fit_range(double phi) { return phi > 0.0 && phi < kPi; }

double tilt_phase(const RunConfig& cfg, MassConfig m) {
  if (!cfg.injection.tilt_coupling || m != MassConfig::kC1) return 0.0;
  return coriolis_shift(cfg.physics, cfg.injection.tilt_change);
}

struct ChannelState {
  double walk = 0.0;
  double correction = 0.0;
  double raw = 0.0;
  bool servoed = false;
  int follows = -1;
};

// Sum of the ledger effects of all coupled channels for one shot.
struct Shifts {
  double phase_k = 0.0;       // reverses with k
  double phase_common = 0.0;  // same for both k
  double contrast = 0.0;
  double bias = 0.0;
};

double coupled_effect(const SensitivityLedger& ledger, const std::string& name, Quantity q,
                      double value, bool apply_bounds) {
  const LedgerEntry* e = ledger.find(name, q);
  if (!e) return 0.0;
  if (e->relation == Relation::kUpperBound && !apply_bounds) return 0.0;
  return e->effect(value);
}

}  // namespace

std::string_view to_string(MassConfig m) { return m == MassConfig::kC1 ? "C1" : "C2"; }

MassConfig mass_config_from_string(std::string_view s) {
  if (s == "C1") return MassConfig::kC1;
  if (s == "C2") return MassConfig::kC2;
  throw DomainError("mass configuration must be C1 or C2, got '" + std::string(s) + "'");
}

void Schedule::validate() const {
  if (n_shots < 1) throw ConfigError("schedule.n_shots must be >= 1");
  if (group_size < 1) throw ConfigError("schedule.group_size must be >= 1");
  if (!(cycle_period > 0.0)) throw ConfigError("schedule.cycle_period must be > 0");
  if (!(dead_time >= 0.0)) throw ConfigError("schedule.dead_time must be >= 0");
  if (modulation_period < 0) throw ConfigError("schedule.modulation_period must be >= 0");
  if (modulation_period > 0) {
    if (k_reversal && modulation_period % 2 != 0) {
      throw ConfigError("with k reversal the modulation period must be even");
    }
    const int block = k_reversal ? modulation_period / 2 : modulation_period;
    if (block % group_size != 0) {
      throw ConfigError("group size " + std::to_string(group_size) +
                        " does not divide the per-direction block of " + std::to_string(block) +
                        " shots");
    }
  }
}

void Injection::validate(bool k_reversal) const {
  if (!(A > 0.0) || !(C > 0.0)) throw ConfigError("injection amplitudes A, C must be > 0");
  if (!(B - A >= 0.0 && B + A <= 1.0) || !(D - C >= 0.0 && D + C <= 1.0)) {
    throw ConfigError("injected ellipse must lie inside the unit square");
  }
  if (!(xi_lower > 0.0) || !(xi_upper > 0.0)) throw ConfigError("injection xi must be > 0");
  for (const double phi_c : {phi_c1, phi_c2}) {
    for (const int k : {1, -1}) {
      if (k < 0 && !k_reversal) continue;
      if (!inside_fit_range(phi_common + k * phi_c)) {
        throw ConfigError("phi_common + k phi_C leaves (0, pi); the fitted angle would alias");
      }
    }
  }
}

void DriftModel::validate(const SensitivityLedger& ledger) const {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const DriftChannel& c = channels[i];
    if (c.name.empty()) throw ConfigError("drift channel without a name");
    if (!c.inert && !ledger.has_parameter(c.name)) {
      throw ConfigError("drift channel '" + c.name + "' is not in the ledger and not inert");
    }
    if (c.white_rms < 0.0 || c.walk_step < 0.0) {
      throw ConfigError("drift channel '" + c.name + "' has a negative RMS");
    }
    if (c.sine_amplitude != 0.0 && !(c.sine_period > 0.0)) {
      throw ConfigError("drift channel '" + c.name + "' needs sine_period > 0");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (channels[j].name == c.name) throw ConfigError("duplicate drift channel '" + c.name + "'");
    }
    if (!c.follows.empty()) {
      bool found = false;
      for (std::size_t j = 0; j < i; ++j) found = found || channels[j].name == c.follows;
      if (!found) {
        throw ConfigError("drift channel '" + c.name + "' follows '" + c.follows +
                          "', which is not an earlier channel");
      }
    }
  }
}

void ServoConfig::validate(const DriftModel& drift) const {
  if (sample_every < 1) throw ConfigError("servo.sample_every must be >= 1");
  if (!(gain > 0.0 && gain < 2.0)) throw ConfigError("servo.gain must lie in (0, 2)");
  if (!(residual_target > 0.0)) throw ConfigError("servo.residual_target must be > 0");
  for (const auto& name : channels) {
    bool found = false;
    for (const auto& c : drift.channels) found = found || c.name == name;
    if (!found) throw ConfigError("servo channel '" + name + "' is not a drift channel");
  }
}

double true_shot_phase(const RunConfig& cfg, MassConfig m, int k_sign) {
  return cfg.injection.phi_common + k_sign * (cfg.injection.phi_config(m) + tilt_phase(cfg, m));
}

std::vector<ShotRecord> simulate_run(const RunConfig& cfg, const SensitivityLedger& ledger) {
  cfg.physics.validate();
  cfg.noise.validate();
  cfg.schedule.validate();
  cfg.injection.validate(cfg.schedule.k_reversal);
  cfg.drift.validate(ledger);
  if (cfg.servo_enabled) cfg.servo.validate(cfg.drift);

  const Schedule& sch = cfg.schedule;
  const Injection& inj = cfg.injection;
  const NoiseConfig& nz = cfg.noise;

  Rng shot_rng = make_stream(nz.seed, 0);
  Rng drift_rng = make_stream(nz.seed, 1);
  std::normal_distribution<double> unit;
  const double t_max = sch.t_distribution == PhaseDistribution::kFullFringe ? 2.0 * kPi : kPi;
  std::uniform_real_distribution<double> fringe(0.0, t_max);

  const auto& channels = cfg.drift.channels;
  std::vector<ChannelState> state(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (cfg.servo_enabled) {
      for (const auto& s : cfg.servo.channels) state[c].servoed = state[c].servoed || s == channels[c].name;
    }
    for (std::size_t j = 0; j < c; ++j) {
      if (channels[j].name == channels[c].follows) state[c].follows = static_cast<int>(j);
    }
  }

  std::vector<ShotRecord> shots;
  shots.reserve(static_cast<std::size_t>(sch.n_shots));
  double prev_time = -sch.cycle_period;
  for (int i = 0; i < sch.n_shots; ++i) {
    ShotRecord rec;
    rec.index = i;
    int moves = 0;
    if (sch.modulation_period > 0) {
      moves = i / sch.modulation_period;
      rec.mass_config = moves % 2 == 0 ? MassConfig::kC1 : MassConfig::kC2;
    }
    rec.time = i * sch.cycle_period + moves * sch.dead_time;
    rec.k_sign = sch.k_reversal && i % 2 == 1 ? -1 : 1;
    const double elapsed_cycles = (rec.time - prev_time) / sch.cycle_period;
    prev_time = rec.time;

    Shifts shifts;
    const double config_sign = rec.mass_config == MassConfig::kC1 ? 0.5 : -0.5;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const DriftChannel& ch = channels[c];
      ChannelState& st = state[c];
      const double step = unit(drift_rng);
      const double white = unit(drift_rng);
      st.walk += ch.walk_step * std::sqrt(elapsed_cycles) * step;
      st.raw = st.walk + ch.white_rms * white;
      if (ch.sine_amplitude != 0.0) {
        st.raw += ch.sine_amplitude * std::sin(2.0 * kPi * rec.time / ch.sine_period + ch.sine_phase);
      }
      if (st.follows >= 0) st.raw += ch.follow_gain * state[static_cast<std::size_t>(st.follows)].raw;
      const double value = st.raw + st.correction;
      rec.monitors[ch.name] = value;
      if (st.servoed && i > 0 && i % cfg.servo.sample_every == 0) {
        st.correction -= cfg.servo.gain * value;
      }
      if (ch.inert) continue;
      const bool b = cfg.drift.apply_bounds;
      const double phase = coupled_effect(ledger, ch.name, Quantity::kPhiMean, value, b) +
                           config_sign * coupled_effect(ledger, ch.name, Quantity::kPhiDiff, value, b);
      (ch.k_dependent ? shifts.phase_k : shifts.phase_common) += phase;
      shifts.contrast += coupled_effect(ledger, ch.name, Quantity::kContrast, value, b);
      shifts.bias += coupled_effect(ledger, ch.name, Quantity::kBias, value, b);
    }

    const double phi = inj.phi_common + shifts.phase_common +
                       rec.k_sign * (inj.phi_config(rec.mass_config) +
                                     tilt_phase(cfg, rec.mass_config) + shifts.phase_k);
    // Contrast is peak to peak, i.e. twice the amplitude.
    const double A = inj.A + 0.5 * shifts.contrast, C = inj.C + 0.5 * shifts.contrast;
    const double B = inj.B + shifts.bias, D = inj.D + shifts.bias;

    const double t = fringe(shot_rng);
    const double x_ideal = std::clamp(A * std::sin(t) + B, 0.0, 1.0);
    const double y_ideal = std::clamp(C * std::sin(t + phi) + D, 0.0, 1.0);
    const ShotNoise n = sample_shot_noise(nz, shot_rng, x_ideal, y_ideal);
    double x = (A + n.dA) * std::sin(t) + B + n.dB;
    double y = (C + n.dC) * std::sin(t + phi + n.dphi) + D + n.dD;
    if (nz.exact_binomial) {
      x = std::clamp(x, 0.0, 1.0);
      y = std::clamp(y, 0.0, 1.0);
      const auto nl = static_cast<long long>(std::llround(nz.n_lower));
      const auto nu = static_cast<long long>(std::llround(nz.n_upper));
      x = static_cast<double>(std::binomial_distribution<long long>(nl, x)(shot_rng)) / static_cast<double>(nl);
      y = static_cast<double>(std::binomial_distribution<long long>(nu, y)(shot_rng)) / static_cast<double>(nu);
      if (nz.mode != DetectionNoiseMode::kQpn) {
        x += nz.tech_detection_rms * unit(shot_rng);
        y += nz.tech_detection_rms * unit(shot_rng);
      }
    } else {
      x += n.dx_d;
      y += n.dy_d;
    }
    x = std::clamp(x, 0.0, 1.0);
    y = std::clamp(y, 0.0, 1.0);

    rec.areas.a11 = x * nz.n_lower;
    rec.areas.a21 = inj.xi_lower * (1.0 - x) * nz.n_lower;
    rec.areas.a12 = y * nz.n_upper;
    rec.areas.a22 = inj.xi_upper * (1.0 - y) * nz.n_upper;
    shots.push_back(std::move(rec));
  }
  return shots;
}

// ---- fluorescence traces -------------------------------------------------------

TracePair simulate_trace(const std::array<PeakModel, 4>& peaks, const TraceOptions& o, Rng& rng) {
  for (const auto& p : peaks) {
    if (!(p.sigma > 0.0)) throw DomainError("peak widths must be > 0");
  }
  if (!(o.sample_rate > 0.0) || !(o.duration > 0.0)) {
    throw DomainError("trace duration and sample rate must be > 0");
  }
  const double dt = 1.0 / o.sample_rate;
  const auto n = static_cast<std::size_t>(std::floor(o.duration * o.sample_rate)) + 1;
  const double fraction = o.triple_pulse ? o.pedestal.fraction / 30.0 : o.pedestal.fraction;

  TracePair out;
  out.f1.channel = Channel::kF1;
  out.f2.channel = Channel::kF2;
  out.f1.t0 = out.f2.t0 = o.t0;
  out.f1.dt = out.f2.dt = dt;
  out.f1.values.resize(n);
  out.f2.values.resize(n);
  std::normal_distribution<double> unit;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = o.t0 + static_cast<double>(i) * dt;
    double v1 = peaks[0](t) + peaks[2](t);
    const double v2 = peaks[1](t) + peaks[3](t);
    if (fraction > 0.0) {
      for (const PeakModel* p : {&peaks[0], &peaks[2]}) {
        const double s = p->sigma * o.pedestal.width_multiplier;
        const double d = (t - p->x0) / s;
        v1 += fraction * peak_area(*p) / (s * kSqrt2Pi) * std::exp(-0.5 * d * d);
      }
    }
    out.f1.values[i] = v1 + o.noise_rms * unit(rng);
    out.f2.values[i] = v2 + o.noise_rms * unit(rng);
  }
  return out;
}

std::array<PeakModel, 4> peaks_for_shot(const PeakAreas& areas, const PeakShape& shape) {
  std::array<PeakModel, 4> out;
  const double s = shape.sigma;
  const double amplitudes[4] = {areas.a11, areas.a21, areas.a12, areas.a22};
  for (int k = 0; k < 4; ++k) {
    PeakModel& p = out[static_cast<std::size_t>(k)];
    p.sigma = s;
    p.x0 = k < 2 ? shape.t_lower : shape.t_upper;
    p.a2 = shape.a2 / (s * s);
    p.a4 = shape.a4 / (s * s * s * s);
    p.baseline = k % 2 == 0 ? shape.baseline : 0.0;  // one baseline per channel
    p.h = 1.0;
    p.h = amplitudes[k] / peak_area(p);
  }
  return out;
}

std::array<TimeWindow, 2> peak_windows(const PeakShape& shape) {
  return {TimeWindow{shape.t_lower - 5.0 * shape.sigma, shape.t_lower + 5.0 * shape.sigma},
          TimeWindow{shape.t_upper - 5.0 * shape.sigma, shape.t_upper + 5.0 * shape.sigma}};
}

PeakAreas areas_from_traces(const TracePair& traces, const std::array<TimeWindow, 2>& windows) {
  PeakAreas a;
  a.a11 = peak_area(fit_peak(traces.f1, windows[0]).model);
  a.a21 = peak_area(fit_peak(traces.f2, windows[0]).model);
  a.a12 = peak_area(fit_peak(traces.f1, windows[1]).model);
  a.a22 = peak_area(fit_peak(traces.f2, windows[1]).model);
  return a;
}

// ---- Coriolis compensation -----------------------------------------------------

std::vector<CoriolisScanPoint> coriolis_compensation_scan(const PhysicsConfig& physics,
                                                          const NoiseConfig& noise, double sigma_v,
                                                          std::span<const double> rates,
                                                          const CoriolisScanOptions& options) {
  if (!(sigma_v > 0.0)) throw DomainError("sigma_v must be > 0");
  if (options.shots_per_rate < 6) throw DomainError("need at least 6 shots per rate");
  physics.validate();
  noise.validate();
  options.injection.validate(false);

  const double com = options.com_velocity_rms >= 0.0 ? options.com_velocity_rms
                                                     : sigma_v / std::sqrt(noise.n_lower);
  const double lever = 2.0 * physics.k_e * physics.T * physics.T;
  const double horizontal = physics.omega_earth * std::cos(physics.latitude);
  const Injection& inj = options.injection;
  const double phi0 = inj.phi_common + inj.phi_c1;

  std::vector<CoriolisScanPoint> out;
  out.reserve(rates.size());
  for (const double rate : rates) {
    CoriolisScanPoint pt;
    pt.mirror_rate = rate;
    pt.omega_eff = horizontal - rate;
    const double spread = lever * pt.omega_eff * sigma_v;
    pt.contrast_factor = std::exp(-0.5 * spread * spread);

    // Same stream for every rate so that scan points differ only through
    // the rotation rate.
    Rng rng = make_stream(noise.seed, 7);
    std::uniform_real_distribution<double> fringe(0.0, 2.0 * kPi);
    std::normal_distribution<double> unit;
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(options.shots_per_rate));
    const double A = inj.A * pt.contrast_factor, C = inj.C * pt.contrast_factor;
    for (int i = 0; i < options.shots_per_rate; ++i) {
      const double t = fringe(rng);
      const double v_l = com * unit(rng), v_u = com * unit(rng);
      const double phi = phi0 + lever * pt.omega_eff * (v_u - v_l);
      const double xi = A * std::sin(t) + inj.B, yi = C * std::sin(t + phi) + inj.D;
      const ShotNoise n = sample_shot_noise(noise, rng, xi, yi);
      pts.push_back({(A + n.dA) * std::sin(t) + inj.B + n.dB + n.dx_d,
                     (C + n.dC) * std::sin(t + phi + n.dphi) + inj.D + n.dD + n.dy_d});
    }
    const FitReport r = fit_ellipse(pts, options.fit);
    pt.contrast = r.params.A + r.params.C;
    pt.phase_error = r.dphi;
    out.push_back(pt);
  }
  return out;
}

}  // namespace aigrad
