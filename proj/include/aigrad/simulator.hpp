#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aigrad/ellipse.hpp"
#include "aigrad/ledger.hpp"
#include "aigrad/noise.hpp"
#include "aigrad/peak.hpp"
#include "aigrad/physics.hpp"

namespace aigrad {

enum class MassConfig { kC1, kC2 };

std::string_view to_string(MassConfig m);
/// Accepts "C1" and "C2"; throws DomainError otherwise.
MassConfig mass_config_from_string(std::string_view s);

struct ShotRecord {
  std::int64_t index = 0;
  double time = 0.0;  // s since run start
  int k_sign = 1;
  MassConfig mass_config = MassConfig::kC1;
  PeakAreas areas;
  std::map<std::string, double> monitors;
};

enum class PhaseDistribution {
  kFullFringe,  // t uniform in [0, 2 pi)
  kHalfFringe,  // t uniform in [0, pi]
};

struct Schedule {
  int n_shots = 1440;
  int group_size = 360;          // shots per ellipse for one (config, k) pair
  int modulation_period = 720;   // cycles per mass configuration; 0 keeps C1
  double dead_time = 300.0;      // s lost at every mass move
  double cycle_period = 1.9;     // s
  bool k_reversal = true;        // alternate k_sign shot by shot
  PhaseDistribution t_distribution = PhaseDistribution::kFullFringe;

  /// Throws ConfigError when groups would straddle a mass move or a k block.
  void validate() const;
};

/// Ground truth of the simulated ellipses. The phase of a shot is
///   Phi = phi_common + k_sign * (phi_C + k-dependent shifts) + k-independent shifts,
/// so the direct-minus-reverse difference is 2 (phi_C + shifts) and
/// phi_common drops out. Both k directions must stay inside (0, pi).
struct Injection {
  double A = 0.225;
  double B = 0.5;
  double C = 0.225;
  double D = 0.5;
  double phi_c1 = 0.0;
  double phi_c2 = 0.0;
  double phi_common = 1.5707963267948966;
  double xi_lower = 1.0;
  double xi_upper = 1.0;
  // Mirror tilt change caused by the masses; adds coriolis_shift(tilt_change)
  // to the C1 phase when enabled.
  bool tilt_coupling = false;
  double tilt_change = 10e-6;

  void validate(bool k_reversal) const;
  double phi_config(MassConfig m) const { return m == MassConfig::kC1 ? phi_c1 : phi_c2; }
};

struct DriftChannel {
  std::string name;             // ledger parameter name unless inert
  double white_rms = 0.0;       // per shot
  double walk_step = 0.0;       // RMS step per cycle period of wall time
  double sine_amplitude = 0.0;
  double sine_period = 0.0;     // s
  double sine_phase = 0.0;      // rad
  std::string follows;          // earlier channel added with follow_gain
  double follow_gain = 0.0;
  bool inert = false;           // recorded as a monitor, no coupling
  bool k_dependent = true;      // phase shift reverses with k
};

struct DriftModel {
  std::vector<DriftChannel> channels;
  // Use tabulated upper bounds as if they were measured coefficients.
  bool apply_bounds = false;

  /// Every coupled channel must exist in the ledger; `follows` must name an
  /// earlier channel. Throws ConfigError.
  void validate(const SensitivityLedger& ledger) const;
};

/// Pure integrator: every sample_every cycles the correction is lowered by
/// gain times the measured channel value.
struct ServoConfig {
  int sample_every = 72;
  double gain = 1.0;
  std::vector<std::string> channels;
  double residual_target = 0.003;  // fractional

  void validate(const DriftModel& drift) const;
};

struct RunConfig {
  PhysicsConfig physics;
  NoiseConfig noise;
  DriftModel drift;
  bool servo_enabled = false;
  ServoConfig servo;
  Schedule schedule;
  Injection injection;
};

/// Shot sequence of one run. Deterministic in noise.seed: the fringe phase
/// and shot noise come from stream 0, drifts from stream 1.
std::vector<ShotRecord> simulate_run(const RunConfig& cfg,
                                     const SensitivityLedger& ledger = SensitivityLedger::builtin());

/// Ellipse phase a noiseless, drift-free shot would carry.
double true_shot_phase(const RunConfig& cfg, MassConfig m, int k_sign);

// ---- fluorescence traces -------------------------------------------------------

struct Pedestal {
  double fraction = 0.0;          // pedestal area / peak area
  double width_multiplier = 5.0;  // pedestal sigma / peak sigma
};

struct TraceOptions {
  double t0 = 0.0;
  double duration = 0.08;      // s
  double sample_rate = 50e3;   // Hz
  double noise_rms = 0.0;      // additive, per sample
  Pedestal pedestal;
  // Triple-pulse velocity selection: thermal pedestal reduced 30 times.
  bool triple_pulse = false;
};

struct TracePair {
  DetectionTrace f1;  // F=1 channel: A11 then A12 peaks
  DetectionTrace f2;  // F=2 channel: A21 then A22 peaks
};

/// Peaks in the order A11, A21, A12, A22. The optional broad pedestal sits
/// under the F=1 peaks.
TracePair simulate_trace(const std::array<PeakModel, 4>& peaks, const TraceOptions& options,
                         Rng& rng);

/// Shared peak shape of the detection signals.
struct PeakShape {
  double t_lower = 0.025;  // arrival of the lower cloud, s
  double t_upper = 0.055;  // arrival of the upper cloud, s
  double sigma = 0.002;
  double a2 = 0.0;  // in units of sigma^-2
  double a4 = 0.0;  // in units of sigma^-4
  double baseline = 0.0;
};

/// Peak models whose analytic areas equal the given areas.
std::array<PeakModel, 4> peaks_for_shot(const PeakAreas& areas, const PeakShape& shape);
/// Fit windows (lower cloud, upper cloud) of +-5 sigma.
std::array<TimeWindow, 2> peak_windows(const PeakShape& shape);

/// Fits the four peaks of a trace pair and returns their areas.
PeakAreas areas_from_traces(const TracePair& traces, const std::array<TimeWindow, 2>& windows);

// ---- Coriolis compensation -----------------------------------------------------

struct CoriolisScanOptions {
  int shots_per_rate = 360;
  // Shot-to-shot centre-of-mass velocity RMS of each cloud; negative means
  // sigma_v / sqrt(n_lower).
  double com_velocity_rms = -1.0;
  Injection injection;
  EllipseFitOptions fit{true, UncertaintyMethod::kLinearized, 200, 0x5eed, 100};
};

struct CoriolisScanPoint {
  double mirror_rate = 0.0;     // rad/s
  double omega_eff = 0.0;       // rad/s
  double contrast_factor = 0.0; // model value
  double contrast = 0.0;        // fitted A + C
  double phase_error = 0.0;     // fitted dphi
};

std::vector<CoriolisScanPoint> coriolis_compensation_scan(const PhysicsConfig& physics,
                                                          const NoiseConfig& noise, double sigma_v,
                                                          std::span<const double> rates,
                                                          const CoriolisScanOptions& options = {});

}  // namespace aigrad
