#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aigrad/ellipse.hpp"
#include "aigrad/ledger.hpp"
#include "aigrad/physics.hpp"
#include "aigrad/simulator.hpp"

namespace aigrad {

// ---- grouping and ellipse fits -------------------------------------------------

enum class XiMode {
  kFixed,      // use the configured ratios
  kEstimated,  // one common ratio per run, searched on every group
};

struct XiHandling {
  XiMode mode = XiMode::kFixed;
  double xi_lower = 1.0;
  double xi_upper = 1.0;
  double search_lo = 0.9;
  double search_hi = 1.1;
  XiOptions options;
};

inline constexpr int kMinGroupSize = 36;

struct GroupedEllipse {
  MassConfig mass_config = MassConfig::kC1;
  int k_sign = 1;
  int segment = 0;  // position of the mass-configuration block in the run
  std::int64_t first_index = 0;
  std::int64_t last_index = 0;
  std::size_t n_shots = 0;
  double time = 0.0;  // mean shot time, s
  double xi_lower = 1.0;
  double xi_upper = 1.0;
  FitReport fit;
};

/// Splits the run into blocks of constant mass configuration, separates the
/// two k directions inside each block and fits every run of group_size
/// consecutive shots. Incomplete trailing groups are dropped. Throws
/// GroupTooSmall for group_size < 36; fit errors propagate.
std::vector<GroupedEllipse> group_and_fit(std::span<const ShotRecord> shots, int group_size,
                                          const XiHandling& xi = {},
                                          const EllipseFitOptions& fit = {});

/// Mean ratio found by the xi search over the groups (estimated mode).
struct GroupingResult {
  std::vector<GroupedEllipse> groups;
  double xi_lower = 1.0;
  double xi_upper = 1.0;
};
GroupingResult group_and_fit_report(std::span<const ShotRecord> shots, int group_size,
                                    const XiHandling& xi = {}, const EllipseFitOptions& fit = {});

// ---- k reversal and double difference ------------------------------------------

struct PhaseValue {
  double phi = 0.0;
  double dphi = 0.0;
};

/// phi_dir - phi_rev with errors added in quadrature. Throws NotConverged.
PhaseValue k_reversal_phase(const FitReport& direct, const FitReport& reverse);

struct ConfigPhase {
  MassConfig mass_config = MassConfig::kC1;
  int segment = 0;
  double time = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
};

/// Matches the j-th direct and j-th reverse group of every block and returns
/// their k-reversal phases in time order. Without reverse groups the direct
/// fits are passed through unchanged.
std::vector<ConfigPhase> k_reversal_series(std::span<const GroupedEllipse> groups);

struct PhasePair {
  double time = 0.0;
  double phi1 = 0.0;
  double dphi1 = 0.0;
  double phi2 = 0.0;
  double dphi2 = 0.0;
};

/// Merges consecutive entries of one block by weighted mean, then pairs each
/// C1 block with the C2 block that follows it.
std::vector<PhasePair> pair_configurations(std::span<const ConfigPhase> series);

struct DoubleDifference {
  double mean = 0.0;
  double error = 0.0;
  double chi2 = 0.0;          // total, against the weighted mean
  double chi2_reduced = 0.0;  // chi2 / (n - 1); 0 for a single pair
  std::vector<PhaseValue> points;
};

/// Per-pair phi1 - phi2 and its inverse-variance weighted mean. Throws
/// NoPairs on empty input and DomainError for non-positive errors.
DoubleDifference double_difference(std::span<const PhasePair> pairs);

struct WeightedMean {
  double mean = 0.0;
  double error = 0.0;
  double chi2 = 0.0;
};
WeightedMean weighted_mean(std::span<const PhaseValue> values);

// ---- Allan deviation ---------------------------------------------------------

enum class AllanMode { kNonOverlapping, kOverlapping };

struct AllanResult {
  std::vector<double> taus;
  std::vector<double> sigmas;
  std::vector<std::size_t> counts;  // differences entering each point
};

/// Octave-spaced two-sample deviation of a uniformly sampled series. Points
/// with fewer than two differences are omitted. Throws SeriesTooShort below
/// 8 samples.
AllanResult allan_deviation(std::span<const double> values, double dt,
                            AllanMode mode = AllanMode::kNonOverlapping);

/// Least-squares slope of log sigma against log tau over points with
/// sigma > 0 and tau inside [tau_min, tau_max]. Throws DomainError with
/// fewer than two usable points.
double allan_slope(const AllanResult& r, double tau_min = 0.0,
                   double tau_max = std::numeric_limits<double>::infinity());

/// A per-shot phase noise expressed at 1 s in the two usual conventions.
struct SensitivityConventions {
  double times_sqrt_cycle = 0.0;   // sigma_shot * sqrt(cycle), rad sqrt(s)
  double over_sqrt_cycle = 0.0;    // sigma_shot / sqrt(cycle / 1 s)
};
SensitivityConventions sensitivity_at_one_second(double sigma_shot, double cycle_period);

// ---- monitor correlation -----------------------------------------------------

struct TimeSeries {
  std::vector<double> time;
  std::vector<double> value;
};

struct Correlation {
  double r = 0.0;
  double stderr_r = 0.0;
  std::size_t n = 0;
};

/// Pearson correlation of phi with every monitor channel after
/// nearest-neighbour matching within max_offset seconds. Throws
/// ConstantSeries when either side has zero variance or fewer than three
/// samples match.
std::map<std::string, Correlation> correlate_monitors(const TimeSeries& phi,
                                                      const std::map<std::string, TimeSeries>& monitors,
                                                      double max_offset);

/// Per-group means of the shot monitors, aligned with the group times.
std::map<std::string, TimeSeries> group_monitor_means(std::span<const ShotRecord> shots,
                                                      std::span<const GroupedEllipse> groups);

// ---- sensitivity budget ------------------------------------------------------

struct BudgetTerm {
  double value = 0.0;  // rad
  bool bound = false;  // from an upper-bound row
  bool present = false;
};

struct BudgetRow {
  std::string parameter;
  double rms = 0.0;
  BudgetTerm phi_mean;
  BudgetTerm phi_diff;
};

struct Budget {
  std::vector<BudgetRow> rows;  // sorted by largest contribution, descending
  double total_mean = 0.0;      // quadrature sum of measured rows only
  double total_diff = 0.0;
  double bound_total_mean = 0.0;  // quadrature sum of bound rows
  double bound_total_diff = 0.0;
};

/// |slope| rms for linear rows, |curvature| rms^2 for quadratic ones. Throws
/// UnknownParameter when a name is not in the ledger.
Budget noise_budget(const SensitivityLedger& ledger, const std::map<std::string, double>& rms);

// ---- zero-current extrapolation ----------------------------------------------

enum class ParabolaModel { kParabola, kParabolaLinear };

struct CurrentPoint {
  double current = 0.0;  // A
  double phi = 0.0;
  double dphi = 0.0;
};

struct ZeroCurrentFit {
  double phi0 = 0.0;
  double phi0_error = 0.0;
  double linear = 0.0;     // rad/A
  double curvature = 0.0;  // rad/A^2
  double vertex = 0.0;     // A
  double vertex_error = 0.0;
  double stray_field = 0.0;  // T, vertex current times b0_per_amp
  double chi2 = 0.0;
};

/// Weighted polynomial fit in the current. Throws IllConditioned with fewer
/// than four distinct currents or a singular normal matrix.
ZeroCurrentFit extrapolate_zero_current(std::span<const CurrentPoint> points, ParabolaModel model,
                                        const PhysicsConfig& physics = {});

}  // namespace aigrad
