#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "aigrad/point.hpp"

namespace aigrad {

/// Fluorescence peak: a Gaussian times a quartic in (t - x0), on a constant
/// baseline.
///   f(t) = h (1 + a1 d + a2 d^2 + a3 d^3 + a4 d^4) exp(-d^2 / 2 sigma^2) + baseline,
///   d = t - x0.
struct PeakModel {
  double h = 1.0;
  double x0 = 0.0;
  double sigma = 1.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double a4 = 0.0;
  double baseline = 0.0;

  double operator()(double t) const;
  /// Value without the baseline term.
  double signal(double t) const;
  /// sigma > 0, h > 0 and a positive polynomial factor over x0 +- 4 sigma.
  bool valid() const;
};

/// Integral of the model over the real line, baseline excluded.
double peak_area(const PeakModel& m);

enum class Channel { kF1, kF2 };

/// Uniformly sampled photodiode signal. Sample i sits at t0 + i * dt.
struct DetectionTrace {
  Channel channel = Channel::kF1;
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  std::size_t index_at(double t) const;

  /// Builds a trace from (time, value) pairs; throws DomainError unless the
  /// spacing is uniform to 1e-6 relative.
  static DetectionTrace from_samples(Channel channel,
                                     std::span<const std::pair<double, double>> samples);
};

struct TimeWindow {
  double begin = 0.0;
  double end = 0.0;
};

struct PeakFit {
  PeakModel model;
  double residual_rms = 0.0;
  // Order: h, x0, sigma, a1, a2, a3, a4, baseline.
  Eigen::Matrix<double, 8, 8> covariance = Eigen::Matrix<double, 8, 8>::Zero();
  double runs_z = 0.0;
  // True when the residual signs cluster (Wald-Wolfowitz z < -3), i.e. the
  // model misses structure in the data.
  bool structured_residuals = false;
  int iterations = 0;
};

/// Moment-based starting point: argmax, height above the edge median and
/// FWHM / 2.355, polynomial zero.
PeakModel initial_peak_guess(const DetectionTrace& trace, TimeWindow window);

/// Damped least-squares fit of the eight peak parameters over the samples
/// inside `window`. Throws DegenerateWindow when the peak SNR is below 3 and
/// NoConvergence after 100 iterations.
PeakFit fit_peak(const DetectionTrace& trace, TimeWindow window, const PeakModel& init);
PeakFit fit_peak(const DetectionTrace& trace, TimeWindow window);

/// Wald-Wolfowitz runs-test z-score of the residual signs.
double runs_test_z(std::span<const double> residuals);

/// Undoes symmetric channel mixing f1' = f1 + k f2, f2' = f2 + k f1.
std::pair<DetectionTrace, DetectionTrace> remove_crosstalk(const DetectionTrace& f1,
                                                           const DetectionTrace& f2,
                                                           double kappa);

/// Least-squares mixing fraction from a window where only `signal` carries a
/// peak: kappa = <leak, signal> / <signal, signal>, baselines removed.
double estimate_crosstalk(const DetectionTrace& signal, const DetectionTrace& leak,
                          TimeWindow window);

/// Peak areas A_ij: i = hyperfine state (1, 2), j = cloud (1 = lower,
/// 2 = upper).
struct PeakAreas {
  double a11 = 0.0;
  double a21 = 0.0;
  double a12 = 0.0;
  double a22 = 0.0;
};

/// F=1 fractions: x for the lower cloud, y for the upper cloud.
using Populations = Point2;

/// Normalized F=1 populations with the detection-efficiency distortion
/// undone: x = A11 / (A11 + A21 / xi). xi = 1 gives the raw ratios.
Populations normalized_populations(const PeakAreas& areas, double xi);
Populations normalized_populations(const PeakAreas& areas, double xi_lower, double xi_upper);

}  // namespace aigrad
