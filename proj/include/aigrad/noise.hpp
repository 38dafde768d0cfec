#pragma once

#include <cstdint>
#include <random>

namespace aigrad {

/// Random engine used everywhere. Parallel workers derive independent
/// streams with make_stream(seed, worker_index).
using Rng = std::mt19937_64;

Rng make_stream(std::uint64_t seed, std::uint64_t stream_index = 0);

/// How the additive detection noise on (x, y) is drawn.
enum class DetectionNoiseMode {
  kQpn,        // x(1-x)/n at the current ellipse point
  kTechnical,  // constant tech_detection_rms
  kCombined,   // quadrature sum of the two
};

struct NoiseConfig {
  double n_lower = 2.0e5;  // detected atoms per shot, x channel
  double n_upper = 2.0e5;  // detected atoms per shot, y channel
  double tech_detection_rms = 0.00055;
  double contrast_jitter = 0.0;
  double bias_jitter = 0.0;
  double dphi_jitter = 0.0;
  DetectionNoiseMode mode = DetectionNoiseMode::kQpn;
  // Draw populations from an exact binomial instead of the Gaussian
  // approximation. Meant for small-n validation runs.
  bool exact_binomial = false;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One shot's worth of noise terms. Detection terms are additive on the
/// normalized populations; the rest perturb the ellipse parameters.
struct ShotNoise {
  double dA = 0.0;
  double dB = 0.0;
  double dC = 0.0;
  double dD = 0.0;
  double dphi = 0.0;
  double dx_d = 0.0;
  double dy_d = 0.0;
};

/// Variance of a normalized population x = n1 / (n1 + n2) given the
/// variances of the two state counts.
double detection_noise_at(double x, double n_total, double dn1_sq, double dn2_sq);

/// Variance of x from quantum projection noise alone, x(1-x)/n.
double qpn_variance_at(double x, double n_total);

/// Fringe-averaged projection-noise RMS for x = A sin t + B with n atoms.
double qpn_rms(double amplitude, double center, double n);

/// Detection-noise RMS at a point for the configured mode.
double detection_rms_at(const NoiseConfig& cfg, double x, double n_total);

/// Draws the seven noise terms in a fixed order (dA, dB, dC, dD, dphi,
/// dx_d, dy_d). x and y locate the current ideal ellipse point for the
/// population-dependent detection term.
ShotNoise sample_shot_noise(const NoiseConfig& cfg, Rng& rng, double x, double y);

}  // namespace aigrad
