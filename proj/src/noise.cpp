#include "aigrad/noise.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aigrad/error.hpp"

namespace aigrad {

Rng make_stream(std::uint64_t seed, std::uint64_t stream_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_index),
                    static_cast<std::uint32_t>(stream_index >> 32)};
  return Rng(seq);
}

void NoiseConfig::validate() const {
  if (!(n_lower >= 1.0) || !(n_upper >= 1.0)) throw ConfigError("atom counts must be >= 1");
  if (!(tech_detection_rms >= 0.0) || !(contrast_jitter >= 0.0) || !(bias_jitter >= 0.0) ||
      !(dphi_jitter >= 0.0)) {
    throw ConfigError("noise RMS values must be >= 0");
  }
}

double detection_noise_at(double x, double n_total, double dn1_sq, double dn2_sq) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("x must lie in [0, 1], got " + std::to_string(x));
  if (!(n_total >= 1.0)) throw DomainError("n_total must be >= 1");
  // (1-x)^2 multiplies the F=1 variance; with (1-x^2) the projection-noise
  // limit would not reduce to x(1-x)/n.
  return (x * x * dn2_sq + (1.0 - x) * (1.0 - x) * dn1_sq) / (n_total * n_total);
}

double qpn_variance_at(double x, double n_total) {
  return detection_noise_at(x, n_total, x * n_total, (1.0 - x) * n_total);
}

double qpn_rms(double amplitude, double center, double n) {
  if (!(center > 0.0 && center < 1.0)) throw DomainError("center must lie in (0, 1)");
  if (!(amplitude >= 0.0)) throw DomainError("amplitude must be >= 0");
  if (!(n >= 1.0)) throw DomainError("n must be >= 1");
  const double numerator = 2.0 * center * (1.0 - center) - amplitude * amplitude;
  if (!(numerator > 0.0)) throw DomainError("2B(1-B) must exceed A^2");
  return std::sqrt(numerator / (2.0 * n));
}

double detection_rms_at(const NoiseConfig& cfg, double x, double n_total) {
  const double xc = std::clamp(x, 0.0, 1.0);
  switch (cfg.mode) {
    case DetectionNoiseMode::kQpn:
      return std::sqrt(qpn_variance_at(xc, n_total));
    case DetectionNoiseMode::kTechnical:
      return cfg.tech_detection_rms;
    case DetectionNoiseMode::kCombined:
      return std::sqrt(qpn_variance_at(xc, n_total) +
                       cfg.tech_detection_rms * cfg.tech_detection_rms);
  }
  return 0.0;
}

ShotNoise sample_shot_noise(const NoiseConfig& cfg, Rng& rng, double x, double y) {
  // Every term consumes exactly one standard normal so that the stream
  // layout does not depend on which RMS values are zero.
  std::normal_distribution<double> unit;
  ShotNoise n;
  n.dA = cfg.contrast_jitter * unit(rng);
  n.dB = cfg.bias_jitter * unit(rng);
  n.dC = cfg.contrast_jitter * unit(rng);
  n.dD = cfg.bias_jitter * unit(rng);
  n.dphi = cfg.dphi_jitter * unit(rng);
  n.dx_d = detection_rms_at(cfg, x, cfg.n_lower) * unit(rng);
  n.dy_d = detection_rms_at(cfg, y, cfg.n_upper) * unit(rng);
  return n;
}

}  // namespace aigrad
