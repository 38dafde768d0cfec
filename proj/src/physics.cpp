#include "aigrad/physics.hpp"

#include <cmath>
#include <string>

#include "aigrad/error.hpp"

namespace aigrad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMaxTilt = 0.1;

void require_positive(double value, const char* name) {
  if (!(value > 0.0)) {
    throw ConfigError(std::string(name) + " must be strictly positive, got " +
                      std::to_string(value));
  }
}

}  // namespace

void PhysicsConfig::validate() const {
  require_positive(k_e, "k_e");
  require_positive(T, "T");
  require_positive(v_u, "v_u");
  require_positive(v_l, "v_l");
  require_positive(dz, "dz");
  require_positive(omega_earth, "omega_earth");
  require_positive(alpha_zeeman, "alpha_zeeman");
  require_positive(v_r, "v_r");
  require_positive(g, "g");
  require_positive(b0_per_amp, "b0_per_amp");
  require_positive(pulse_tau, "pulse_tau");
  require_positive(delta_b, "delta_b");
  if (!(t_a >= 0.0)) throw ConfigError("t_a must be >= 0");
  if (!(T > t_a)) throw ConfigError("T must exceed t_a");
  if (!(v_u > v_l)) throw ConfigError("v_u must exceed v_l (upper cloud launched faster)");
  if (!(std::abs(latitude) <= kPi / 2)) throw ConfigError("|latitude| must be <= pi/2");
}

double gravimeter_phase(const PhysicsConfig& cfg, double g) {
  return cfg.k_e * g * cfg.T * cfg.T;
}

double coriolis_shift(const PhysicsConfig& cfg, double theta_ew) {
  if (!(std::abs(theta_ew) <= kMaxTilt)) {
    throw TiltOutOfRange("|theta| = " + std::to_string(std::abs(theta_ew)) +
                         " rad exceeds the small-tilt limit of 0.1 rad");
  }
  return coriolis_coefficient(cfg) * std::sin(theta_ew);
}

double coriolis_coefficient(const PhysicsConfig& cfg) {
  return -2.0 * cfg.omega_earth * cfg.k_e * cfg.T * cfg.T * (cfg.v_u - cfg.v_l) *
         std::cos(cfg.latitude);
}

double zeeman_gradient_phase(const PhysicsConfig& cfg, double gamma) {
  return kPi * cfg.alpha_zeeman * gamma * gamma * (cfg.v_r + 2.0 * cfg.g * cfg.t_a) * cfg.T *
         cfg.T * cfg.dz;
}

double pulsed_field_phase(const PhysicsConfig& cfg, double b0) {
  if (!(b0 >= 0.0)) throw DomainError("b0 must be >= 0");
  const double b1 = b0 + cfg.delta_b;
  return 2.0 * kPi * cfg.alpha_zeeman * cfg.pulse_tau * (b1 * b1 - b0 * b0);
}

double pulsed_field_slope_per_amp(const PhysicsConfig& cfg) {
  return 4.0 * kPi * cfg.alpha_zeeman * cfg.pulse_tau * cfg.delta_b * cfg.b0_per_amp;
}

double raman_resonance(double f0, double c_m, double c_s, double i_m, double i_s) {
  if (!(i_m >= 0.0) || !(i_s >= 0.0)) throw DomainError("intensities must be >= 0");
  return f0 + c_m * i_m + c_s * i_s;
}

double light_shift_cancelling_ratio(double c_m, double c_s) {
  if (c_m == 0.0) throw DomainError("c_m must be non-zero");
  return -c_s / c_m;
}

double gradient_from_phase(const PhysicsConfig& cfg, double phi, double mass_correction) {
  if (!(cfg.dz > 0.0)) throw ConfigError("dz must be > 0");
  return phi / (cfg.k_e * cfg.T * cfg.T * cfg.dz) + mass_correction;
}

}  // namespace aigrad
