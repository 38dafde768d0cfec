#pragma once

#include <numbers>

namespace aigrad {

/// Physical constants and geometry of the dual-cloud gradiometer. SI units
/// throughout: rad/m, s, m/s, rad, rad/s, Hz/T^2, T/A, T.
struct PhysicsConfig {
  double k_e = 4.0 * std::numbers::pi / 780.241e-9;  // two-photon, counter-propagating
  double T = 0.160;
  double t_a = 0.005;
  double v_u = 4.3;
  double v_l = 3.5;
  double dz = 0.3;
  double latitude = 43.0 * std::numbers::pi / 180.0;
  double omega_earth = 7.292e-5;
  double alpha_zeeman = 57.5e9;
  double v_r = 0.0117;
  double g = 9.806;
  double b0_per_amp = 1.445e-3;
  double pulse_tau = 0.010;
  double delta_b = 1.0e-5;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// k_e g T^2.
double gravimeter_phase(const PhysicsConfig& cfg, double g);

/// First-order Coriolis shift of the differential phase for an east-west
/// tilt of the Raman wavevector. Throws TiltOutOfRange for |theta| > 0.1.
double coriolis_shift(const PhysicsConfig& cfg, double theta_ew);

/// d(coriolis_shift)/d(theta) at theta = 0, rad/rad.
double coriolis_coefficient(const PhysicsConfig& cfg);

/// Differential quadratic-Zeeman phase from a linear field gradient (T/m).
double zeeman_gradient_phase(const PhysicsConfig& cfg, double gamma);

/// Extra phase from the short-coil field pulse on top of a bias field b0 (T).
double pulsed_field_phase(const PhysicsConfig& cfg, double b0);

/// Slope of pulsed_field_phase with respect to solenoid current, rad/A.
double pulsed_field_slope_per_amp(const PhysicsConfig& cfg);

/// Raman resonance to first order in the beam intensities.
double raman_resonance(double f0, double c_m, double c_s, double i_m, double i_s);

/// Master/slave intensity ratio I_M/I_S that cancels the first-order light
/// shift for any total power.
double light_shift_cancelling_ratio(double c_m, double c_s);

/// Vertical gravity gradient (s^-2) from a differential phase. The
/// mass_correction offset has no default on purpose.
double gradient_from_phase(const PhysicsConfig& cfg, double phi, double mass_correction);

}  // namespace aigrad
