#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "aigrad/peak.hpp"
#include "aigrad/point.hpp"

namespace aigrad {

/// Parametric ellipse x = A sin t + B, y = C sin(t + phi) + D.
/// Canonical form: A, C > 0 and phi in (0, pi).
struct EllipseParams {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;
  double phi = 0.0;

  Point2 at(double t) const;
};

/// Implicit conic a x^2 + b xy + c y^2 + d x + e y + f = 0.
struct Conic {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0, e = 0.0, f = 0.0;
};

enum class UncertaintyMethod {
  kBootstrap,   // refits of residual-resampled data
  kLinearized,  // Gauss-Newton covariance of the geometric fit
  kNone,
};

std::string_view to_string(UncertaintyMethod m);

struct EllipseFitOptions {
  bool refine = true;  // geometric refinement after the algebraic seed
  UncertaintyMethod uncertainty = UncertaintyMethod::kBootstrap;
  int resamples = 200;
  std::uint64_t seed = 0x5eed;
  int max_iterations = 100;
};

struct FitReport {
  EllipseParams params;
  double dphi = 0.0;  // 1 sigma
  double rms = 0.0;   // RMS geometric residual
  std::size_t n_points = 0;
  bool converged = false;
  UncertaintyMethod uncertainty = UncertaintyMethod::kNone;
  int resamples = 0;
};

/// Direct least-squares conic fit constrained to ellipses (numerically
/// stable variant of the Fitzgibbon eigenproblem). Throws TooFewPoints or
/// DegenerateConic.
Conic fit_conic(std::span<const Point2> points);

/// Converts an ellipse conic to canonical parametric form. Throws
/// DegenerateConic for hyperbolae, parabolae and empty conics.
EllipseParams conic_to_params(const Conic& conic);
Conic params_to_conic(const EllipseParams& p);

/// Maps any (A, C, phi) representation of a curve onto the canonical one.
EllipseParams canonicalize(EllipseParams p);

/// Parameter t of the point on the ellipse closest to each input point.
std::vector<double> project_onto_ellipse(const EllipseParams& p, std::span<const Point2> points);

FitReport fit_ellipse(std::span<const Point2> points, const EllipseFitOptions& options = {});

// ---- detection-efficiency ratio ------------------------------------------------

enum class XiObjective {
  kFitError,     // dphi of the ellipse fit
  kResidualRms,  // RMS geometric residual
};

struct XiSample {
  double xi = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  double rms = 0.0;
};

struct XiOptions {
  EllipseFitOptions fit;
  XiObjective objective = XiObjective::kFitError;
  double tolerance = 1e-4;
  double curvature_step = 0.005;
};

std::vector<Populations> populations_from_areas(std::span<const PeakAreas> areas, double xi_lower,
                                                double xi_upper);

/// Phase and fit error of the ellipse recomputed at each trial xi.
std::vector<XiSample> phi_vs_xi(std::span<const PeakAreas> areas, std::span<const double> xi_grid,
                                const EllipseFitOptions& options = {});

struct XiEstimate {
  double xi_hat = 0.0;
  double phi_at_min = 0.0;
  double dphi_at_min = 0.0;
  double curvature = 0.0;  // d^2 objective / d xi^2 at the minimum
  FitReport fit;
};

/// Golden-section minimization of the fit objective over [lo, hi]. Throws
/// NoMinimumInInterval when the minimum sits on an endpoint.
XiEstimate estimate_xi(std::span<const PeakAreas> areas, double lo, double hi,
                       const XiOptions& options = {});

struct XiPairEstimate {
  double xi_lower = 0.0;
  double xi_upper = 0.0;
  FitReport fit;
};

/// Independent ratios for the two clouds by alternating one-dimensional
/// searches, starting from the common estimate.
XiPairEstimate estimate_xi_per_cloud(std::span<const PeakAreas> areas, double lo, double hi,
                                     const XiOptions& options = {}, int rounds = 3);

}  // namespace aigrad
