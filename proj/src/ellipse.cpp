#include "aigrad/ellipse.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aigrad/error.hpp"
#include "aigrad/noise.hpp"

namespace aigrad {

namespace {


struct Normalization {
  double mx = 0.0, my = 0.0, scale = 1.0;
};

Normalization normalization_of(std::span<const Point2> pts) {
  Normalization n;
  for (const auto& p : pts) {
    n.mx += p.x;
    n.my += p.y;
  }
  n.mx /= static_cast<double>(pts.size());
  n.my /= static_cast<double>(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) ss += (p.x - n.mx) * (p.x - n.mx) + (p.y - n.my) * (p.y - n.my);
  n.scale = std::sqrt(ss / static_cast<double>(pts.size()));
  return n;
}

struct GeometricFit {
  EllipseParams params;
  std::vector<double> t;
  double sum_sq = 0.0;
  Eigen::Matrix<double, 5, 5> schur = Eigen::Matrix<double, 5, 5>::Zero();
  bool converged = false;
};

double sum_of_squares(const EllipseParams& p, std::span<const Point2> pts,
                      std::span<const double> t) {
  double ss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double rx = p.A * std::sin(t[i]) + p.B - pts[i].x;
    const double ry = p.C * std::sin(t[i] + p.phi) + p.D - pts[i].y;
    ss += rx * rx + ry * ry;
  }
  return ss;
}

// Orthogonal-distance fit over (A, B, C, D, phi, t_1..t_N). The normal
// equations are block-arrow shaped: a dense 5x5 block for the ellipse
// parameters and a diagonal block for the per-point phases, so each damped
// Gauss-Newton step reduces to a 5x5 Schur-complement solve.
GeometricFit refine_geometric(std::span<const Point2> pts, EllipseParams start,
                              std::vector<double> t, int max_iterations) {
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  using Mat5 = Eigen::Matrix<double, 5, 5>;
  const std::size_t n = pts.size();

  GeometricFit out;
  EllipseParams p = start;
  double cost = sum_of_squares(p, pts, t);
  double lambda = 1e-4;

  std::vector<Vec5> w(n);
  std::vector<double> v(n), gt(n), dt(n), t_trial(n);

  auto build = [&](Mat5& U, Vec5& gg) {
    U.setZero();
    gg.setZero();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::sin(t[i]), c = std::cos(t[i]);
      const double s2 = std::sin(t[i] + p.phi), c2 = std::cos(t[i] + p.phi);
      const double rx = p.A * s + p.B - pts[i].x;
      const double ry = p.C * s2 + p.D - pts[i].y;
      Vec5 jx, jy;
      jx << s, 1.0, 0.0, 0.0, 0.0;
      jy << 0.0, 0.0, s2, 1.0, p.C * c2;
      const double tx = p.A * c, ty = p.C * c2;
      U.noalias() += jx * jx.transpose() + jy * jy.transpose();
      gg.noalias() += jx * rx + jy * ry;
      w[i] = jx * tx + jy * ty;
      v[i] = tx * tx + ty * ty;
      gt[i] = tx * rx + ty * ry;
    }
  };

  Mat5 U;
  Vec5 gg;
  build(U, gg);
  int it = 0;
  for (; it < max_iterations; ++it) {
    bool accepted = false;
    bool stationary = false;
    bool small_step = false;
    while (!accepted) {
      Mat5 S = U;
      S.diagonal() += lambda * U.diagonal().cwiseMax(1e-30);
      Vec5 rhs = -gg;
      for (std::size_t i = 0; i < n; ++i) {
        const double vd = v[i] + lambda * std::max(v[i], 1e-12);
        S.noalias() -= w[i] * w[i].transpose() / vd;
        rhs.noalias() += w[i] * (gt[i] / vd);
      }
      const Vec5 dg = S.ldlt().solve(rhs);
      double max_dt = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double vd = v[i] + lambda * std::max(v[i], 1e-12);
        dt[i] = -(gt[i] + w[i].dot(dg)) / vd;
        t_trial[i] = t[i] + dt[i];
        max_dt = std::max(max_dt, std::abs(dt[i]));
      }
      EllipseParams trial{p.A + dg[0], p.B + dg[1], p.C + dg[2], p.D + dg[3], p.phi + dg[4]};
      const double trial_cost = sum_of_squares(trial, pts, t_trial);
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double scale = std::abs(p.A) + std::abs(p.B) + std::abs(p.C) + std::abs(p.D) + 1.0;
        small_step = dg.lpNorm<Eigen::Infinity>() <= 1e-12 * scale && max_dt <= 1e-10;
        p = trial;
        t.swap(t_trial);
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        build(U, gg);
        accepted = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          stationary = true;
          break;
        }
      }
    }
    if (stationary || small_step) {
      out.converged = true;
      break;
    }
  }

  // Undamped Schur complement: inverse gives the covariance of the ellipse
  // parameters with the phases marginalized.
  Mat5 S = U;
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] > 0.0) S.noalias() -= w[i] * w[i].transpose() / v[i];
  }
  out.params = p;
  out.t = std::move(t);
  out.sum_sq = cost;
  out.schur = S;
  return out;
}

struct CoreFit {
  EllipseParams params;
  std::vector<double> t;
  double sum_sq = 0.0;
  Eigen::Matrix<double, 5, 5> schur = Eigen::Matrix<double, 5, 5>::Zero();
  bool converged = true;
};

CoreFit fit_core(std::span<const Point2> pts, bool refine, int max_iterations) {
  CoreFit out;
  const EllipseParams seed = conic_to_params(fit_conic(pts));
  std::vector<double> t = project_onto_ellipse(seed, pts);
  if (!refine) {
    out.params = seed;
    out.sum_sq = sum_of_squares(seed, pts, t);
    out.t = std::move(t);
    return out;
  }
  GeometricFit g = refine_geometric(pts, seed, std::move(t), max_iterations);
  // The implicit curve fixes only cos(phi) and |A|, |C|; when the refined
  // representation is not canonical, switch and re-project the phases.
  const EllipseParams p = canonicalize(g.params);
  std::vector<double> tt = std::move(g.t);
  if (p.A != g.params.A || p.C != g.params.C || p.phi != g.params.phi) {
    tt = project_onto_ellipse(p, pts);
  }
  out.params = p;
  out.t = std::move(tt);
  out.sum_sq = sum_of_squares(p, pts, out.t);
  out.schur = g.schur;
  out.converged = g.converged;
  return out;
}

}  // namespace

Point2 EllipseParams::at(double t) const {
  return {A * std::sin(t) + B, C * std::sin(t + phi) + D};
}

std::string_view to_string(UncertaintyMethod m) {
  switch (m) {
    case UncertaintyMethod::kBootstrap:
      return "residual-bootstrap";
    case UncertaintyMethod::kLinearized:
      return "linearized";
    case UncertaintyMethod::kNone:
      return "none";
  }
  return "none";
}

Conic fit_conic(std::span<const Point2> pts) {
  if (pts.size() < 6) {
    throw TooFewPoints("need at least 6 points, got " + std::to_string(pts.size()));
  }
  const Normalization nz = normalization_of(pts);
  if (!(nz.scale > 0.0)) throw DegenerateConic("all points coincide");

  Eigen::Matrix3d S1 = Eigen::Matrix3d::Zero(), S2 = Eigen::Matrix3d::Zero(),
                  S3 = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const double x = (p.x - nz.mx) / nz.scale, y = (p.y - nz.my) / nz.scale;
    const Eigen::Vector3d quad(x * x, x * y, y * y);
    const Eigen::Vector3d lin(x, y, 1.0);
    S1.noalias() += quad * quad.transpose();
    S2.noalias() += quad * lin.transpose();
    S3.noalias() += lin * lin.transpose();
  }
  Eigen::FullPivLU<Eigen::Matrix3d> lu(S3);
  lu.setThreshold(1e-12);
  if (lu.rank() < 3) throw DegenerateConic("points are collinear");
  const Eigen::Matrix3d T = -lu.solve(S2.transpose());
  const Eigen::Matrix3d M = S1 + S2 * T;
  Eigen::Matrix3d reduced;
  reduced.row(0) = M.row(2) / 2.0;
  reduced.row(1) = -M.row(1);
  reduced.row(2) = M.row(0) / 2.0;

  const Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int best = -1;
  double best_cond = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond > best_cond) {
      best_cond = cond;
      best = k;
    }
  }
  if (best < 0) throw DegenerateConic("no elliptical solution");
  const Eigen::Vector3d a1 = es.eigenvectors().col(best).real();
  const Eigen::Vector3d a2 = T * a1;

  // Back to original coordinates: X = (x - mx) / s.
  const double s = nz.scale, mx = nz.mx, my = nz.my;
  const double A = a1[0] / (s * s), B = a1[1] / (s * s), C = a1[2] / (s * s);
  const double D = a2[0] / s, E = a2[1] / s, F = a2[2];
  Conic c;
  c.a = A;
  c.b = B;
  c.c = C;
  c.d = -2.0 * A * mx - B * my + D;
  c.e = -2.0 * C * my - B * mx + E;
  c.f = A * mx * mx + B * mx * my + C * my * my - D * mx - E * my + F;
  return c;
}

EllipseParams conic_to_params(const Conic& k) {
  const double disc = 4.0 * k.a * k.c - k.b * k.b;
  if (!(disc > 1e-14 * (k.a * k.a + k.b * k.b + k.c * k.c))) {
    throw DegenerateConic("best conic is not an ellipse (4ac - b^2 <= 0)");
  }
  // Centre from the vanishing gradient.
  const double cx = (k.b * k.e - 2.0 * k.c * k.d) / disc;
  const double cy = (k.b * k.d - 2.0 * k.a * k.e) / disc;
  const double f0 = k.f + 0.5 * (k.d * cx + k.e * cy);
  if (!(f0 != 0.0)) throw DegenerateConic("conic collapses to a point");
  const double a = -k.a / f0, b = -k.b / f0, c = -k.c / f0;
  if (!(a > 0.0 && c > 0.0)) throw DegenerateConic("conic has no real points");
  const double cos_phi = std::clamp(-b / (2.0 * std::sqrt(a * c)), -1.0, 1.0);
  const double sin_phi = std::sqrt(1.0 - cos_phi * cos_phi);
  if (!(sin_phi > 0.0)) throw DegenerateConic("ellipse collapses to a line");
  EllipseParams p;
  p.A = 1.0 / (sin_phi * std::sqrt(a));
  p.C = 1.0 / (sin_phi * std::sqrt(c));
  p.B = cx;
  p.D = cy;
  p.phi = std::acos(cos_phi);
  return p;
}

Conic params_to_conic(const EllipseParams& p) {
  // u^2 - 2 u v cos(phi) + v^2 = sin^2(phi), u = (x - B) / A, v = (y - D) / C.
  const double ia = 1.0 / p.A, ic = 1.0 / p.C, cp = std::cos(p.phi), sp = std::sin(p.phi);
  Conic k;
  k.a = ia * ia;
  k.b = -2.0 * cp * ia * ic;
  k.c = ic * ic;
  k.d = -2.0 * k.a * p.B - k.b * p.D;
  k.e = -2.0 * k.c * p.D - k.b * p.B;
  k.f = k.a * p.B * p.B + k.b * p.B * p.D + k.c * p.D * p.D - sp * sp;
  return k;
}

EllipseParams canonicalize(EllipseParams p) {
  double cos_phi = std::cos(p.phi);
  if (p.A < 0.0) cos_phi = -cos_phi;
  if (p.C < 0.0) cos_phi = -cos_phi;
  p.A = std::abs(p.A);
  p.C = std::abs(p.C);
  p.phi = std::acos(std::clamp(cos_phi, -1.0, 1.0));
  return p;
}

std::vector<double> project_onto_ellipse(const EllipseParams& p, std::span<const Point2> pts) {
  std::vector<double> t(pts.size());
  const double sp = std::sin(p.phi), cp = std::cos(p.phi);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // Algebraic phase as a starting point, then Newton on the squared
    // distance.
    const double u = (pts[i].x - p.B) / p.A;
    const double v = (pts[i].y - p.D) / p.C;
    double ti = std::abs(sp) > 1e-12 ? std::atan2(u, (v - u * cp) / sp) : std::asin(std::clamp(u, -1.0, 1.0));
    for (int it = 0; it < 20; ++it) {
      const double s = std::sin(ti), c = std::cos(ti);
      const double s2 = std::sin(ti + p.phi), c2 = std::cos(ti + p.phi);
      const double rx = p.A * s + p.B - pts[i].x;
      const double ry = p.C * s2 + p.D - pts[i].y;
      const double g = rx * p.A * c + ry * p.C * c2;
      double h = p.A * p.A * c * c + p.C * p.C * c2 * c2 - rx * p.A * s - ry * p.C * s2;
      if (!(h > 0.0)) h = p.A * p.A * c * c + p.C * p.C * c2 * c2 + 1e-300;
      const double step = g / h;
      ti -= step;
      if (std::abs(step) < 1e-14) break;
    }
    t[i] = ti;
  }
  return t;
}

FitReport fit_ellipse(std::span<const Point2> pts, const EllipseFitOptions& options) {
  CoreFit core = fit_core(pts, options.refine, options.max_iterations);
  const std::size_t n = pts.size();

  FitReport report;
  report.params = core.params;
  report.n_points = n;
  report.converged = core.converged;
  const double dof = static_cast<double>(n) - 5.0;
  report.rms = std::sqrt(core.sum_sq / dof);
  report.uncertainty = options.uncertainty;

  switch (options.uncertainty) {
    case UncertaintyMethod::kNone:
      break;
    case UncertaintyMethod::kLinearized: {
      Eigen::Matrix<double, 5, 5> S = core.schur;
      if (!options.refine) {
        // Schur complement was not formed on the algebraic path; build it
        // at the projected phases.
        GeometricFit g = refine_geometric(pts, core.params, core.t, 0);
        S = g.schur;
      }
      const Eigen::Matrix<double, 5, 5> cov =
          S.completeOrthogonalDecomposition().pseudoInverse() * (core.sum_sq / dof);
      report.dphi = std::sqrt(std::max(cov(4, 4), 0.0));
      break;
    }
    case UncertaintyMethod::kBootstrap: {
      std::vector<Point2> fitted(n), resid(n), sample(n);
      for (std::size_t i = 0; i < n; ++i) {
        fitted[i] = core.params.at(core.t[i]);
        resid[i] = {pts[i].x - fitted[i].x, pts[i].y - fitted[i].y};
      }
      double sum = 0.0, sum_sq = 0.0;
      int used = 0;
      for (int b = 0; b < options.resamples; ++b) {
        Rng rng = make_stream(options.seed, static_cast<std::uint64_t>(b));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t i = 0; i < n; ++i) {
          const Point2& r = resid[pick(rng)];
          sample[i] = {fitted[i].x + r.x, fitted[i].y + r.y};
        }
        try {
          const CoreFit refit = fit_core(sample, options.refine, options.max_iterations);
          // Compare on the branch closest to the original estimate.
          const double d = refit.params.phi - core.params.phi;
          sum += d;
          sum_sq += d * d;
          ++used;
        } catch (const Error&) {
          // A degenerate resample carries no information on the spread.
        }
      }
      report.resamples = used;
      if (used >= 2) {
        const double mean = sum / used;
        report.dphi = std::sqrt(std::max(0.0, (sum_sq - used * mean * mean) / (used - 1)));
      }
      break;
    }
  }
  return report;
}

// ---- detection-efficiency ratio ------------------------------------------------

std::vector<Populations> populations_from_areas(std::span<const PeakAreas> areas, double xi_lower,
                                                double xi_upper) {
  std::vector<Populations> pts;
  pts.reserve(areas.size());
  for (const auto& a : areas) pts.push_back(normalized_populations(a, xi_lower, xi_upper));
  return pts;
}

std::vector<XiSample> phi_vs_xi(std::span<const PeakAreas> areas, std::span<const double> grid,
                                const EllipseFitOptions& options) {
  if (grid.size() < 5) throw DomainError("xi grid needs at least 5 values");
  std::vector<XiSample> out;
  out.reserve(grid.size());
  for (const double xi : grid) {
    const auto pts = populations_from_areas(areas, xi, xi);
    const FitReport r = fit_ellipse(pts, options);
    out.push_back({xi, r.params.phi, r.dphi, r.rms});
  }
  return out;
}

namespace {

double objective_of(const FitReport& r, XiObjective o) {
  return o == XiObjective::kFitError ? r.dphi : r.rms;
}

// Resampled dphi is itself noisy in xi, which leaves the golden section
// chasing bootstrap scatter; the search uses the linearized dphi, which
// varies smoothly.
EllipseFitOptions objective_fit_options(const XiOptions& o) {
  EllipseFitOptions f = o.fit;
  f.uncertainty = o.objective == XiObjective::kResidualRms ? UncertaintyMethod::kNone
                                                           : UncertaintyMethod::kLinearized;
  return f;
}

template <typename F>
double golden_section(F&& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

XiEstimate estimate_xi(std::span<const PeakAreas> areas, double lo, double hi,
                       const XiOptions& options) {
  if (!(lo > 0.0 && hi > lo)) throw DomainError("xi interval must satisfy 0 < lo < hi");
  const EllipseFitOptions fo = objective_fit_options(options);
  auto objective = [&](double xi) {
    const auto pts = populations_from_areas(areas, xi, xi);
    return objective_of(fit_ellipse(pts, fo), options.objective);
  };
  const double xi_hat = golden_section(objective, lo, hi, options.tolerance);
  if (xi_hat - lo < 2.0 * options.tolerance || hi - xi_hat < 2.0 * options.tolerance) {
    throw NoMinimumInInterval("objective keeps decreasing towards the edge of [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  XiEstimate est;
  est.xi_hat = xi_hat;
  est.fit = fit_ellipse(populations_from_areas(areas, xi_hat, xi_hat), options.fit);
  est.phi_at_min = est.fit.params.phi;
  est.dphi_at_min = est.fit.dphi;
  const double h = options.curvature_step;
  const double f0 = objective(xi_hat);
  est.curvature = (objective(xi_hat + h) - 2.0 * f0 + objective(xi_hat - h)) / (h * h);
  return est;
}

XiPairEstimate estimate_xi_per_cloud(std::span<const PeakAreas> areas, double lo, double hi,
                                     const XiOptions& options, int rounds) {
  const XiEstimate common = estimate_xi(areas, lo, hi, options);
  const EllipseFitOptions fo = objective_fit_options(options);
  double xl = common.xi_hat, xu = common.xi_hat;
  for (int r = 0; r < rounds; ++r) {
    xl = golden_section(
        [&](double xi) {
          return objective_of(fit_ellipse(populations_from_areas(areas, xi, xu), fo),
                              options.objective);
        },
        lo, hi, options.tolerance);
    xu = golden_section(
        [&](double xi) {
          return objective_of(fit_ellipse(populations_from_areas(areas, xl, xi), fo),
                              options.objective);
        },
        lo, hi, options.tolerance);
  }
  XiPairEstimate out;
  out.xi_lower = xl;
  out.xi_upper = xu;
  out.fit = fit_ellipse(populations_from_areas(areas, xl, xu), options.fit);
  return out;
}

}  // namespace aigrad
