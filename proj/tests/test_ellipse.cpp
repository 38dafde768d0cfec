#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "aigrad/ellipse.hpp"
#include "aigrad/error.hpp"
#include "aigrad/noise.hpp"
#include "doctest.h"

using namespace aigrad;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Point2> ellipse_points(const EllipseParams& p, int n, double noise, std::uint64_t seed,
                                   double t_range = 2.0 * kPi) {
  Rng rng = make_stream(seed);
  std::uniform_real_distribution<double> t(0.0, t_range);
  std::normal_distribution<double> unit;
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) {
    const double ti = t(rng);
    pts.push_back({p.A * std::sin(ti) + p.B + noise * unit(rng),
                   p.C * std::sin(ti + p.phi) + p.D + noise * unit(rng)});
  }
  return pts;
}

// Areas built straight from populations: A_1j = n_1j, A_2j = xi_j n_2j.
std::vector<PeakAreas> areas_from(std::span<const Point2> pts, double xi_lower, double xi_upper,
                                  double atoms = 1e5) {
  std::vector<PeakAreas> out;
  for (const auto& p : pts) {
    out.push_back({p.x * atoms, xi_lower * (1.0 - p.x) * atoms, p.y * atoms,
                   xi_upper * (1.0 - p.y) * atoms});
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

const EllipseParams kTypical{0.225, 0.5, 0.225, 0.5, kPi / 2};

}  // namespace

TEST_CASE("conic round trip") {
  for (const EllipseParams p : {kTypical, EllipseParams{0.1, 0.4, 0.3, 0.62, 0.2},
                                EllipseParams{0.2, 0.55, 0.18, 0.45, 2.9}}) {
    const EllipseParams q = conic_to_params(params_to_conic(p));
    CHECK(q.A == doctest::Approx(p.A).epsilon(1e-12));
    CHECK(q.B == doctest::Approx(p.B).epsilon(1e-12));
    CHECK(q.C == doctest::Approx(p.C).epsilon(1e-12));
    CHECK(q.D == doctest::Approx(p.D).epsilon(1e-12));
    CHECK(q.phi == doctest::Approx(p.phi).epsilon(1e-12));
  }
  // A reflected representation describes the same curve.
  const EllipseParams flipped = canonicalize({-0.2, 0.5, 0.3, 0.5, 0.4});
  CHECK(flipped.A == 0.2);
  CHECK(flipped.phi == doctest::Approx(kPi - 0.4));
}

TEST_CASE("noiseless self-consistency") {
  SUBCASE("typical ellipse") {
    std::vector<Point2> pts;
    for (int i = 0; i < 100; ++i) pts.push_back(kTypical.at(2.0 * kPi * i / 100.0));
    EllipseFitOptions o;
    o.uncertainty = UncertaintyMethod::kNone;
    const FitReport r = fit_ellipse(pts, o);
    CHECK(r.converged);
    CHECK(std::abs(r.params.phi - kTypical.phi) < 1e-9);
    CHECK(r.rms < 1e-9);
  }

  SUBCASE("random parameters") {
    Rng rng = make_stream(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EllipseFitOptions o;
    o.uncertainty = UncertaintyMethod::kNone;
    for (int k = 0; k < 50; ++k) {
      const EllipseParams p{0.05 + 0.3 * u(rng), 0.3 + 0.4 * u(rng), 0.05 + 0.3 * u(rng),
                            0.3 + 0.4 * u(rng), 0.1 + 2.9 * u(rng)};
      const auto pts = ellipse_points(p, 60, 0.0, 100 + static_cast<std::uint64_t>(k));
      const FitReport r = fit_ellipse(pts, o);
      CHECK(std::abs(r.params.phi - p.phi) < 1e-9);
      CHECK(r.params.A == doctest::Approx(p.A).epsilon(1e-9));
      CHECK(r.params.B == doctest::Approx(p.B).epsilon(1e-9));
      CHECK(r.params.C == doctest::Approx(p.C).epsilon(1e-9));
      CHECK(r.params.D == doctest::Approx(p.D).epsilon(1e-9));
    }
  }
}

TEST_CASE("order and translation invariance") {
  const auto pts = ellipse_points({0.2, 0.5, 0.21, 0.48, 1.1}, 300, 0.002, 8);
  EllipseFitOptions o;
  o.uncertainty = UncertaintyMethod::kNone;
  const FitReport ref = fit_ellipse(pts, o);

  auto shuffled = pts;
  Rng rng = make_stream(9);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const FitReport r1 = fit_ellipse(shuffled, o);
  CHECK(r1.params.phi == doctest::Approx(ref.params.phi).epsilon(1e-10));

  auto moved = pts;
  for (auto& p : moved) {
    p.x += 0.13;
    p.y -= 0.07;
  }
  const FitReport r2 = fit_ellipse(moved, o);
  CHECK(r2.params.phi == doctest::Approx(ref.params.phi).epsilon(1e-10));
  CHECK(r2.params.B == doctest::Approx(ref.params.B + 0.13).epsilon(1e-10));
  CHECK(r2.params.D == doctest::Approx(ref.params.D - 0.07).epsilon(1e-10));
}

TEST_CASE("degenerate inputs") {
  std::vector<Point2> five;
  for (int i = 0; i < 5; ++i) five.push_back(kTypical.at(i));
  CHECK_THROWS_AS(fit_conic(five), TooFewPoints);
  CHECK_THROWS_AS(fit_ellipse(five), TooFewPoints);

  std::vector<Point2> line;
  for (int i = 0; i < 20; ++i) line.push_back({0.1 * i, 0.3 + 0.2 * i});
  CHECK_THROWS_AS(fit_ellipse(line), DegenerateConic);

  // Points on both branches of x y = 1 must not come back as an ellipse.
  std::vector<Point2> hyper;
  for (int i = 1; i <= 10; ++i) {
    hyper.push_back({0.3 * i, 1.0 / (0.3 * i)});
    hyper.push_back({-0.3 * i, -1.0 / (0.3 * i)});
  }
  try {
    const Conic c = fit_conic(hyper);
    CHECK(4.0 * c.a * c.c - c.b * c.b > 0.0);
  } catch (const DegenerateConic&) {
  }
  CHECK_THROWS_AS(conic_to_params({1.0, 0.0, -1.0, 0.0, 0.0, -1.0}), DegenerateConic);
  CHECK_THROWS_AS(conic_to_params({1.0, 0.0, 1.0, 0.0, 0.0, 1.0}), DegenerateConic);
}

TEST_CASE("bootstrap uncertainty") {
  SUBCASE("dphi scales as N^-1/2") {
    std::vector<double> ns, dphis;
    EllipseFitOptions o;
    o.resamples = 200;
    for (int n : {100, 316, 1000, 3162, 10000}) {
      const auto pts = ellipse_points(kTypical, n, 0.0011, 20 + static_cast<std::uint64_t>(n));
      const FitReport r = fit_ellipse(pts, o);
      CHECK(r.resamples == 200);
      CHECK(r.dphi > 0.0);
      ns.push_back(n);
      dphis.push_back(r.dphi);
    }
    const double slope = loglog_slope(ns, dphis);
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.1));
  }

  SUBCASE("bootstrap matches the scatter of repeated fits") {
    EllipseFitOptions none;
    none.uncertainty = UncertaintyMethod::kNone;
    double s = 0.0, ss = 0.0;
    const int reps = 300;
    for (int k = 0; k < reps; ++k) {
      const auto pts = ellipse_points(kTypical, 400, 0.0011, 1000 + static_cast<std::uint64_t>(k));
      const double d = fit_ellipse(pts, none).params.phi;
      s += d;
      ss += d * d;
    }
    const double mc = std::sqrt(ss / reps - (s / reps) * (s / reps));
    const auto pts = ellipse_points(kTypical, 400, 0.0011, 7);
    EllipseFitOptions boot;
    const FitReport b = fit_ellipse(pts, boot);
    EllipseFitOptions lin;
    lin.uncertainty = UncertaintyMethod::kLinearized;
    const FitReport l = fit_ellipse(pts, lin);
    CHECK(b.dphi == doctest::Approx(mc).epsilon(0.2));
    CHECK(l.dphi == doctest::Approx(mc).epsilon(0.2));
    CHECK(to_string(b.uncertainty) == "residual-bootstrap");
  }

  SUBCASE("seeded replay") {
    const auto pts = ellipse_points(kTypical, 200, 0.0011, 3);
    EllipseFitOptions o;
    o.resamples = 50;
    CHECK(fit_ellipse(pts, o).dphi == fit_ellipse(pts, o).dphi);
  }
}

TEST_CASE("detection efficiency ratio") {
  const EllipseParams p{0.225, 0.5, 0.225, 0.5, 0.9};

  SUBCASE("phi and dphi are minimal at the true ratio") {
    const auto pts = ellipse_points(p, 720, 0.0011, 31);
    const auto areas = areas_from(pts, 1.0, 1.0);
    const std::vector<double> grid{0.9, 0.95, 1.0, 1.05, 1.1};
    EllipseFitOptions o;
    o.uncertainty = UncertaintyMethod::kLinearized;
    const auto curve = phi_vs_xi(areas, grid, o);
    REQUIRE(curve.size() == 5);
    const auto best_dphi = std::min_element(curve.begin(), curve.end(), [](auto& a, auto& b) {
      return a.dphi < b.dphi;
    });
    CHECK(best_dphi->xi == 1.0);
    // The quadratic phase bias is tens of urad, far below the noise-driven
    // slope of a 720-point set, so phi is checked on clean data.
    std::vector<Point2> clean;
    for (int i = 0; i < 720; ++i) clean.push_back(p.at(2.0 * kPi * i / 720.0));
    const auto phi_curve = phi_vs_xi(areas_from(clean, 1.0, 1.0), grid, o);
    const auto best_phi = std::min_element(phi_curve.begin(), phi_curve.end(),
                                           [](auto& a, auto& b) { return a.phi < b.phi; });
    CHECK(best_phi->xi == 1.0);
    CHECK_THROWS_AS(phi_vs_xi(areas, std::vector<double>{0.9, 1.0, 1.1}, o), DomainError);
  }

  SUBCASE("minimizer recovers a constructed ratio") {
    const auto pts = ellipse_points(p, 720, 2e-4, 32);
    const auto areas = areas_from(pts, 1.05, 1.05);
    XiOptions o;
    o.fit.resamples = 50;
    const XiEstimate e = estimate_xi(areas, 0.9, 1.2, o);
    CHECK(e.xi_hat == doctest::Approx(1.05).epsilon(0.01 / 1.05));
    CHECK(std::abs(e.phi_at_min - fit_ellipse(pts, o.fit).params.phi) < 100e-6);
    CHECK(e.curvature > 0.0);
    CHECK(e.fit.uncertainty == UncertaintyMethod::kBootstrap);
  }

  SUBCASE("minimum outside the interval") {
    const auto pts = ellipse_points(p, 720, 2e-4, 33);
    const auto areas = areas_from(pts, 1.0, 1.0);
    CHECK_THROWS_AS(estimate_xi(areas, 1.1, 1.3), NoMinimumInInterval);
    CHECK_THROWS_AS(estimate_xi(areas, 1.1, 1.0), DomainError);
  }

  SUBCASE("independent ratios per cloud") {
    const auto pts = ellipse_points(p, 720, 2e-4, 34);
    const auto areas = areas_from(pts, 0.98, 1.04);
    XiOptions o;
    o.fit.uncertainty = UncertaintyMethod::kNone;
    const XiPairEstimate e = estimate_xi_per_cloud(areas, 0.85, 1.2, o);
    CHECK(e.xi_lower == doctest::Approx(0.98).epsilon(0.01));
    CHECK(e.xi_upper == doctest::Approx(1.04).epsilon(0.01));
  }

  SUBCASE("residual objective") {
    const auto pts = ellipse_points(p, 720, 2e-4, 35);
    const auto areas = areas_from(pts, 0.96, 0.96);
    XiOptions o;
    o.objective = XiObjective::kResidualRms;
    o.fit.uncertainty = UncertaintyMethod::kNone;
    CHECK(estimate_xi(areas, 0.85, 1.15, o).xi_hat == doctest::Approx(0.96).epsilon(0.01));
  }
}
