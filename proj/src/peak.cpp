#include "aigrad/peak.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aigrad/error.hpp"
#include "aigrad/least_squares.hpp"

namespace aigrad {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;
constexpr int kPeakParams = 8;

double quartic(const PeakModel& m, double d) {
  return 1.0 + d * (m.a1 + d * (m.a2 + d * (m.a3 + d * m.a4)));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

struct WindowSamples {
  std::vector<double> t;
  std::vector<double> y;
};

WindowSamples extract(const DetectionTrace& trace, TimeWindow window) {
  WindowSamples s;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double t = trace.time(i);
    if (t >= window.begin && t <= window.end) {
      s.t.push_back(t);
      s.y.push_back(trace.values[i]);
    }
  }
  return s;
}

double edge_median(const std::vector<double>& y) {
  const std::size_t edge = std::max<std::size_t>(3, y.size() / 10);
  std::vector<double> edges(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(edge));
  edges.insert(edges.end(), y.end() - static_cast<std::ptrdiff_t>(edge), y.end());
  return median(std::move(edges));
}

// Robust sample-noise estimate from second differences, insensitive to the
// smooth peak itself.
double noise_estimate(const std::vector<double>& y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> d2;
  d2.reserve(y.size() - 2);
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    d2.push_back(std::abs(y[i + 1] - 2.0 * y[i] + y[i - 1]));
  }
  return median(std::move(d2)) / (0.6745 * std::sqrt(6.0));
}

// Peak height above the baseline after a short centred boxcar, so that a
// single noise spike does not count as a peak.
double smoothed_amplitude(const std::vector<double>& y, double base) {
  const std::size_t half = std::clamp<std::size_t>(y.size() / 64, 0, 7);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = half; i + half < y.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = i - half; j <= i + half; ++j) acc += y[j];
    best = std::max(best, acc / static_cast<double>(2 * half + 1));
  }
  return best - base;
}

}  // namespace

double PeakModel::signal(double t) const {
  const double d = t - x0;
  return h * quartic(*this, d) * std::exp(-0.5 * d * d / (sigma * sigma));
}

double PeakModel::operator()(double t) const { return signal(t) + baseline; }

bool PeakModel::valid() const {
  if (!(sigma > 0.0) || !(h > 0.0)) return false;
  for (int k = -40; k <= 40; ++k) {
    if (!(quartic(*this, 0.1 * k * sigma) > 0.0)) return false;
  }
  return true;
}

double peak_area(const PeakModel& m) {
  const double s2 = m.sigma * m.sigma;
  return m.h * m.sigma * kSqrt2Pi * (1.0 + m.a2 * s2 + 3.0 * m.a4 * s2 * s2);
}

std::size_t DetectionTrace::index_at(double t) const {
  if (values.empty()) return 0;
  const double k = std::round((t - t0) / dt);
  if (k <= 0.0) return 0;
  return std::min(values.size() - 1, static_cast<std::size_t>(k));
}

DetectionTrace DetectionTrace::from_samples(Channel channel,
                                            std::span<const std::pair<double, double>> samples) {
  if (samples.size() < 2) throw DomainError("a trace needs at least two samples");
  DetectionTrace trace;
  trace.channel = channel;
  trace.t0 = samples.front().first;
  trace.dt = (samples.back().first - samples.front().first) /
             static_cast<double>(samples.size() - 1);
  if (!(trace.dt > 0.0)) throw DomainError("trace times must increase");
  trace.values.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (std::abs(samples[i].first - trace.time(i)) > 1e-6 * trace.dt + 1e-12 * std::abs(trace.t0)) {
      throw DomainError("trace spacing is not uniform at sample " + std::to_string(i));
    }
    trace.values.push_back(samples[i].second);
  }
  return trace;
}

PeakModel initial_peak_guess(const DetectionTrace& trace, TimeWindow window) {
  const WindowSamples s = extract(trace, window);
  if (s.y.size() < 16) throw DegenerateWindow("window holds fewer than 16 samples");
  PeakModel m;
  m.baseline = edge_median(s.y);
  const auto peak = std::max_element(s.y.begin(), s.y.end());
  const std::size_t ipk = static_cast<std::size_t>(peak - s.y.begin());
  m.x0 = s.t[ipk];
  m.h = *peak - m.baseline;
  const double half = m.baseline + 0.5 * m.h;
  std::size_t lo = ipk;
  while (lo > 0 && s.y[lo] > half) --lo;
  std::size_t hi = ipk;
  while (hi + 1 < s.y.size() && s.y[hi] > half) ++hi;
  const double fwhm = std::max(s.t[hi] - s.t[lo], 2.0 * trace.dt);
  m.sigma = fwhm / 2.3548200450309493;
  return m;
}

PeakFit fit_peak(const DetectionTrace& trace, TimeWindow window) {
  return fit_peak(trace, window, initial_peak_guess(trace, window));
}

PeakFit fit_peak(const DetectionTrace& trace, TimeWindow window, const PeakModel& init) {
  const WindowSamples s = extract(trace, window);
  const std::size_t m = s.y.size();
  if (m < 16) throw DegenerateWindow("window holds fewer than 16 samples");
  if (!(init.sigma > 0.0)) throw DomainError("initial sigma must be > 0");

  const double base = edge_median(s.y);
  const double amplitude = smoothed_amplitude(s.y, base);
  const double noise = noise_estimate(s.y);
  if (!(amplitude > 3.0 * noise) || !(amplitude > 0.0)) {
    throw DegenerateWindow("peak SNR " + std::to_string(noise > 0 ? amplitude / noise : 0.0) +
                           " is below 3");
  }

  // Work in units where the initial peak has unit height, centre 0 and unit
  // width so that all eight parameters are O(1).
  const double h_scale = std::abs(init.h) > 0 ? std::abs(init.h) : amplitude;
  const double t_ref = init.x0;
  const double s_ref = init.sigma;
  Eigen::VectorXd tau(m), yn(m);
  for (std::size_t i = 0; i < m; ++i) {
    tau[static_cast<Eigen::Index>(i)] = (s.t[i] - t_ref) / s_ref;
    yn[static_cast<Eigen::Index>(i)] = s.y[i] / h_scale;
  }

  // p = (h, x0, sigma, c1..c4, b) with c_k = a_k sigma^k in scaled units.
  Eigen::VectorXd p(kPeakParams);
  p << init.h / h_scale, 0.0, 1.0, init.a1 * s_ref, init.a2 * s_ref * s_ref,
      init.a3 * std::pow(s_ref, 3), init.a4 * std::pow(s_ref, 4), init.baseline / h_scale;

  auto model = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    r.resize(static_cast<Eigen::Index>(m));
    if (J) J->resize(static_cast<Eigen::Index>(m), kPeakParams);
    const double h = q[0], x0 = q[1], sg = q[2];
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(m); ++i) {
      const double u = (tau[i] - x0) / sg;
      const double poly = 1.0 + u * (q[3] + u * (q[4] + u * (q[5] + u * q[6])));
      const double dpoly = q[3] + u * (2.0 * q[4] + u * (3.0 * q[5] + u * 4.0 * q[6]));
      const double e = std::exp(-0.5 * u * u);
      r[i] = h * poly * e + q[7] - yn[i];
      if (J) {
        const double dshape_du = h * (dpoly - u * poly) * e;
        (*J)(i, 0) = poly * e;
        (*J)(i, 1) = -dshape_du / sg;
        (*J)(i, 2) = -dshape_du * u / sg;
        (*J)(i, 3) = h * u * e;
        (*J)(i, 4) = h * u * u * e;
        (*J)(i, 5) = h * u * u * u * e;
        (*J)(i, 6) = h * u * u * u * u * e;
        (*J)(i, 7) = 1.0;
      }
    }
  };

  LmOptions opts;
  opts.max_iterations = 100;
  opts.relative_step_tolerance = 1e-10;
  // The shape terms leave a nearly flat valley; steps worth less than 0.01
  // in chi^2 end the search.
  opts.relative_cost_tolerance = 1e-2 / static_cast<double>(m - kPeakParams);

  // At a pure Gaussian the sigma and x0 columns coincide with the c2 and c1
  // columns, so the full problem is started from a Gaussian-only fit.
  const std::array<int, 4> gauss_idx{0, 1, 2, 7};
  Eigen::VectorXd g(4);
  for (int k = 0; k < 4; ++k) g[k] = p[gauss_idx[static_cast<std::size_t>(k)]];
  auto gauss_model = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    Eigen::VectorXd full = p;
    for (int k = 0; k < 4; ++k) full[gauss_idx[static_cast<std::size_t>(k)]] = v[k];
    Eigen::MatrixXd Jf;
    model(full, r, J ? &Jf : nullptr);
    if (J) {
      J->resize(r.size(), 4);
      for (int k = 0; k < 4; ++k) J->col(k) = Jf.col(gauss_idx[static_cast<std::size_t>(k)]);
    }
  };
  const LmResult seed = levenberg_marquardt(gauss_model, g, opts);
  for (int k = 0; k < 4; ++k) p[gauss_idx[static_cast<std::size_t>(k)]] = seed.params[k];

  const LmResult lm = levenberg_marquardt(model, p, opts);
  if (!lm.converged) {
    throw NoConvergence("peak fit did not converge in " + std::to_string(opts.max_iterations) +
                        " iterations");
  }
  const Eigen::VectorXd& q = lm.params;

  PeakFit fit;
  fit.iterations = lm.iterations;
  const double sigma = q[2] * s_ref;
  fit.model.h = q[0] * h_scale;
  fit.model.x0 = t_ref + q[1] * s_ref;
  fit.model.sigma = sigma;
  fit.model.a1 = q[3] / sigma;
  fit.model.a2 = q[4] / (sigma * sigma);
  fit.model.a3 = q[5] / std::pow(sigma, 3);
  fit.model.a4 = q[6] / std::pow(sigma, 4);
  fit.model.baseline = q[7] * h_scale;

  const double ss = lm.residuals.squaredNorm();
  fit.residual_rms = std::sqrt(ss / static_cast<double>(m)) * h_scale;

  // Covariance in scaled units, then mapped to physical parameters through
  // the Jacobian of the change of variables.
  const double dof = static_cast<double>(m) - kPeakParams;
  const Eigen::MatrixXd jtj = lm.jacobian.transpose() * lm.jacobian;
  const Eigen::MatrixXd cov_int =
      jtj.completeOrthogonalDecomposition().pseudoInverse() * (dof > 0 ? ss / dof : 0.0);
  Eigen::Matrix<double, 8, 8> T = Eigen::Matrix<double, 8, 8>::Zero();
  T(0, 0) = h_scale;
  T(1, 1) = s_ref;
  T(2, 2) = s_ref;
  for (int k = 1; k <= 4; ++k) {
    const double sk = std::pow(sigma, k);
    T(2 + k, 2 + k) = 1.0 / sk;
    T(2 + k, 2) = -k * q[2 + k] / (sk * q[2]);
  }
  T(7, 7) = h_scale;
  fit.covariance = T * cov_int * T.transpose();

  std::vector<double> res(lm.residuals.data(), lm.residuals.data() + lm.residuals.size());
  fit.runs_z = runs_test_z(res);
  fit.structured_residuals = fit.runs_z < -3.0;
  return fit;
}

double runs_test_z(std::span<const double> residuals) {
  std::size_t n_pos = 0, n_neg = 0, runs = 0;
  int last = 0;
  for (const double r : residuals) {
    const int sign = r > 0.0 ? 1 : (r < 0.0 ? -1 : 0);
    if (sign == 0) continue;
    (sign > 0 ? n_pos : n_neg)++;
    if (sign != last) ++runs;
    last = sign;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  const double n = np + nn;
  if (n_pos == 0 || n_neg == 0 || n < 3) return 0.0;
  const double mean = 2.0 * np * nn / n + 1.0;
  const double var = (mean - 1.0) * (mean - 2.0) / (n - 1.0);
  if (!(var > 0.0)) return 0.0;
  return (static_cast<double>(runs) - mean) / std::sqrt(var);
}

std::pair<DetectionTrace, DetectionTrace> remove_crosstalk(const DetectionTrace& f1,
                                                           const DetectionTrace& f2,
                                                           double kappa) {
  if (f1.size() != f2.size() || std::abs(f1.dt - f2.dt) > 1e-9 * f1.dt ||
      std::abs(f1.t0 - f2.t0) > 1e-6 * f1.dt) {
    throw MisalignedTraces("channels must share start time, spacing and length");
  }
  if (!(kappa >= 0.0 && kappa < 0.2)) throw DomainError("kappa must lie in [0, 0.2)");
  DetectionTrace g1 = f1, g2 = f2;
  const double norm = 1.0 / (1.0 - kappa * kappa);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    g1.values[i] = (f1.values[i] - kappa * f2.values[i]) * norm;
    g2.values[i] = (f2.values[i] - kappa * f1.values[i]) * norm;
  }
  return {std::move(g1), std::move(g2)};
}

double estimate_crosstalk(const DetectionTrace& signal, const DetectionTrace& leak,
                          TimeWindow window) {
  if (signal.size() != leak.size() || std::abs(signal.dt - leak.dt) > 1e-9 * signal.dt ||
      std::abs(signal.t0 - leak.t0) > 1e-6 * signal.dt) {
    throw MisalignedTraces("channels must share start time, spacing and length");
  }
  const WindowSamples s = extract(signal, window);
  const WindowSamples l = extract(leak, window);
  if (s.y.size() < 16) throw DegenerateWindow("window holds fewer than 16 samples");
  const double bs = edge_median(s.y);
  const double bl = edge_median(l.y);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    num += (l.y[i] - bl) * (s.y[i] - bs);
    den += (s.y[i] - bs) * (s.y[i] - bs);
  }
  if (!(den > 0.0)) throw ZeroSignal("no signal in crosstalk window");
  return num / den;
}

Populations normalized_populations(const PeakAreas& areas, double xi) {
  return normalized_populations(areas, xi, xi);
}

Populations normalized_populations(const PeakAreas& a, double xi_lower, double xi_upper) {
  if (!(a.a11 >= 0.0 && a.a21 >= 0.0 && a.a12 >= 0.0 && a.a22 >= 0.0)) {
    throw DomainError("peak areas must be >= 0");
  }
  if (!(xi_lower > 0.0) || !(xi_upper > 0.0)) throw DomainError("xi must be > 0");
  const double lower = a.a11 + a.a21 / xi_lower;
  const double upper = a.a12 + a.a22 / xi_upper;
  if (!(lower > 0.0)) throw ZeroSignal("lower cloud has zero total area");
  if (!(upper > 0.0)) throw ZeroSignal("upper cloud has zero total area");
  return {a.a11 / lower, a.a12 / upper};
}

}  // namespace aigrad
