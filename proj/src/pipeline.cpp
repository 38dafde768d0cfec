#include "aigrad/pipeline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "aigrad/error.hpp"

namespace aigrad {

namespace {

struct GroupSpec {
  MassConfig mass_config;
  int k_sign;
  int segment;
  std::vector<std::size_t> members;  // positions in the shot span
};

std::vector<GroupSpec> partition(std::span<const ShotRecord> shots, int group_size) {
  std::vector<GroupSpec> out;
  std::size_t begin = 0;
  int segment = 0;
  while (begin < shots.size()) {
    std::size_t end = begin;
    while (end < shots.size() && shots[end].mass_config == shots[begin].mass_config) ++end;
    std::vector<GroupSpec> block;
    for (const int k : {1, -1}) {
      GroupSpec g{shots[begin].mass_config, k, segment, {}};
      for (std::size_t i = begin; i < end; ++i) {
        if (shots[i].k_sign != k) continue;
        g.members.push_back(i);
        if (g.members.size() == static_cast<std::size_t>(group_size)) {
          block.push_back(g);
          g.members.clear();
        }
      }
    }
    std::stable_sort(block.begin(), block.end(), [](const GroupSpec& a, const GroupSpec& b) {
      return a.members.front() < b.members.front();
    });
    out.insert(out.end(), block.begin(), block.end());
    begin = end;
    ++segment;
  }
  return out;
}

std::vector<PeakAreas> member_areas(std::span<const ShotRecord> shots, const GroupSpec& g) {
  std::vector<PeakAreas> a;
  a.reserve(g.members.size());
  for (const std::size_t i : g.members) a.push_back(shots[i].areas);
  return a;
}

}  // namespace

GroupingResult group_and_fit_report(std::span<const ShotRecord> shots, int group_size,
                                    const XiHandling& xi, const EllipseFitOptions& fit) {
  if (group_size < kMinGroupSize) {
    throw GroupTooSmall("group size " + std::to_string(group_size) + " is below " +
                        std::to_string(kMinGroupSize));
  }
  const std::vector<GroupSpec> specs = partition(shots, group_size);

  GroupingResult out;
  out.xi_lower = xi.xi_lower;
  out.xi_upper = xi.xi_upper;
  if (xi.mode == XiMode::kEstimated && !specs.empty()) {
    double sum = 0.0;
    for (const GroupSpec& g : specs) {
      const auto areas = member_areas(shots, g);
      sum += estimate_xi(areas, xi.search_lo, xi.search_hi, xi.options).xi_hat;
    }
    out.xi_lower = out.xi_upper = sum / static_cast<double>(specs.size());
  }

  out.groups.reserve(specs.size());
  for (const GroupSpec& g : specs) {
    const auto areas = member_areas(shots, g);
    GroupedEllipse e;
    e.mass_config = g.mass_config;
    e.k_sign = g.k_sign;
    e.segment = g.segment;
    e.first_index = shots[g.members.front()].index;
    e.last_index = shots[g.members.back()].index;
    e.n_shots = g.members.size();
    double t = 0.0;
    for (const std::size_t i : g.members) t += shots[i].time;
    e.time = t / static_cast<double>(g.members.size());
    e.xi_lower = out.xi_lower;
    e.xi_upper = out.xi_upper;
    e.fit = fit_ellipse(populations_from_areas(areas, out.xi_lower, out.xi_upper), fit);
    out.groups.push_back(std::move(e));
  }
  return out;
}

std::vector<GroupedEllipse> group_and_fit(std::span<const ShotRecord> shots, int group_size,
                                          const XiHandling& xi, const EllipseFitOptions& fit) {
  return group_and_fit_report(shots, group_size, xi, fit).groups;
}

// ---- k reversal and double difference ------------------------------------------

PhaseValue k_reversal_phase(const FitReport& direct, const FitReport& reverse) {
  if (!direct.converged || !reverse.converged) {
    throw NotConverged("k-reversal phase needs two converged ellipse fits");
  }
  return {direct.params.phi - reverse.params.phi, std::hypot(direct.dphi, reverse.dphi)};
}

std::vector<ConfigPhase> k_reversal_series(std::span<const GroupedEllipse> groups) {
  std::vector<ConfigPhase> out;
  std::size_t begin = 0;
  while (begin < groups.size()) {
    std::size_t end = begin;
    while (end < groups.size() && groups[end].segment == groups[begin].segment) ++end;
    std::vector<const GroupedEllipse*> dir, rev;
    for (std::size_t i = begin; i < end; ++i) (groups[i].k_sign > 0 ? dir : rev).push_back(&groups[i]);
    if (rev.empty()) {
      for (const auto* g : dir) {
        out.push_back({g->mass_config, g->segment, g->time, g->fit.params.phi, g->fit.dphi});
      }
    } else {
      const std::size_t n = std::min(dir.size(), rev.size());
      for (std::size_t j = 0; j < n; ++j) {
        const PhaseValue p = k_reversal_phase(dir[j]->fit, rev[j]->fit);
        out.push_back({dir[j]->mass_config, dir[j]->segment, 0.5 * (dir[j]->time + rev[j]->time),
                       p.phi, p.dphi});
      }
    }
    begin = end;
  }
  return out;
}

WeightedMean weighted_mean(std::span<const PhaseValue> values) {
  if (values.empty()) throw NoPairs("weighted mean of an empty set");
  double sw = 0.0, swx = 0.0;
  for (const auto& v : values) {
    if (!(v.dphi > 0.0)) throw DomainError("weighted mean needs positive errors");
    const double w = 1.0 / (v.dphi * v.dphi);
    sw += w;
    swx += w * v.phi;
  }
  WeightedMean m;
  m.mean = swx / sw;
  m.error = 1.0 / std::sqrt(sw);
  for (const auto& v : values) {
    const double r = (v.phi - m.mean) / v.dphi;
    m.chi2 += r * r;
  }
  return m;
}

std::vector<PhasePair> pair_configurations(std::span<const ConfigPhase> series) {
  // Collapse each block to one weighted value.
  std::vector<ConfigPhase> blocks;
  std::size_t begin = 0;
  while (begin < series.size()) {
    std::size_t end = begin;
    std::vector<PhaseValue> vals;
    double t = 0.0;
    while (end < series.size() && series[end].segment == series[begin].segment) {
      vals.push_back({series[end].phi, series[end].dphi});
      t += series[end].time;
      ++end;
    }
    const double n = static_cast<double>(vals.size());
    const bool weighted = std::all_of(vals.begin(), vals.end(), [](const PhaseValue& v) { return v.dphi > 0.0; });
    PhaseValue merged{0.0, 0.0};
    if (weighted) {
      const WeightedMean m = weighted_mean(vals);
      merged = {m.mean, m.error};
    } else {
      // Fits without uncertainties: plain mean, error left at zero.
      for (const auto& v : vals) merged.phi += v.phi / n;
    }
    blocks.push_back({series[begin].mass_config, series[begin].segment, t / n, merged.phi, merged.dphi});
    begin = end;
  }
  std::vector<PhasePair> out;
  for (std::size_t i = 0; i + 1 < blocks.size(); ++i) {
    if (blocks[i].mass_config == MassConfig::kC1 && blocks[i + 1].mass_config == MassConfig::kC2) {
      out.push_back({0.5 * (blocks[i].time + blocks[i + 1].time), blocks[i].phi, blocks[i].dphi,
                     blocks[i + 1].phi, blocks[i + 1].dphi});
      ++i;
    }
  }
  return out;
}

DoubleDifference double_difference(std::span<const PhasePair> pairs) {
  if (pairs.empty()) throw NoPairs("no C1/C2 pairs to difference");
  DoubleDifference out;
  out.points.reserve(pairs.size());
  for (const auto& p : pairs) out.points.push_back({p.phi1 - p.phi2, std::hypot(p.dphi1, p.dphi2)});
  const WeightedMean m = weighted_mean(out.points);
  out.mean = m.mean;
  out.error = m.error;
  out.chi2 = m.chi2;
  out.chi2_reduced = pairs.size() > 1 ? m.chi2 / static_cast<double>(pairs.size() - 1) : 0.0;
  return out;
}

// ---- Allan deviation ---------------------------------------------------------

AllanResult allan_deviation(std::span<const double> y, double dt, AllanMode mode) {
  if (y.size() < 8) throw SeriesTooShort("Allan deviation needs at least 8 samples");
  if (!(dt > 0.0)) throw DomainError("sample spacing must be > 0");
  const std::size_t n = y.size();
  // Prefix sums make every block sum O(1).
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + y[i];

  AllanResult r;
  for (std::size_t m = 1; 2 * m <= n; m *= 2) {
    double acc = 0.0;
    std::size_t count = 0;
    const double md = static_cast<double>(m);
    if (mode == AllanMode::kNonOverlapping) {
      const std::size_t blocks = n / m;
      for (std::size_t k = 0; k + 1 < blocks; ++k) {
        const double a = (cum[(k + 1) * m] - cum[k * m]) / md;
        const double b = (cum[(k + 2) * m] - cum[(k + 1) * m]) / md;
        acc += (b - a) * (b - a);
        ++count;
      }
    } else {
      for (std::size_t j = 0; j + 2 * m <= n; ++j) {
        const double a = (cum[j + m] - cum[j]) / md;
        const double b = (cum[j + 2 * m] - cum[j + m]) / md;
        acc += (b - a) * (b - a);
        ++count;
      }
    }
    if (count < 2) break;
    r.taus.push_back(md * dt);
    r.sigmas.push_back(std::sqrt(acc / (2.0 * static_cast<double>(count))));
    r.counts.push_back(count);
  }
  return r;
}

double allan_slope(const AllanResult& r, double tau_min, double tau_max) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < r.taus.size(); ++i) {
    if (r.sigmas[i] > 0.0 && r.taus[i] >= tau_min && r.taus[i] <= tau_max) {
      lx.push_back(std::log(r.taus[i]));
      ly.push_back(std::log(r.sigmas[i]));
    }
  }
  if (lx.size() < 2) throw DomainError("slope needs two points with sigma > 0");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

SensitivityConventions sensitivity_at_one_second(double sigma_shot, double cycle_period) {
  if (!(cycle_period > 0.0)) throw DomainError("cycle period must be > 0");
  return {sigma_shot * std::sqrt(cycle_period), sigma_shot / std::sqrt(cycle_period)};
}

// ---- monitor correlation -----------------------------------------------------

std::map<std::string, Correlation> correlate_monitors(const TimeSeries& phi,
                                                      const std::map<std::string, TimeSeries>& monitors,
                                                      double max_offset) {
  if (phi.time.size() != phi.value.size()) throw DomainError("phi series lengths differ");
  std::map<std::string, Correlation> out;
  for (const auto& [name, ch] : monitors) {
    if (ch.time.size() != ch.value.size()) throw DomainError("monitor '" + name + "' lengths differ");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < phi.time.size(); ++i) {
      // Monitor times are sorted; find the nearest neighbour.
      const auto it = std::lower_bound(ch.time.begin(), ch.time.end(), phi.time[i]);
      std::size_t best = ch.time.size();
      double dist = max_offset;
      for (auto cand : {it, it == ch.time.begin() ? it : it - 1}) {
        if (cand == ch.time.end()) continue;
        const double d = std::abs(*cand - phi.time[i]);
        if (d <= dist) {
          dist = d;
          best = static_cast<std::size_t>(cand - ch.time.begin());
        }
      }
      if (best == ch.time.size()) continue;
      a.push_back(phi.value[i]);
      b.push_back(ch.value[best]);
    }
    if (a.size() < 3) throw ConstantSeries("monitor '" + name + "' has fewer than 3 matched samples");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
      sab += (a[i] - ma) * (b[i] - mb);
    }
    if (!(saa > 0.0)) throw ConstantSeries("phi series is constant");
    if (!(sbb > 0.0)) throw ConstantSeries("monitor '" + name + "' is constant");
    Correlation c;
    c.r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
    c.n = a.size();
    c.stderr_r = (1.0 - c.r * c.r) / std::sqrt(n - 2.0 > 0.0 ? n - 2.0 : 1.0);
    out[name] = c;
  }
  return out;
}

std::map<std::string, TimeSeries> group_monitor_means(std::span<const ShotRecord> shots,
                                                      std::span<const GroupedEllipse> groups) {
  std::map<std::string, TimeSeries> out;
  for (const auto& g : groups) {
    std::map<std::string, double> sum;
    std::size_t n = 0;
    for (const auto& s : shots) {
      if (s.index < g.first_index || s.index > g.last_index || s.k_sign != g.k_sign) continue;
      for (const auto& [k, v] : s.monitors) sum[k] += v;
      ++n;
    }
    if (n == 0) continue;
    for (const auto& [k, v] : sum) {
      out[k].time.push_back(g.time);
      out[k].value.push_back(v / static_cast<double>(n));
    }
  }
  return out;
}

// ---- sensitivity budget ------------------------------------------------------

Budget noise_budget(const SensitivityLedger& ledger, const std::map<std::string, double>& rms) {
  Budget b;
  for (const auto& [name, value] : rms) {
    if (!ledger.has_parameter(name)) throw UnknownParameter("'" + name + "' is not in the ledger");
    if (!(value >= 0.0)) throw DomainError("RMS of '" + name + "' must be >= 0");
    BudgetRow row;
    row.parameter = name;
    row.rms = value;
    const auto term = [&](Quantity q) {
      BudgetTerm t;
      const LedgerEntry* e = ledger.find(name, q);
      if (!e || e->relation == Relation::kNotApplicable) return t;
      t.present = true;
      t.bound = e->relation == Relation::kUpperBound;
      t.value = std::abs(e->effect(value));
      return t;
    };
    row.phi_mean = term(Quantity::kPhiMean);
    row.phi_diff = term(Quantity::kPhiDiff);
    for (const BudgetTerm* t : {&row.phi_mean, &row.phi_diff}) {
      const bool mean = t == &row.phi_mean;
      double& total = t->bound ? (mean ? b.bound_total_mean : b.bound_total_diff)
                               : (mean ? b.total_mean : b.total_diff);
      total += t->value * t->value;
    }
    b.rows.push_back(std::move(row));
  }
  b.total_mean = std::sqrt(b.total_mean);
  b.total_diff = std::sqrt(b.total_diff);
  b.bound_total_mean = std::sqrt(b.bound_total_mean);
  b.bound_total_diff = std::sqrt(b.bound_total_diff);
  const auto key = [](const BudgetRow& r) {
    const double m = r.phi_mean.bound ? 0.0 : r.phi_mean.value;
    const double d = r.phi_diff.bound ? 0.0 : r.phi_diff.value;
    return std::max(m, d);
  };
  std::stable_sort(b.rows.begin(), b.rows.end(),
                   [&](const BudgetRow& x, const BudgetRow& y) { return key(x) > key(y); });
  return b;
}

// ---- zero-current extrapolation ----------------------------------------------

ZeroCurrentFit extrapolate_zero_current(std::span<const CurrentPoint> points, ParabolaModel model,
                                        const PhysicsConfig& physics) {
  std::vector<double> currents;
  for (const auto& p : points) {
    if (!(p.dphi > 0.0)) throw DomainError("extrapolation needs positive phase errors");
    currents.push_back(p.current);
  }
  std::sort(currents.begin(), currents.end());
  const auto distinct = std::unique(currents.begin(), currents.end()) - currents.begin();
  if (distinct < 4) throw IllConditioned("need at least 4 distinct currents");

  const bool linear = model == ParabolaModel::kParabolaLinear;
  const int np = linear ? 3 : 2;
  // Scale the current so the normal matrix stays well conditioned.
  double scale = 0.0;
  for (const auto& p : points) scale = std::max(scale, std::abs(p.current));
  const auto m = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd J(m, np);
  Eigen::VectorXd r(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double u = p.current / scale, w = 1.0 / p.dphi;
    J(i, 0) = w;
    J(i, np - 1) = w * u * u;
    if (linear) J(i, 1) = w * u;
    r(i) = w * p.phi;
  }
  const Eigen::MatrixXd N = J.transpose() * J;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(N);
  const auto& sv = svd.singularValues();
  if (!(sv(np - 1) > 1e-12 * sv(0))) throw IllConditioned("normal matrix is singular");
  const Eigen::MatrixXd cov = N.inverse();
  const Eigen::VectorXd c = cov * (J.transpose() * r);

  ZeroCurrentFit f;
  f.phi0 = c(0);
  f.phi0_error = std::sqrt(cov(0, 0));
  f.curvature = c(np - 1) / (scale * scale);
  f.linear = linear ? c(1) / scale : 0.0;
  f.chi2 = (J * c - r).squaredNorm();
  if (linear && f.curvature != 0.0) {
    f.vertex = -f.linear / (2.0 * f.curvature);
    // Gradient of -c1 / (2 c2) in scaled units, then back to amperes.
    const double c1 = c(1), c2 = c(2);
    Eigen::Vector2d g(-1.0 / (2.0 * c2), c1 / (2.0 * c2 * c2));
    Eigen::Matrix2d sub;
    sub << cov(1, 1), cov(1, 2), cov(2, 1), cov(2, 2);
    f.vertex_error = std::sqrt(g.dot(sub * g)) * scale;
  }
  f.stray_field = f.vertex * physics.b0_per_amp;
  return f;
}

}  // namespace aigrad
