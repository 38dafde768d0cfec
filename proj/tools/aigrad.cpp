// aigrad: simulate, fit and analyze dual-cloud gradiometer data.
//
// Exit codes: 0 success, 2 config or usage error, 3 I/O error, 4 fit
// failure, 5 insufficient data, 1 anything else.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aigrad/error.hpp"
#include "aigrad/io.hpp"
#include "aigrad/pipeline.hpp"
#include "aigrad/simulator.hpp"

namespace fs = std::filesystem;
using namespace aigrad;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kFit = 4, kData = 5 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

FullConfig resolve(const Globals& g) {
  FullConfig cfg = g.config.empty() ? config_from_json(Json::object()) : load_config(g.config);
  if (g.seed) cfg.run.noise.seed = *g.seed;
  if (!g.out.empty()) cfg.io.out = g.out;
  return cfg;
}

// "-" sends data to stdout.
void emit(const std::string& out, const std::string& text) {
  if (out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

std::string out_or(const FullConfig& cfg, const std::string& fallback) {
  return cfg.io.out.empty() ? fallback : cfg.io.out;
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const Globals& g, const std::string& format_flag, int n_traces) {
  FullConfig cfg = resolve(g);
  if (!format_flag.empty()) cfg.io.format = format_flag;
  if (cfg.io.format != "csv" && cfg.io.format != "jsonl") throw ConfigError("--format must be csv or jsonl");
  const fs::path dir = out_or(cfg, "aigrad_run");
  const std::string hash = config_hash(cfg);

  const auto shots = simulate_run(cfg.run);
  std::ostringstream data;
  const std::string shots_name = cfg.io.format == "csv" ? "shots.csv" : "shots.jsonl";
  if (cfg.io.format == "csv") {
    write_shots_csv(data, shots, hash);
  } else {
    write_shots_jsonl(data, shots, hash);
  }
  write_file(dir / shots_name, data.str());

  Json files = Json::array({shots_name});
  if (n_traces > 0) {
    Rng rng = make_stream(cfg.run.noise.seed, 2);
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(n_traces), shots.size());
    for (std::size_t i = 0; i < count; ++i) {
      const TracePair tp = simulate_trace(peaks_for_shot(shots[i].areas, cfg.peak_shape), cfg.traces, rng);
      for (const auto* tr : {&tp.f1, &tp.f2}) {
        std::ostringstream ts;
        write_trace_csv(ts, *tr, hash);
        const std::string name = "traces/shot_" + std::to_string(i) + (tr == &tp.f1 ? "_f1.csv" : "_f2.csv");
        write_file(dir / name, ts.str());
        files.push_back(name);
      }
    }
  }

  const Schedule& s = cfg.run.schedule;
  Json sched{{"n_shots", s.n_shots}, {"cycle_period_s", s.cycle_period}, {"k_reversal", s.k_reversal}};
  if (s.modulation_period > 0) {
    sched["cycles_per_config"] = s.modulation_period;
    sched["config_period_min"] = (s.modulation_period * s.cycle_period + s.dead_time) / 60.0;
    sched["ellipses_per_config_period"] = s.modulation_period / s.group_size;
    sched["points_per_ellipse"] = s.group_size;
  }
  // The output location is not part of the run; leaving it out keeps the
  // manifest identical across output directories.
  Json manifest_config = config_to_json(cfg);
  manifest_config.erase("io");
  Json manifest{{"schema_version", kManifestSchemaVersion},
                {"tool", "aigrad"},
                {"version", kVersion},
                {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                      std::to_string(EIGEN_MINOR_VERSION)},
                {"config_hash", hash},
                {"seed", cfg.run.noise.seed},
                {"ledger_version", SensitivityLedger::builtin().version()},
                {"schedule", sched},
                {"files", files},
                {"config", manifest_config}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cerr << "wrote " << shots.size() << " shots to " << (dir / shots_name).string() << "\n";
  return kOk;
}

// ---- fit ---------------------------------------------------------------------

bool looks_like_points(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    return line.rfind("x,y", 0) == 0 || std::count(line.begin(), line.end(), ',') == 1;
  }
  return false;
}

int cmd_fit(const Globals& g, const std::string& input, const std::string& xi_mode, int group) {
  FullConfig cfg = resolve(g);
  if (xi_mode == "estimate") cfg.analysis.xi.mode = XiMode::kEstimated;
  else if (xi_mode == "fixed") cfg.analysis.xi.mode = XiMode::kFixed;
  else if (!xi_mode.empty()) throw ConfigError("--xi must be fixed or estimate");
  if (group > 0) cfg.analysis.group_size = group;
  cfg.analysis.xi.options.fit = cfg.analysis.fit;
  const std::string out = out_or(cfg, "fit.json");
  const std::string hash = config_hash(cfg);

  Json report{{"config_hash", hash}, {"input", input}};
  if (looks_like_points(input)) {
    std::ifstream f(input);
    const auto pts = read_points(f);
    const FitReport r = fit_ellipse(pts, cfg.analysis.fit);
    report["fit"] = to_json(r);
    std::fprintf(stderr, "phi = %.9f +- %.3g rad (%zu points)\n", r.params.phi, r.dphi, r.n_points);
  } else {
    const auto shots = read_shots_file(input);
    const GroupingResult gr = group_and_fit_report(shots, cfg.analysis.group_size, cfg.analysis.xi,
                                                   cfg.analysis.fit);
    if (gr.groups.empty()) {
      throw GroupTooSmall("no complete group of " + std::to_string(cfg.analysis.group_size) + " shots");
    }
    report["xi_mode"] = cfg.analysis.xi.mode == XiMode::kEstimated ? "estimate" : "fixed";
    report["xi_lower"] = gr.xi_lower;
    report["xi_upper"] = gr.xi_upper;
    Json groups = Json::array();
    for (std::size_t i = 0; i < gr.groups.size(); ++i) {
      const auto& e = gr.groups[i];
      groups.push_back(to_json(e));
      std::fprintf(stderr, "group %zu %s k=%+d: phi = %.6f +- %.3g rad\n", i,
                   std::string(to_string(e.mass_config)).c_str(), e.k_sign, e.fit.params.phi,
                   e.fit.dphi);
    }
    if (cfg.analysis.xi.mode == XiMode::kEstimated) {
      std::fprintf(stderr, "xi = %.5f\n", gr.xi_lower);
    }
    report["groups"] = groups;
  }
  emit(out, report.dump(2) + "\n");
  return kOk;
}

// ---- analyze -----------------------------------------------------------------

struct AnalyzeFlags {
  bool allan = false, double_diff = false, budget = false, correlate = false;
  int group = 0;
  std::string ledger;
  std::string timescale = "day";
};

SensitivityLedger pick_ledger(const std::string& path) {
  return path.empty() ? SensitivityLedger::builtin() : SensitivityLedger::load(path);
}

Timescale pick_timescale(const std::string& s) {
  if (s == "day") return Timescale::kDay;
  if (s == "te" || s == "ellipse") return Timescale::kEllipse;
  throw ConfigError("--timescale must be te or day");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string budget_csv(const Budget& b, std::string_view hash) {
  std::ostringstream os;
  os << "# config_hash=" << hash << "\n";
  os << "rank,parameter,rms,phi_mean_rad,phi_mean_bound,phi_diff_rad,phi_diff_bound\n";
  int rank = 1;
  for (const auto& r : b.rows) {
    os << rank++ << ',' << r.parameter << ',' << r.rms << ','
       << (r.phi_mean.present ? num(r.phi_mean.value) : "") << ','
       << (r.phi_mean.bound ? "bound" : "") << ','
       << (r.phi_diff.present ? num(r.phi_diff.value) : "") << ','
       << (r.phi_diff.bound ? "bound" : "") << '\n';
  }
  return os.str();
}

bool insufficient(const std::exception& e) {
  return dynamic_cast<const GroupTooSmall*>(&e) || dynamic_cast<const NoPairs*>(&e) ||
         dynamic_cast<const SeriesTooShort*>(&e) || dynamic_cast<const ConstantSeries*>(&e);
}

int cmd_analyze(const Globals& g, const std::string& input, AnalyzeFlags fl) {
  FullConfig cfg = resolve(g);
  // Without flags every analysis runs and those lacking data are skipped;
  // an explicitly requested one fails with exit code 5 instead.
  const bool requested = fl.allan || fl.double_diff || fl.budget || fl.correlate;
  if (!requested) fl.allan = fl.double_diff = fl.budget = fl.correlate = true;
  if (fl.group > 0) cfg.analysis.group_size = fl.group;
  const fs::path dir = out_or(cfg, "aigrad_analysis");
  const std::string hash = config_hash(cfg);
  const auto shots = read_shots_file(input);
  Json report{{"config_hash", hash}, {"input", input}};
  const auto section = [&](const char* name, const auto& body) {
    try {
      body();
    } catch (const std::exception& e) {
      if (requested || !insufficient(e)) throw;
      report[name] = {{"skipped", e.what()}};
    }
  };

  std::vector<GroupedEllipse> phase_groups;
  if (fl.allan || fl.correlate) {
    phase_groups = group_and_fit(shots, cfg.analysis.allan_group, cfg.analysis.xi, cfg.analysis.fit);
    // One (configuration, direction) class keeps the series homogeneous.
    if (!phase_groups.empty()) {
      const auto first = phase_groups.front();
      std::erase_if(phase_groups, [&](const GroupedEllipse& e) {
        return e.mass_config != first.mass_config || e.k_sign != first.k_sign;
      });
    }
  }

  if (fl.allan) section("allan", [&] {
    std::vector<double> phi;
    for (const auto& e : phase_groups) phi.push_back(e.fit.params.phi);
    if (phi.size() < 8) throw SeriesTooShort("Allan deviation needs 8 groups, have " + std::to_string(phi.size()));
    const double dt = (phase_groups.back().time - phase_groups.front().time) /
                      static_cast<double>(phase_groups.size() - 1);
    const AllanResult a = allan_deviation(phi, dt);
    std::ostringstream os;
    write_allan_csv(os, a, hash);
    write_file(dir / "allan.csv", os.str());
    // Per-shot phase noise from the shortest tau, assuming white noise.
    const double cycle = cfg.run.schedule.cycle_period;
    const double sigma_shot = a.sigmas.front() * std::sqrt(static_cast<double>(cfg.analysis.allan_group));
    const SensitivityConventions sc = sensitivity_at_one_second(sigma_shot, cycle);
    report["allan"] = {{"group_size", cfg.analysis.allan_group},
                       {"dt", dt},
                       {"n_points", phi.size()},
                       {"slope", a.taus.size() >= 2 ? Json(allan_slope(a)) : Json(nullptr)},
                       {"sigma_per_shot", sigma_shot},
                       {"sensitivity_1s_times_sqrt_cycle", sc.times_sqrt_cycle},
                       {"sensitivity_1s_over_sqrt_cycle", sc.over_sqrt_cycle},
                       {"file", "allan.csv"}};
  });

  if (fl.correlate) section("correlation", [&] {
    TimeSeries phi;
    for (const auto& e : phase_groups) {
      phi.time.push_back(e.time);
      phi.value.push_back(e.fit.params.phi);
    }
    const auto monitors = group_monitor_means(shots, phase_groups);
    Json corr = Json::object();
    for (const auto& [name, series] : monitors) {
      try {
        const auto r = correlate_monitors(phi, {{name, series}}, 0.5 * cfg.run.schedule.cycle_period);
        const Correlation& c = r.at(name);
        corr[name] = {{"r", c.r}, {"stderr", c.stderr_r}, {"n", c.n}};
      } catch (const ConstantSeries& e) {
        corr[name] = {{"error", e.what()}};
      }
    }
    report["correlation"] = corr;
  });

  if (fl.double_diff) section("double_difference", [&] {
    const auto groups = group_and_fit(shots, cfg.analysis.group_size, cfg.analysis.xi, cfg.analysis.fit);
    const auto series = k_reversal_series(groups);
    const auto pairs = pair_configurations(series);
    const DoubleDifference dd = double_difference(pairs);
    std::ostringstream os;
    os << "# config_hash=" << hash << "\ntime,delta_phi,error\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pairs[i].time, dd.points[i].phi, dd.points[i].dphi);
      os << buf;
    }
    write_file(dir / "double_diff.csv", os.str());
    report["double_difference"] = to_json(dd);
    std::fprintf(stderr, "delta phi = %.6g +- %.3g rad, chi2 = %.2f over %zu pairs\n", dd.mean, dd.error,
                 dd.chi2, pairs.size());
  });

  if (fl.budget) section("budget", [&] {
    const SensitivityLedger ledger = pick_ledger(fl.ledger);
    const Budget b = noise_budget(ledger, ledger_rms(ledger, pick_timescale(fl.timescale)));
    write_file(dir / "budget.csv", budget_csv(b, hash));
    report["budget"] = to_json(b);
    report["budget"]["timescale"] = fl.timescale;
  });

  write_file(dir / "report.json", report.dump(2) + "\n");
  return kOk;
}

// ---- budget ------------------------------------------------------------------

int cmd_budget(const Globals& g, const std::string& ledger_path, const std::string& timescale,
               const std::vector<std::string>& overrides) {
  FullConfig cfg = resolve(g);
  const SensitivityLedger ledger = pick_ledger(ledger_path);
  auto rms = ledger_rms(ledger, pick_timescale(timescale));
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--rms expects name=value, got '" + o + "'");
    const std::string name = o.substr(0, eq);
    try {
      rms[name] = std::stod(o.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("--rms value for '" + name + "' is not a number");
    }
  }
  const Budget b = noise_budget(ledger, rms);
  const std::string hash = config_hash(cfg);
  Json j = to_json(b);
  j["config_hash"] = hash;
  j["timescale"] = timescale;
  j["ledger_version"] = ledger.version();
  const std::string out = out_or(cfg, "budget.json");
  if (out == "-") {
    std::cout << budget_csv(b, hash);
  } else {
    write_file(out, j.dump(2) + "\n");
  }
  for (std::size_t i = 0; i < b.rows.size() && i < 5; ++i) {
    const auto& r = b.rows[i];
    std::fprintf(stderr, "%zu. %-24s mean %.3g mrad%s  diff %.3g mrad%s\n", i + 1, r.parameter.c_str(),
                 r.phi_mean.value * 1e3, r.phi_mean.bound ? " (bound)" : "", r.phi_diff.value * 1e3,
                 r.phi_diff.bound ? " (bound)" : "");
  }
  std::fprintf(stderr, "total (measured rows): mean %.3g mrad, diff %.3g mrad\n", b.total_mean * 1e3,
               b.total_diff * 1e3);
  return kOk;
}

// ---- trace-fit ---------------------------------------------------------------

int cmd_trace_fit(const Globals& g, const std::string& f1_path, const std::string& f2_path,
                  double crosstalk) {
  FullConfig cfg = resolve(g);
  std::ifstream f1(f1_path), f2(f2_path);
  if (!f1) throw IoError("cannot open " + f1_path);
  if (!f2) throw IoError("cannot open " + f2_path);
  DetectionTrace t1 = read_trace_csv(f1, Channel::kF1);
  DetectionTrace t2 = read_trace_csv(f2, Channel::kF2);
  if (crosstalk != 0.0) std::tie(t1, t2) = remove_crosstalk(t1, t2, crosstalk);
  const auto windows = peak_windows(cfg.peak_shape);
  const PeakAreas a = areas_from_traces({t1, t2}, windows);
  const double xl = cfg.analysis.xi.xi_lower, xu = cfg.analysis.xi.xi_upper;
  const Populations p = normalized_populations(a, xl, xu);
  Json j{{"config_hash", config_hash(cfg)},
         {"A11", a.a11}, {"A21", a.a21}, {"A12", a.a12}, {"A22", a.a22},
         {"xi_lower", xl}, {"xi_upper", xu}, {"x", p.x}, {"y", p.y}};
  emit(out_or(cfg, "trace_fit.json"), j.dump(2) + "\n");
  std::fprintf(stderr, "x = %.6f, y = %.6f\n", p.x, p.y);
  return kOk;
}

template <class... E>
bool is_any(const std::exception& e) {
  return ((dynamic_cast<const E*>(&e) != nullptr) || ...);
}

int exit_code_for(const std::exception& e) {
  if (is_any<ConfigError, UnknownParameter, DomainError, TiltOutOfRange>(e)) return kConfig;
  if (is_any<IoError, MisalignedTraces>(e)) return kIo;
  if (is_any<GroupTooSmall, NoPairs, SeriesTooShort, ConstantSeries>(e)) return kData;
  if (is_any<NoConvergence, DegenerateWindow, ZeroSignal, DegenerateConic, TooFewPoints,
             NoMinimumInInterval, NotConverged, IllConditioned>(e)) {
    return kFit;
  }
  return kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-cloud atom gradiometer simulation and analysis"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed, overrides the config");
  app.add_option("--out", g.out, "output path; '-' writes data to stdout where supported");

  auto* sim = app.add_subcommand("simulate", "simulate a run and write shot records");
  std::string format;
  int n_traces = 0;
  sim->add_option("--format", format, "csv or jsonl");
  sim->add_option("--traces", n_traces, "also write fluorescence traces for the first N shots");

  auto* fit = app.add_subcommand("fit", "fit ellipses to shot records or an x,y point file");
  std::string fit_input, xi_mode;
  int fit_group = 0;
  fit->add_option("input", fit_input, "shots file (CSV or JSONL) or x,y point file")->required();
  fit->add_option("--xi", xi_mode, "fixed or estimate");
  fit->add_option("--group", fit_group, "shots per ellipse");

  auto* an = app.add_subcommand("analyze", "protocol statistics on shot records");
  std::string an_input;
  AnalyzeFlags fl;
  an->add_option("input", an_input, "shots file (CSV or JSONL)")->required();
  an->add_flag("--allan", fl.allan, "Allan deviation of the group phases");
  an->add_flag("--double-diff", fl.double_diff, "k-reversal and C1/C2 double difference");
  an->add_flag("--budget", fl.budget, "sensitivity budget");
  an->add_flag("--correlate", fl.correlate, "correlate group phases with monitor channels");
  an->add_option("--group", fl.group, "shots per ellipse for the double difference");
  an->add_option("--ledger", fl.ledger, "sensitivity ledger CSV");
  an->add_option("--timescale", fl.timescale, "te or day");

  auto* bud = app.add_subcommand("budget", "sensitivity budget from the ledger");
  std::string ledger_path, timescale = "day";
  std::vector<std::string> overrides;
  bud->add_option("--ledger", ledger_path, "sensitivity ledger CSV");
  bud->add_option("--timescale", timescale, "te or day");
  bud->add_option("--rms", overrides, "parameter=rms overrides");

  auto* tf = app.add_subcommand("trace-fit", "fit the four peaks of a trace pair");
  std::string f1, f2;
  double crosstalk = 0.0;
  tf->add_option("--f1", f1, "F=1 channel trace CSV")->required();
  tf->add_option("--f2", f2, "F=2 channel trace CSV")->required();
  tf->add_option("--crosstalk", crosstalk, "channel crosstalk coefficient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*sim) return cmd_simulate(g, format, n_traces);
    if (*fit) return cmd_fit(g, fit_input, xi_mode, fit_group);
    if (*an) return cmd_analyze(g, an_input, fl);
    if (*bud) return cmd_budget(g, ledger_path, timescale, overrides);
    if (*tf) return cmd_trace_fit(g, f1, f2, crosstalk);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    static const char* const kLabels[] = {"", "error", "config error", "I/O error", "fit failure",
                                          "insufficient data"};
    std::cerr << kLabels[code] << ": " << e.what() << "\n";
    return code;
  }
  return kOther;
}
