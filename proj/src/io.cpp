#include "aigrad/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "aigrad/error.hpp"

namespace aigrad {

namespace {

// Object reader that remembers which keys were consumed so that leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw ConfigError("");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        }
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  template <class E>
  void get_enum(const char* key, E& out, const std::map<std::string, E>& names) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    const auto it = names.find(s);
    if (it == names.end()) throw ConfigError(path_ + "." + key + ": unknown value '" + s + "'");
    out = it->second;
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + path_ + "." + k);
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::map<std::string, DetectionNoiseMode> kNoiseModes{
    {"qpn", DetectionNoiseMode::kQpn},
    {"technical", DetectionNoiseMode::kTechnical},
    {"combined", DetectionNoiseMode::kCombined}};
const std::map<std::string, PhaseDistribution> kPhaseDistributions{
    {"full", PhaseDistribution::kFullFringe}, {"half", PhaseDistribution::kHalfFringe}};
const std::map<std::string, UncertaintyMethod> kUncertainty{
    {"bootstrap", UncertaintyMethod::kBootstrap},
    {"linearized", UncertaintyMethod::kLinearized},
    {"none", UncertaintyMethod::kNone}};
const std::map<std::string, XiMode> kXiModes{{"fixed", XiMode::kFixed},
                                             {"estimate", XiMode::kEstimated}};
const std::map<std::string, XiObjective> kXiObjectives{
    {"fit_error", XiObjective::kFitError}, {"residual_rms", XiObjective::kResidualRms}};

template <class E>
std::string name_of(E value, const std::map<std::string, E>& names) {
  for (const auto& [k, v] : names) {
    if (v == value) return k;
  }
  return "";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError("cannot parse " + what + " '" + std::string(s) + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

FullConfig config_from_json(const Json& doc) {
  FullConfig cfg;
  Section root(doc, "config");
  RunConfig& run = cfg.run;

  if (const Json* j = root.sub("physics")) {
    Section s(*j, "physics");
    PhysicsConfig& p = run.physics;
    s.get("k_e", p.k_e);
    s.get("T", p.T);
    s.get("t_a", p.t_a);
    s.get("v_u", p.v_u);
    s.get("v_l", p.v_l);
    s.get("dz", p.dz);
    s.get("latitude", p.latitude);
    s.get("omega_earth", p.omega_earth);
    s.get("alpha_zeeman", p.alpha_zeeman);
    s.get("v_r", p.v_r);
    s.get("g", p.g);
    s.get("b0_per_amp", p.b0_per_amp);
    s.get("pulse_tau", p.pulse_tau);
    s.get("delta_b", p.delta_b);
    s.finish();
  }
  if (const Json* j = root.sub("noise")) {
    Section s(*j, "noise");
    NoiseConfig& n = run.noise;
    s.get("n_lower", n.n_lower);
    s.get("n_upper", n.n_upper);
    s.get("tech_detection_rms", n.tech_detection_rms);
    s.get("contrast_jitter", n.contrast_jitter);
    s.get("bias_jitter", n.bias_jitter);
    s.get("dphi_jitter", n.dphi_jitter);
    s.get_enum("mode", n.mode, kNoiseModes);
    s.get("exact_binomial", n.exact_binomial);
    s.get("seed", n.seed);
    s.finish();
  }
  if (const Json* j = root.sub("drift")) {
    Section s(*j, "drift");
    s.get("apply_bounds", run.drift.apply_bounds);
    if (const Json* chs = s.sub("channels")) {
      if (!chs->is_array()) throw ConfigError("drift.channels must be an array");
      for (std::size_t i = 0; i < chs->size(); ++i) {
        Section c((*chs)[i], "drift.channels[" + std::to_string(i) + "]");
        DriftChannel ch;
        c.get("name", ch.name);
        c.get("white_rms", ch.white_rms);
        c.get("walk_step", ch.walk_step);
        c.get("sine_amplitude", ch.sine_amplitude);
        c.get("sine_period", ch.sine_period);
        c.get("sine_phase", ch.sine_phase);
        c.get("follows", ch.follows);
        c.get("follow_gain", ch.follow_gain);
        c.get("inert", ch.inert);
        c.get("k_dependent", ch.k_dependent);
        c.finish();
        run.drift.channels.push_back(std::move(ch));
      }
    }
    s.finish();
  }
  if (const Json* j = root.sub("servo")) {
    Section s(*j, "servo");
    s.get("enabled", run.servo_enabled);
    s.get("sample_every", run.servo.sample_every);
    s.get("gain", run.servo.gain);
    s.get("channels", run.servo.channels);
    s.get("residual_target", run.servo.residual_target);
    s.finish();
  }
  if (const Json* j = root.sub("schedule")) {
    Section s(*j, "schedule");
    Schedule& sc = run.schedule;
    s.get("n_shots", sc.n_shots);
    s.get("group_size", sc.group_size);
    s.get("modulation_period", sc.modulation_period);
    s.get("dead_time", sc.dead_time);
    s.get("cycle_period", sc.cycle_period);
    s.get("k_reversal", sc.k_reversal);
    s.get_enum("t_distribution", sc.t_distribution, kPhaseDistributions);
    s.finish();
  }
  if (const Json* j = root.sub("injection")) {
    Section s(*j, "injection");
    Injection& in = run.injection;
    s.get("A", in.A);
    s.get("B", in.B);
    s.get("C", in.C);
    s.get("D", in.D);
    s.get("phi_c1", in.phi_c1);
    s.get("phi_c2", in.phi_c2);
    s.get("phi_common", in.phi_common);
    s.get("xi_lower", in.xi_lower);
    s.get("xi_upper", in.xi_upper);
    s.get("tilt_coupling", in.tilt_coupling);
    s.get("tilt_change", in.tilt_change);
    s.finish();
  }
  if (const Json* j = root.sub("peak_shape")) {
    Section s(*j, "peak_shape");
    PeakShape& p = cfg.peak_shape;
    s.get("t_lower", p.t_lower);
    s.get("t_upper", p.t_upper);
    s.get("sigma", p.sigma);
    s.get("a2", p.a2);
    s.get("a4", p.a4);
    s.get("baseline", p.baseline);
    s.finish();
  }
  if (const Json* j = root.sub("traces")) {
    Section s(*j, "traces");
    TraceOptions& t = cfg.traces;
    s.get("duration", t.duration);
    s.get("sample_rate", t.sample_rate);
    s.get("noise_rms", t.noise_rms);
    s.get("pedestal_fraction", t.pedestal.fraction);
    s.get("pedestal_width", t.pedestal.width_multiplier);
    s.get("triple_pulse", t.triple_pulse);
    s.finish();
  }
  if (const Json* j = root.sub("analysis")) {
    Section s(*j, "analysis");
    AnalysisConfig& a = cfg.analysis;
    s.get("group_size", a.group_size);
    s.get("allan_group", a.allan_group);
    s.get_enum("uncertainty", a.fit.uncertainty, kUncertainty);
    s.get("resamples", a.fit.resamples);
    s.get("fit_seed", a.fit.seed);
    s.get("refine", a.fit.refine);
    if (const Json* x = s.sub("xi")) {
      Section xs(*x, "analysis.xi");
      xs.get_enum("mode", a.xi.mode, kXiModes);
      xs.get("xi_lower", a.xi.xi_lower);
      xs.get("xi_upper", a.xi.xi_upper);
      xs.get("lo", a.xi.search_lo);
      xs.get("hi", a.xi.search_hi);
      xs.get_enum("objective", a.xi.options.objective, kXiObjectives);
      xs.get("tolerance", a.xi.options.tolerance);
      xs.finish();
    }
    s.finish();
  }
  if (const Json* j = root.sub("io")) {
    Section s(*j, "io");
    s.get("out", cfg.io.out);
    s.get("format", cfg.io.format);
    s.finish();
  }
  if (root.sub("seed")) {
    std::uint64_t seed = run.noise.seed;
    root.get("seed", seed);
    run.noise.seed = seed;
  }
  root.finish();

  run.physics.validate();
  run.noise.validate();
  run.schedule.validate();
  run.injection.validate(run.schedule.k_reversal);
  run.drift.validate(SensitivityLedger::builtin());
  if (run.servo_enabled) run.servo.validate(run.drift);
  if (cfg.analysis.group_size < kMinGroupSize || cfg.analysis.allan_group < kMinGroupSize) {
    throw ConfigError("analysis group sizes must be >= " + std::to_string(kMinGroupSize));
  }
  if (cfg.analysis.fit.resamples < 2) throw ConfigError("analysis.resamples must be >= 2");
  if (!(cfg.analysis.xi.search_lo > 0.0 && cfg.analysis.xi.search_lo < cfg.analysis.xi.search_hi)) {
    throw ConfigError("analysis.xi needs 0 < lo < hi");
  }
  if (cfg.io.format != "csv" && cfg.io.format != "jsonl") {
    throw ConfigError("io.format must be csv or jsonl");
  }
  cfg.analysis.xi.options.fit = cfg.analysis.fit;
  return cfg;
}

FullConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

Json config_to_json(const FullConfig& cfg) {
  const RunConfig& r = cfg.run;
  Json j;
  const PhysicsConfig& p = r.physics;
  j["physics"] = {{"k_e", p.k_e}, {"T", p.T}, {"t_a", p.t_a}, {"v_u", p.v_u}, {"v_l", p.v_l},
                  {"dz", p.dz}, {"latitude", p.latitude}, {"omega_earth", p.omega_earth},
                  {"alpha_zeeman", p.alpha_zeeman}, {"v_r", p.v_r}, {"g", p.g},
                  {"b0_per_amp", p.b0_per_amp}, {"pulse_tau", p.pulse_tau}, {"delta_b", p.delta_b}};
  const NoiseConfig& n = r.noise;
  j["noise"] = {{"n_lower", n.n_lower},
                {"n_upper", n.n_upper},
                {"tech_detection_rms", n.tech_detection_rms},
                {"contrast_jitter", n.contrast_jitter},
                {"bias_jitter", n.bias_jitter},
                {"dphi_jitter", n.dphi_jitter},
                {"mode", name_of(n.mode, kNoiseModes)},
                {"exact_binomial", n.exact_binomial},
                {"seed", n.seed}};
  Json chs = Json::array();
  for (const auto& c : r.drift.channels) {
    chs.push_back({{"name", c.name}, {"white_rms", c.white_rms}, {"walk_step", c.walk_step},
                   {"sine_amplitude", c.sine_amplitude}, {"sine_period", c.sine_period},
                   {"sine_phase", c.sine_phase}, {"follows", c.follows},
                   {"follow_gain", c.follow_gain}, {"inert", c.inert},
                   {"k_dependent", c.k_dependent}});
  }
  j["drift"] = {{"apply_bounds", r.drift.apply_bounds}, {"channels", chs}};
  j["servo"] = {{"enabled", r.servo_enabled},
                {"sample_every", r.servo.sample_every},
                {"gain", r.servo.gain},
                {"channels", r.servo.channels},
                {"residual_target", r.servo.residual_target}};
  const Schedule& s = r.schedule;
  j["schedule"] = {{"n_shots", s.n_shots},
                   {"group_size", s.group_size},
                   {"modulation_period", s.modulation_period},
                   {"dead_time", s.dead_time},
                   {"cycle_period", s.cycle_period},
                   {"k_reversal", s.k_reversal},
                   {"t_distribution", name_of(s.t_distribution, kPhaseDistributions)}};
  const Injection& in = r.injection;
  j["injection"] = {{"A", in.A}, {"B", in.B}, {"C", in.C}, {"D", in.D},
                    {"phi_c1", in.phi_c1}, {"phi_c2", in.phi_c2}, {"phi_common", in.phi_common},
                    {"xi_lower", in.xi_lower}, {"xi_upper", in.xi_upper},
                    {"tilt_coupling", in.tilt_coupling}, {"tilt_change", in.tilt_change}};
  const PeakShape& ps = cfg.peak_shape;
  j["peak_shape"] = {{"t_lower", ps.t_lower}, {"t_upper", ps.t_upper}, {"sigma", ps.sigma},
                     {"a2", ps.a2}, {"a4", ps.a4}, {"baseline", ps.baseline}};
  const TraceOptions& t = cfg.traces;
  j["traces"] = {{"duration", t.duration}, {"sample_rate", t.sample_rate},
                 {"noise_rms", t.noise_rms}, {"pedestal_fraction", t.pedestal.fraction},
                 {"pedestal_width", t.pedestal.width_multiplier}, {"triple_pulse", t.triple_pulse}};
  const AnalysisConfig& a = cfg.analysis;
  j["analysis"] = {{"group_size", a.group_size},
                   {"allan_group", a.allan_group},
                   {"uncertainty", name_of(a.fit.uncertainty, kUncertainty)},
                   {"resamples", a.fit.resamples},
                   {"fit_seed", a.fit.seed},
                   {"refine", a.fit.refine},
                   {"xi",
                    {{"mode", name_of(a.xi.mode, kXiModes)},
                     {"xi_lower", a.xi.xi_lower},
                     {"xi_upper", a.xi.xi_upper},
                     {"lo", a.xi.search_lo},
                     {"hi", a.xi.search_hi},
                     {"objective", name_of(a.xi.options.objective, kXiObjectives)},
                     {"tolerance", a.xi.options.tolerance}}}};
  j["io"] = {{"out", cfg.io.out}, {"format", cfg.io.format}};
  return j;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const FullConfig& cfg) {
  Json j = config_to_json(cfg);
  j.erase("io");  // output location does not change the data
  return fnv1a_hex(j.dump());
}

// ---- shot records ------------------------------------------------------------

namespace {

std::vector<std::string> monitor_names(const std::vector<ShotRecord>& shots) {
  std::set<std::string> names;
  for (const auto& s : shots) {
    for (const auto& [k, v] : s.monitors) names.insert(k);
  }
  return {names.begin(), names.end()};
}

}  // namespace

void write_shots_csv(std::ostream& os, const std::vector<ShotRecord>& shots, std::string_view hash) {
  const auto names = monitor_names(shots);
  os << "# config_hash=" << hash << '\n';
  os << "index,time,k_sign,mass_config,A11,A21,A12,A22";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& s : shots) {
    os << s.index << ',' << fmt(s.time) << ',' << s.k_sign << ',' << to_string(s.mass_config) << ','
       << fmt(s.areas.a11) << ',' << fmt(s.areas.a21) << ',' << fmt(s.areas.a12) << ','
       << fmt(s.areas.a22);
    for (const auto& n : names) {
      const auto it = s.monitors.find(n);
      os << ',' << (it == s.monitors.end() ? std::string() : fmt(it->second));
    }
    os << '\n';
  }
}

void write_shots_jsonl(std::ostream& os, const std::vector<ShotRecord>& shots, std::string_view hash) {
  os << Json{{"config_hash", hash}}.dump() << '\n';
  for (const auto& s : shots) {
    Json j{{"index", s.index},         {"time", s.time},         {"k_sign", s.k_sign},
           {"mass_config", to_string(s.mass_config)},
           {"A11", s.areas.a11},       {"A21", s.areas.a21},     {"A12", s.areas.a12},
           {"A22", s.areas.a22}};
    j["monitors"] = Json::object();
    for (const auto& [k, v] : s.monitors) j["monitors"][k] = v;
    os << j.dump() << '\n';
  }
}

std::vector<ShotRecord> read_shots(std::istream& is) {
  std::vector<ShotRecord> out;
  std::string line;
  std::vector<std::string> header;
  bool jsonl = false, decided = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!decided) {
      decided = true;
      jsonl = line[0] == '{';
      if (!jsonl) {
        header = split(line);
        static const std::vector<std::string> fixed{"index", "time", "k_sign", "mass_config",
                                                    "A11",   "A21",  "A12",    "A22"};
        if (header.size() < fixed.size() ||
            !std::equal(fixed.begin(), fixed.end(), header.begin())) {
          throw IoError("shot file header must start with " + std::string("index,time,k_sign,...") );
        }
        continue;
      }
    }
    const std::string where = "line " + std::to_string(line_no);
    ShotRecord s;
    try {
      if (jsonl) {
        const Json j = Json::parse(line);
        if (j.contains("config_hash") && !j.contains("index")) continue;
        s.index = j.at("index").get<std::int64_t>();
        s.time = j.at("time").get<double>();
        s.k_sign = j.at("k_sign").get<int>();
        s.mass_config = mass_config_from_string(j.at("mass_config").get<std::string>());
        s.areas = {j.at("A11").get<double>(), j.at("A21").get<double>(), j.at("A12").get<double>(),
                   j.at("A22").get<double>()};
        if (j.contains("monitors")) {
          for (const auto& [k, v] : j.at("monitors").items()) s.monitors[k] = v.get<double>();
        }
      } else {
        const auto f = split(line);
        if (f.size() != header.size()) throw IoError("wrong number of columns");
        s.index = static_cast<std::int64_t>(parse_double(f[0], "index"));
        s.time = parse_double(f[1], "time");
        s.k_sign = static_cast<int>(parse_double(f[2], "k_sign"));
        s.mass_config = mass_config_from_string(f[3]);
        s.areas = {parse_double(f[4], "A11"), parse_double(f[5], "A21"), parse_double(f[6], "A12"),
                   parse_double(f[7], "A22")};
        for (std::size_t c = 8; c < f.size(); ++c) {
          if (!f[c].empty()) s.monitors[header[c]] = parse_double(f[c], header[c]);
        }
      }
    } catch (const IoError& e) {
      throw IoError(where + ": " + e.what());
    } catch (const std::exception& e) {
      throw IoError(where + ": " + e.what());
    }
    if (s.k_sign != 1 && s.k_sign != -1) throw IoError(where + ": k_sign must be +1 or -1");
    if (s.areas.a11 < 0 || s.areas.a21 < 0 || s.areas.a12 < 0 || s.areas.a22 < 0) {
      throw IoError(where + ": negative peak area");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ShotRecord> read_shots_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return read_shots(f);
}

std::vector<Point2> read_points(std::istream& is) {
  std::vector<Point2> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line);
    if (f.size() != 2) throw IoError("line " + std::to_string(line_no) + ": expected x,y");
    if (f[0] == "x" && f[1] == "y") continue;
    out.push_back({parse_double(f[0], "x"), parse_double(f[1], "y")});
  }
  return out;
}

// ---- traces ------------------------------------------------------------------

void write_trace_csv(std::ostream& os, const DetectionTrace& trace, std::string_view hash) {
  os << "# config_hash=" << hash << '\n';
  os << "# channel=" << (trace.channel == Channel::kF1 ? "F1" : "F2") << '\n';
  os << "time,signal\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << fmt(trace.time(i)) << ',' << fmt(trace.values[i]) << '\n';
}

DetectionTrace read_trace_csv(std::istream& is, Channel channel) {
  std::vector<std::pair<double, double>> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line);
    if (f.size() != 2) throw IoError("line " + std::to_string(line_no) + ": expected time,signal");
    if (f[0] == "time") continue;
    samples.emplace_back(parse_double(f[0], "time"), parse_double(f[1], "signal"));
  }
  if (samples.size() < 2) throw IoError("trace has fewer than two samples");
  try {
    return DetectionTrace::from_samples(channel, samples);
  } catch (const DomainError& e) {
    throw IoError(e.what());
  }
}

// ---- reports -----------------------------------------------------------------

Json to_json(const FitReport& r) {
  return {{"A", r.params.A},   {"B", r.params.B},
          {"C", r.params.C},   {"D", r.params.D},
          {"phi", r.params.phi}, {"dphi", r.dphi},
          {"rms", r.rms},      {"n_points", r.n_points},
          {"converged", r.converged},
          {"uncertainty", std::string(to_string(r.uncertainty))},
          {"resamples", r.resamples}};
}

Json to_json(const GroupedEllipse& g) {
  return {{"mass_config", to_string(g.mass_config)},
          {"k_sign", g.k_sign},
          {"segment", g.segment},
          {"first_index", g.first_index},
          {"last_index", g.last_index},
          {"n_shots", g.n_shots},
          {"time", g.time},
          {"xi_lower", g.xi_lower},
          {"xi_upper", g.xi_upper},
          {"fit", to_json(g.fit)}};
}

Json to_json(const DoubleDifference& d) {
  Json pts = Json::array();
  for (const auto& p : d.points) pts.push_back({{"delta_phi", p.phi}, {"error", p.dphi}});
  return {{"mean", d.mean},
          {"error", d.error},
          {"chi2", d.chi2},
          {"chi2_reduced", d.chi2_reduced},
          {"n_pairs", d.points.size()},
          {"points", pts}};
}

Json to_json(const Budget& b) {
  Json rows = Json::array();
  const auto term = [](const BudgetTerm& t) -> Json {
    if (!t.present) return nullptr;
    return {{"value", t.value}, {"bound", t.bound}};
  };
  for (const auto& r : b.rows) {
    rows.push_back({{"parameter", r.parameter},
                    {"rms", r.rms},
                    {"phi_mean", term(r.phi_mean)},
                    {"phi_diff", term(r.phi_diff)}});
  }
  return {{"rows", rows},
          {"total_mean", b.total_mean},
          {"total_diff", b.total_diff},
          {"bound_total_mean", b.bound_total_mean},
          {"bound_total_diff", b.bound_total_diff}};
}

void write_allan_csv(std::ostream& os, const AllanResult& r, std::string_view hash) {
  os << "# config_hash=" << hash << '\n' << "tau,sigma,count\n";
  for (std::size_t i = 0; i < r.taus.size(); ++i) {
    os << fmt(r.taus[i]) << ',' << fmt(r.sigmas[i]) << ',' << r.counts[i] << '\n';
  }
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace aigrad
