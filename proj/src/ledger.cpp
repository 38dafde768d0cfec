#include "aigrad/ledger.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "aigrad/error.hpp"
#include "ledger_data.hpp"

namespace aigrad {

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double number(const std::string& s, int line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("ledger line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<std::string_view, E> (&table)[N], int line) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ConfigError("ledger line " + std::to_string(line) + ": unknown token '" + s + "'");
}

constexpr std::pair<std::string_view, Quantity> kQuantities[] = {
    {"phi_mean", Quantity::kPhiMean},
    {"phi_diff", Quantity::kPhiDiff},
    {"contrast", Quantity::kContrast},
    {"bias", Quantity::kBias}};
constexpr std::pair<std::string_view, Kind> kKinds[] = {{"linear", Kind::kLinear},
                                                        {"quadratic", Kind::kQuadratic}};
constexpr std::pair<std::string_view, Relation> kRelations[] = {
    {"measured", Relation::kMeasured},
    {"upper_bound", Relation::kUpperBound},
    {"na", Relation::kNotApplicable}};

}  // namespace

std::string_view to_string(Quantity q) {
  for (const auto& [name, value] : kQuantities) {
    if (value == q) return name;
  }
  return "?";
}

std::string_view to_string(Kind k) { return k == Kind::kLinear ? "linear" : "quadratic"; }

std::string_view to_string(Relation r) {
  for (const auto& [name, value] : kRelations) {
    if (value == r) return name;
  }
  return "?";
}

double LedgerEntry::effect(double delta) const {
  if (relation == Relation::kNotApplicable) return 0.0;
  return kind == Kind::kLinear ? value * delta : value * delta * delta;
}

const SensitivityLedger& SensitivityLedger::builtin() {
  static const SensitivityLedger ledger = from_csv(kBuiltinLedgerCsv);
  return ledger;
}

SensitivityLedger SensitivityLedger::from_csv(std::string_view text) {
  SensitivityLedger ledger;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto pos = line.find("version=");
      if (pos != std::string::npos) ledger.version_ = static_cast<int>(number(line.substr(pos + 8), lineno));
      continue;
    }
    const auto f = split(line);
    if (!header_seen) {
      if (f.size() != 10 || f[0] != "parameter") {
        throw ConfigError("ledger header must list the 10 ledger columns");
      }
      header_seen = true;
      continue;
    }
    if (f.size() != 10) {
      throw ConfigError("ledger line " + std::to_string(lineno) + " has " +
                        std::to_string(f.size()) + " fields, expected 10");
    }
    LedgerEntry e;
    e.parameter = f[0];
    e.quantity = parse_enum(f[1], kQuantities, lineno);
    e.kind = parse_enum(f[2], kKinds, lineno);
    e.relation = parse_enum(f[3], kRelations, lineno);
    e.value = number(f[4], lineno);
    e.unit = f[5];
    e.original = f[6];
    e.rms_te = number(f[7], lineno);
    e.rms_day = number(f[8], lineno);
    e.rms_unit = f[9];
    if (ledger.find(e.parameter, e.quantity)) {
      throw ConfigError("ledger line " + std::to_string(lineno) + " repeats " + e.parameter + "/" +
                        std::string(to_string(e.quantity)));
    }
    ledger.entries_.push_back(std::move(e));
  }
  if (!header_seen) throw ConfigError("ledger has no header row");
  return ledger;
}

SensitivityLedger SensitivityLedger::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read ledger " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

const LedgerEntry* SensitivityLedger::find(std::string_view parameter, Quantity q) const {
  for (const auto& e : entries_) {
    if (e.parameter == parameter && e.quantity == q) return &e;
  }
  return nullptr;
}

bool SensitivityLedger::has_parameter(std::string_view parameter) const {
  for (const auto& e : entries_) {
    if (e.parameter == parameter) return true;
  }
  return false;
}

std::vector<std::string> SensitivityLedger::parameters() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (out.empty() || out.back() != e.parameter) out.push_back(e.parameter);
  }
  return out;
}

std::map<std::string, double> ledger_rms(const SensitivityLedger& ledger, Timescale ts) {
  std::map<std::string, double> out;
  for (const auto& e : ledger.entries()) {
    out[e.parameter] = ts == Timescale::kEllipse ? e.rms_te : e.rms_day;
  }
  return out;
}

}  // namespace aigrad
