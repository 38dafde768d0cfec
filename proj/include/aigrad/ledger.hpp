#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace aigrad {

enum class Quantity { kPhiMean, kPhiDiff, kContrast, kBias };
enum class Kind { kLinear, kQuadratic };
enum class Relation { kMeasured, kUpperBound, kNotApplicable };

std::string_view to_string(Quantity q);
std::string_view to_string(Kind k);
std::string_view to_string(Relation r);

struct LedgerEntry {
  std::string parameter;
  Quantity quantity = Quantity::kPhiMean;
  Kind kind = Kind::kLinear;
  Relation relation = Relation::kMeasured;
  double value = 0.0;     // SI: rad per unit (angles) or 1 per unit
  std::string unit;       // parameter unit, squared for quadratic rows
  std::string original;   // as tabulated
  double rms_te = 0.0;    // typical RMS over one ellipse, in rms_unit
  double rms_day = 0.0;   // typical RMS over one day
  std::string rms_unit;

  /// Change of the quantity for a parameter excursion delta (rms_unit).
  double effect(double delta) const;
};

class SensitivityLedger {
 public:
  /// The ledger compiled into the library.
  static const SensitivityLedger& builtin();
  /// Parses the CSV layout of data/sensitivity_ledger.csv. Throws
  /// ConfigError on malformed rows.
  static SensitivityLedger from_csv(std::string_view text);
  /// Throws IoError when the file cannot be read.
  static SensitivityLedger load(const std::filesystem::path& path);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  /// Null when the (parameter, quantity) pair is not tabulated.
  const LedgerEntry* find(std::string_view parameter, Quantity q) const;
  bool has_parameter(std::string_view parameter) const;
  /// Parameter names in table order.
  std::vector<std::string> parameters() const;
  int version() const { return version_; }

 private:
  std::vector<LedgerEntry> entries_;
  int version_ = 0;
};

enum class Timescale { kEllipse, kDay };

/// The ledger's own typical RMS for every parameter at the given timescale.
std::map<std::string, double> ledger_rms(const SensitivityLedger& ledger, Timescale ts);

}  // namespace aigrad
