#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "aigrad/ellipse.hpp"
#include "aigrad/peak.hpp"
#include "aigrad/pipeline.hpp"
#include "aigrad/simulator.hpp"
#include "json.hpp"

namespace aigrad {

using Json = nlohmann::ordered_json;

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr std::string_view kVersion = "0.1.0";

/// Analysis settings of the config file.
struct AnalysisConfig {
  int group_size = 360;
  XiHandling xi;
  EllipseFitOptions fit;
  int allan_group = 72;  // shots per phase sample of the Allan series
};

struct OutputConfig {
  std::string out;            // directory or file, depending on the command
  std::string format = "csv"; // csv | jsonl
};

struct FullConfig {
  RunConfig run;
  PeakShape peak_shape;
  TraceOptions traces;
  AnalysisConfig analysis;
  OutputConfig io;
};

/// Parses a config document. Sections: physics, noise, drift, servo,
/// schedule, injection, peak_shape, traces, analysis, io, and a top-level
/// seed that overrides noise.seed. Unknown keys and wrong types throw
/// ConfigError.
FullConfig config_from_json(const Json& doc);
/// Reads and parses a config file. IoError when unreadable, ConfigError when
/// it is not valid JSON or fails validation.
FullConfig load_config(const std::filesystem::path& path);

/// Fully resolved config, every field present.
Json config_to_json(const FullConfig& cfg);

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Hash of the resolved config.
std::string config_hash(const FullConfig& cfg);

// ---- shot records ------------------------------------------------------------

/// Column order: index,time,k_sign,mass_config,A11,A21,A12,A22, then the
/// monitor channels in name order. A leading "# config_hash=" line carries
/// the hash.
void write_shots_csv(std::ostream& os, const std::vector<ShotRecord>& shots,
                     std::string_view hash);
void write_shots_jsonl(std::ostream& os, const std::vector<ShotRecord>& shots,
                       std::string_view hash);

/// Reads either format, chosen by the first non-comment character. Throws
/// IoError on malformed content.
std::vector<ShotRecord> read_shots(std::istream& is);
std::vector<ShotRecord> read_shots_file(const std::filesystem::path& path);

/// Two-column x,y point files.
std::vector<Point2> read_points(std::istream& is);

// ---- traces ------------------------------------------------------------------

void write_trace_csv(std::ostream& os, const DetectionTrace& trace, std::string_view hash);
DetectionTrace read_trace_csv(std::istream& is, Channel channel);

// ---- reports -----------------------------------------------------------------

Json to_json(const FitReport& r);
Json to_json(const GroupedEllipse& g);
Json to_json(const DoubleDifference& d);
Json to_json(const Budget& b);
void write_allan_csv(std::ostream& os, const AllanResult& r, std::string_view hash);

/// Writes text to a file, creating parent directories. Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace aigrad
