#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloneforge/harness.hpp"

namespace cloneforge {

using Json = nlohmann::json;

// Config trees. Every *_from_json accepts a partial object and keeps the
// defaults for missing keys; unknown keys are rejected so typos surface.
Json augment_config_to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const Json& j, AugmentConfig base = {});
Json encoder_config_to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const Json& j, EncoderConfig base = {});
Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json trial_spec_to_json(const TrialSpec& s);
TrialSpec trial_spec_from_json(const Json& j, TrialSpec base = {});

Json calibration_to_json(const std::vector<CalibrationRow>& rows);
Json trial_to_json(const TrialMetrics& t);

// Report bodies hold results only: no wall-clock numbers, no timestamps, so
// a rerun with the same seed reproduces them byte for byte.
std::string benchmark_json(const BenchmarkReport& report);
/// One row per anchor followed by a "mean" row.
std::string benchmark_csv(const BenchmarkReport& report);
/// anchor,delta,precision,recall,f1 for every anchor, then the "mean" rows.
std::string calibration_csv(const BenchmarkReport& report);
/// anchor,mu,m,tau -- the data behind the mu / m histograms.
std::string mu_m_csv(const BenchmarkReport& report);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

/// Wall-clock per phase, kept apart from the deterministic reports.
Json benchmark_timings(const BenchmarkReport& report);
Json throughput_to_json(const Throughput& t);

/// Published figures for the compared methods, carried for context only.
Json published_reference();

struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::string corpus_checksum;
  std::string corpus_store;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

Json run_manifest_to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const Json& j);
inline constexpr const char* kManifestName = "manifest.json";
void write_run_manifest(const std::filesystem::path& dir, const RunManifest& m);

/// Current UTC time as 2024-01-31T12:34:56Z (millisecond precision when asked).
std::string utc_timestamp(bool millis = false);
std::string tool_version();

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
/// Shortest 9-significant-digit form, independent of the C locale.
std::string fmt_num(double v);

}  // namespace cloneforge
