#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deid/analysis.hpp"
#include "deid/cue_metrics.hpp"
#include "deid/image_quality.hpp"
#include "deid/ingest.hpp"

namespace deid {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolName = "deid-audit";
inline constexpr const char* kToolVersion = "0.1.0";

struct FrameRecord {
  std::int64_t frame_index = 0;
  std::string original_image;
  std::string deid_image;
  CueMetrics original_cues;
  CueMetrics deid_cues;
  CueErrors errors;
  std::optional<QualityMetrics> quality;
  // Annotation files the session references but that have no entry for
  // this frame: original_landmarks, deid_landmarks, original_pose, deid_pose.
  std::vector<std::string> missing_annotations;
  std::vector<std::string> notes;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct SessionRecord {
  std::string session_id;
  Gender target_gender = Gender::F;
  Gender imposter_gender = Gender::F;
  Glasses glasses = Glasses::none;
  std::vector<FrameRecord> frames;
  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

struct CueStatistics {
  std::string cue;
  std::optional<StatSummary> original;
  std::optional<StatSummary> deid;
};

struct QualityStatistics {
  std::string metric;
  std::optional<StatSummary> finite;  // over finite values
  std::size_t infinite_count = 0;     // identical frames under PSNR
};

struct CurveExport {
  CumulativeCurve curve;
  std::vector<std::pair<double, double>> fraction_below;  // (threshold, fraction)
};

struct Aggregates {
  std::vector<CueStatistics> cues;
  std::vector<std::pair<std::string, StatSummary>> cue_errors;
  std::vector<QualityStatistics> quality;
  std::vector<GenderPairStats> gender_pairs;
  std::vector<CurveExport> curves;
  std::vector<std::pair<std::string, Quantiles>> pose_error_distribution;
  // Mean roll < pitch < yaw error, the ordering expected for drivers.
  // Informational only; absent without pose data.
  std::optional<bool> roll_lt_pitch_lt_yaw;
  std::vector<Flag> flags;
  std::vector<std::string> warnings;
};

struct AuditReport {
  ThresholdConfig config;
  std::vector<SessionRecord> sessions;
  Aggregates aggregates;
  std::vector<std::string> warnings;  // from ingest and per-frame processing
};

struct AuditOptions {
  ThresholdConfig config = default_threshold_config();
  QualityOptions quality;
  CueOptions cues;
  unsigned workers = 1;
};

// Loads both images and annotations of one frame and computes every metric.
FrameRecord analyze_frame(const SessionManifest& session, const FrameEntry& frame, const AuditOptions& options);

// Pure function of per-frame records: statistics, curves and flags.
Aggregates aggregate(const std::vector<SessionRecord>& sessions, const ThresholdConfig& config);

// Ingest, frame-parallel metric computation, ordered aggregation. Output
// does not depend on options.workers.
AuditReport run_audit(std::vector<SessionManifest> sessions, const AuditOptions& options);
AuditReport run_audit(const std::filesystem::path& manifest, const AuditOptions& options);

// canonical omits the generated_at timestamp so reports compare bytewise.
nlohmann::json report_to_json(const AuditReport& report, bool canonical);
std::string report_to_string(const AuditReport& report, bool canonical);

// Per-frame records and config from a report document; aggregates are
// recomputed from the records rather than trusted.
AuditReport report_from_json(const nlohmann::json& doc);
AuditReport load_report(const std::filesystem::path& path);

nlohmann::json to_json(const FrameRecord& frame);
nlohmann::json to_json(const QualityMetrics& quality);
nlohmann::json to_json(const CueErrors& errors);

}  // namespace deid
