#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deid/cue_metrics.hpp"
#include "deid/image_quality.hpp"

namespace deid {

// ---------------------------------------------------------------------------
// Metric catalog
//
// Every per-frame scalar the analysis stage reasons about, in report order:
// the six cue errors, mae_rpy, then the six image-quality metrics.

struct AuditMetric {
  std::string_view name;
  Orientation orientation;
  bool cue_error;  // counts toward the zero-error rule
};

std::span<const AuditMetric> audit_metrics() noexcept;
const AuditMetric* find_audit_metric(std::string_view name) noexcept;

using MetricValues = std::vector<std::pair<std::string_view, std::optional<double>>>;

// Flattens a frame's errors and quality metrics into catalog order. Quality
// entries are absent when quality is null.
MetricValues metric_values(const CueErrors& errors, const QualityMetrics* quality);

// ---------------------------------------------------------------------------
// Descriptive statistics

struct StatSummary {
  double maximum = 0.0;
  double minimum = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;  // population
  std::size_t count = 0;
};

StatSummary summarize(std::span<const double> values);
// Gaps are skipped; throws EmptySeries when nothing is present.
StatSummary summarize(std::span<const std::optional<double>> values);

struct Quantiles {
  double minimum = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double maximum = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};

// Linear-interpolation quantiles (numpy's default). Throws EmptySeries.
Quantiles quantiles(std::span<const double> values);

double median_of(std::vector<double> values);

class CumulativeCurve {
 public:
  CumulativeCurve(std::string metric, std::vector<double> values);

  const std::string& metric() const noexcept { return metric_; }
  // (value, fraction of samples <= value) at each distinct value.
  const std::vector<std::pair<double, double>>& breakpoints() const noexcept { return breakpoints_; }
  std::size_t count() const noexcept { return sorted_.size(); }

  // Fraction of samples strictly below t.
  double fraction_below(double t) const;

 private:
  std::string metric_;
  std::vector<double> sorted_;
  std::vector<std::pair<double, double>> breakpoints_;
};

// Throws EmptySeries.
CumulativeCurve cumulative_curve(std::string metric, std::span<const double> errors);

// ---------------------------------------------------------------------------
// Gender pairs (labelled Target-Imposter)

enum class GenderPair { FF, FM, MF, MM };

std::string_view to_string(GenderPair pair) noexcept;
GenderPair gender_pair(Gender target, Gender imposter) noexcept;

struct SessionErrors {
  Gender target_gender = Gender::F;
  Gender imposter_gender = Gender::F;
  std::vector<CueErrors> frames;
};

struct GenderPairStats {
  GenderPair pair = GenderPair::FF;
  double mean_roll_err = 0.0;
  double mean_pitch_err = 0.0;
  double mean_yaw_err = 0.0;
  double mean_mae_rpy = 0.0;
  std::size_t count = 0;  // frames with all three pose errors
};

// One entry per pair with at least one frame carrying all three pose
// errors, in FF, FM, MF, MM order.
std::vector<GenderPairStats> gender_pair_stats(std::span<const SessionErrors> sessions);

// ---------------------------------------------------------------------------
// Thresholds

struct Range {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct AnomalyConfig {
  int window = 31;
  double z_threshold = 3.5;
  friend bool operator==(const AnomalyConfig&, const AnomalyConfig&) = default;
};

struct ThresholdConfig {
  std::map<std::string, Range, std::less<>> ranges;
  AnomalyConfig anomaly;
  double zero_error_epsilon = 1e-6;

  // Throws MalformedConfig.
  void validate() const;
  friend bool operator==(const ThresholdConfig&, const ThresholdConfig&) = default;
};

// Acceptable ranges seeded from reported field observations: ear_err and
// lar_err <= 0.06, pc_err <= 0.075, and the observed de-identified extremes
// of the image metrics as permissive bounds.
ThresholdConfig default_threshold_config();

nlohmann::json to_json(const ThresholdConfig& config);
// Keys absent from the document keep their default values.
ThresholdConfig threshold_config_from_json(const nlohmann::json& doc);
ThresholdConfig load_threshold_config(const std::filesystem::path& path);
void save_threshold_config(const ThresholdConfig& config, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Flags

enum class FlagReason { zero_error_suspect, out_of_range, series_anomaly, missing_annotation };

std::string_view to_string(FlagReason reason) noexcept;
std::optional<FlagReason> parse_flag_reason(std::string_view text) noexcept;

struct Flag {
  std::string session_id;
  std::int64_t frame_index = 0;
  FlagReason reason = FlagReason::out_of_range;
  std::string metric;  // empty for zero_error_suspect
  double value = 0.0;
  std::string detail;
  // Evidence needed to recheck the flag.
  std::optional<double> lo;
  std::optional<double> hi;
  std::optional<double> center;  // rolling median
  std::optional<double> spread;  // rolling MAD
  std::optional<double> z;
  std::optional<double> threshold;
  friend bool operator==(const Flag&, const Flag&) = default;
};

nlohmann::json to_json(const Flag& flag);
Flag flag_from_json(const nlohmann::json& doc);

// Fires when at least three cue errors are present and all are <= epsilon.
// The flag's value is the largest present cue error.
std::optional<Flag> flag_zero_error(const CueErrors& errors, double epsilon, std::string_view session_id = {},
                                    std::int64_t frame_index = 0);

// One flag per configured metric whose present value leaves its range.
std::vector<Flag> flag_out_of_range(const CueErrors& errors, const QualityMetrics* quality,
                                    const ThresholdConfig& config, std::string_view session_id = {},
                                    std::int64_t frame_index = 0);

struct SeriesPoint {
  std::int64_t frame_index = 0;
  std::optional<double> value;
};

struct RobustScore {
  double median = 0.0;
  double mad = 0.0;
  std::optional<double> z;  // absent when mad == 0
  bool anomalous = false;
};

// Rolling median/MAD over a centered window of `window` present neighbours,
// clipped at the ends. Gaps get no score. Throws SeriesTooShort when fewer
// than `window` points are present.
std::vector<std::optional<RobustScore>> robust_scores(std::span<const SeriesPoint> series, const AnomalyConfig& config,
                                                      double epsilon);

std::vector<Flag> detect_series_anomalies(std::span<const SeriesPoint> series, const ThresholdConfig& config,
                                          std::string_view session_id = {}, std::string_view metric = "ergas");

// ---------------------------------------------------------------------------
// Calibration from reviewer verdicts

struct LabeledFrame {
  bool fail = false;
  std::map<std::string, double, std::less<>> values;
};

// Youden's J of a range used as a fail detector (fail = positive).
double youden_j(std::span<const std::pair<double, bool>> samples, const Range& range);

struct MetricCalibration {
  std::string metric;
  double youden_j = 0.0;
  bool updated = false;
};

struct CalibrationResult {
  ThresholdConfig config;
  std::vector<MetricCalibration> metrics;
};

// Per metric, grid-searches the midpoints between observed values for the
// bound (hi for lower-is-similar metrics, lo otherwise) maximizing J, ties
// toward the more permissive bound. Metrics whose best J is not positive
// keep the prior range. Throws InsufficientVerdicts without at least one
// pass and one fail.
CalibrationResult calibrate_thresholds(std::span<const LabeledFrame> verdicts, const ThresholdConfig& prior);

}  // namespace deid
