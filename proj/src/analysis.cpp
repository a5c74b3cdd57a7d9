#include "deid/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "deid/error.hpp"

namespace deid {

namespace {

constexpr double kMadScale = 0.6745;

const std::array<AuditMetric, 13> kAuditMetrics = {{
    {"ear_err", Orientation::lower_is_similar, true},
    {"pc_err", Orientation::lower_is_similar, true},
    {"lar_err", Orientation::lower_is_similar, true},
    {"roll_err", Orientation::lower_is_similar, true},
    {"pitch_err", Orientation::lower_is_similar, true},
    {"yaw_err", Orientation::lower_is_similar, true},
    {"mae_rpy", Orientation::lower_is_similar, false},
    {"mse", Orientation::lower_is_similar, false},
    {"rmse", Orientation::lower_is_similar, false},
    {"psnr", Orientation::higher_is_similar, false},
    {"uiqi", Orientation::higher_is_similar, false},
    {"ergas", Orientation::lower_is_similar, false},
    {"sam", Orientation::lower_is_similar, false},
}};

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

}  // namespace

std::span<const AuditMetric> audit_metrics() noexcept { return kAuditMetrics; }

const AuditMetric* find_audit_metric(std::string_view name) noexcept {
  for (const auto& m : kAuditMetrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

MetricValues metric_values(const CueErrors& errors, const QualityMetrics* quality) {
  MetricValues out = {
      {"ear_err", errors.ear_err},   {"pc_err", errors.pc_err},       {"lar_err", errors.lar_err},
      {"roll_err", errors.roll_err}, {"pitch_err", errors.pitch_err}, {"yaw_err", errors.yaw_err},
      {"mae_rpy", errors.mae_rpy},
  };
  if (quality) {
    out.emplace_back("mse", quality->mse);
    out.emplace_back("rmse", quality->rmse);
    out.emplace_back("psnr", quality->psnr_db);
    out.emplace_back("uiqi", quality->uiqi);
    out.emplace_back("ergas", quality->ergas);
    out.emplace_back("sam", quality->sam);
  } else {
    for (auto name : {"mse", "rmse", "psnr", "uiqi", "ergas", "sam"}) out.emplace_back(name, std::nullopt);
  }
  return out;
}

// ---------------------------------------------------------------------------

StatSummary summarize(std::span<const double> values) {
  if (values.empty()) {
    throw AuditError(ErrorCode::EmptySeries, "cannot summarize an empty series");
  }
  StatSummary s;
  s.count = values.size();
  s.minimum = values.front();
  s.maximum = values.front();
  double sum = 0.0;
  for (double v : values) {
    s.minimum = std::min(s.minimum, v);
    s.maximum = std::max(s.maximum, v);
    sum += v;
  }
  const double n = static_cast<double>(values.size());
  s.mean = std::clamp(sum / n, s.minimum, s.maximum);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std_dev = std::sqrt(sq / n);
  return s;
}

StatSummary summarize(std::span<const std::optional<double>> values) {
  std::vector<double> present;
  present.reserve(values.size());
  for (const auto& v : values) {
    if (v) present.push_back(*v);
  }
  return summarize(std::span<const double>(present));
}

Quantiles quantiles(std::span<const double> values) {
  if (values.empty()) {
    throw AuditError(ErrorCode::EmptySeries, "cannot take quantiles of an empty series");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto at = [&](double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
  };
  Quantiles q;
  q.minimum = sorted.front();
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  q.maximum = sorted.back();
  q.mean = summarize(values).mean;
  q.count = sorted.size();
  return q;
}

double median_of(std::vector<double> values) {
  if (values.empty()) {
    throw AuditError(ErrorCode::EmptySeries, "median of an empty series");
  }
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

CumulativeCurve::CumulativeCurve(std::string metric, std::vector<double> values)
    : metric_(std::move(metric)), sorted_(std::move(values)) {
  if (sorted_.empty()) {
    throw AuditError(ErrorCode::EmptySeries, "cumulative curve of an empty series");
  }
  std::sort(sorted_.begin(), sorted_.end());
  const double n = static_cast<double>(sorted_.size());
  for (std::size_t i = 0; i < sorted_.size(); ++i) {
    if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) continue;
    breakpoints_.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
  }
}

double CumulativeCurve::fraction_below(double t) const {
  const auto below = std::lower_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin();
  return static_cast<double>(below) / static_cast<double>(sorted_.size());
}

CumulativeCurve cumulative_curve(std::string metric, std::span<const double> errors) {
  return CumulativeCurve(std::move(metric), std::vector<double>(errors.begin(), errors.end()));
}

// ---------------------------------------------------------------------------

std::string_view to_string(GenderPair pair) noexcept {
  switch (pair) {
    case GenderPair::FF: return "FF";
    case GenderPair::FM: return "FM";
    case GenderPair::MF: return "MF";
    case GenderPair::MM: return "MM";
  }
  return "FF";
}

GenderPair gender_pair(Gender target, Gender imposter) noexcept {
  if (target == Gender::F) return imposter == Gender::F ? GenderPair::FF : GenderPair::FM;
  return imposter == Gender::F ? GenderPair::MF : GenderPair::MM;
}

std::vector<GenderPairStats> gender_pair_stats(std::span<const SessionErrors> sessions) {
  struct Accum {
    double roll = 0, pitch = 0, yaw = 0, mae = 0;
    std::size_t count = 0;
  };
  std::array<Accum, 4> accum{};
  for (const auto& session : sessions) {
    auto& a = accum[static_cast<std::size_t>(gender_pair(session.target_gender, session.imposter_gender))];
    for (const auto& e : session.frames) {
      if (!e.mae_rpy) continue;
      a.roll += *e.roll_err;
      a.pitch += *e.pitch_err;
      a.yaw += *e.yaw_err;
      a.mae += *e.mae_rpy;
      ++a.count;
    }
  }
  std::vector<GenderPairStats> out;
  for (std::size_t i = 0; i < accum.size(); ++i) {
    const auto& a = accum[i];
    if (a.count == 0) continue;
    const double n = static_cast<double>(a.count);
    out.push_back({static_cast<GenderPair>(i), a.roll / n, a.pitch / n, a.yaw / n, a.mae / n, a.count});
  }
  return out;
}

// ---------------------------------------------------------------------------

void ThresholdConfig::validate() const {
  for (const auto& [name, range] : ranges) {
    if (!find_audit_metric(name)) {
      throw AuditError(ErrorCode::MalformedConfig, "unknown metric \"" + name + "\"");
    }
    if (std::isnan(range.lo) || std::isnan(range.hi) || range.lo > range.hi) {
      throw AuditError(ErrorCode::MalformedConfig, "metric \"" + name + "\" needs lo <= hi");
    }
  }
  if (anomaly.window < 3 || anomaly.window % 2 == 0) {
    throw AuditError(ErrorCode::MalformedConfig, "anomaly.window must be an odd integer >= 3");
  }
  if (!(anomaly.z_threshold > 0.0)) {
    throw AuditError(ErrorCode::MalformedConfig, "anomaly.z_threshold must be positive");
  }
  if (!(zero_error_epsilon >= 0.0)) {
    throw AuditError(ErrorCode::MalformedConfig, "zero_error.epsilon must be non-negative");
  }
}

ThresholdConfig default_threshold_config() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  ThresholdConfig cfg;
  cfg.ranges = {
      {"ear_err", {0.0, 0.06}}, {"pc_err", {0.0, 0.075}}, {"lar_err", {0.0, 0.06}},
      {"mse", {0.0, 99.39}},    {"rmse", {0.0, 7.969}},   {"psnr", {28.16, inf}},
      {"uiqi", {0.439, 1.0}},   {"ergas", {0.0, 16423.93}}, {"sam", {0.0, 0.805}},
  };
  return cfg;
}

// ---------------------------------------------------------------------------

std::string_view to_string(FlagReason reason) noexcept {
  switch (reason) {
    case FlagReason::zero_error_suspect: return "zero_error_suspect";
    case FlagReason::out_of_range: return "out_of_range";
    case FlagReason::series_anomaly: return "series_anomaly";
    case FlagReason::missing_annotation: return "missing_annotation";
  }
  return "out_of_range";
}

std::optional<FlagReason> parse_flag_reason(std::string_view text) noexcept {
  for (auto r : {FlagReason::zero_error_suspect, FlagReason::out_of_range, FlagReason::series_anomaly,
                 FlagReason::missing_annotation}) {
    if (to_string(r) == text) return r;
  }
  return std::nullopt;
}

std::optional<Flag> flag_zero_error(const CueErrors& errors, double epsilon, std::string_view session_id,
                                    std::int64_t frame_index) {
  std::size_t present = 0;
  double largest = 0.0;
  for (const auto& [name, value] : metric_values(errors, nullptr)) {
    const auto* metric = find_audit_metric(name);
    if (!metric->cue_error || !value) continue;
    ++present;
    largest = std::max(largest, *value);
  }
  if (present < 3 || largest > epsilon) return std::nullopt;

  Flag flag;
  flag.session_id = session_id;
  flag.frame_index = frame_index;
  flag.reason = FlagReason::zero_error_suspect;
  flag.value = largest;
  flag.threshold = epsilon;
  flag.detail = std::to_string(present) + " cue errors present, all <= " + format_number(epsilon) +
                "; face may not have been swapped";
  return flag;
}

std::vector<Flag> flag_out_of_range(const CueErrors& errors, const QualityMetrics* quality,
                                    const ThresholdConfig& config, std::string_view session_id,
                                    std::int64_t frame_index) {
  std::vector<Flag> flags;
  for (const auto& [name, value] : metric_values(errors, quality)) {
    if (!value) continue;
    auto it = config.ranges.find(name);
    if (it == config.ranges.end() || it->second.contains(*value)) continue;
    const Range& range = it->second;
    Flag flag;
    flag.session_id = session_id;
    flag.frame_index = frame_index;
    flag.reason = FlagReason::out_of_range;
    flag.metric = name;
    flag.value = *value;
    if (std::isfinite(range.lo)) flag.lo = range.lo;
    if (std::isfinite(range.hi)) flag.hi = range.hi;
    flag.detail = std::string(name) + " = " + format_number(*value) + " outside [" + format_number(range.lo) +
                  ", " + format_number(range.hi) + "]";
    flags.push_back(std::move(flag));
  }
  return flags;
}

std::vector<std::optional<RobustScore>> robust_scores(std::span<const SeriesPoint> series, const AnomalyConfig& config,
                                                      double epsilon) {
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].value) present.push_back(i);
  }
  if (config.window < 1 || present.size() < static_cast<std::size_t>(config.window)) {
    throw AuditError(ErrorCode::SeriesTooShort, std::to_string(present.size()) + " present points, window needs " +
                                                    std::to_string(config.window));
  }

  const std::size_t half = static_cast<std::size_t>(config.window) / 2;
  std::vector<std::optional<RobustScore>> scores(series.size());
  std::vector<double> window;
  for (std::size_t k = 0; k < present.size(); ++k) {
    const std::size_t first = k >= half ? k - half : 0;
    const std::size_t last = std::min(present.size() - 1, k + half);
    window.clear();
    for (std::size_t j = first; j <= last; ++j) window.push_back(*series[present[j]].value);

    const double value = *series[present[k]].value;
    RobustScore score;
    score.median = median_of(window);
    for (double& v : window) v = std::abs(v - score.median);
    score.mad = median_of(window);
    if (score.mad > 0.0) {
      score.z = kMadScale * (value - score.median) / score.mad;
      score.anomalous = std::abs(*score.z) >= config.z_threshold;
    } else {
      score.anomalous = std::abs(value - score.median) > epsilon;
    }
    scores[present[k]] = score;
  }
  return scores;
}

std::vector<Flag> detect_series_anomalies(std::span<const SeriesPoint> series, const ThresholdConfig& config,
                                          std::string_view session_id, std::string_view metric) {
  const auto scores = robust_scores(series, config.anomaly, config.zero_error_epsilon);
  std::vector<Flag> flags;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!scores[i] || !scores[i]->anomalous) continue;
    const auto& s = *scores[i];
    Flag flag;
    flag.session_id = session_id;
    flag.frame_index = series[i].frame_index;
    flag.reason = FlagReason::series_anomaly;
    flag.metric = metric;
    flag.value = *series[i].value;
    flag.center = s.median;
    flag.spread = s.mad;
    flag.z = s.z;
    if (s.z) {
      flag.threshold = config.anomaly.z_threshold;
      flag.detail = std::string(*s.z > 0 ? "peak" : "dip") + " in " + std::string(metric) +
                    ": robust z = " + format_number(*s.z) + " (|z| >= " + format_number(config.anomaly.z_threshold) +
                    ")";
    } else {
      flag.threshold = config.zero_error_epsilon;
      flag.detail = "deviation from a flat " + std::string(metric) + " window (MAD = 0)";
    }
    flags.push_back(std::move(flag));
  }
  return flags;
}

// ---------------------------------------------------------------------------

double youden_j(std::span<const std::pair<double, bool>> samples, const Range& range) {
  std::size_t fails = 0, passes = 0, true_pos = 0, false_pos = 0;
  for (const auto& [value, fail] : samples) {
    const bool flagged = !range.contains(value);
    if (fail) {
      ++fails;
      if (flagged) ++true_pos;
    } else {
      ++passes;
      if (flagged) ++false_pos;
    }
  }
  if (fails == 0 || passes == 0) return 0.0;
  return static_cast<double>(true_pos) / static_cast<double>(fails) -
         static_cast<double>(false_pos) / static_cast<double>(passes);
}

CalibrationResult calibrate_thresholds(std::span<const LabeledFrame> verdicts, const ThresholdConfig& prior) {
  const auto fails = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.fail; });
  if (fails == 0 || static_cast<std::size_t>(fails) == verdicts.size()) {
    throw AuditError(ErrorCode::InsufficientVerdicts, "calibration needs at least one pass and one fail verdict");
  }

  CalibrationResult result;
  result.config = prior;
  for (const auto& metric : audit_metrics()) {
    std::vector<std::pair<double, bool>> samples;
    for (const auto& v : verdicts) {
      if (auto it = v.values.find(metric.name); it != v.values.end() && !std::isnan(it->second)) {
        samples.emplace_back(it->second, v.fail);
      }
    }
    MetricCalibration report{std::string(metric.name), 0.0, false};

    std::vector<double> grid;
    for (const auto& s : samples) {
      if (std::isfinite(s.first)) grid.push_back(s.first);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const auto prior_it = prior.ranges.find(metric.name);
    const Range base = prior_it != prior.ranges.end() ? prior_it->second : Range{};
    const bool upper = metric.orientation == Orientation::lower_is_similar;

    std::optional<double> best_bound;
    double best_j = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const double bound = grid[i] + (grid[i + 1] - grid[i]) / 2.0;
      Range candidate = base;
      (upper ? candidate.hi : candidate.lo) = bound;
      if (candidate.lo > candidate.hi) continue;
      const double j = youden_j(samples, candidate);
      // Candidates ascend, so ">=" prefers the larger hi and ">" the smaller lo.
      if (!best_bound || (upper ? j >= best_j : j > best_j)) {
        best_bound = bound;
        best_j = j;
      }
    }

    if (best_bound && best_j > 0.0) {
      Range updated = base;
      (upper ? updated.hi : updated.lo) = *best_bound;
      result.config.ranges[std::string(metric.name)] = updated;
      report.youden_j = best_j;
      report.updated = true;
    } else if (prior_it != prior.ranges.end()) {
      report.youden_j = youden_j(samples, prior_it->second);
    }
    result.metrics.push_back(std::move(report));
  }
  return result;
}

}  // namespace deid
