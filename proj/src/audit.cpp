#include "deid/audit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "deid/error.hpp"

namespace deid {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> read_opt(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json to_json(const CueMetrics& c) {
  return {{"ear", opt(c.ear)},   {"pupil_circularity", opt(c.pupil_circularity)},
          {"lar", opt(c.lar)},   {"roll", opt(c.roll)},
          {"pitch", opt(c.pitch)}, {"yaw", opt(c.yaw)}};
}

CueMetrics cues_from_json(const json& j) {
  return {read_opt(j, "ear"),  read_opt(j, "pupil_circularity"), read_opt(j, "lar"),
          read_opt(j, "roll"), read_opt(j, "pitch"),             read_opt(j, "yaw")};
}

CueErrors errors_from_json(const json& j) {
  return {read_opt(j, "ear_err"),  read_opt(j, "pc_err"),  read_opt(j, "lar_err"), read_opt(j, "roll_err"),
          read_opt(j, "pitch_err"), read_opt(j, "yaw_err"), read_opt(j, "mae_rpy")};
}

QualityMetrics quality_from_json(const json& j) {
  QualityMetrics q;
  q.mse = j.at("mse").get<double>();
  q.rmse = j.at("rmse").get<double>();
  // JSON has no infinity; null PSNR means identical frames.
  q.psnr_db = j.at("psnr").is_null() ? std::numeric_limits<double>::infinity() : j.at("psnr").get<double>();
  q.uiqi = j.at("uiqi").get<double>();
  q.ergas = read_opt(j, "ergas");
  q.sam = j.at("sam").get<double>();
  return q;
}

json to_json(const StatSummary& s) {
  return {{"maximum", s.maximum}, {"minimum", s.minimum}, {"mean", s.mean}, {"std_dev", s.std_dev},
          {"count", s.count}};
}

json to_json(const std::optional<StatSummary>& s) { return s ? to_json(*s) : json(nullptr); }

json to_json(const Quantiles& q) {
  return {{"min", q.minimum}, {"q1", q.q1},     {"median", q.median}, {"q3", q.q3},
          {"max", q.maximum}, {"mean", q.mean}, {"count", q.count}};
}

std::optional<StatSummary> summarize_present(const std::vector<std::optional<double>>& values) {
  if (std::none_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); })) return std::nullopt;
  return summarize(std::span<const std::optional<double>>(values));
}

template <typename Getter>
std::vector<std::optional<double>> collect(const std::vector<SessionRecord>& sessions, Getter get) {
  std::vector<std::optional<double>> out;
  for (const auto& s : sessions) {
    for (const auto& f : s.frames) out.push_back(get(f));
  }
  return out;
}

std::optional<double> lookup(const MetricValues& values, std::string_view name) {
  for (const auto& [n, v] : values) {
    if (n == name) return v;
  }
  return std::nullopt;
}

int reason_rank(FlagReason r) {
  switch (r) {
    case FlagReason::missing_annotation: return 0;
    case FlagReason::zero_error_suspect: return 1;
    case FlagReason::out_of_range: return 2;
    case FlagReason::series_anomaly: return 3;
  }
  return 4;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

json to_json(const CueErrors& e) {
  json out = json::object();
  for (const auto& [name, value] : metric_values(e, nullptr)) {
    if (name == "mse") break;
    out[std::string(name)] = opt(value);
  }
  return out;
}

json to_json(const QualityMetrics& q) {
  return {{"mse", q.mse},   {"rmse", q.rmse},       {"psnr", opt(q.psnr_db)},
          {"uiqi", q.uiqi}, {"ergas", opt(q.ergas)}, {"sam", q.sam}};
}

json to_json(const FrameRecord& f) {
  return {{"frame_index", f.frame_index},
          {"original_image", f.original_image},
          {"deid_image", f.deid_image},
          {"original_cues", to_json(f.original_cues)},
          {"deid_cues", to_json(f.deid_cues)},
          {"cue_errors", to_json(f.errors)},
          {"quality", f.quality ? to_json(*f.quality) : json(nullptr)},
          {"missing_annotations", f.missing_annotations},
          {"notes", f.notes}};
}

FrameRecord analyze_frame(const SessionManifest& session, const FrameEntry& frame, const AuditOptions& options) {
  FrameRecord record;
  record.frame_index = frame.frame_index;
  record.original_image = frame.original_image;
  record.deid_image = frame.deid_image;

  const Image original = load_image(session.resolve(frame.original_image));
  const Image deid = load_image(session.resolve(frame.deid_image));
  if (!original.same_shape(deid)) {
    throw AuditError(ErrorCode::ShapeMismatch, "session " + session.session_id + " frame " +
                                                   std::to_string(frame.frame_index) +
                                                   ": original and de-identified images differ in shape");
  }
  record.quality = frame_quality(original, deid, options.quality, &record.notes);

  record.original_cues = frame_cues(frame, Variant::original, session.glasses, record.notes, options.cues);
  record.deid_cues = frame_cues(frame, Variant::deid, session.glasses, record.notes, options.cues);
  record.errors = cue_errors(record.original_cues, record.deid_cues);

  if (session.original_landmarks && !frame.original_landmarks) record.missing_annotations.push_back("original_landmarks");
  if (session.deid_landmarks && !frame.deid_landmarks) record.missing_annotations.push_back("deid_landmarks");
  if (session.original_pose && !frame.original_pose) record.missing_annotations.push_back("original_pose");
  if (session.deid_pose && !frame.deid_pose) record.missing_annotations.push_back("deid_pose");
  return record;
}

Aggregates aggregate(const std::vector<SessionRecord>& sessions, const ThresholdConfig& config) {
  Aggregates agg;

  // Human-cue statistics, one row per cue.
  const std::array<std::pair<const char*, std::optional<double> CueMetrics::*>, 6> cue_fields = {{
      {"ear", &CueMetrics::ear},
      {"pupil_circularity", &CueMetrics::pupil_circularity},
      {"lar", &CueMetrics::lar},
      {"pitch", &CueMetrics::pitch},
      {"roll", &CueMetrics::roll},
      {"yaw", &CueMetrics::yaw},
  }};
  for (const auto& [name, field] : cue_fields) {
    CueStatistics row;
    row.cue = name;
    row.original = summarize_present(collect(sessions, [&](const FrameRecord& f) { return f.original_cues.*field; }));
    row.deid = summarize_present(collect(sessions, [&](const FrameRecord& f) { return f.deid_cues.*field; }));
    agg.cues.push_back(std::move(row));
  }

  std::vector<MetricValues> frame_values;
  for (const auto& s : sessions) {
    for (const auto& f : s.frames) frame_values.push_back(metric_values(f.errors, f.quality ? &*f.quality : nullptr));
  }
  auto series_of = [&](std::string_view name) {
    std::vector<std::optional<double>> out;
    for (const auto& v : frame_values) out.push_back(lookup(v, name));
    return out;
  };

  for (const auto& metric : audit_metrics()) {
    if (find_audit_metric("mse") == &metric) break;
    if (auto summary = summarize_present(series_of(metric.name))) {
      agg.cue_errors.emplace_back(std::string(metric.name), *summary);
    }
  }

  for (const auto& d : quality_descriptors()) {
    QualityStatistics row;
    row.metric = d.name;
    std::vector<std::optional<double>> finite;
    for (const auto& v : series_of(d.name)) {
      if (v && std::isinf(*v)) {
        ++row.infinite_count;
      } else {
        finite.push_back(v);
      }
    }
    row.finite = summarize_present(finite);
    agg.quality.push_back(std::move(row));
  }

  std::vector<SessionErrors> by_session;
  for (const auto& s : sessions) {
    SessionErrors e{s.target_gender, s.imposter_gender, {}};
    for (const auto& f : s.frames) e.frames.push_back(f.errors);
    by_session.push_back(std::move(e));
  }
  agg.gender_pairs = gender_pair_stats(by_session);

  const ThresholdConfig defaults = default_threshold_config();
  for (const char* name : {"ear_err", "pc_err", "lar_err"}) {
    std::vector<double> present;
    for (const auto& v : series_of(name)) {
      if (v) present.push_back(*v);
    }
    if (present.empty()) continue;
    CurveExport exp{cumulative_curve(name, present), {}};
    std::vector<double> thresholds;
    for (const auto* cfg : {&config, &defaults}) {
      if (auto it = cfg->ranges.find(name); it != cfg->ranges.end() && std::isfinite(it->second.hi)) {
        thresholds.push_back(it->second.hi);
      }
    }
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    for (double t : thresholds) exp.fraction_below.emplace_back(t, exp.curve.fraction_below(t));
    agg.curves.push_back(std::move(exp));
  }

  for (const char* name : {"roll_err", "pitch_err", "yaw_err", "mae_rpy"}) {
    std::vector<double> present;
    for (const auto& v : series_of(name)) {
      if (v) present.push_back(*v);
    }
    if (!present.empty()) agg.pose_error_distribution.emplace_back(name, quantiles(present));
  }
  if (agg.pose_error_distribution.size() == 4) {
    const auto& d = agg.pose_error_distribution;
    agg.roll_lt_pitch_lt_yaw = d[0].second.mean < d[1].second.mean && d[1].second.mean < d[2].second.mean;
  }

  for (const auto& s : sessions) {
    std::vector<SeriesPoint> ergas_series;
    for (const auto& f : s.frames) {
      for (const auto& kind : f.missing_annotations) {
        Flag flag;
        flag.session_id = s.session_id;
        flag.frame_index = f.frame_index;
        flag.reason = FlagReason::missing_annotation;
        flag.metric = kind;
        flag.detail = kind + " has no entry for this frame; cue metrics disabled";
        agg.flags.push_back(std::move(flag));
      }
      if (auto z = flag_zero_error(f.errors, config.zero_error_epsilon, s.session_id, f.frame_index)) {
        agg.flags.push_back(std::move(*z));
      }
      for (auto& flag : flag_out_of_range(f.errors, f.quality ? &*f.quality : nullptr, config, s.session_id,
                                          f.frame_index)) {
        agg.flags.push_back(std::move(flag));
      }
      ergas_series.push_back({f.frame_index, f.quality ? f.quality->ergas : std::nullopt});
    }
    try {
      for (auto& flag : detect_series_anomalies(ergas_series, config, s.session_id, "ergas")) {
        agg.flags.push_back(std::move(flag));
      }
    } catch (const AuditError& e) {
      if (e.code() != ErrorCode::SeriesTooShort) throw;
      agg.warnings.push_back("session " + s.session_id + ": ergas spot-check skipped, " + e.what());
    }
  }
  std::stable_sort(agg.flags.begin(), agg.flags.end(), [](const Flag& a, const Flag& b) {
    if (a.session_id != b.session_id) return a.session_id < b.session_id;
    if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
    return reason_rank(a.reason) < reason_rank(b.reason);
  });
  return agg;
}

AuditReport run_audit(std::vector<SessionManifest> sessions, const AuditOptions& options) {
  options.config.validate();
  AuditReport report;
  report.config = options.config;

  for (auto& s : sessions) attach_annotations(s, report.warnings);

  struct Task {
    std::size_t session;
    std::size_t frame;
  };
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    for (std::size_t j = 0; j < sessions[i].frames.size(); ++j) tasks.push_back({i, j});
  }

  std::vector<FrameRecord> records(tasks.size());
  std::vector<std::exception_ptr> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      try {
        const auto& s = sessions[tasks[t].session];
        records[t] = analyze_frame(s, s.frames[tasks[t].frame], options);
      } catch (...) {
        failures[t] = std::current_exception();
      }
    }
  };
  {
    const unsigned count = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(tasks.size())));
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < count; ++w) pool.emplace_back(worker);
    worker();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  std::size_t t = 0;
  for (const auto& s : sessions) {
    SessionRecord rec{s.session_id, s.target_gender, s.imposter_gender, s.glasses, {}};
    for (std::size_t j = 0; j < s.frames.size(); ++j, ++t) {
      for (const auto& note : records[t].notes) report.warnings.push_back(s.session_id + ": " + note);
      rec.frames.push_back(std::move(records[t]));
    }
    report.sessions.push_back(std::move(rec));
  }
  report.aggregates = aggregate(report.sessions, report.config);
  return report;
}

AuditReport run_audit(const std::filesystem::path& manifest, const AuditOptions& options) {
  return run_audit(load_manifest(manifest), options);
}

json report_to_json(const AuditReport& report, bool canonical) {
  const auto& agg = report.aggregates;
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  if (!canonical) doc["generated_at"] = utc_timestamp();
  doc["config"] = to_json(report.config);

  json sessions = json::array();
  for (const auto& s : report.sessions) {
    json frames = json::array();
    for (const auto& f : s.frames) frames.push_back(to_json(f));
    sessions.push_back({{"session_id", s.session_id},
                        {"target_gender", to_string(s.target_gender)},
                        {"imposter_gender", to_string(s.imposter_gender)},
                        {"gender_pair", to_string(gender_pair(s.target_gender, s.imposter_gender))},
                        {"glasses", to_string(s.glasses)},
                        {"frames", std::move(frames)}});
  }
  doc["sessions"] = std::move(sessions);

  json cues = json::array();
  for (const auto& c : agg.cues) {
    cues.push_back({{"cue", c.cue}, {"original", to_json(c.original)}, {"deid", to_json(c.deid)}});
  }
  json cue_errors = json::array();
  for (const auto& [name, s] : agg.cue_errors) {
    json row = to_json(s);
    row["metric"] = name;
    cue_errors.push_back(std::move(row));
  }
  json quality = json::array();
  for (const auto& q : agg.quality) {
    quality.push_back({{"metric", q.metric},
                       {"orientation", find_audit_metric(q.metric)->orientation == Orientation::lower_is_similar
                                           ? "lower_is_similar"
                                           : "higher_is_similar"},
                       {"finite", to_json(q.finite)},
                       {"infinite_count", q.infinite_count}});
  }
  doc["statistics"] = {{"cues", std::move(cues)}, {"cue_errors", std::move(cue_errors)}, {"quality", std::move(quality)}};

  json pairs = json::array();
  for (const auto& g : agg.gender_pairs) {
    pairs.push_back({{"pair", to_string(g.pair)},
                     {"mean_roll_err", g.mean_roll_err},
                     {"mean_pitch_err", g.mean_pitch_err},
                     {"mean_yaw_err", g.mean_yaw_err},
                     {"mean_mae_rpy", g.mean_mae_rpy},
                     {"count", g.count}});
  }
  doc["gender_pairs"] = std::move(pairs);

  json curves = json::array();
  for (const auto& c : agg.curves) {
    json breakpoints = json::array();
    for (const auto& [v, f] : c.curve.breakpoints()) breakpoints.push_back({v, f});
    json below = json::array();
    for (const auto& [t, f] : c.fraction_below) below.push_back({{"threshold", t}, {"fraction", f}});
    curves.push_back({{"metric", c.curve.metric()},
                      {"count", c.curve.count()},
                      {"breakpoints", std::move(breakpoints)},
                      {"fraction_below", std::move(below)}});
  }
  doc["cumulative_curves"] = std::move(curves);

  json distribution = json::array();
  for (const auto& [name, q] : agg.pose_error_distribution) {
    json row = to_json(q);
    row["metric"] = name;
    distribution.push_back(std::move(row));
  }
  doc["pose_error_distribution"] = std::move(distribution);
  doc["checks"] = {{"roll_lt_pitch_lt_yaw", agg.roll_lt_pitch_lt_yaw ? json(*agg.roll_lt_pitch_lt_yaw) : json(nullptr)}};

  json flags = json::array();
  for (const auto& f : agg.flags) flags.push_back(to_json(f));
  doc["flags"] = std::move(flags);

  json warnings = report.warnings;
  for (const auto& w : agg.warnings) warnings.push_back(w);
  doc["warnings"] = std::move(warnings);
  return doc;
}

std::string report_to_string(const AuditReport& report, bool canonical) {
  return report_to_json(report, canonical).dump(2) + "\n";
}

AuditReport report_from_json(const json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw AuditError(ErrorCode::MalformedReport, "unsupported report schema_version");
    }
    AuditReport report;
    report.config = threshold_config_from_json(doc.at("config"));
    for (const auto& s : doc.at("sessions")) {
      SessionRecord rec;
      rec.session_id = s.at("session_id").get<std::string>();
      auto target = parse_gender(s.at("target_gender").get<std::string>());
      auto imposter = parse_gender(s.at("imposter_gender").get<std::string>());
      auto glasses = parse_glasses(s.at("glasses").get<std::string>());
      if (!target || !imposter || !glasses) throw AuditError(ErrorCode::MalformedReport, "bad session metadata");
      rec.target_gender = *target;
      rec.imposter_gender = *imposter;
      rec.glasses = *glasses;
      for (const auto& f : s.at("frames")) {
        FrameRecord fr;
        fr.frame_index = f.at("frame_index").get<std::int64_t>();
        fr.original_image = f.at("original_image").get<std::string>();
        fr.deid_image = f.at("deid_image").get<std::string>();
        fr.original_cues = cues_from_json(f.at("original_cues"));
        fr.deid_cues = cues_from_json(f.at("deid_cues"));
        fr.errors = errors_from_json(f.at("cue_errors"));
        if (!f.at("quality").is_null()) fr.quality = quality_from_json(f.at("quality"));
        fr.missing_annotations = f.value("missing_annotations", std::vector<std::string>{});
        fr.notes = f.value("notes", std::vector<std::string>{});
        rec.frames.push_back(std::move(fr));
      }
      report.sessions.push_back(std::move(rec));
    }
    report.aggregates = aggregate(report.sessions, report.config);
    // Aggregation warnings are regenerated; keep only the ingest ones.
    for (const auto& w : doc.value("warnings", std::vector<std::string>{})) {
      if (std::find(report.aggregates.warnings.begin(), report.aggregates.warnings.end(), w) ==
          report.aggregates.warnings.end()) {
        report.warnings.push_back(w);
      }
    }
    return report;
  } catch (const json::exception& e) {
    throw AuditError(ErrorCode::MalformedReport, e.what());
  }
}

AuditReport load_report(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw AuditError(ErrorCode::MissingReport, path.string() + " does not exist");
  }
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw AuditError(ErrorCode::MalformedReport, path.string() + ": " + e.what());
  }
  return report_from_json(doc);
}

}  // namespace deid
