#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "deid/analysis.hpp"
#include "deid/error.hpp"
#include "deid/ingest.hpp"

namespace deid {

using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& what) { throw AuditError(ErrorCode::MalformedConfig, what); }

double number_or(const json& obj, const char* key, double fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) bad_config(where + "." + key + " must be a number");
  return it->get<double>();
}

json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> read_optional(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

json to_json(const ThresholdConfig& config) {
  json metrics = json::object();
  for (const auto& [name, range] : config.ranges) {
    json r = json::object();
    if (std::isfinite(range.lo)) r["lo"] = range.lo;
    if (std::isfinite(range.hi)) r["hi"] = range.hi;
    metrics[name] = std::move(r);
  }
  return {{"metrics", std::move(metrics)},
          {"anomaly", {{"window", config.anomaly.window}, {"z_threshold", config.anomaly.z_threshold}}},
          {"zero_error", {{"epsilon", config.zero_error_epsilon}}}};
}

ThresholdConfig threshold_config_from_json(const json& doc) {
  if (!doc.is_object()) bad_config("config must be a JSON object");
  for (const auto& item : doc.items()) {
    if (item.key() != "metrics" && item.key() != "anomaly" && item.key() != "zero_error") {
      bad_config("unknown key \"" + item.key() + "\"");
    }
  }

  ThresholdConfig cfg = default_threshold_config();
  if (auto metrics = doc.find("metrics"); metrics != doc.end()) {
    if (!metrics->is_object()) bad_config("metrics must be an object");
    for (const auto& [name, bounds] : metrics->items()) {
      if (!find_audit_metric(name)) bad_config("unknown metric \"" + name + "\"");
      if (!bounds.is_object()) bad_config("metrics." + name + " must be an object");
      Range r;
      r.lo = number_or(bounds, "lo", r.lo, "metrics." + name);
      r.hi = number_or(bounds, "hi", r.hi, "metrics." + name);
      if (std::isinf(r.lo) && std::isinf(r.hi)) {
        cfg.ranges.erase(name);
      } else {
        cfg.ranges[name] = r;
      }
    }
  }
  if (auto anomaly = doc.find("anomaly"); anomaly != doc.end()) {
    if (!anomaly->is_object()) bad_config("anomaly must be an object");
    if (auto w = anomaly->find("window"); w != anomaly->end()) {
      if (!w->is_number_integer()) bad_config("anomaly.window must be an integer");
      cfg.anomaly.window = w->get<int>();
    }
    cfg.anomaly.z_threshold = number_or(*anomaly, "z_threshold", cfg.anomaly.z_threshold, "anomaly");
  }
  if (auto zero = doc.find("zero_error"); zero != doc.end()) {
    if (!zero->is_object()) bad_config("zero_error must be an object");
    cfg.zero_error_epsilon = number_or(*zero, "epsilon", cfg.zero_error_epsilon, "zero_error");
  }
  cfg.validate();
  return cfg;
}

ThresholdConfig load_threshold_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    bad_config(path.string() + ": " + e.what());
  }
  return threshold_config_from_json(doc);
}

void save_threshold_config(const ThresholdConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw AuditError(ErrorCode::IoError, "cannot write " + path.string());
  }
  out << to_json(config).dump(2) << '\n';
  if (!out) {
    throw AuditError(ErrorCode::IoError, "short write to " + path.string());
  }
}

json to_json(const Flag& flag) {
  json out = {{"session_id", flag.session_id},
              {"frame_index", flag.frame_index},
              {"reason", to_string(flag.reason)},
              {"metric", flag.metric.empty() ? json(nullptr) : json(flag.metric)},
              {"value", std::isfinite(flag.value) ? json(flag.value) : json(nullptr)},
              {"detail", flag.detail}};
  json evidence = json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) evidence[key] = optional_number(v);
  };
  put("lo", flag.lo);
  put("hi", flag.hi);
  put("median", flag.center);
  put("mad", flag.spread);
  put("z", flag.z);
  put("threshold", flag.threshold);
  out["evidence"] = std::move(evidence);
  return out;
}

Flag flag_from_json(const json& doc) {
  try {
    Flag flag;
    flag.session_id = doc.at("session_id").get<std::string>();
    flag.frame_index = doc.at("frame_index").get<std::int64_t>();
    auto reason = parse_flag_reason(doc.at("reason").get<std::string>());
    if (!reason) throw AuditError(ErrorCode::MalformedReport, "unknown flag reason");
    flag.reason = *reason;
    if (!doc.at("metric").is_null()) flag.metric = doc.at("metric").get<std::string>();
    flag.value = doc.at("value").is_null() ? std::numeric_limits<double>::infinity() : doc.at("value").get<double>();
    flag.detail = doc.value("detail", "");
    if (auto ev = doc.find("evidence"); ev != doc.end() && ev->is_object()) {
      flag.lo = read_optional(*ev, "lo");
      flag.hi = read_optional(*ev, "hi");
      flag.center = read_optional(*ev, "median");
      flag.spread = read_optional(*ev, "mad");
      flag.z = read_optional(*ev, "z");
      flag.threshold = read_optional(*ev, "threshold");
    }
    return flag;
  } catch (const json::exception& e) {
    throw AuditError(ErrorCode::MalformedReport, std::string("bad flag: ") + e.what());
  }
}

}  // namespace deid
