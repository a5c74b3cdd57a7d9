#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "deid/audit.hpp"

namespace deid {

enum class VerdictValue { pass, fail };

struct Verdict {
  std::string session_id;
  std::int64_t frame_index = 0;
  VerdictValue verdict = VerdictValue::pass;
  std::optional<std::string> reason;
  std::string reviewer;
  std::string timestamp;  // ISO-8601 UTC
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& doc);  // throws InvalidArgument

// Reads a newline-delimited verdict log. Unparseable lines are skipped and
// reported through warnings (a torn final line after a crash).
std::vector<Verdict> read_verdict_log(const std::filesystem::path& path, Warnings* warnings = nullptr);

// Labeled frames for calibration: the latest verdict per frame joined with
// that frame's metric values.
std::vector<LabeledFrame> label_frames(const AuditReport& report, const std::vector<Verdict>& verdicts);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

struct ReviewOptions {
  std::filesystem::path report_path;
  std::filesystem::path images_root;
  // Holds verdicts.jsonl and calibrated configs. Defaults to the report's directory.
  std::filesystem::path state_dir;
  int context_radius = 50;  // frames either side in queue series excerpts
};

// Review queue state shared by the HTTP handlers. Reads may run
// concurrently; verdict appends and calibrations are serialized.
class ReviewState {
 public:
  // Throws MissingReport / MalformedReport. Replays any existing verdict log.
  explicit ReviewState(ReviewOptions options);

  ServiceResponse queue(std::string_view status_filter) const;
  ServiceResponse frame_detail(std::string_view session_id, std::int64_t frame_index) const;
  ServiceResponse record_verdict(std::string_view body);
  ServiceResponse calibrate();

  struct ImageLookup {
    int status = 200;
    std::filesystem::path path;
  };
  ImageLookup image_path(std::string_view session_id, std::int64_t frame_index, std::string_view variant) const;

  // Latest verdict per flagged frame, keyed by (session_id, frame_index).
  std::map<std::pair<std::string, std::int64_t>, VerdictValue> statuses() const;
  const ThresholdConfig& current_config() const;
  std::filesystem::path verdict_log_path() const { return options_.state_dir / "verdicts.jsonl"; }
  const Warnings& replay_warnings() const noexcept { return replay_warnings_; }

 private:
  using FrameKey = std::pair<std::string, std::int64_t>;

  const FrameRecord* find_frame(std::string_view session_id, std::int64_t frame_index) const;
  nlohmann::json series_excerpt(const Flag& flag) const;
  void apply(const Verdict& verdict);

  ReviewOptions options_;
  AuditReport report_;
  std::map<FrameKey, std::vector<const Flag*>> flags_by_frame_;
  std::map<std::string, std::size_t, std::less<>> session_index_;

  mutable std::shared_mutex mutex_;
  std::vector<Verdict> verdicts_;
  std::map<FrameKey, VerdictValue> status_;
  ThresholdConfig config_;
  std::ofstream log_;
  Warnings replay_warnings_;
};

struct ServerOptions {
  std::string cors_origin = "*";
  std::optional<std::string> bearer_token;  // DEID_AUDIT_TOKEN
  std::optional<std::filesystem::path> ui_dir;
};

// "HOST:PORT" -> (host, port). Throws BindError.
std::pair<std::string, int> parse_bind_address(std::string_view address);

class ReviewServer {
 public:
  ReviewServer(ReviewState& state, ServerOptions options);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Port 0 picks a free port. Throws BindError. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace deid
