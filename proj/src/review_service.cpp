#include "deid/review_service.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <mutex>

#include "deid/error.hpp"

namespace deid {

using nlohmann::json;

namespace {

std::string_view to_string(VerdictValue v) noexcept { return v == VerdictValue::pass ? "pass" : "fail"; }

std::optional<VerdictValue> parse_verdict_value(std::string_view text) noexcept {
  if (text == "pass") return VerdictValue::pass;
  if (text == "fail") return VerdictValue::fail;
  return std::nullopt;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  const auto n = std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof(buf) - n, ".%03dZ", static_cast<int>(millis));
  return buf;
}

ServiceResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

bool unsafe_component(std::string_view s) {
  return s.empty() || s == "." || s == ".." || s.find("..") != std::string_view::npos ||
         s.find_first_of("/\\") != std::string_view::npos || s.find('\0') != std::string_view::npos;
}

bool path_within(const std::filesystem::path& root, const std::filesystem::path& candidate) {
  auto r = root.begin();
  auto c = candidate.begin();
  for (; r != root.end(); ++r, ++c) {
    if (r->empty()) continue;  // trailing separator
    if (c == candidate.end() || *r != *c) return false;
  }
  return true;
}

}  // namespace

json to_json(const Verdict& v) {
  return {{"session_id", v.session_id},
          {"frame_index", v.frame_index},
          {"verdict", to_string(v.verdict)},
          {"reason", v.reason ? json(*v.reason) : json(nullptr)},
          {"reviewer", v.reviewer},
          {"timestamp", v.timestamp}};
}

Verdict verdict_from_json(const json& doc) {
  auto bad = [](const std::string& what) { throw AuditError(ErrorCode::InvalidArgument, what); };
  if (!doc.is_object()) bad("verdict must be a JSON object");
  Verdict v;
  auto session = doc.find("session_id");
  if (session == doc.end() || !session->is_string() || session->get<std::string>().empty()) {
    bad("session_id must be a non-empty string");
  }
  v.session_id = session->get<std::string>();
  auto frame = doc.find("frame_index");
  if (frame == doc.end() || !frame->is_number_integer()) bad("frame_index must be an integer");
  v.frame_index = frame->get<std::int64_t>();
  auto verdict = doc.find("verdict");
  if (verdict == doc.end() || !verdict->is_string()) bad("verdict must be \"pass\" or \"fail\"");
  auto value = parse_verdict_value(verdict->get<std::string>());
  if (!value) bad("verdict must be \"pass\" or \"fail\"");
  v.verdict = *value;
  auto reviewer = doc.find("reviewer");
  if (reviewer == doc.end() || !reviewer->is_string() || reviewer->get<std::string>().empty()) {
    bad("reviewer must be a non-empty string");
  }
  v.reviewer = reviewer->get<std::string>();
  if (auto reason = doc.find("reason"); reason != doc.end() && !reason->is_null()) {
    if (!reason->is_string()) bad("reason must be a string");
    v.reason = reason->get<std::string>();
  }
  if (auto ts = doc.find("timestamp"); ts != doc.end() && ts->is_string()) v.timestamp = ts->get<std::string>();
  return v;
}

std::vector<Verdict> read_verdict_log(const std::filesystem::path& path, Warnings* warnings) {
  std::vector<Verdict> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(verdict_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      if (warnings) warnings->push_back("verdict log line " + std::to_string(line_no) + " skipped: " + e.what());
    }
  }
  return out;
}

std::vector<LabeledFrame> label_frames(const AuditReport& report, const std::vector<Verdict>& verdicts) {
  std::map<std::pair<std::string, std::int64_t>, VerdictValue> latest;
  for (const auto& v : verdicts) latest[{v.session_id, v.frame_index}] = v.verdict;

  std::vector<LabeledFrame> out;
  for (const auto& [key, value] : latest) {
    for (const auto& s : report.sessions) {
      if (s.session_id != key.first) continue;
      for (const auto& f : s.frames) {
        if (f.frame_index != key.second) continue;
        LabeledFrame lf;
        lf.fail = value == VerdictValue::fail;
        for (const auto& [name, v] : metric_values(f.errors, f.quality ? &*f.quality : nullptr)) {
          if (v) lf.values.emplace(std::string(name), *v);
        }
        out.push_back(std::move(lf));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ReviewState::ReviewState(ReviewOptions options) : options_(std::move(options)) {
  report_ = load_report(options_.report_path);
  if (options_.state_dir.empty()) options_.state_dir = options_.report_path.parent_path();
  if (options_.state_dir.empty()) options_.state_dir = ".";
  std::error_code ec;
  std::filesystem::create_directories(options_.state_dir, ec);

  for (std::size_t i = 0; i < report_.sessions.size(); ++i) session_index_.emplace(report_.sessions[i].session_id, i);
  for (const auto& flag : report_.aggregates.flags) {
    flags_by_frame_[{flag.session_id, flag.frame_index}].push_back(&flag);
  }

  config_ = report_.config;
  const auto calibration_dir = options_.state_dir / "calibration";
  if (std::filesystem::is_directory(calibration_dir)) {
    std::vector<std::filesystem::path> saved;
    for (const auto& entry : std::filesystem::directory_iterator(calibration_dir)) saved.push_back(entry.path());
    std::sort(saved.begin(), saved.end());
    if (!saved.empty()) config_ = load_threshold_config(saved.back());
  }

  for (const auto& v : read_verdict_log(verdict_log_path(), &replay_warnings_)) {
    if (!flags_by_frame_.contains({v.session_id, v.frame_index})) {
      replay_warnings_.push_back("verdict for unflagged frame " + v.session_id + "/" + std::to_string(v.frame_index) +
                                 " ignored");
      continue;
    }
    apply(v);
  }

  log_.open(verdict_log_path(), std::ios::app | std::ios::binary);
  if (!log_) {
    throw AuditError(ErrorCode::IoError, "cannot open verdict log " + verdict_log_path().string());
  }
}

void ReviewState::apply(const Verdict& verdict) {
  verdicts_.push_back(verdict);
  status_[{verdict.session_id, verdict.frame_index}] = verdict.verdict;
}

const FrameRecord* ReviewState::find_frame(std::string_view session_id, std::int64_t frame_index) const {
  auto it = session_index_.find(session_id);
  if (it == session_index_.end()) return nullptr;
  for (const auto& f : report_.sessions[it->second].frames) {
    if (f.frame_index == frame_index) return &f;
  }
  return nullptr;
}

json ReviewState::series_excerpt(const Flag& flag) const {
  const std::string metric =
      find_audit_metric(flag.metric) && !flag.metric.empty() ? flag.metric : std::string("ergas");
  json points = json::array();
  const auto& session = report_.sessions[session_index_.find(flag.session_id)->second];
  for (const auto& f : session.frames) {
    if (std::abs(f.frame_index - flag.frame_index) > options_.context_radius) continue;
    std::optional<double> value;
    for (const auto& [name, v] : metric_values(f.errors, f.quality ? &*f.quality : nullptr)) {
      if (name == metric) value = v;
    }
    points.push_back({{"frame_index", f.frame_index},
                      {"value", value && std::isfinite(*value) ? json(*value) : json(nullptr)}});
  }
  return {{"metric", metric}, {"points", std::move(points)}};
}

ServiceResponse ReviewState::queue(std::string_view status_filter) const {
  if (status_filter.empty()) status_filter = "pending";
  if (status_filter != "pending" && status_filter != "all") {
    return error_response(400, "status must be \"pending\" or \"all\"");
  }
  std::shared_lock lock(mutex_);
  std::vector<const Flag*> flags;
  for (const auto& f : report_.aggregates.flags) flags.push_back(&f);
  std::stable_sort(flags.begin(), flags.end(), [](const Flag* a, const Flag* b) {
    return std::tie(a->session_id, a->frame_index) < std::tie(b->session_id, b->frame_index);
  });
  json items = json::array();
  for (const auto* flag : flags) {
    auto it = status_.find({flag->session_id, flag->frame_index});
    const std::string status = it == status_.end() ? "pending" : std::string(to_string(it->second));
    if (status_filter == "pending" && status != "pending") continue;
    json item = to_json(*flag);
    item["status"] = status;
    item["context"] = series_excerpt(*flag);
    items.push_back(std::move(item));
  }
  return {200, json{{"items", std::move(items)}}};
}

ServiceResponse ReviewState::frame_detail(std::string_view session_id, std::int64_t frame_index) const {
  const auto* frame = find_frame(session_id, frame_index);
  if (!frame) return error_response(404, "unknown frame");
  std::shared_lock lock(mutex_);
  json detail = to_json(*frame);
  detail["session_id"] = session_id;
  json flags = json::array();
  if (auto it = flags_by_frame_.find({std::string(session_id), frame_index}); it != flags_by_frame_.end()) {
    for (const auto* f : it->second) flags.push_back(to_json(*f));
  }
  detail["flags"] = std::move(flags);
  for (const auto& kind : frame->missing_annotations) detail["notes"].push_back("missing_annotation: " + kind);
  json history = json::array();
  for (const auto& v : verdicts_) {
    if (v.session_id == session_id && v.frame_index == frame_index) history.push_back(to_json(v));
  }
  detail["verdicts"] = std::move(history);
  auto status = status_.find({std::string(session_id), frame_index});
  detail["status"] = !detail["flags"].empty()
                         ? (status == status_.end() ? json("pending") : json(to_string(status->second)))
                         : json(nullptr);
  const std::string base = "/api/images/" + std::string(session_id) + "/" + std::to_string(frame_index);
  detail["images"] = {{"original", base + "/original"}, {"deid", base + "/deid"}};
  return {200, std::move(detail)};
}

ServiceResponse ReviewState::record_verdict(std::string_view body) {
  Verdict verdict;
  try {
    verdict = verdict_from_json(json::parse(body));
  } catch (const json::exception& e) {
    return error_response(400, std::string("invalid JSON: ") + e.what());
  } catch (const AuditError& e) {
    return error_response(400, e.what());
  }
  if (!flags_by_frame_.contains({verdict.session_id, verdict.frame_index})) {
    return error_response(404, "frame is not flagged");
  }
  verdict.timestamp = utc_now_iso8601();

  std::unique_lock lock(mutex_);
  log_ << to_json(verdict).dump() << '\n';
  log_.flush();
  if (!log_) return error_response(500, "verdict log write failed");
  apply(verdict);
  return {201, to_json(verdict)};
}

ServiceResponse ReviewState::calibrate() {
  std::unique_lock lock(mutex_);
  CalibrationResult result;
  try {
    result = calibrate_thresholds(label_frames(report_, verdicts_), config_);
  } catch (const AuditError& e) {
    if (e.code() != ErrorCode::InsufficientVerdicts) throw;
    return error_response(422, e.what());
  }

  const auto dir = options_.state_dir / "calibration";
  std::filesystem::create_directories(dir);
  std::size_t existing = 0;
  for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir)) ++existing;
  auto numbered = [&](std::size_t n) {
    char name[48];
    std::snprintf(name, sizeof(name), "thresholds-%04zu.json", n);
    return dir / name;
  };
  if (existing == 0) {
    save_threshold_config(config_, numbered(0));
    existing = 1;
  }
  const auto saved = numbered(existing);
  save_threshold_config(result.config, saved);

  json metrics = json::array();
  for (const auto& m : result.metrics) {
    metrics.push_back({{"metric", m.metric}, {"youden_j", m.youden_j}, {"updated", m.updated}});
  }
  json body = {{"config", to_json(result.config)},
               {"previous", to_json(config_)},
               {"metrics", std::move(metrics)},
               {"saved_to", saved.filename().string()}};
  config_ = result.config;
  return {200, std::move(body)};
}

ReviewState::ImageLookup ReviewState::image_path(std::string_view session_id, std::int64_t frame_index,
                                                 std::string_view variant) const {
  if (unsafe_component(session_id)) return {403, {}};
  if (variant != "original" && variant != "deid") return {404, {}};
  const auto* frame = find_frame(session_id, frame_index);
  if (!frame) return {404, {}};
  const std::string& relative = variant == "original" ? frame->original_image : frame->deid_image;

  std::error_code ec;
  const auto root = std::filesystem::weakly_canonical(options_.images_root, ec);
  if (ec) return {404, {}};
  const auto resolved = std::filesystem::weakly_canonical(options_.images_root / relative, ec);
  if (ec) return {404, {}};
  if (!path_within(root, resolved)) return {403, {}};
  if (!std::filesystem::is_regular_file(resolved, ec)) return {404, {}};
  return {200, resolved};
}

std::map<std::pair<std::string, std::int64_t>, VerdictValue> ReviewState::statuses() const {
  std::shared_lock lock(mutex_);
  return status_;
}

const ThresholdConfig& ReviewState::current_config() const {
  std::shared_lock lock(mutex_);
  return config_;
}

// ---------------------------------------------------------------------------

std::pair<std::string, int> parse_bind_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw AuditError(ErrorCode::BindError, "bind address must be HOST:PORT");
  }
  const auto port_text = address.substr(colon + 1);
  int port = -1;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
    throw AuditError(ErrorCode::BindError, "invalid port \"" + std::string(port_text) + "\"");
  }
  return {std::string(address.substr(0, colon)), port};
}

struct ReviewServer::Impl {
  ReviewState& state;
  ServerOptions options;
  httplib::Server server;

  static void send(httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  Impl(ReviewState& s, ServerOptions o) : state(s), options(std::move(o)) {
    // httplib also sets SO_REUSEPORT, which would let two services share a port.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", options.cors_origin);
      if (req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
      if (options.bearer_token && req.path.rfind("/api/", 0) == 0 &&
          req.get_header_value("Authorization") != "Bearer " + *options.bearer_token) {
        send(res, error_response(401, "missing or invalid bearer token"));
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server.Options(R"(/api/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
      res.status = 204;
    });

    server.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, state.queue(req.get_param_value("status")));
    });
    server.Get(R"(/api/frames/([^/]+)/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::int64_t index = 0;
      const auto& text = req.matches[2].str();
      if (std::from_chars(text.data(), text.data() + text.size(), index).ec != std::errc{}) {
        send(res, error_response(404, "unknown frame"));
        return;
      }
      send(res, state.frame_detail(req.matches[1].str(), index));
    });
    // Session ids are matched loosely so traversal attempts reach the guard.
    server.Get(R"(/api/images/(.+)/(\d+)/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::int64_t index = 0;
      const auto& text = req.matches[2].str();
      if (std::from_chars(text.data(), text.data() + text.size(), index).ec != std::errc{}) {
        send(res, error_response(404, "unknown frame"));
        return;
      }
      const auto lookup = state.image_path(req.matches[1].str(), index, req.matches[3].str());
      if (lookup.status != 200) {
        send(res, error_response(lookup.status, lookup.status == 403 ? "forbidden" : "not found"));
        return;
      }
      try {
        res.set_content(read_text_file(lookup.path), "image/png");
      } catch (const AuditError&) {
        send(res, error_response(404, "not found"));
      }
    });
    server.Post("/api/verdicts", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, state.record_verdict(req.body));
    });
    server.Post("/api/calibrate", [this](const httplib::Request&, httplib::Response& res) {
      send(res, state.calibrate());
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string message = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        message = e.what();
      } catch (...) {
      }
      send(res, error_response(500, message));
    });
    if (options.ui_dir) server.set_mount_point("/", options.ui_dir->string());
  }
};

ReviewServer::ReviewServer(ReviewState& state, ServerOptions options)
    : impl_(std::make_unique<Impl>(state, std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(const std::string& host, int port) {
  if (port < 0 || port > 65535) throw AuditError(ErrorCode::BindError, "port out of range");
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw AuditError(ErrorCode::BindError, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw AuditError(ErrorCode::BindError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewServer::run() { impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace deid
