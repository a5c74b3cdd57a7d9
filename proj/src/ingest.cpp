#include "deid/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deid/error.hpp"

namespace deid {

using nlohmann::json;

std::string_view to_string(Gender g) noexcept { return g == Gender::M ? "M" : "F"; }

std::string_view to_string(Glasses g) noexcept {
  switch (g) {
    case Glasses::none: return "none";
    case Glasses::clear: return "clear";
    case Glasses::photochromic: return "photochromic";
    case Glasses::dark: return "dark";
  }
  return "none";
}

std::optional<Gender> parse_gender(std::string_view text) noexcept {
  if (text == "M") return Gender::M;
  if (text == "F") return Gender::F;
  return std::nullopt;
}

std::optional<Glasses> parse_glasses(std::string_view text) noexcept {
  if (text == "none") return Glasses::none;
  if (text == "clear") return Glasses::clear;
  if (text == "photochromic") return Glasses::photochromic;
  if (text == "dark") return Glasses::dark;
  return std::nullopt;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw AuditError(ErrorCode::IoError, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

namespace {

[[noreturn]] void malformed(const std::string& what) { throw AuditError(ErrorCode::MalformedManifest, what); }

const std::set<std::string, std::less<>> kSessionKeys = {
    "session_id",         "target_gender",  "imposter_gender", "glasses",  "frames",
    "original_landmarks", "deid_landmarks", "original_pose",   "deid_pose"};
const std::set<std::string, std::less<>> kFrameKeys = {"frame_index", "original_image", "deid_image"};

std::string required_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where + ": missing \"" + key + "\"");
  if (!it->is_string()) malformed(where + ": \"" + key + "\" must be a string");
  return it->get<std::string>();
}

std::string checked_path(const json& obj, const char* key, const std::string& where) {
  auto value = required_string(obj, key, where);
  if (value.empty() || value.find('\0') != std::string::npos) {
    malformed(where + ": \"" + key + "\" is not a valid path");
  }
  return value;
}

std::optional<std::string> optional_path(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return checked_path(obj, key, where);
}

FrameEntry parse_frame(const json& obj, const std::string& where) {
  if (!obj.is_object()) malformed(where + ": frame must be an object");
  for (const auto& item : obj.items()) {
    if (!kFrameKeys.contains(item.key())) malformed(where + ": unknown key \"" + item.key() + "\"");
  }
  FrameEntry frame;
  auto it = obj.find("frame_index");
  if (it == obj.end()) malformed(where + ": missing \"frame_index\"");
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    malformed(where + ": \"frame_index\" must be a non-negative integer");
  }
  frame.frame_index = it->get<std::int64_t>();
  frame.original_image = checked_path(obj, "original_image", where);
  frame.deid_image = checked_path(obj, "deid_image", where);
  return frame;
}

SessionManifest parse_session(const json& obj, std::size_t position, const std::filesystem::path& base_dir) {
  std::string where = "sessions[" + std::to_string(position) + "]";
  if (!obj.is_object()) malformed(where + ": session must be an object");
  for (const auto& item : obj.items()) {
    if (!kSessionKeys.contains(item.key())) malformed(where + ": unknown key \"" + item.key() + "\"");
  }

  SessionManifest session;
  session.base_dir = base_dir;
  session.session_id = required_string(obj, "session_id", where);
  if (session.session_id.empty()) malformed(where + ": empty session_id");
  where = "session " + session.session_id;

  auto target = parse_gender(required_string(obj, "target_gender", where));
  auto imposter = parse_gender(required_string(obj, "imposter_gender", where));
  if (!target || !imposter) malformed(where + ": genders must be \"M\" or \"F\"");
  session.target_gender = *target;
  session.imposter_gender = *imposter;

  auto glasses = parse_glasses(required_string(obj, "glasses", where));
  if (!glasses) malformed(where + ": glasses must be none, clear, photochromic or dark");
  session.glasses = *glasses;

  auto frames = obj.find("frames");
  if (frames == obj.end() || !frames->is_array()) malformed(where + ": \"frames\" must be an array");
  session.frames.reserve(frames->size());
  for (std::size_t i = 0; i < frames->size(); ++i) {
    auto frame = parse_frame((*frames)[i], where + " frames[" + std::to_string(i) + "]");
    if (!session.frames.empty() && frame.frame_index <= session.frames.back().frame_index) {
      throw AuditError(ErrorCode::NonMonotonicFrames,
                       where + ": frame_index " + std::to_string(frame.frame_index) + " follows " +
                           std::to_string(session.frames.back().frame_index));
    }
    session.frames.push_back(std::move(frame));
  }

  session.original_landmarks = optional_path(obj, "original_landmarks", where);
  session.deid_landmarks = optional_path(obj, "deid_landmarks", where);
  session.original_pose = optional_path(obj, "original_pose", where);
  session.deid_pose = optional_path(obj, "deid_pose", where);
  return session;
}

// Minimal CSV support: comma-separated numeric fields, one header line.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string_view> fields;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<CsvRow> split_csv(std::string_view text, std::string_view expected_header) {
  std::vector<CsvRow> rows;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto end = text.find('\n');
    auto line = trim(text.substr(0, end));
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != expected_header) {
        throw AuditError(ErrorCode::MalformedCsv, "expected header \"" + std::string(expected_header) + "\"");
      }
      header_seen = true;
      continue;
    }
    CsvRow row{line_no, {}};
    while (true) {
      auto comma = line.find(',');
      row.fields.push_back(trim(line.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) {
    throw AuditError(ErrorCode::MalformedCsv, "missing header \"" + std::string(expected_header) + "\"");
  }
  return rows;
}

std::int64_t parse_index(std::string_view field, std::size_t line) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || value < 0) {
    throw AuditError(ErrorCode::MalformedCsv,
                     "line " + std::to_string(line) + ": bad integer \"" + std::string(field) + "\"");
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line) {
  // from_chars does not accept a leading '+'.
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec == std::errc::result_out_of_range) {
    throw AuditError(ErrorCode::NonFiniteCoordinate, "line " + std::to_string(line) + ": value out of range");
  }
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw AuditError(ErrorCode::MalformedCsv,
                     "line " + std::to_string(line) + ": bad number \"" + std::string(field) + "\"");
  }
  if (!std::isfinite(value)) {
    throw AuditError(ErrorCode::NonFiniteCoordinate, "line " + std::to_string(line) + ": non-finite value");
  }
  return value;
}

template <typename Map>
std::vector<std::int64_t> gaps_of(const Map& frames, std::int64_t frame_count) {
  std::vector<std::int64_t> gaps;
  for (std::int64_t i = 0; i < frame_count; ++i) {
    if (!frames.contains(i)) gaps.push_back(i);
  }
  return gaps;
}

}  // namespace

std::vector<SessionManifest> parse_manifest(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) malformed("top level must be an object");
  auto sessions = doc.find("sessions");
  if (sessions == doc.end() || !sessions->is_array()) malformed("missing \"sessions\" array");

  std::vector<SessionManifest> out;
  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 0; i < sessions->size(); ++i) {
    auto session = parse_session((*sessions)[i], i, base_dir);
    if (!seen.insert(session.session_id).second) {
      throw AuditError(ErrorCode::DuplicateSession, "session_id \"" + session.session_id + "\" appears twice");
    }
    out.push_back(std::move(session));
  }
  return out;
}

std::vector<SessionManifest> load_manifest(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

json manifest_to_json(const std::vector<SessionManifest>& sessions) {
  json out_sessions = json::array();
  for (const auto& s : sessions) {
    json frames = json::array();
    for (const auto& f : s.frames) {
      frames.push_back(
          {{"frame_index", f.frame_index}, {"original_image", f.original_image}, {"deid_image", f.deid_image}});
    }
    json obj = {{"session_id", s.session_id},
                {"target_gender", to_string(s.target_gender)},
                {"imposter_gender", to_string(s.imposter_gender)},
                {"glasses", to_string(s.glasses)},
                {"frames", std::move(frames)}};
    if (s.original_landmarks) obj["original_landmarks"] = *s.original_landmarks;
    if (s.deid_landmarks) obj["deid_landmarks"] = *s.deid_landmarks;
    if (s.original_pose) obj["original_pose"] = *s.original_pose;
    if (s.deid_pose) obj["deid_pose"] = *s.deid_pose;
    out_sessions.push_back(std::move(obj));
  }
  return json{{"sessions", std::move(out_sessions)}};
}

void save_manifest(const std::vector<SessionManifest>& sessions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw AuditError(ErrorCode::IoError, "cannot write " + path.string());
  }
  out << manifest_to_json(sessions).dump(2) << '\n';
}

LandmarkTable parse_landmarks(std::string_view csv, std::int64_t frame_count) {
  struct Partial {
    Landmarks points{};
    std::array<bool, kLandmarkCount> seen{};
    std::size_t count = 0;
  };
  std::map<std::int64_t, Partial> partial;

  for (const auto& row : split_csv(csv, "frame_index,point,x,y")) {
    if (row.fields.size() != 4) {
      throw AuditError(ErrorCode::MalformedCsv, "line " + std::to_string(row.line) + ": expected 4 fields");
    }
    const auto frame = parse_index(row.fields[0], row.line);
    const auto point = parse_index(row.fields[1], row.line);
    if (point < 1 || point > static_cast<std::int64_t>(kLandmarkCount)) {
      throw AuditError(ErrorCode::WrongPointCount, "line " + std::to_string(row.line) + ": point " +
                                                       std::to_string(point) + " outside 1..68");
    }
    const double x = parse_real(row.fields[2], row.line);
    const double y = parse_real(row.fields[3], row.line);
    auto& p = partial[frame];
    const auto slot = static_cast<std::size_t>(point - 1);
    if (p.seen[slot]) {
      throw AuditError(ErrorCode::WrongPointCount, "frame " + std::to_string(frame) + ": point " +
                                                       std::to_string(point) + " listed twice");
    }
    p.seen[slot] = true;
    p.points[slot] = {x, y};
    ++p.count;
  }

  LandmarkTable table;
  for (auto& [frame, p] : partial) {
    if (p.count != kLandmarkCount) {
      throw AuditError(ErrorCode::WrongPointCount,
                       "frame " + std::to_string(frame) + " has " + std::to_string(p.count) + " points, expected 68");
    }
    table.frames.emplace(frame, p.points);
  }
  table.gaps = gaps_of(table.frames, frame_count);
  return table;
}

LandmarkTable load_landmarks(const std::filesystem::path& path, std::int64_t frame_count) {
  try {
    return parse_landmarks(read_text_file(path), frame_count);
  } catch (const AuditError& e) {
    throw AuditError(e.code(), path.string() + ": " + e.what());
  }
}

PoseTable parse_poses(std::string_view csv, std::int64_t frame_count) {
  PoseTable table;
  for (const auto& row : split_csv(csv, "frame_index,roll,pitch,yaw")) {
    if (row.fields.size() != 4) {
      throw AuditError(ErrorCode::MalformedCsv, "line " + std::to_string(row.line) + ": expected 4 fields");
    }
    const auto frame = parse_index(row.fields[0], row.line);
    HeadPose pose{parse_real(row.fields[1], row.line), parse_real(row.fields[2], row.line),
                  parse_real(row.fields[3], row.line)};
    if (!table.frames.emplace(frame, pose).second) {
      throw AuditError(ErrorCode::MalformedCsv, "frame " + std::to_string(frame) + " listed twice");
    }
    for (double angle : {pose.roll, pose.pitch, pose.yaw}) {
      if (angle < -180.0 || angle > 180.0) {
        table.warnings.push_back("implausible pose angle " + std::to_string(angle) + " at frame " +
                                 std::to_string(frame));
        break;
      }
    }
  }
  table.gaps = gaps_of(table.frames, frame_count);
  return table;
}

PoseTable load_poses(const std::filesystem::path& path, std::int64_t frame_count) {
  try {
    return parse_poses(read_text_file(path), frame_count);
  } catch (const AuditError& e) {
    throw AuditError(e.code(), path.string() + ": " + e.what());
  }
}

void attach_annotations(SessionManifest& session, Warnings& warnings) {
  const std::int64_t frame_count = session.frames.empty() ? 0 : session.frames.back().frame_index + 1;

  auto attach_landmarks = [&](const std::optional<std::string>& file, auto member) {
    if (!file) return;
    auto table = load_landmarks(session.resolve(*file), frame_count);
    for (auto& frame : session.frames) {
      if (auto it = table.frames.find(frame.frame_index); it != table.frames.end()) {
        frame.*member = it->second;
      }
    }
  };
  auto attach_pose = [&](const std::optional<std::string>& file, auto member) {
    if (!file) return;
    auto table = load_poses(session.resolve(*file), frame_count);
    for (auto& w : table.warnings) warnings.push_back(session.session_id + ": " + w);
    for (auto& frame : session.frames) {
      if (auto it = table.frames.find(frame.frame_index); it != table.frames.end()) {
        frame.*member = it->second;
      }
    }
  };

  attach_landmarks(session.original_landmarks, &FrameEntry::original_landmarks);
  attach_landmarks(session.deid_landmarks, &FrameEntry::deid_landmarks);
  attach_pose(session.original_pose, &FrameEntry::original_pose);
  attach_pose(session.deid_pose, &FrameEntry::deid_pose);
}

}  // namespace deid
