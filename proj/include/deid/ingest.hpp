#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace deid {

using Warnings = std::vector<std::string>;

enum class Gender { M, F };
enum class Glasses { none, clear, photochromic, dark };

std::string_view to_string(Gender g) noexcept;
std::string_view to_string(Glasses g) noexcept;
std::optional<Gender> parse_gender(std::string_view text) noexcept;
std::optional<Glasses> parse_glasses(std::string_view text) noexcept;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline constexpr std::size_t kLandmarkCount = 68;

// DLIB 68-point layout. Stored 0-based; every file and message uses the
// 1-based point numbers.
using Landmarks = std::array<Point2, kLandmarkCount>;

struct HeadPose {
  double roll = 0.0;   // tilt
  double pitch = 0.0;  // up/down
  double yaw = 0.0;    // left/right
  friend bool operator==(const HeadPose&, const HeadPose&) = default;
};

struct FrameEntry {
  std::int64_t frame_index = 0;
  std::string original_image;
  std::string deid_image;
  std::optional<Landmarks> original_landmarks;
  std::optional<Landmarks> deid_landmarks;
  std::optional<HeadPose> original_pose;
  std::optional<HeadPose> deid_pose;
  friend bool operator==(const FrameEntry&, const FrameEntry&) = default;
};

struct SessionManifest {
  std::string session_id;
  Gender target_gender = Gender::F;
  Gender imposter_gender = Gender::F;
  Glasses glasses = Glasses::none;
  std::vector<FrameEntry> frames;
  std::optional<std::string> original_landmarks;
  std::optional<std::string> deid_landmarks;
  std::optional<std::string> original_pose;
  std::optional<std::string> deid_pose;
  // Directory that relative paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }

  // Structural equality; base_dir is a load-time detail and is ignored.
  friend bool operator==(const SessionManifest& a, const SessionManifest& b) {
    return a.session_id == b.session_id && a.target_gender == b.target_gender &&
           a.imposter_gender == b.imposter_gender && a.glasses == b.glasses && a.frames == b.frames &&
           a.original_landmarks == b.original_landmarks && a.deid_landmarks == b.deid_landmarks &&
           a.original_pose == b.original_pose && a.deid_pose == b.deid_pose;
  }
};

struct LandmarkTable {
  std::map<std::int64_t, Landmarks> frames;
  std::vector<std::int64_t> gaps;  // indices in [0, frame_count) with no rows
};

struct PoseTable {
  std::map<std::int64_t, HeadPose> frames;
  std::vector<std::int64_t> gaps;
  Warnings warnings;
};

std::vector<SessionManifest> parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir);
std::vector<SessionManifest> load_manifest(const std::filesystem::path& path);

// Annotation paths are serialized as written; landmark and pose values are
// not part of the manifest document.
nlohmann::json manifest_to_json(const std::vector<SessionManifest>& sessions);
void save_manifest(const std::vector<SessionManifest>& sessions, const std::filesystem::path& path);

LandmarkTable parse_landmarks(std::string_view csv, std::int64_t frame_count);
LandmarkTable load_landmarks(const std::filesystem::path& path, std::int64_t frame_count);

PoseTable parse_poses(std::string_view csv, std::int64_t frame_count);
PoseTable load_poses(const std::filesystem::path& path, std::int64_t frame_count);

// Reads the session's annotation CSVs (when referenced) into its frames.
// Frames absent from a file keep an empty optional.
void attach_annotations(SessionManifest& session, Warnings& warnings);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace deid
