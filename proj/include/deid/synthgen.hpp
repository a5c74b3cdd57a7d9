#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deid/image.hpp"
#include "deid/ingest.hpp"

namespace deid {

// Deterministic normal sampler (Box-Muller over mt19937_64) so fixtures are
// identical across standard libraries.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double normal(double sigma);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable per-purpose seed derived from a base seed (SplitMix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

struct SynthSpec {
  std::string session_id = "synth";
  std::uint64_t seed = 1;
  std::int64_t frame_count = 40;
  std::set<std::int64_t> blink_frames;
  std::set<std::int64_t> yawn_frames;
  // frame -> multiplier applied to noise_sigma for that frame's de-identified image
  std::map<std::int64_t, double> spike_frames;
  double noise_sigma = 2.0;
  int width = 48;
  int height = 48;
  int channels = 3;
  Gender target_gender = Gender::F;
  Gender imposter_gender = Gender::M;
  Glasses glasses = Glasses::none;
  double face_scale = 4.0;       // canonical face units -> pixels
  double landmark_jitter = 0.1;  // pixels, de-identified landmarks vs original
  double pose_jitter = 1.0;      // degrees
  bool duplicate_annotations = false;
  std::set<std::int64_t> landmark_gaps;  // frames omitted from both landmark files
  std::set<std::int64_t> pose_gaps;      // frames omitted from both pose files

  // Throws InvalidArgument.
  void validate() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& doc);
// Accepts a single spec object or {"sessions": [spec, ...]}.
std::vector<SynthSpec> synth_specs_from_json(const nlohmann::json& doc);

inline constexpr double kOpenEyeEar = 0.3;
inline constexpr double kBlinkEar = 0.05;
inline constexpr double kRestingLar = 0.25;
inline constexpr double kYawnLar = 0.7;

// A 68-point face whose eyes have exactly `ear` and whose outer lips have
// exactly `lar`, rotated by roll_deg, scaled and translated.
Landmarks synth_landmarks(double ear, double lar, double roll_deg, double scale, Point2 center);

struct SynthFrameTargets {
  double ear = kOpenEyeEar;
  double lar = kRestingLar;
  HeadPose pose;
};

SynthFrameTargets synth_targets(const SynthSpec& spec, std::int64_t frame);

// Textured base frame; nearby frames differ by a small phase shift.
Image synth_base_image(int width, int height, int channels, std::int64_t frame);

// Returns (base, base + clamped Gaussian noise). Throws InvalidArgument for
// negative sigma.
std::pair<Image, Image> generate_noisy_pair(const Image& base, double sigma, std::uint64_t seed);

// Writes the session's images and annotation CSVs under out_dir/<session_id>
// plus out_dir/manifest.json. Paths in the manifest are relative to out_dir.
SessionManifest generate_session(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Multi-session variant writing one combined manifest.
std::vector<SessionManifest> generate_dataset(const std::vector<SynthSpec>& specs,
                                              const std::filesystem::path& out_dir);

}  // namespace deid
