#include "deid/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "deid/error.hpp"

namespace deid {

using nlohmann::json;

double GaussianSource::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double GaussianSource::normal(double sigma) {
  if (has_spare_) {
    has_spare_ = false;
    return spare_ * sigma;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle) * sigma;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw AuditError(ErrorCode::InvalidArgument, "synth spec: " + what); };
  if (session_id.empty()) fail("empty session_id");
  if (session_id.find_first_of("/\\") != std::string::npos || session_id == "." || session_id == "..") {
    fail("session_id must be usable as a directory name");
  }
  if (frame_count < 1) fail("frame_count must be positive");
  if (width < 8 || height < 8) fail("images must be at least 8x8");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (!(face_scale > 0.0) || !(face_scale <= 20.0)) fail("face_scale must be in (0, 20]");
  if (!(noise_sigma >= 0.0) || !(landmark_jitter >= 0.0) || !(pose_jitter >= 0.0)) {
    fail("noise and jitter must be non-negative");
  }
  auto in_range = [&](std::int64_t f) { return f >= 0 && f < frame_count; };
  for (const auto* set : {&blink_frames, &yawn_frames, &landmark_gaps, &pose_gaps}) {
    for (auto f : *set) {
      if (!in_range(f)) fail("frame " + std::to_string(f) + " outside [0, frame_count)");
    }
  }
  for (const auto& [f, magnitude] : spike_frames) {
    if (!in_range(f)) fail("spike frame " + std::to_string(f) + " outside [0, frame_count)");
    if (!(magnitude >= 0.0)) fail("spike magnitude must be non-negative");
  }
}

SynthSpec synth_spec_from_json(const json& doc) {
  if (!doc.is_object()) throw AuditError(ErrorCode::InvalidArgument, "synth spec must be an object");
  SynthSpec spec;
  try {
    spec.session_id = doc.value("session_id", spec.session_id);
    spec.seed = doc.value("seed", spec.seed);
    spec.frame_count = doc.value("frame_count", spec.frame_count);
    spec.blink_frames = doc.value("blink_frames", spec.blink_frames);
    spec.yawn_frames = doc.value("yawn_frames", spec.yawn_frames);
    if (auto it = doc.find("spike_frames"); it != doc.end()) {
      for (const auto& [key, magnitude] : it->items()) {
        spec.spike_frames[std::stoll(key)] = magnitude.get<double>();
      }
    }
    spec.noise_sigma = doc.value("noise_sigma", spec.noise_sigma);
    spec.width = doc.value("width", spec.width);
    spec.height = doc.value("height", spec.height);
    spec.channels = doc.value("channels", spec.channels);
    auto target = parse_gender(doc.value("target_gender", std::string(to_string(spec.target_gender))));
    auto imposter = parse_gender(doc.value("imposter_gender", std::string(to_string(spec.imposter_gender))));
    auto glasses = parse_glasses(doc.value("glasses", std::string(to_string(spec.glasses))));
    if (!target || !imposter || !glasses) {
      throw AuditError(ErrorCode::InvalidArgument, "synth spec: bad gender or glasses value");
    }
    spec.target_gender = *target;
    spec.imposter_gender = *imposter;
    spec.glasses = *glasses;
    spec.landmark_jitter = doc.value("landmark_jitter", spec.landmark_jitter);
    spec.face_scale = doc.value("face_scale", spec.face_scale);
    spec.pose_jitter = doc.value("pose_jitter", spec.pose_jitter);
    spec.duplicate_annotations = doc.value("duplicate_annotations", spec.duplicate_annotations);
    spec.landmark_gaps = doc.value("landmark_gaps", spec.landmark_gaps);
    spec.pose_gaps = doc.value("pose_gaps", spec.pose_gaps);
  } catch (const json::exception& e) {
    throw AuditError(ErrorCode::InvalidArgument, std::string("synth spec: ") + e.what());
  } catch (const std::logic_error& e) {
    throw AuditError(ErrorCode::InvalidArgument, std::string("synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::vector<SynthSpec> synth_specs_from_json(const json& doc) {
  std::vector<SynthSpec> specs;
  if (doc.is_object() && doc.contains("sessions")) {
    const auto& sessions = doc.at("sessions");
    if (!sessions.is_array()) throw AuditError(ErrorCode::InvalidArgument, "\"sessions\" must be an array");
    for (const auto& s : sessions) specs.push_back(synth_spec_from_json(s));
  } else {
    specs.push_back(synth_spec_from_json(doc));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (specs[i].session_id == specs[j].session_id) {
        throw AuditError(ErrorCode::DuplicateSession, "synth session \"" + specs[i].session_id + "\" repeated");
      }
    }
  }
  return specs;
}

Landmarks synth_landmarks(double ear, double lar, double roll_deg, double scale, Point2 center) {
  // Canonical face in a 100-unit box centred on the origin, y down.
  Landmarks pts{};
  auto set = [&](int point, double x, double y) { pts[static_cast<std::size_t>(point - 1)] = {x, y}; };

  for (int i = 0; i < 17; ++i) {
    const double theta = std::numbers::pi - i * std::numbers::pi / 16.0;
    set(1 + i, 40.0 * std::cos(theta), 5.0 + 40.0 * std::sin(theta));
  }
  for (int i = 0; i < 5; ++i) {
    const double x = -30.0 + i * 5.5;
    set(18 + i, x, -24.0 + 0.05 * (x + 19.0) * (x + 19.0));
    set(27 - i, -x, -24.0 + 0.05 * (x + 19.0) * (x + 19.0));
  }
  for (int i = 0; i < 4; ++i) set(28 + i, 0.0, -15.0 + 5.0 * i);
  for (int i = 0; i < 5; ++i) set(32 + i, -8.0 + 4.0 * i, 5.0);

  // Eyes: width 14, vertical half-opening chosen so EAR = 2h / 14.
  constexpr double half_width = 7.0;
  const double h = ear * half_width;
  for (const auto& [first, cx] : {std::pair{37, -18.0}, std::pair{43, 18.0}}) {
    constexpr double cy = -12.0;
    set(first + 0, cx - half_width, cy);
    set(first + 1, cx - half_width / 3.0, cy - h);
    set(first + 2, cx + half_width / 3.0, cy - h);
    set(first + 3, cx + half_width, cy);
    set(first + 4, cx + half_width / 3.0, cy + h);
    set(first + 5, cx - half_width / 3.0, cy + h);
  }

  // Outer lips: corners 28 apart, |52-58| = lar * 28.
  constexpr double my = 25.0;
  const double a = lar * 14.0;
  set(49, -14.0, my);
  set(50, -9.0, my - 0.7 * a);
  set(51, -4.0, my - a);
  set(52, 0.0, my - a);
  set(53, 4.0, my - a);
  set(54, 9.0, my - 0.7 * a);
  set(55, 14.0, my);
  set(56, 9.0, my + 0.7 * a);
  set(57, 4.0, my + a);
  set(58, 0.0, my + a);
  set(59, -4.0, my + a);
  set(60, -9.0, my + 0.7 * a);
  set(61, -10.0, my);
  set(62, -3.0, my - 0.6 * a);
  set(63, 0.0, my - 0.6 * a);
  set(64, 3.0, my - 0.6 * a);
  set(65, 10.0, my);
  set(66, 3.0, my + 0.6 * a);
  set(67, 0.0, my + 0.6 * a);
  set(68, -3.0, my + 0.6 * a);

  const double rad = roll_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  for (auto& p : pts) {
    p = {center.x + scale * (c * p.x - s * p.y), center.y + scale * (s * p.x + c * p.y)};
  }
  return pts;
}

SynthFrameTargets synth_targets(const SynthSpec& spec, std::int64_t frame) {
  const double f = static_cast<double>(frame);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  SynthFrameTargets t;
  t.ear = spec.blink_frames.contains(frame) ? kBlinkEar : kOpenEyeEar + 0.01 * std::sin(0.7 * f);
  t.lar = spec.yawn_frames.contains(frame) ? kYawnLar : kRestingLar + 0.02 * std::sin(0.3 * f);
  t.pose.roll = 5.0 * std::sin(two_pi * f / 50.0);
  t.pose.pitch = 8.0 * std::sin(two_pi * f / 37.0 + 1.0);
  t.pose.yaw = 30.0 * std::sin(two_pi * f / 80.0);
  return t;
}

Image synth_base_image(int width, int height, int channels, std::int64_t frame) {
  Image img(width, height, channels);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double phase = 0.5 * static_cast<double>(frame);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = 128.0 +
                         60.0 * std::sin(two_pi * (x + phase) / 9.0 + c) * std::cos(two_pi * y / 7.0 + 0.5 * c) +
                         20.0 * std::sin(two_pi * (x + y) / 23.0);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

std::pair<Image, Image> generate_noisy_pair(const Image& base, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) {
    throw AuditError(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  }
  validate(base);
  Image noisy = base;
  if (sigma > 0.0) {
    GaussianSource noise(seed);
    for (auto& sample : noisy.pixels) {
      const double v = static_cast<double>(sample) + noise.normal(sigma);
      sample = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return {base, std::move(noisy)};
}

namespace {

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError(ErrorCode::IoError, "cannot write " + path.string());
  out << content;
  if (!out) throw AuditError(ErrorCode::IoError, "short write to " + path.string());
}

enum Stream : std::uint64_t { kImageNoise = 1, kLandmarkJitter = 2, kPoseJitter = 3 };

SessionManifest write_session_files(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const std::filesystem::path session_dir = out_dir / spec.session_id;
  std::error_code ec;
  std::filesystem::create_directories(session_dir, ec);
  if (ec) throw AuditError(ErrorCode::IoError, "cannot create " + session_dir.string() + ": " + ec.message());

  SessionManifest manifest;
  manifest.session_id = spec.session_id;
  manifest.target_gender = spec.target_gender;
  manifest.imposter_gender = spec.imposter_gender;
  manifest.glasses = spec.glasses;
  manifest.base_dir = out_dir;
  manifest.original_landmarks = spec.session_id + "/original_landmarks.csv";
  manifest.deid_landmarks = spec.session_id + "/deid_landmarks.csv";
  manifest.original_pose = spec.session_id + "/original_pose.csv";
  manifest.deid_pose = spec.session_id + "/deid_pose.csv";

  std::string orig_lm = "frame_index,point,x,y\n";
  std::string deid_lm = orig_lm;
  std::string orig_pose = "frame_index,roll,pitch,yaw\n";
  std::string deid_pose = orig_pose;

  // Landmarks live in a nominal 640x480 camera frame, independent of the
  // small fixture images.
  const Point2 center{320.0, 240.0};
  const double scale = spec.face_scale;

  for (std::int64_t f = 0; f < spec.frame_count; ++f) {
    const auto frame = static_cast<std::uint64_t>(f);
    char name[32];
    std::snprintf(name, sizeof(name), "%05lld", static_cast<long long>(f));
    FrameEntry entry;
    entry.frame_index = f;
    entry.original_image = spec.session_id + "/original_" + name + ".png";
    entry.deid_image = spec.session_id + "/deid_" + name + ".png";

    double sigma = spec.noise_sigma;
    if (auto it = spec.spike_frames.find(f); it != spec.spike_frames.end()) sigma *= it->second;
    auto [orig_img, deid_img] = generate_noisy_pair(synth_base_image(spec.width, spec.height, spec.channels, f),
                                                    sigma, derive_seed(spec.seed, kImageNoise, frame));
    save_png(orig_img, out_dir / entry.original_image);
    save_png(deid_img, out_dir / entry.deid_image);

    const auto targets = synth_targets(spec, f);
    if (!spec.landmark_gaps.contains(f)) {
      const Point2 shifted{center.x + 0.05 * targets.pose.yaw * scale, center.y};
      const Landmarks orig = synth_landmarks(targets.ear, targets.lar, targets.pose.roll, scale, shifted);
      Landmarks deid = orig;
      if (!spec.duplicate_annotations) {
        GaussianSource jitter(derive_seed(spec.seed, kLandmarkJitter, frame));
        for (auto& p : deid) {
          p.x += jitter.normal(spec.landmark_jitter);
          p.y += jitter.normal(spec.landmark_jitter);
        }
      }
      for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const std::string prefix = std::to_string(f) + "," + std::to_string(i + 1) + ",";
        orig_lm += prefix + format_real(orig[i].x) + "," + format_real(orig[i].y) + "\n";
        deid_lm += prefix + format_real(deid[i].x) + "," + format_real(deid[i].y) + "\n";
      }
    }
    if (!spec.pose_gaps.contains(f)) {
      HeadPose deid = targets.pose;
      if (!spec.duplicate_annotations) {
        GaussianSource jitter(derive_seed(spec.seed, kPoseJitter, frame));
        deid.roll += jitter.normal(spec.pose_jitter);
        deid.pitch += jitter.normal(spec.pose_jitter);
        deid.yaw += jitter.normal(spec.pose_jitter);
      }
      auto row = [&](const HeadPose& p) {
        return std::to_string(f) + "," + format_real(p.roll) + "," + format_real(p.pitch) + "," +
               format_real(p.yaw) + "\n";
      };
      orig_pose += row(targets.pose);
      deid_pose += row(deid);
    }
    manifest.frames.push_back(std::move(entry));
  }

  write_file(out_dir / *manifest.original_landmarks, orig_lm);
  write_file(out_dir / *manifest.deid_landmarks, deid_lm);
  write_file(out_dir / *manifest.original_pose, orig_pose);
  write_file(out_dir / *manifest.deid_pose, deid_pose);
  return manifest;
}

}  // namespace

SessionManifest generate_session(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  return generate_dataset({spec}, out_dir).front();
}

std::vector<SessionManifest> generate_dataset(const std::vector<SynthSpec>& specs,
                                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw AuditError(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<SessionManifest> sessions;
  for (const auto& spec : specs) sessions.push_back(write_session_files(spec, out_dir));
  save_manifest(sessions, out_dir / "manifest.json");
  return sessions;
}

}  // namespace deid
