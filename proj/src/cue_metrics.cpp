#include "deid/cue_metrics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "deid/error.hpp"

namespace deid {

namespace {

template <std::size_t N>
void require_finite(const std::array<Point2, N>& points) {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw AuditError(ErrorCode::NonFiniteCoordinate, "landmark coordinate is not finite");
    }
  }
}

EyeLandmarks eye_from(const Landmarks& landmarks, std::size_t first_point) {
  EyeLandmarks eye;
  for (std::size_t i = 0; i < eye.p.size(); ++i) {
    eye.p[i] = landmarks[first_point - 1 + i];
  }
  return eye;
}

std::optional<double> abs_diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return std::abs(*a - *b);
}

}  // namespace

EyeLandmarks left_eye(const Landmarks& landmarks) { return eye_from(landmarks, 37); }
EyeLandmarks right_eye(const Landmarks& landmarks) { return eye_from(landmarks, 43); }

LipLandmarks outer_lips(const Landmarks& landmarks) {
  static constexpr std::array<std::size_t, 8> kPoints = {49, 51, 52, 53, 55, 57, 58, 59};
  LipLandmarks lips;
  for (std::size_t i = 0; i < kPoints.size(); ++i) {
    lips.l[i] = landmarks[kPoints[i] - 1];
  }
  return lips;
}

double distance(const Point2& a, const Point2& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

double eye_aspect_ratio(const EyeLandmarks& eye) {
  require_finite(eye.p);
  const auto& p = eye.p;
  const double horizontal = distance(p[0], p[3]);
  if (horizontal == 0.0) {
    throw AuditError(ErrorCode::DegenerateEye, "eye corners P1 and P4 coincide");
  }
  return (distance(p[1], p[5]) + distance(p[2], p[4])) / (2.0 * horizontal);
}

double pupil_circularity(const EyeLandmarks& eye) {
  require_finite(eye.p);
  const auto& p = eye.p;
  double perimeter = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    perimeter += distance(p[i], p[(i + 1) % p.size()]);
  }
  if (perimeter == 0.0) {
    throw AuditError(ErrorCode::DegeneratePerimeter, "eye contour has zero perimeter");
  }
  const double radius = distance(p[1], p[4]) / 2.0;
  const double area = radius * radius * std::numbers::pi;
  return 4.0 * std::numbers::pi * area / (perimeter * perimeter);
}

double lip_aspect_ratio(const LipLandmarks& lips) {
  require_finite(lips.l);
  const auto& l = lips.l;
  const double horizontal = distance(l[0], l[4]);
  if (horizontal == 0.0) {
    throw AuditError(ErrorCode::DegenerateMouth, "mouth corners L1 and L5 coincide");
  }
  return distance(l[2], l[6]) / horizontal;
}

CueMetrics frame_cues(const FrameEntry& entry, Variant variant, Glasses glasses, Warnings& warnings,
                      const CueOptions& options) {
  const bool original = variant == Variant::original;
  const auto& landmarks = original ? entry.original_landmarks : entry.deid_landmarks;
  const auto& pose = original ? entry.original_pose : entry.deid_pose;
  const std::string tag =
      std::string(original ? "original" : "deid") + " frame " + std::to_string(entry.frame_index) + ": ";

  CueMetrics cues;
  if (landmarks) {
    if (glasses != Glasses::dark) {
      auto eye_metric = [&](double (*metric)(const EyeLandmarks&)) -> std::optional<double> {
        try {
          switch (options.eyes) {
            case EyeSelection::left: return metric(left_eye(*landmarks));
            case EyeSelection::right: return metric(right_eye(*landmarks));
            case EyeSelection::both_mean:
              return (metric(left_eye(*landmarks)) + metric(right_eye(*landmarks))) / 2.0;
          }
        } catch (const AuditError& e) {
          warnings.push_back(tag + e.what());
        }
        return std::nullopt;
      };
      cues.ear = eye_metric(&eye_aspect_ratio);
      cues.pupil_circularity = eye_metric(&pupil_circularity);
    }
    try {
      cues.lar = lip_aspect_ratio(outer_lips(*landmarks));
    } catch (const AuditError& e) {
      warnings.push_back(tag + e.what());
    }
  }
  if (pose) {
    cues.roll = pose->roll;
    cues.pitch = pose->pitch;
    cues.yaw = pose->yaw;
  }
  return cues;
}

CueErrors cue_errors(const CueMetrics& orig, const CueMetrics& deid) {
  CueErrors e;
  e.ear_err = abs_diff(orig.ear, deid.ear);
  e.pc_err = abs_diff(orig.pupil_circularity, deid.pupil_circularity);
  e.lar_err = abs_diff(orig.lar, deid.lar);
  e.roll_err = abs_diff(orig.roll, deid.roll);
  e.pitch_err = abs_diff(orig.pitch, deid.pitch);
  e.yaw_err = abs_diff(orig.yaw, deid.yaw);
  if (e.roll_err && e.pitch_err && e.yaw_err) {
    e.mae_rpy = (*e.roll_err + *e.pitch_err + *e.yaw_err) / 3.0;
  }
  return e;
}

}  // namespace deid
