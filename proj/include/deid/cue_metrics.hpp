#pragma once

#include <array>
#include <optional>

#include "deid/ingest.hpp"

namespace deid {

// Six eye-contour points. P1 outer corner, P2-P3 upper lid, P4 inner
// corner, P5-P6 lower lid; P2/P6 and P3/P5 are the vertical pairs.
struct EyeLandmarks {
  std::array<Point2, 6> p{};
};

// Eight outer-lip points. L1 and L5 are the mouth corners, L3 top middle,
// L7 bottom middle.
struct LipLandmarks {
  std::array<Point2, 8> l{};
};

// Left eye: DLIB points 37-42, right eye: 43-48, in file order.
EyeLandmarks left_eye(const Landmarks& landmarks);
EyeLandmarks right_eye(const Landmarks& landmarks);
// DLIB points 49, 51, 52, 53, 55, 57, 58, 59 as L1..L8.
LipLandmarks outer_lips(const Landmarks& landmarks);

double distance(const Point2& a, const Point2& b) noexcept;

// (|P2-P6| + |P3-P5|) / (2 |P1-P4|). Throws DegenerateEye when the eye has
// zero width.
double eye_aspect_ratio(const EyeLandmarks& eye);

// 4*pi*Area / Perimeter^2 with Area = pi*(|P2-P5|/2)^2 and Perimeter the
// closed polygon P1..P6. Not clamped to [0, 1]; a regular hexagon gives
// pi^2/9. Throws DegeneratePerimeter when the perimeter is zero.
double pupil_circularity(const EyeLandmarks& eye);

// |L3-L7| / |L1-L5|. Throws DegenerateMouth when the corners coincide.
double lip_aspect_ratio(const LipLandmarks& lips);

struct CueMetrics {
  std::optional<double> ear;
  std::optional<double> pupil_circularity;
  std::optional<double> lar;
  std::optional<double> roll;
  std::optional<double> pitch;
  std::optional<double> yaw;
  friend bool operator==(const CueMetrics&, const CueMetrics&) = default;
};

struct CueErrors {
  std::optional<double> ear_err;
  std::optional<double> pc_err;
  std::optional<double> lar_err;
  std::optional<double> roll_err;
  std::optional<double> pitch_err;
  std::optional<double> yaw_err;
  std::optional<double> mae_rpy;
  friend bool operator==(const CueErrors&, const CueErrors&) = default;
};

enum class Variant { original, deid };
enum class EyeSelection { both_mean, left, right };

struct CueOptions {
  EyeSelection eyes = EyeSelection::both_mean;
};

// Assembles the cues for one side of a frame pair. Eye cues are dropped for
// dark glasses or missing landmarks. Degenerate geometry leaves the cue
// absent and appends a warning.
CueMetrics frame_cues(const FrameEntry& entry, Variant variant, Glasses glasses, Warnings& warnings,
                      const CueOptions& options = {});

// Absolute differences where both sides are present. mae_rpy is the mean
// of the three angle errors when all three exist.
CueErrors cue_errors(const CueMetrics& orig, const CueMetrics& deid);

}  // namespace deid
