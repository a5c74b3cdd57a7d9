#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "deid/image.hpp"
#include "deid/ingest.hpp"

namespace deid {

enum class QualityMetric { mse, rmse, psnr, uiqi, ergas, sam };
enum class Orientation { lower_is_similar, higher_is_similar };

struct MetricDescriptor {
  QualityMetric metric;
  std::string_view name;
  Orientation orientation;
  double identical_value;  // value for an image compared with itself
};

const std::array<MetricDescriptor, 6>& quality_descriptors() noexcept;
const MetricDescriptor& descriptor(QualityMetric metric) noexcept;

struct QualityOptions {
  int uiqi_window = 8;
  double ergas_ratio = 1.0;     // high/low resolution ratio
  double ergas_epsilon = 1e-6;  // bands whose reference mean is below this are skipped
  double sam_epsilon = 1e-6;    // pixels whose channel vector norm is below this are skipped
};

struct QualityMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  double psnr_db = 0.0;  // +infinity when mse == 0
  double uiqi = 1.0;
  std::optional<double> ergas;  // absent when every reference band is degenerate
  double sam = 0.0;             // radians
  friend bool operator==(const QualityMetrics&, const QualityMetrics&) = default;
};

// All operations throw ShapeMismatch unless x and y share width, height
// and channel count. Samples are compared as reals in [0, 255].
double mse(const Image& x, const Image& y);
double rmse(const Image& x, const Image& y);
double psnr(const Image& x, const Image& y);

// Wang-Bovik index averaged over every window position (stride 1), per
// channel, then over channels. Throws TooSmall if the image is smaller
// than the window.
double uiqi(const Image& x, const Image& y, int window = 8);

// Mean spectral angle in radians between per-pixel channel vectors.
double sam(const Image& x, const Image& y, double epsilon = 1e-6);

// x is the reference. Throws AllBandsDegenerate when no band has a usable
// reference mean.
double ergas(const Image& x, const Image& y, double ratio = 1.0, double epsilon = 1e-6,
             Warnings* warnings = nullptr);

QualityMetrics frame_quality(const Image& x, const Image& y, const QualityOptions& options = {},
                             Warnings* warnings = nullptr);

}  // namespace deid
