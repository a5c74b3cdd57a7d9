#include "deid/image_quality.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "deid/error.hpp"

namespace deid {

namespace {

constexpr double kPeak = 255.0;

void require_same_shape(const Image& x, const Image& y) {
  validate(x);
  validate(y);
  if (!x.same_shape(y)) {
    throw AuditError(ErrorCode::ShapeMismatch, std::to_string(x.width) + "x" + std::to_string(x.height) + "x" +
                                                   std::to_string(x.channels) + " vs " + std::to_string(y.width) +
                                                   "x" + std::to_string(y.height) + "x" + std::to_string(y.channels));
  }
  if (x.pixels.size() != x.sample_count() || y.pixels.size() != y.sample_count()) {
    throw AuditError(ErrorCode::InvalidArgument, "image has no pixel data");
  }
}

std::int64_t squared_error_sum(const Image& x, const Image& y) {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < x.pixels.size(); ++i) {
    const std::int64_t d = static_cast<std::int64_t>(x.pixels[i]) - y.pixels[i];
    sum += d * d;
  }
  return sum;
}

// Summed-area table over one channel of one or two images, with one row
// and column of zero padding.
class IntegralTable {
 public:
  IntegralTable(int width, int height) : stride_(width + 1), data_(static_cast<std::size_t>(width + 1) * (height + 1)) {}

  template <typename Sample>
  void build(int width, int height, Sample sample) {
    for (int y = 0; y < height; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < width; ++x) {
        row += sample(x, y);
        data_[index(x + 1, y + 1)] = data_[index(x + 1, y)] + row;
      }
    }
  }

  std::int64_t window(int x0, int y0, int size) const {
    return data_[index(x0 + size, y0 + size)] - data_[index(x0, y0 + size)] - data_[index(x0 + size, y0)] +
           data_[index(x0, y0)];
  }

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * stride_ + x; }
  std::size_t stride_;
  std::vector<std::int64_t> data_;
};

}  // namespace

const std::array<MetricDescriptor, 6>& quality_descriptors() noexcept {
  static const std::array<MetricDescriptor, 6> kDescriptors = {{
      {QualityMetric::mse, "mse", Orientation::lower_is_similar, 0.0},
      {QualityMetric::rmse, "rmse", Orientation::lower_is_similar, 0.0},
      {QualityMetric::psnr, "psnr", Orientation::higher_is_similar, std::numeric_limits<double>::infinity()},
      {QualityMetric::uiqi, "uiqi", Orientation::higher_is_similar, 1.0},
      {QualityMetric::ergas, "ergas", Orientation::lower_is_similar, 0.0},
      {QualityMetric::sam, "sam", Orientation::lower_is_similar, 0.0},
  }};
  return kDescriptors;
}

const MetricDescriptor& descriptor(QualityMetric metric) noexcept {
  return quality_descriptors()[static_cast<std::size_t>(metric)];
}

double mse(const Image& x, const Image& y) {
  require_same_shape(x, y);
  return static_cast<double>(squared_error_sum(x, y)) / static_cast<double>(x.sample_count());
}

double rmse(const Image& x, const Image& y) { return std::sqrt(mse(x, y)); }

double psnr(const Image& x, const Image& y) {
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPeak * kPeak / m);
}

double uiqi(const Image& x, const Image& y, int window) {
  require_same_shape(x, y);
  if (window < 1) {
    throw AuditError(ErrorCode::InvalidArgument, "UIQI window must be positive");
  }
  if (x.width < window || x.height < window) {
    throw AuditError(ErrorCode::TooSmall, "image smaller than the " + std::to_string(window) + "x" +
                                              std::to_string(window) + " UIQI window");
  }

  const int w = x.width;
  const int h = x.height;
  const std::int64_t n = static_cast<std::int64_t>(window) * window;
  double channel_total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    IntegralTable sx(w, h), sy(w, h), sxx(w, h), syy(w, h), sxy(w, h);
    sx.build(w, h, [&](int i, int j) { return std::int64_t{x.at(i, j, c)}; });
    sy.build(w, h, [&](int i, int j) { return std::int64_t{y.at(i, j, c)}; });
    sxx.build(w, h, [&](int i, int j) { return std::int64_t{x.at(i, j, c)} * x.at(i, j, c); });
    syy.build(w, h, [&](int i, int j) { return std::int64_t{y.at(i, j, c)} * y.at(i, j, c); });
    sxy.build(w, h, [&](int i, int j) { return std::int64_t{x.at(i, j, c)} * y.at(i, j, c); });

    double total = 0.0;
    std::int64_t windows = 0;
    for (int j = 0; j + window <= h; ++j) {
      for (int i = 0; i + window <= w; ++i) {
        // Window moments scaled by n^2 stay exact integers; the common
        // factors cancel in the index.
        const std::int64_t a = sx.window(i, j, window);
        const std::int64_t b = sy.window(i, j, window);
        const std::int64_t var_x = n * sxx.window(i, j, window) - a * a;
        const std::int64_t var_y = n * syy.window(i, j, window) - b * b;
        const std::int64_t cov = n * sxy.window(i, j, window) - a * b;
        const std::int64_t contrast = var_x + var_y;
        const std::int64_t luminance = a * a + b * b;
        double q = 0.0;
        if (contrast == 0) {
          q = a == b ? 1.0 : 0.0;
        } else if (luminance != 0) {
          q = (4.0 * static_cast<double>(cov) * static_cast<double>(a * b)) /
              (static_cast<double>(contrast) * static_cast<double>(luminance));
        }
        total += q;
        ++windows;
      }
    }
    channel_total += total / static_cast<double>(windows);
  }
  return channel_total / static_cast<double>(x.channels);
}

double sam(const Image& x, const Image& y, double epsilon) {
  require_same_shape(x, y);
  const double eps_sq = epsilon * epsilon;
  double total = 0.0;
  std::size_t used = 0;
  const std::size_t ch = static_cast<std::size_t>(x.channels);
  for (std::size_t p = 0; p < x.pixel_count(); ++p) {
    std::int64_t xx = 0, yy = 0, xy = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::int64_t a = x.pixels[p * ch + c];
      const std::int64_t b = y.pixels[p * ch + c];
      xx += a * a;
      yy += b * b;
      xy += a * b;
    }
    if (static_cast<double>(xx) < eps_sq || static_cast<double>(yy) < eps_sq || xx == 0 || yy == 0) continue;
    // atan2(|x cross y|, x.y) equals arccos of the normalized dot product but
    // stays exact for parallel vectors; |x cross y|^2 = |x|^2|y|^2 - (x.y)^2
    // is exact in integers.
    const std::int64_t cross_sq = xx * yy - xy * xy;
    total += std::atan2(std::sqrt(static_cast<double>(cross_sq)), static_cast<double>(xy));
    ++used;
  }
  return used == 0 ? 0.0 : total / static_cast<double>(used);
}

double ergas(const Image& x, const Image& y, double ratio, double epsilon, Warnings* warnings) {
  require_same_shape(x, y);
  const std::size_t ch = static_cast<std::size_t>(x.channels);
  const double pixels = static_cast<double>(x.pixel_count());
  double accum = 0.0;
  std::size_t bands = 0;
  for (std::size_t c = 0; c < ch; ++c) {
    std::int64_t ref_sum = 0;
    std::int64_t sq = 0;
    for (std::size_t p = 0; p < x.pixel_count(); ++p) {
      const std::int64_t a = x.pixels[p * ch + c];
      const std::int64_t d = a - y.pixels[p * ch + c];
      ref_sum += a;
      sq += d * d;
    }
    const double mean = static_cast<double>(ref_sum) / pixels;
    if (mean < epsilon) {
      if (warnings) warnings->push_back("ergas: band " + std::to_string(c) + " skipped, reference mean ~0");
      continue;
    }
    const double band_rmse = std::sqrt(static_cast<double>(sq) / pixels);
    accum += (band_rmse / mean) * (band_rmse / mean);
    ++bands;
  }
  if (bands == 0) {
    throw AuditError(ErrorCode::AllBandsDegenerate, "every reference band has a near-zero mean");
  }
  return 100.0 * ratio * std::sqrt(accum / static_cast<double>(bands));
}

QualityMetrics frame_quality(const Image& x, const Image& y, const QualityOptions& options, Warnings* warnings) {
  require_same_shape(x, y);
  QualityMetrics q;
  q.mse = mse(x, y);
  q.rmse = rmse(x, y);
  q.psnr_db = psnr(x, y);
  q.uiqi = uiqi(x, y, options.uiqi_window);
  try {
    q.ergas = ergas(x, y, options.ergas_ratio, options.ergas_epsilon, warnings);
  } catch (const AuditError& e) {
    if (e.code() != ErrorCode::AllBandsDegenerate) throw;
    if (warnings) warnings->push_back(e.what());
  }
  q.sam = sam(x, y, options.sam_epsilon);
  return q;
}

}  // namespace deid
