#pragma once

// Naive reference implementations used as test oracles. They follow the
// textbook definitions directly (double loops, floating-point moments,
// arccos for angles) and share no code with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "deid/image.hpp"

namespace deid::oracle {

inline double sample(const Image& im, int x, int y, int c) {
  return static_cast<double>(im.pixels[(static_cast<std::size_t>(y) * im.width + x) * im.channels + c]);
}

inline double mse(const Image& a, const Image& b) {
  double sum = 0.0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      for (int c = 0; c < a.channels; ++c) {
        const double d = sample(a, x, y, c) - sample(b, x, y, c);
        sum += d * d;
      }
  return sum / (static_cast<double>(a.width) * a.height * a.channels);
}

inline double rmse(const Image& a, const Image& b) { return std::sqrt(oracle::mse(a, b)); }

inline double psnr(const Image& a, const Image& b) {
  const double m = oracle::mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / m);
}

// Wang-Bovik quality index, sliding BxB windows with stride 1, per channel,
// averaged over windows then channels. Sample (n-1) moments.
inline double uiqi(const Image& a, const Image& b, int block = 8) {
  double channel_total = 0.0;
  const double n = static_cast<double>(block) * block;
  for (int c = 0; c < a.channels; ++c) {
    double sum_q = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + block <= a.height; ++y0) {
      for (int x0 = 0; x0 + block <= a.width; ++x0) {
        double mx = 0.0, my = 0.0;
        for (int y = y0; y < y0 + block; ++y)
          for (int x = x0; x < x0 + block; ++x) {
            mx += sample(a, x, y, c);
            my += sample(b, x, y, c);
          }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, cxy = 0.0;
        bool equal = true;
        for (int y = y0; y < y0 + block; ++y)
          for (int x = x0; x < x0 + block; ++x) {
            const double dx = sample(a, x, y, c) - mx;
            const double dy = sample(b, x, y, c) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
            equal = equal && sample(a, x, y, c) == sample(b, x, y, c);
          }
        vx /= n - 1.0;
        vy /= n - 1.0;
        cxy /= n - 1.0;
        const double contrast = vx + vy;
        const double luminance = mx * mx + my * my;
        double q;
        if (contrast == 0.0) {
          q = equal ? 1.0 : 0.0;
        } else if (luminance == 0.0) {
          q = 0.0;
        } else {
          q = 4.0 * cxy * mx * my / (contrast * luminance);
        }
        sum_q += q;
        ++windows;
      }
    }
    channel_total += sum_q / windows;
  }
  return channel_total / a.channels;
}

inline double sam(const Image& a, const Image& b, double eps = 1e-6) {
  double total = 0.0;
  int counted = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        dot += sample(a, x, y, c) * sample(b, x, y, c);
        na += sample(a, x, y, c) * sample(a, x, y, c);
        nb += sample(b, x, y, c) * sample(b, x, y, c);
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      if (na < eps || nb < eps) continue;
      total += std::acos(std::clamp(dot / (na * nb), -1.0, 1.0));
      ++counted;
    }
  return counted == 0 ? 0.0 : total / counted;
}

// Reference image is a. Bands with mean below eps are skipped; returns NaN
// when every band is skipped.
inline double ergas(const Image& a, const Image& b, double ratio = 1.0, double eps = 1e-6) {
  const double pixels = static_cast<double>(a.width) * a.height;
  double acc = 0.0;
  int bands = 0;
  for (int c = 0; c < a.channels; ++c) {
    double se = 0.0, mean = 0.0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const double d = sample(a, x, y, c) - sample(b, x, y, c);
        se += d * d;
        mean += sample(a, x, y, c);
      }
    mean /= pixels;
    if (mean < eps) continue;
    const double band_rmse = std::sqrt(se / pixels);
    acc += (band_rmse / mean) * (band_rmse / mean);
    ++bands;
  }
  if (bands == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * ratio * std::sqrt(acc / bands);
}

inline double near_rel(double got, double want) {
  if (got == want) return 0.0;
  const double scale = std::max({std::abs(got), std::abs(want), 1e-300});
  return std::abs(got - want) / scale;
}

}  // namespace deid::oracle
