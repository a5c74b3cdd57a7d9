#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "deid/image.hpp"

namespace deid::testing {

inline Image random_image(int w, int h, int c, std::mt19937_64& rng) {
  Image im(w, h, c);
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(dist(rng));
  return im;
}

// base plus rounded, clamped Gaussian noise.
inline Image noisy_copy(const Image& base, double sigma, std::mt19937_64& rng) {
  Image out = base;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::clamp(std::lround(p + noise(rng)), 0L, 255L));
  return out;
}

// Half the pairs are independent draws, half are correlated.
inline std::pair<Image, Image> random_pair(int w, int h, int c, std::mt19937_64& rng, int index) {
  Image x = random_image(w, h, c, rng);
  Image y = index % 2 == 0 ? random_image(w, h, c, rng) : noisy_copy(x, 12.0, rng);
  return {std::move(x), std::move(y)};
}

}  // namespace deid::testing
