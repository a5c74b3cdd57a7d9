#include <doctest.h>
#include <png.h>

#include <random>

#include "deid/error.hpp"
#include "deid/image.hpp"
#include "support/errors.hpp"
#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"

using namespace deid;

namespace {

std::vector<std::uint8_t> write_with_simplified_api(png_uint_32 format, int w, int h,
                                                    const std::vector<std::uint8_t>& data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  REQUIRE(png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), 0, nullptr));
  std::vector<std::uint8_t> out(size);
  REQUIRE(png_image_write_to_memory(&image, out.data(), &size, 0, data.data(), 0, nullptr));
  out.resize(size);
  return out;
}

}  // namespace

TEST_CASE("png round trip keeps every sample") {
  std::mt19937_64 rng(3);
  for (int channels : {1, 3}) {
    const Image im = testing::random_image(17, 9, channels, rng);
    const auto bytes = encode_png(im);
    CHECK(decode_png(bytes) == im);
  }
}

TEST_CASE("png encoding is deterministic") {
  std::mt19937_64 rng(5);
  const Image im = testing::random_image(12, 12, 3, rng);
  CHECK(encode_png(im) == encode_png(im));
}

TEST_CASE("save and load through the filesystem") {
  testing::TempDir dir;
  std::mt19937_64 rng(9);
  const Image im = testing::random_image(8, 8, 3, rng);
  save_png(im, dir / "a.png");
  CHECK(load_image(dir / "a.png") == im);
  CHECK(testing::error_code_of([&] { load_image(dir / "missing.png"); }) == ErrorCode::IoError);
}

TEST_CASE("alpha is stripped and gray-alpha stays gray") {
  std::vector<std::uint8_t> rgba = {10, 20, 30, 255, 40, 50, 60, 0};
  const auto rgba_png = write_with_simplified_api(PNG_FORMAT_RGBA, 2, 1, rgba);
  const Image rgb = decode_png(rgba_png);
  CHECK(rgb.channels == 3);
  CHECK(rgb.pixels == std::vector<std::uint8_t>{10, 20, 30, 40, 50, 60});

  std::vector<std::uint8_t> ga = {7, 255, 9, 128};
  const Image gray = decode_png(write_with_simplified_api(PNG_FORMAT_GA, 2, 1, ga));
  CHECK(gray.channels == 1);
  CHECK(gray.pixels == std::vector<std::uint8_t>{7, 9});
}

TEST_CASE("sixteen-bit input is rejected") {
  std::vector<std::uint16_t> samples = {0, 1000, 65535, 42};
  std::vector<std::uint8_t> raw(reinterpret_cast<std::uint8_t*>(samples.data()),
                                reinterpret_cast<std::uint8_t*>(samples.data()) + samples.size() * 2);
  const auto bytes = write_with_simplified_api(PNG_FORMAT_LINEAR_Y, 2, 2, raw);
  CHECK(testing::error_code_of([&] { decode_png(bytes); }) == ErrorCode::UnsupportedFormat);
}

TEST_CASE("non-png and truncated input") {
  const std::vector<std::uint8_t> jpeg_magic = {0xFF, 0xD8, 0xFF, 0xE0, 0, 0, 0, 0, 0, 0};
  CHECK(testing::error_code_of([&] { decode_png(jpeg_magic); }) == ErrorCode::UnsupportedFormat);

  std::mt19937_64 rng(1);
  auto bytes = encode_png(testing::random_image(16, 16, 3, rng));
  bytes.resize(bytes.size() / 2);
  CHECK(testing::error_code_of([&] { decode_png(bytes); }) == ErrorCode::DecodeError);
}

TEST_CASE("invalid images are refused by validate") {
  Image bad;
  bad.width = 2;
  bad.height = 2;
  bad.channels = 3;
  bad.pixels.resize(5);
  CHECK(testing::error_code_of([&] { validate(bad); }) == ErrorCode::InvalidArgument);
  Image four(2, 2, 1);
  four.channels = 4;
  four.pixels.resize(16);
  CHECK(testing::error_code_of([&] { validate(four); }) == ErrorCode::InvalidArgument);
}
