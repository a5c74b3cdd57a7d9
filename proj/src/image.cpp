#include "deid/image.hpp"

#include <png.h>

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "deid/error.hpp"

namespace deid {

Image::Image(int w, int h, int c, std::uint8_t fill) : width(w), height(h), channels(c) {
  validate(*this);
  pixels.assign(sample_count(), fill);
}

void validate(const Image& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw AuditError(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }
  if (image.channels != 1 && image.channels != 3) {
    throw AuditError(ErrorCode::InvalidArgument, "image must have 1 or 3 channels");
  }
  if (!image.pixels.empty() && image.pixels.size() != image.sample_count()) {
    throw AuditError(ErrorCode::InvalidArgument, "pixel buffer size does not match width*height*channels");
  }
}

namespace {

// libpng reports errors through longjmp. The functions below that call
// setjmp keep only trivially destructible locals so the jump never skips a
// destructor; all owning storage lives in the callers.
struct PngIo {
  png_structp png = nullptr;
  png_infop info = nullptr;
  const std::uint8_t* data = nullptr;
  std::size_t size = 0;
  std::size_t offset = 0;
  std::vector<std::uint8_t>* sink = nullptr;
  std::array<char, 256> message{};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* io = static_cast<PngIo*>(png_get_error_ptr(png));
  std::strncpy(io->message.data(), msg, io->message.size() - 1);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  if (io->size - io->offset < count) {
    png_error(png, "unexpected end of data");
  }
  std::memcpy(out, io->data + io->offset, count);
  io->offset += count;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t count) {
  auto* io = static_cast<PngIo*>(png_get_io_ptr(png));
  io->sink->insert(io->sink->end(), data, data + count);
}

void flush_noop(png_structp) {}

struct Header {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

bool read_header(PngIo& io, Header& header) {
  if (setjmp(png_jmpbuf(io.png))) {
    return false;
  }
  png_set_read_fn(io.png, &io, read_from_memory);
  png_read_info(io.png, io.info);
  png_get_IHDR(io.png, io.info, &header.width, &header.height, &header.bit_depth, &header.color_type, nullptr,
               nullptr, nullptr);
  return true;
}

bool read_pixels(PngIo& io, const Header& header, png_bytepp rows, std::size_t expected_rowbytes) {
  if (setjmp(png_jmpbuf(io.png))) {
    return false;
  }
  if (header.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(io.png);
  }
  if (header.color_type == PNG_COLOR_TYPE_GRAY && header.bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(io.png);
  }
  if (header.color_type & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(io.png);
  }
  png_set_interlace_handling(io.png);
  png_read_update_info(io.png, io.info);
  if (png_get_rowbytes(io.png, io.info) != expected_rowbytes) {
    png_error(io.png, "unexpected row layout after transforms");
  }
  png_read_image(io.png, rows);
  png_read_end(io.png, nullptr);
  return true;
}

bool write_image(PngIo& io, const Image& image, png_bytepp rows) {
  if (setjmp(png_jmpbuf(io.png))) {
    return false;
  }
  png_set_write_fn(io.png, &io, write_to_vector, flush_noop);
  png_set_compression_level(io.png, 6);
  png_set_IHDR(io.png, io.info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(io.png, io.info);
  png_write_image(io.png, rows);
  png_write_end(io.png, nullptr);
  return true;
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kSignatureBytes = 8;
  if (bytes.size() < kSignatureBytes || png_sig_cmp(bytes.data(), 0, kSignatureBytes) != 0) {
    throw AuditError(ErrorCode::UnsupportedFormat, "not a PNG file");
  }

  PngIo io;
  io.data = bytes.data();
  io.size = bytes.size();
  io.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &io, on_png_error, on_png_warning);
  if (io.png == nullptr) {
    throw AuditError(ErrorCode::DecodeError, "png_create_read_struct failed");
  }
  io.info = png_create_info_struct(io.png);
  struct ReadGuard {
    PngIo& io;
    ~ReadGuard() { png_destroy_read_struct(&io.png, io.info ? &io.info : nullptr, nullptr); }
  } guard{io};
  if (io.info == nullptr) {
    throw AuditError(ErrorCode::DecodeError, "png_create_info_struct failed");
  }

  Header header;
  if (!read_header(io, header)) {
    throw AuditError(ErrorCode::DecodeError, io.message.data());
  }
  if (header.bit_depth == 16) {
    throw AuditError(ErrorCode::UnsupportedFormat, "16-bit PNG samples are not supported");
  }
  if (header.width == 0 || header.height == 0 || header.width > (1u << 16) || header.height > (1u << 16)) {
    throw AuditError(ErrorCode::DecodeError, "implausible PNG dimensions");
  }

  const bool color = (header.color_type & PNG_COLOR_MASK_COLOR) != 0 || header.color_type == PNG_COLOR_TYPE_PALETTE;
  Image image(static_cast<int>(header.width), static_cast<int>(header.height), color ? 3 : 1);
  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels;
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = image.pixels.data() + static_cast<std::size_t>(y) * rowbytes;
  }
  if (!read_pixels(io, header, rows.data(), rowbytes)) {
    throw AuditError(ErrorCode::DecodeError, io.message.data());
  }
  return image;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw AuditError(ErrorCode::IoError, "cannot open image " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const AuditError& e) {
    throw AuditError(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  validate(image);
  if (image.pixels.size() != image.sample_count()) {
    throw AuditError(ErrorCode::InvalidArgument, "image has no pixel data");
  }
  std::vector<std::uint8_t> out;
  PngIo io;
  io.sink = &out;
  io.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &io, on_png_error, on_png_warning);
  if (io.png == nullptr) {
    throw AuditError(ErrorCode::IoError, "png_create_write_struct failed");
  }
  io.info = png_create_info_struct(io.png);
  struct WriteGuard {
    PngIo& io;
    ~WriteGuard() { png_destroy_write_struct(&io.png, io.info ? &io.info : nullptr); }
  } guard{io};
  if (io.info == nullptr) {
    throw AuditError(ErrorCode::IoError, "png_create_info_struct failed");
  }

  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels;
  std::vector<png_bytep> rows(image.height);
  auto* base = const_cast<std::uint8_t*>(image.pixels.data());
  for (int y = 0; y < image.height; ++y) {
    rows[y] = base + static_cast<std::size_t>(y) * rowbytes;
  }
  if (!write_image(io, image, rows.data())) {
    throw AuditError(ErrorCode::IoError, io.message.data());
  }
  return out;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw AuditError(ErrorCode::IoError, "cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw AuditError(ErrorCode::IoError, "short write to " + path.string());
  }
}

}  // namespace deid
