#include "png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <string>

#include "iavla/errors.hpp"

namespace iavla::detail {
namespace {

void append_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

std::vector<std::uint8_t> simplified_decode(std::span<const std::uint8_t> png,
                                            png_uint_32 format, int& width,
                                            int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (png.empty() ||
      !png_image_begin_read_from_memory(&image, png.data(), png.size())) {
    throw InputError(std::string("PNG decode failed: ") +
                     (png.empty() ? "empty buffer" : image.message));
  }
  image.format = format;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw InputError("PNG decode failed: " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return pixels;
}

}  // namespace

std::vector<std::uint8_t> png_encode_rgb(int width, int height,
                                         std::span<const std::uint8_t> rgb) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0,
                                 nullptr)) {
    throw CodecError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0,
                                 nullptr)) {
    throw CodecError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

namespace {

// Kept free of objects with destructors so longjmp cannot skip them.
bool write_1bit_rows(png_structp png, png_infop info, int width, int height,
                     const std::uint8_t* bits, std::uint8_t* row,
                     std::size_t row_bytes, std::vector<std::uint8_t>* out) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, out, append_to_vector, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 1, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    std::memset(row, 0, row_bytes);
    const auto* src = bits + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      if (src[x]) row[x >> 3] |= static_cast<std::uint8_t>(0x80u >> (x & 7));
    }
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> png_encode_1bit(int width, int height,
                                          std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> out;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw CodecError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw CodecError("png_create_info_struct failed");
  }
  const std::size_t row_bytes = (static_cast<std::size_t>(width) + 7) / 8;
  std::vector<std::uint8_t> row(row_bytes);
  const bool ok = write_1bit_rows(png, info, width, height, bits.data(), row.data(),
                                  row_bytes, &out);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw CodecError("1-bit PNG encode failed");
  return out;
}

std::vector<std::uint8_t> png_decode_rgb(std::span<const std::uint8_t> png,
                                         int& width, int& height) {
  return simplified_decode(png, PNG_FORMAT_RGB, width, height);
}

GrayImage png_decode_gray(std::span<const std::uint8_t> png) {
  GrayImage g;
  g.pixels = simplified_decode(png, PNG_FORMAT_GRAY, g.width, g.height);
  return g;
}

}  // namespace iavla::detail
