#include "iavla/image.hpp"

#include <sodium.h>

#include <fstream>
#include <iterator>

#include "iavla/errors.hpp"
#include "png_io.hpp"

namespace iavla {
namespace {

void ensure_sodium() {
  static const bool ready = sodium_init() >= 0;
  if (!ready) throw Error("libsodium initialisation failed");
}

}  // namespace

RgbImage::RgbImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> interleaved)
    : width_(width), height_(height), data_(std::move(interleaved)) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
    throw DimensionError("RGB buffer size does not match dimensions");
  }
}

RgbImage resize_nearest(const RgbImage& image, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw DimensionError("resize target must be positive");
  }
  if (new_width == image.width() && new_height == image.height()) return image;

  std::vector<int> src_x(new_width);
  for (int x = 0; x < new_width; ++x) {
    src_x[x] = nearest_source_index(x, image.width(), new_width);
  }
  RgbImage out(new_width, new_height);
  const auto src = image.bytes();
  auto dst = out.bytes();
  for (int y = 0; y < new_height; ++y) {
    const int sy = nearest_source_index(y, image.height(), new_height);
    const auto* row = src.data() + static_cast<std::size_t>(sy) * image.width() * 3;
    auto* out_row = dst.data() + static_cast<std::size_t>(y) * new_width * 3;
    for (int x = 0; x < new_width; ++x) {
      const auto* p = row + static_cast<std::size_t>(src_x[x]) * 3;
      out_row[3 * x] = p[0];
      out_row[3 * x + 1] = p[1];
      out_row[3 * x + 2] = p[2];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  if (image.empty()) throw CodecError("cannot encode an empty image");
  return detail::png_encode_rgb(image.width(), image.height(), image.bytes());
}

RgbImage decode_png(std::span<const std::uint8_t> png) {
  int w = 0;
  int h = 0;
  auto pixels = detail::png_decode_rgb(png, w, h);
  return RgbImage(w, h, std::move(pixels));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  ensure_sodium();
  const std::size_t len =
      sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop the terminator sodium writes
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  ensure_sodium();
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t written = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(),
                        "\n\r ", &written, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw InputError("malformed base64 payload");
  }
  out.resize(written);
  return out;
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
  ensure_sodium();
  unsigned char digest[16];
  crypto_generichash(digest, sizeof digest, bytes.data(), bytes.size(), nullptr,
                     0);
  char hex[sizeof digest * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

std::string content_hash(std::string_view text) {
  return content_hash(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

void write_file(const std::string& path, std::string_view text) {
  write_file(path, std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(text.data()),
                       text.size()));
}

}  // namespace iavla
