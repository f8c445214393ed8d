#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "crownflow/io.hpp"

namespace crownflow::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("png.io", std::string("cannot open ") + path.string());
  return f;
}

void write_png(const fs::path& path, Index height, Index width, int bit_depth, int color_type,
                int channels, const std::vector<png_byte>& bytes) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error("png.io", "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png.io", "png_create_info_struct failed");
  }
  const std::size_t row_bytes =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(channels * bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Index y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data()) + y * row_bytes;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png.io", "libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawImage {
  Index height = 0;
  Index width = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<png_byte> bytes;  // rows as stored, 16-bit samples big-endian
};

RawImage read_raw(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error("png.io", path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error("png.io", "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png.io", "png_create_info_struct failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("png.io", "libpng failed reading " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.bit_depth = png_get_bit_depth(png, info);
  img.color_type = png_get_color_type(png, info);
  if (img.color_type == PNG_COLOR_TYPE_GRAY && img.bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  img.bytes.resize(row_bytes * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (Index y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = img.bytes.data() + y * row_bytes;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace

void write_labels_png(const fs::path& path, const LabelMap& labels) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(labels.size()) * 2);
  for (Index i = 0; i < labels.size(); ++i) {
    bytes[2 * i] = static_cast<png_byte>(labels.data()[i] >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(labels.data()[i] & 0xFF);
  }
  write_png(path, labels.rows(), labels.cols(), 16, PNG_COLOR_TYPE_GRAY, 1, bytes);
}

LabelMap read_labels_png(const fs::path& path) {
  const RawImage img = read_raw(path);
  if (img.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error("png.channels", path.string() + ": label maps must be single-channel grayscale");
  }
  if (img.bit_depth != 16) {
    throw Error("png.bit_depth", path.string() + ": label maps must be 16-bit (found " +
                                     std::to_string(img.bit_depth) + ")");
  }
  LabelMap labels(img.height, img.width);
  for (Index i = 0; i < labels.size(); ++i) {
    labels.data()[i] = static_cast<Label>((img.bytes[2 * i] << 8) | img.bytes[2 * i + 1]);
  }
  return labels;
}

void write_mask_png(const fs::path& path, const SemanticMask& mask) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(mask.size()));
  for (Index i = 0; i < mask.size(); ++i) bytes[i] = mask.data()[i] != 0 ? 255 : 0;
  write_png(path, mask.rows(), mask.cols(), 8, PNG_COLOR_TYPE_GRAY, 1, bytes);
}

SemanticMask read_mask_png(const fs::path& path) {
  const RawImage img = read_raw(path);
  if (img.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error("png.channels", path.string() + ": masks must be single-channel grayscale");
  }
  if (img.bit_depth > 8) {
    throw Error("png.bit_depth", path.string() + ": masks must be 8-bit");
  }
  SemanticMask mask(img.height, img.width);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = img.bytes[i] != 0 ? 1 : 0;
  return mask;
}

void write_rgb_png(const fs::path& path, const std::vector<Grid2D<float>>& bands) {
  if (bands.size() != 3) throw Error("png.channels", "RGB export needs exactly 3 bands");
  require_same_dims(dims_of(bands[0]), dims_of(bands[1]), "write_rgb_png");
  require_same_dims(dims_of(bands[0]), dims_of(bands[2]), "write_rgb_png");
  const Index n = bands[0].size();
  std::vector<png_byte> bytes(static_cast<std::size_t>(n) * 3);
  for (Index i = 0; i < n; ++i) {
    for (int b = 0; b < 3; ++b) {
      const float v = std::clamp(bands[b].data()[i], 0.0f, 1.0f);
      bytes[3 * i + b] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  }
  write_png(path, bands[0].rows(), bands[0].cols(), 8, PNG_COLOR_TYPE_RGB, 3, bytes);
}

}  // namespace crownflow::io
