#include "fbst/core/png_io.hpp"

#include "fbst/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace fbst {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

Raster8 read_png(const std::filesystem::path& path, int want_channels) {
  if (want_channels != 1 && want_channels != 3) throw ArgumentError("want_channels must be 1 or 3");
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError(path.string() + " is not a PNG file");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  Raster8 out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path.string() + ": " + err);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  const bool source_gray = (color & PNG_COLOR_MASK_COLOR) == 0;
  if (want_channels == 3 && source_gray) png_set_gray_to_rgb(png);
  if (want_channels == 1 && !source_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  if (out.channels != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected channel count after conversion in " + path.string());
  }
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y)
    rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * out.width * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster8& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw ArgumentError("raster must have 1 or 3 channels");
  if (raster.pixels.size() != static_cast<std::size_t>(raster.width) * raster.height * raster.channels)
    throw ArgumentError("raster pixel count mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(raster.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path.string() + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, raster.width, raster.height, 8,
               raster.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y)
    rows[y] = const_cast<png_bytep>(raster.pixels.data()) +
              static_cast<std::size_t>(y) * raster.width * raster.channels;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor raster_to_image(const Raster8& raster) {
  Tensor t(raster.channels, raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y)
    for (int x = 0; x < raster.width; ++x)
      for (int c = 0; c < raster.channels; ++c)
        t.at(c, y, x) =
            raster.pixels[(static_cast<std::size_t>(y) * raster.width + x) * raster.channels + c] / 255.0;
  return ImageTensor(std::move(t), RangeTag::unit);
}

Raster8 image_to_raster(const ImageTensor& image) {
  const ImageTensor unit = image.to_unit();
  Raster8 r{unit.width(), unit.height(), unit.channels(), {}};
  r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c)
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] =
            static_cast<std::uint8_t>(std::lround(unit.at(c, y, x) * 255.0));
  return r;
}

ImageTensor load_image(const std::filesystem::path& path) { return raster_to_image(read_png(path, 3)); }

void save_image(const std::filesystem::path& path, const ImageTensor& image) {
  write_png(path, image_to_raster(image));
}

AnomalyMask load_mask(const std::filesystem::path& path) {
  const Raster8 r = read_png(path, 1);
  std::vector<std::uint8_t> v(r.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = r.pixels[i] >= 128 ? 1 : 0;
  return AnomalyMask(r.height, r.width, std::move(v));
}

void save_mask(const std::filesystem::path& path, const AnomalyMask& mask) {
  Raster8 r{mask.width(), mask.height(), 1, {}};
  r.pixels.resize(mask.values().size());
  for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = mask.values()[i] ? 255 : 0;
  write_png(path, r);
}

}  // namespace fbst
