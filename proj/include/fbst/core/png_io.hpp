#pragma once

#include "fbst/core/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fbst {

// 8-bit raster as decoded from disk, interleaved.
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Raster8&, const Raster8&) = default;
};

// Decodes any PNG to 8-bit gray (channels=1) or RGB (channels=3). Alpha is
// dropped, palettes expanded, 16-bit samples reduced.
Raster8 read_png(const std::filesystem::path& path, int want_channels = 3);
void write_png(const std::filesystem::path& path, const Raster8& raster);

ImageTensor raster_to_image(const Raster8& raster);
Raster8 image_to_raster(const ImageTensor& image);

ImageTensor load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const ImageTensor& image);

// Masks: single channel, value >= 128 means anomalous.
AnomalyMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const AnomalyMask& mask);

}  // namespace fbst
