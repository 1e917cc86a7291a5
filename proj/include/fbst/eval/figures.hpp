#pragma once

#include "fbst/core/image.hpp"
#include "fbst/core/png_io.hpp"
#include "fbst/pipeline/pipeline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fbst {

struct GridCell {
  ImageTensor image;               // gray images are shown as gray RGB
  bool highlight = false;          // draw the row mask boundary in red
};

struct GridRow {
  std::string label;
  std::vector<GridCell> cells;
  std::optional<AnomalyMask> mask;  // same size as the highlighted cells
};

struct GridLayout {
  int padding = 4;
  int label_width = 0;  // 0: fitted to the longest row label
  int scale = 1;        // integer upscaling of every cell
};

// Column labels on top, row labels on the left, cells left to right.
Raster8 render_grid(const std::vector<GridRow>& rows, const std::vector<std::string>& column_labels = {},
                    const GridLayout& layout = {});

// Mask pixels with an in-image 4-neighbour outside the mask.
AnomalyMask mask_boundary(const AnomalyMask& mask);
// Copy of the image (as RGB) with the boundary pixels set to pure red.
ImageTensor overlay_boundary(const ImageTensor& image, const AnomalyMask& mask);

// Gray image of a score map; scores scaled by 1/max when normalize is set.
ImageTensor score_map_image(const AnomalyScoreMap& map, bool normalize = false);

}  // namespace fbst
