#include "fbst/eval/figures.hpp"

#include "fbst/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

namespace fbst {

namespace {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
using Glyph = std::array<std::uint8_t, 7>;

Glyph glyph(char ch) {
  switch (std::toupper(static_cast<unsigned char>(ch))) {
    case 'A': return {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11};
    case 'B': return {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E};
    case 'C': return {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E};
    case 'D': return {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C};
    case 'E': return {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F};
    case 'F': return {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10};
    case 'G': return {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F};
    case 'H': return {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11};
    case 'I': return {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E};
    case 'J': return {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C};
    case 'K': return {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11};
    case 'L': return {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F};
    case 'M': return {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11};
    case 'N': return {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11};
    case 'O': return {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E};
    case 'P': return {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10};
    case 'Q': return {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D};
    case 'R': return {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11};
    case 'S': return {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E};
    case 'T': return {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04};
    case 'U': return {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E};
    case 'V': return {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04};
    case 'W': return {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A};
    case 'X': return {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11};
    case 'Y': return {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04};
    case 'Z': return {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F};
    case '0': return {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E};
    case '1': return {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E};
    case '2': return {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F};
    case '3': return {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E};
    case '4': return {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02};
    case '5': return {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E};
    case '6': return {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E};
    case '7': return {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08};
    case '8': return {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E};
    case '9': return {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C};
    case ' ': return {0, 0, 0, 0, 0, 0, 0};
    case '-': return {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00};
    case '_': return {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F};
    case '.': return {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
    case ',': return {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08};
    case ':': return {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00};
    case '=': return {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00};
    case '+': return {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00};
    case '/': return {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00};
    case '(': return {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02};
    case ')': return {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08};
    case '%': return {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03};
    default: return {0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04};
  }
}

constexpr int kGlyphW = 5, kGlyphH = 7, kAdvance = 6;

int text_width(const std::string& s) { return s.empty() ? 0 : static_cast<int>(s.size()) * kAdvance - 1; }

struct Canvas {
  Raster8 r;
  Canvas(int w, int h) : r{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 255)} {}
  void set(int x, int y, std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    if (x < 0 || y < 0 || x >= r.width || y >= r.height) return;
    auto* p = &r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3];
    p[0] = cr;
    p[1] = cg;
    p[2] = cb;
  }
  void text(int x, int y, const std::string& s) {
    for (char ch : s) {
      const Glyph g = glyph(ch);
      for (int row = 0; row < kGlyphH; ++row)
        for (int col = 0; col < kGlyphW; ++col)
          if (g[row] & (0x10 >> col)) set(x + col, y + row, 0, 0, 0);
      x += kAdvance;
    }
  }
  void image(int x0, int y0, const ImageTensor& img, int scale) {
    const ImageTensor u = img.with_range(RangeTag::unit);
    for (int y = 0; y < u.height(); ++y)
      for (int x = 0; x < u.width(); ++x) {
        std::uint8_t c[3];
        for (int ch = 0; ch < 3; ++ch)
          c[ch] = static_cast<std::uint8_t>(std::lround(255.0 * u.at(u.channels() == 3 ? ch : 0, y, x)));
        for (int sy = 0; sy < scale; ++sy)
          for (int sx = 0; sx < scale; ++sx) set(x0 + x * scale + sx, y0 + y * scale + sy, c[0], c[1], c[2]);
      }
  }
};

}  // namespace

AnomalyMask mask_boundary(const AnomalyMask& mask) {
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> out(mask.values().size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = (y > 0 && !mask.at(y - 1, x)) || (y + 1 < h && !mask.at(y + 1, x)) ||
                        (x > 0 && !mask.at(y, x - 1)) || (x + 1 < w && !mask.at(y, x + 1));
      out[static_cast<std::size_t>(y) * w + x] = edge ? 1 : 0;
    }
  return AnomalyMask(h, w, std::move(out));
}

ImageTensor overlay_boundary(const ImageTensor& image, const AnomalyMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width())
    throw ArgumentError("overlay mask does not match the image size");
  const ImageTensor u = image.with_range(RangeTag::unit);
  Tensor rgb(3, u.height(), u.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < u.height(); ++y)
      for (int x = 0; x < u.width(); ++x) rgb.at(c, y, x) = u.at(u.channels() == 3 ? c : 0, y, x);
  const AnomalyMask edge = mask_boundary(mask);
  for (int y = 0; y < u.height(); ++y)
    for (int x = 0; x < u.width(); ++x)
      if (edge.at(y, x)) {
        rgb.at(0, y, x) = 1.0;
        rgb.at(1, y, x) = 0.0;
        rgb.at(2, y, x) = 0.0;
      }
  return ImageTensor(std::move(rgb));
}

ImageTensor score_map_image(const AnomalyScoreMap& map, bool normalize) {
  double scale = 1.0;
  if (normalize) {
    const double mx = *std::max_element(map.values().begin(), map.values().end());
    if (mx > 0.0) scale = 1.0 / mx;
  }
  Tensor t(1, map.height(), map.width());
  for (std::size_t i = 0; i < map.size(); ++i) t[i] = std::min(1.0, map.values()[i] * scale);
  return ImageTensor::clamped(std::move(t));
}

Raster8 render_grid(const std::vector<GridRow>& rows, const std::vector<std::string>& column_labels,
                    const GridLayout& layout) {
  if (rows.empty()) throw ArgumentError("render_grid: no rows");
  if (layout.padding < 0 || layout.scale < 1 || layout.label_width < 0) throw ArgumentError("render_grid: bad layout");
  std::size_t columns = column_labels.size();
  for (const auto& r : rows) {
    if (r.cells.empty()) throw ArgumentError("render_grid: empty row '" + r.label + "'");
    columns = std::max(columns, r.cells.size());
  }
  std::vector<int> col_w(columns, 0);
  std::vector<int> row_h(rows.size(), 0);
  int label_w = layout.label_width;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const int h = r.cells.front().image.height();
    for (std::size_t j = 0; j < r.cells.size(); ++j) {
      const auto& cell = r.cells[j];
      if (cell.image.height() != h) throw ArgumentError("render_grid: images in row '" + r.label + "' differ in height");
      if (cell.highlight) {
        if (!r.mask) throw ArgumentError("render_grid: highlighted cell without a row mask");
        if (r.mask->height() != cell.image.height() || r.mask->width() != cell.image.width())
          throw ArgumentError("render_grid: row mask does not match a highlighted cell");
      }
      col_w[j] = std::max(col_w[j], cell.image.width() * layout.scale);
    }
    row_h[i] = std::max(h * layout.scale, kGlyphH);
    if (layout.label_width == 0) label_w = std::max(label_w, text_width(r.label));
  }
  for (std::size_t j = 0; j < column_labels.size(); ++j) col_w[j] = std::max(col_w[j], text_width(column_labels[j]));

  const int pad = layout.padding;
  const int left = label_w > 0 ? label_w + pad : 0;
  const int top = column_labels.empty() ? 0 : kGlyphH + pad;
  int width = pad + left, height = pad + top;
  for (int w : col_w) width += w + pad;
  for (int h : row_h) height += h + pad;

  Canvas canvas(width, height);
  int x = pad + left;
  for (std::size_t j = 0; j < column_labels.size(); ++j) {
    canvas.text(x, pad, column_labels[j]);
    x += col_w[j] + pad;
  }
  int y = pad + top;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.label.empty()) canvas.text(pad, y + (row_h[i] - kGlyphH) / 2, r.label);
    x = pad + left;
    for (std::size_t j = 0; j < r.cells.size(); ++j) {
      const auto& cell = r.cells[j];
      canvas.image(x, y, cell.highlight ? overlay_boundary(cell.image, *r.mask) : cell.image, layout.scale);
      x += col_w[j] + pad;
    }
    y += row_h[i] + pad;
  }
  return canvas.r;
}

}  // namespace fbst
