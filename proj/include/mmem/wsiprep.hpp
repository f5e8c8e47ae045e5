#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace mmem {

// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  RgbImage() = default;
  RgbImage(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255});

  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  void fill_rect(int x0, int y0, int w, int h, std::array<std::uint8_t, 3> rgb);
  RgbImage crop(int x0, int y0, int w, int h) const;
};

// Row-major binary grid.
struct BinaryGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BinaryGrid() = default;
  BinaryGrid(int w, int h, std::uint8_t v = 0) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, v) {}
  std::uint8_t& operator()(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t operator()(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

struct TissueMask {
  BinaryGrid grid;
  int threshold_used = 0;

  int width() const { return grid.width; }
  int height() const { return grid.height; }
};

struct TissueMaskOptions {
  std::optional<int> manual_threshold;
  int median_kernel = 7;
  int close_size = 4;
  long max_hole_area = 16 * 16;       // holes smaller than this are filled
  long min_component_area = 64 * 64;  // components smaller than this are removed
};

struct TileSet {
  int tile_size = 512;
  std::vector<std::pair<int, int>> coords;  // top-left (x, y)
  std::vector<double> tissue_fraction;
  int threshold_used = 0;
};

// HSV saturation scaled to [0, 255]: (max - min) / max * 255, 0 for black.
std::vector<std::uint8_t> saturation_channel(const RgbImage& image);

// Level t maximising the between-class variance of {<= t} vs {> t}; the
// smallest such level on ties. Returns 0 for a constant image.
int otsu_threshold(const std::vector<std::uint8_t>& values);

// Closing with a size x size square: dilation over offsets
// [-size/2, size - 1 - size/2], then erosion by the reflected square, so an
// even-sized element does not shift the result. Pixels outside the grid
// count as background for dilation and foreground for erosion.
BinaryGrid morph_close(const BinaryGrid& g, int size);

// Fills background regions not connected (4-neighbourhood) to the border
// whose area is below max_area.
BinaryGrid fill_holes(const BinaryGrid& g, long max_area);

// Removes foreground components (8-neighbourhood) with area below min_area.
BinaryGrid remove_small_components(const BinaryGrid& g, long min_area);

BinaryGrid median_blur(const BinaryGrid& g, int kernel);

TissueMask tissue_mask(const RgbImage& image, const TissueMaskOptions& options = {});

TileSet extract_tiles(const TissueMask& mask, double min_tissue_fraction = 0.5, int tile_size = 512);

// 512x512 -> 224x224 by area-weighted averaging, rounded half up.
RgbImage resize_tile(const RgbImage& tile, int out_size = 224);

RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace mmem
