#include "mmem/wsiprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/Dense>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mmem/error.hpp"

namespace mmem {

RgbImage::RgbImage(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw PreconditionError("image dimensions must be non-negative");
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) std::copy(fill.begin(), fill.end(), pixels.begin() + i);
}

void RgbImage::fill_rect(int x0, int y0, int w, int h, std::array<std::uint8_t, 3> rgb) {
  for (int y = std::max(0, y0); y < std::min(height, y0 + h); ++y) {
    for (int x = std::max(0, x0); x < std::min(width, x0 + w); ++x) std::copy(rgb.begin(), rgb.end(), at(x, y));
  }
}

RgbImage RgbImage::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || x0 + w > width || y0 + h > height) throw PreconditionError("crop outside image");
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) std::copy_n(at(x0, y0 + y), static_cast<std::size_t>(w) * 3, out.at(0, y));
  return out;
}

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> saturation_channel(const RgbImage& image) {
  std::vector<std::uint8_t> s(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::uint8_t* p = &image.pixels[i * 3];
    const int mx = std::max({p[0], p[1], p[2]});
    const int mn = std::min({p[0], p[1], p[2]});
    s[i] = mx == 0 ? 0 : static_cast<std::uint8_t>((255 * (mx - mn) + mx / 2) / mx);
  }
  return s;
}

int otsu_threshold(const std::vector<std::uint8_t>& values) {
  std::array<double, 256> hist{};
  for (auto v : values) hist[v] += 1.0;
  const double n = static_cast<double>(values.size());
  double total = 0.0;
  for (int i = 0; i < 256; ++i) total += i * hist[i];
  double n0 = 0.0, s0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[t];
    s0 += t * hist[t];
    const double n1 = n - n0;
    if (n0 == 0.0 || n1 == 0.0) continue;
    const double diff = s0 / n0 - (total - s0) / n1;
    const double between = n0 * n1 * diff * diff;
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

// Running extreme along one axis over offsets [lo, hi]; out-of-range cells
// read as `border`.
BinaryGrid sweep(const BinaryGrid& g, int lo, int hi, bool horizontal, bool take_max, std::uint8_t border) {
  BinaryGrid out(g.width, g.height);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      std::uint8_t acc = take_max ? 0 : 1;
      for (int d = lo; d <= hi; ++d) {
        const int xx = horizontal ? x + d : x;
        const int yy = horizontal ? y : y + d;
        const bool inside = xx >= 0 && yy >= 0 && xx < g.width && yy < g.height;
        const std::uint8_t v = inside ? g(xx, yy) : border;
        acc = take_max ? std::max(acc, v) : std::min(acc, v);
      }
      out(x, y) = acc;
    }
  }
  return out;
}

cv::Mat as_mat(const BinaryGrid& g) {
  return cv::Mat(g.height, g.width, CV_8UC1, const_cast<std::uint8_t*>(g.bits.data())).clone();
}

BinaryGrid from_mat(const cv::Mat& m) {
  BinaryGrid g(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) std::copy_n(m.ptr<std::uint8_t>(y), m.cols, &g(0, y));
  return g;
}

// Rewrites every component of (g == value) for which drop(area,
// touches_border) holds to the opposite value.
template <typename Pred>
BinaryGrid flip_components(const BinaryGrid& g, std::uint8_t value, int connectivity, Pred drop) {
  BinaryGrid out = g;
  if (g.bits.empty()) return out;
  cv::Mat src = as_mat(g);
  if (value == 0) src = 1 - src;
  cv::Mat labels, stats, centroids;
  const int n = cv::connectedComponentsWithStats(src, labels, stats, centroids, connectivity, CV_32S);
  std::vector<char> flip(static_cast<std::size_t>(n), 0);
  for (int l = 1; l < n; ++l) {
    const int left = stats.at<int>(l, cv::CC_STAT_LEFT);
    const int top = stats.at<int>(l, cv::CC_STAT_TOP);
    const int w = stats.at<int>(l, cv::CC_STAT_WIDTH);
    const int h = stats.at<int>(l, cv::CC_STAT_HEIGHT);
    const bool border = left == 0 || top == 0 || left + w == g.width || top + h == g.height;
    flip[static_cast<std::size_t>(l)] = drop(static_cast<long>(stats.at<int>(l, cv::CC_STAT_AREA)), border);
  }
  for (int y = 0; y < g.height; ++y) {
    const int* row = labels.ptr<int>(y);
    for (int x = 0; x < g.width; ++x) {
      if (flip[static_cast<std::size_t>(row[x])]) out(x, y) = value ? 0 : 1;
    }
  }
  return out;
}

}  // namespace

BinaryGrid morph_close(const BinaryGrid& g, int size) {
  if (size < 1) throw PreconditionError("morph_close: element size must be >= 1");
  const int lo = -(size / 2);
  const int hi = size - 1 - size / 2;
  BinaryGrid d = sweep(sweep(g, lo, hi, true, true, 0), lo, hi, false, true, 0);
  return sweep(sweep(d, -hi, -lo, true, false, 1), -hi, -lo, false, false, 1);
}

BinaryGrid fill_holes(const BinaryGrid& g, long max_area) {
  return flip_components(g, 0, 4, [&](long area, bool border) { return !border && area < max_area; });
}

BinaryGrid remove_small_components(const BinaryGrid& g, long min_area) {
  return flip_components(g, 1, 8, [&](long area, bool) { return area < min_area; });
}

BinaryGrid median_blur(const BinaryGrid& g, int kernel) {
  if (g.bits.empty() || kernel <= 1) return g;
  cv::Mat dst;
  cv::medianBlur(as_mat(g), dst, kernel);
  return from_mat(dst);
}

TissueMask tissue_mask(const RgbImage& image, const TissueMaskOptions& options) {
  if (image.width < 1 || image.height < 1) throw PreconditionError("tissue_mask: empty image");
  const auto sat = saturation_channel(image);
  TissueMask mask;
  mask.threshold_used = options.manual_threshold ? *options.manual_threshold : otsu_threshold(sat);
  BinaryGrid g(image.width, image.height);
  for (std::size_t i = 0; i < sat.size(); ++i) g.bits[i] = sat[i] > mask.threshold_used ? 1 : 0;
  g = median_blur(g, options.median_kernel);
  g = morph_close(g, options.close_size);
  g = fill_holes(g, options.max_hole_area);
  mask.grid = remove_small_components(g, options.min_component_area);
  return mask;
}

TileSet extract_tiles(const TissueMask& mask, double min_tissue_fraction, int tile_size) {
  if (tile_size < 1) throw PreconditionError("extract_tiles: tile size must be >= 1");
  TileSet set;
  set.tile_size = tile_size;
  set.threshold_used = mask.threshold_used;
  const int w = mask.width(), h = mask.height();
  // Summed-area table with a zero first row and column.
  std::vector<long> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto S = [&](int x, int y) -> long& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) S(x + 1, y + 1) = mask.grid(x, y) + S(x, y + 1) + S(x + 1, y) - S(x, y);
  }
  const double area = static_cast<double>(tile_size) * tile_size;
  for (int y = 0; y + tile_size <= h; y += tile_size) {
    for (int x = 0; x + tile_size <= w; x += tile_size) {
      const long c = S(x + tile_size, y + tile_size) - S(x, y + tile_size) - S(x + tile_size, y) + S(x, y);
      const double frac = static_cast<double>(c) / area;
      if (frac >= min_tissue_fraction) {
        set.coords.emplace_back(x, y);
        set.tissue_fraction.push_back(frac);
      }
    }
  }
  return set;
}

namespace {

// Row i holds the overlap of output cell i with each input cell, in units
// where an input cell is `out` long and an output cell `in` long, so every
// entry is an integer and each row sums to `in`.
Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> area_weights(int in, int out) {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> w =
      Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(out, in);
  for (int i = 0; i < out; ++i) {
    const std::int64_t a = std::int64_t{i} * in, b = std::int64_t{i + 1} * in;
    for (int j = static_cast<int>(a / out); j < in && std::int64_t{j} * out < b; ++j) {
      w(i, j) = std::max<std::int64_t>(0, std::min<std::int64_t>(b, std::int64_t{j + 1} * out) -
                                              std::max<std::int64_t>(a, std::int64_t{j} * out));
    }
  }
  return w;
}

}  // namespace

RgbImage resize_tile(const RgbImage& tile, int out_size) {
  if (tile.width != 512 || tile.height != 512) {
    throw PreconditionError("resize_tile: expected a 512x512 tile, got " + std::to_string(tile.width) + "x" +
                            std::to_string(tile.height));
  }
  if (out_size < 1 || out_size > 512) throw PreconditionError("resize_tile: output size must be in [1, 512]");
  // Exact integer sums make the half-up rounding exact.
  const auto w = area_weights(512, out_size);
  const std::int64_t area = std::int64_t{512} * 512;
  RgbImage out(out_size, out_size);
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> channel(512, 512);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 512; ++y) {
      for (int x = 0; x < 512; ++x) channel(y, x) = tile.at(x, y)[c];
    }
    const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> r = w * channel * w.transpose();
    for (int y = 0; y < out_size; ++y) {
      for (int x = 0; x < out_size; ++x) {
        out.at(x, y)[c] = static_cast<std::uint8_t>((2 * r(y, x) + area) / (2 * area));
      }
    }
  }
  return out;
}

RgbImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DataError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  RgbImage img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      std::uint8_t* p = img.at(x, y);
      p[0] = row[x][2];
      p[1] = row[x][1];
      p[2] = row[x][0];
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.at(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

}  // namespace mmem
