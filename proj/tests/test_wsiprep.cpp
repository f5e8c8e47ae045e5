#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mmem/error.hpp"
#include "mmem/wsiprep.hpp"
#include "oracles.hpp"

using namespace mmem;

namespace {

BinaryGrid random_grid(int w, int h, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  BinaryGrid g(w, h);
  for (auto& v : g.bits) v = b(rng) ? 1 : 0;
  return g;
}

TissueMask full_mask(int w, int h, std::uint8_t v) {
  TissueMask m;
  m.grid = BinaryGrid(w, h, v);
  return m;
}

}  // namespace

TEST(Saturation, Examples) {
  RgbImage img(4, 1);
  img.fill_rect(0, 0, 1, 1, {255, 0, 0});
  img.fill_rect(1, 0, 1, 1, {255, 255, 255});
  img.fill_rect(2, 0, 1, 1, {0, 0, 0});
  img.fill_rect(3, 0, 1, 1, {200, 100, 100});
  const auto s = saturation_channel(img);
  EXPECT_EQ(s, (std::vector<std::uint8_t>{255, 0, 0, 128}));
}

TEST(Otsu, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::uint8_t> v(1 + rng() % 500);
    const int a = static_cast<int>(rng() % 256), b = static_cast<int>(rng() % 256);
    std::normal_distribution<double> za(a, 10.0), zb(b, 25.0);
    for (auto& x : v) {
      const double d = rng() % 2 ? za(rng) : zb(rng);
      x = static_cast<std::uint8_t>(std::clamp(d, 0.0, 255.0));
    }
    EXPECT_EQ(otsu_threshold(v), oracle::otsu(v));
  }
}

TEST(Otsu, ConstantAndBimodal) {
  EXPECT_EQ(otsu_threshold(std::vector<std::uint8_t>(10, 77)), 0);
  std::vector<std::uint8_t> v(100, 0);
  std::fill(v.begin() + 50, v.end(), 255);
  EXPECT_EQ(otsu_threshold(v), oracle::otsu(v));
  EXPECT_LT(otsu_threshold(v), 255);
}

TEST(MorphClose, MatchesDirectScanOracle) {
  std::mt19937_64 rng(2);
  for (int size : {1, 2, 3, 4, 5}) {
    for (int rep = 0; rep < 20; ++rep) {
      const int w = 1 + static_cast<int>(rng() % 25), h = 1 + static_cast<int>(rng() % 25);
      const auto g = random_grid(w, h, 0.4, rng);
      EXPECT_EQ(morph_close(g, size).bits, oracle::closing(g.bits, w, h, size)) << size;
    }
  }
}

TEST(MorphClose, FillsSinglePixelHole) {
  BinaryGrid g(10, 10, 1);
  g(5, 5) = 0;
  const auto c = morph_close(g, 4);
  EXPECT_EQ(c.count(), 100u);
  EXPECT_EQ(c.bits, oracle::closing(g.bits, 10, 10, 4));
}

TEST(FillHoles, AreaThresholdAndBorder) {
  BinaryGrid g(40, 40, 0);
  for (int y = 5; y < 35; ++y) {
    for (int x = 5; x < 35; ++x) g(x, y) = 1;
  }
  // 3x3 hole (9 < 10) and 4x4 hole (16 >= 10).
  for (int y = 8; y < 11; ++y) {
    for (int x = 8; x < 11; ++x) g(x, y) = 0;
  }
  for (int y = 20; y < 24; ++y) {
    for (int x = 20; x < 24; ++x) g(x, y) = 0;
  }
  const auto f = fill_holes(g, 10);
  EXPECT_EQ(f(9, 9), 1);
  EXPECT_EQ(f(21, 21), 0);
  EXPECT_EQ(f(0, 0), 0);
}

TEST(FillHoles, DiagonalGapKeepsHoleSeparate) {
  // A hole touching the outside only through a diagonal is still a hole under
  // 4-connectivity.
  BinaryGrid g(5, 5, 1);
  g(0, 0) = 0;
  g(1, 1) = 0;
  const auto f = fill_holes(g, 4);
  EXPECT_EQ(f(1, 1), 1);
  EXPECT_EQ(f(0, 0), 0);
}

TEST(RemoveSmallComponents, EightConnectivity) {
  BinaryGrid g(20, 20, 0);
  // Diagonal chain of 5 pixels is one component.
  for (int i = 0; i < 5; ++i) g(i, i) = 1;
  g(15, 15) = 1;
  const auto r = remove_small_components(g, 5);
  EXPECT_EQ(r.count(), 5u);
  EXPECT_EQ(r(15, 15), 0);
}

TEST(TissueMask, WhiteImageIsEmpty) {
  const auto m = tissue_mask(RgbImage(300, 300));
  EXPECT_EQ(m.grid.count(), 0u);
}

TEST(TissueMask, HalfRedHalfWhite) {
  RgbImage img(600, 400);
  img.fill_rect(0, 0, 300, 400, {255, 0, 0});
  const auto m = tissue_mask(img);
  std::vector<std::uint8_t> sat = saturation_channel(img);
  EXPECT_EQ(m.threshold_used, oracle::otsu(sat));
  long mismatched_outside_band = 0;
  for (int y = 0; y < 400; ++y) {
    for (int x = 0; x < 600; ++x) {
      if (std::abs(x - 300) <= 7) continue;
      if (m.grid(x, y) != (x < 300 ? 1 : 0)) ++mismatched_outside_band;
    }
  }
  EXPECT_EQ(mismatched_outside_band, 0);
}

TEST(TissueMask, ManualThresholdOverridesOtsu) {
  RgbImage img(300, 300);
  img.fill_rect(0, 0, 300, 300, {200, 150, 150});  // saturation 64
  TissueMaskOptions opt;
  opt.manual_threshold = 100;
  EXPECT_EQ(tissue_mask(img, opt).grid.count(), 0u);
  opt.manual_threshold = 10;
  EXPECT_EQ(tissue_mask(img, opt).grid.count(), 300u * 300u);
}

TEST(ExtractTiles, FullMaskGivesFourTiles) {
  const auto t = extract_tiles(full_mask(1200, 1200, 1));
  EXPECT_EQ(t.coords, (std::vector<std::pair<int, int>>{{0, 0}, {512, 0}, {0, 512}, {512, 512}}));
  EXPECT_EQ(extract_tiles(full_mask(1200, 1200, 0)).coords.size(), 0u);
}

TEST(ExtractTiles, HalfCoveredTileIsKept) {
  TissueMask m = full_mask(512, 512, 0);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 512; ++x) m.grid(x, y) = 1;
  }
  auto t = extract_tiles(m);
  ASSERT_EQ(t.coords.size(), 1u);
  EXPECT_EQ(t.tissue_fraction[0], 0.5);
  m.grid(0, 0) = 0;
  EXPECT_TRUE(extract_tiles(m).coords.empty());
}

TEST(ResizeTile, ConstantIsExact) {
  const RgbImage tile(512, 512, {17, 200, 93});
  const auto r = resize_tile(tile);
  ASSERT_EQ(r.width, 224);
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      EXPECT_EQ(r.at(x, y)[0], 17);
      EXPECT_EQ(r.at(x, y)[1], 200);
      EXPECT_EQ(r.at(x, y)[2], 93);
    }
  }
}

TEST(ResizeTile, HalfBlackHalfWhite) {
  for (int split : {256, 255}) {
    RgbImage tile(512, 512);
    tile.fill_rect(0, 0, split, 512, {0, 0, 0});
    const auto r = resize_tile(tile);
    bool intermediate = false;
    for (int x = 0; x < 224; ++x) {
      const int v = r.at(x, 100)[0];
      const double lo = x * 512.0 / 224, hi = (x + 1) * 512.0 / 224;
      if (hi <= split) EXPECT_LE(v, 8);
      if (lo >= split) EXPECT_GE(v, 247);
      if (v > 8 && v < 247) intermediate = true;
    }
    // A split at 256 lands on an output pixel boundary (256 = 112 * 512/224).
    EXPECT_EQ(intermediate, split == 255);
  }
}

TEST(ResizeTile, MatchesAreaOverlapOracle) {
  std::mt19937_64 rng(3);
  RgbImage tile(512, 512);
  for (auto& p : tile.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  const auto r = resize_tile(tile);
  for (int c = 0; c < 3; ++c) {
    std::vector<std::uint8_t> ch(512 * 512);
    for (int i = 0; i < 512 * 512; ++i) ch[static_cast<std::size_t>(i)] = tile.pixels[static_cast<std::size_t>(i) * 3 + c];
    const auto ref = oracle::area_resize(ch, 512, 224);
    int worst = 0;
    for (int i = 0; i < 224 * 224; ++i) {
      worst = std::max(worst, std::abs(int{r.pixels[static_cast<std::size_t>(i) * 3 + c]} - int{ref[static_cast<std::size_t>(i)]}));
    }
    EXPECT_EQ(worst, 0) << c;
  }
}

TEST(ResizeTile, WrongSizeRaises) { EXPECT_THROW(resize_tile(RgbImage(500, 512)), PreconditionError); }

TEST(ImageIo, PngRoundTripAndCorruptInput) {
  const auto dir = std::filesystem::temp_directory_path() / "mmem_wsi_io";
  std::filesystem::create_directories(dir);
  RgbImage img(7, 5);
  img.fill_rect(1, 1, 3, 2, {12, 34, 56});
  write_png(dir / "a.png", img);
  const auto back = read_image(dir / "a.png");
  EXPECT_EQ(back.pixels, img.pixels);
  std::ofstream(dir / "bad.png") << "not an image";
  EXPECT_THROW(read_image(dir / "bad.png"), DataError);
  EXPECT_THROW(read_image(dir / "missing.png"), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, Deterministic) {
  RgbImage img(700, 700);
  img.fill_rect(50, 60, 500, 520, {180, 60, 120});
  const auto a = extract_tiles(tissue_mask(img));
  const auto b = extract_tiles(tissue_mask(img));
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_EQ(a.tissue_fraction, b.tissue_fraction);
}
