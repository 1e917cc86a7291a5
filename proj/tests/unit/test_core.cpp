#include "fbst/core/dataset.hpp"
#include "fbst/core/image.hpp"
#include "fbst/core/png_io.hpp"
#include "fbst/core/synthetic.hpp"
#include "fbst/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace fbst;
using fbst::test::TempDir;

TEST_CASE("ImageTensor enforces channel, size and range invariants") {
  CHECK_THROWS_AS(ImageTensor(Tensor(2, 8, 8)), ArgumentError);
  CHECK_THROWS_AS(ImageTensor(Tensor(3, 7, 8)), ArgumentError);
  CHECK_THROWS_AS(ImageTensor(Tensor(3, 8, 8, 1.5)), ArgumentError);
  CHECK_THROWS_AS(ImageTensor(Tensor(3, 8, 8, -0.5), RangeTag::unit), ArgumentError);
  CHECK_NOTHROW(ImageTensor(Tensor(3, 8, 8, -0.5), RangeTag::signed_unit));
  CHECK_NOTHROW(ImageTensor(Tensor(1, 8, 9, 1.0)));
}

TEST_CASE("unit and signed range conversions are inverses") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageTensor img(test::random_tensor(3, 9, 12, rng));
    const ImageTensor back = img.to_signed().to_unit();
    CHECK(max_abs_diff(back.tensor(), img.tensor()) <= 1e-7);
    CHECK(img.to_signed().range() == RangeTag::signed_unit);
    const ImageTensor s(test::random_tensor(3, 8, 8, rng, -1.0, 1.0), RangeTag::signed_unit);
    CHECK(max_abs_diff(s.to_unit().to_signed().tensor(), s.tensor()) <= 1e-7);
  }
}

TEST_CASE("AnomalyMask accepts only binary values") {
  CHECK_THROWS_AS(AnomalyMask(2, 2, {0, 1, 2, 0}), ArgumentError);
  CHECK_THROWS_AS(AnomalyMask(2, 2, {0, 1, 1}), ArgumentError);
  const AnomalyMask m(2, 2, {0, 1, 1, 0});
  CHECK(m.count() == 2);
  CHECK(m.has_both_classes());
  CHECK_FALSE(AnomalyMask::zeros(3, 3).has_both_classes());
}

TEST_CASE("SceneRecord rejects mask/image size mismatch") {
  CHECK_THROWS_AS(SceneRecord("a", ImageTensor::filled(3, 16, 16, 0.5), AnomalyMask::zeros(8, 8)), ArgumentError);
}

TEST_CASE("resize") {
  SUBCASE("same size is the identity") {
    Rng rng(3);
    const ImageTensor img(test::random_tensor(3, 64, 64, rng));
    CHECK(resize(img, 64, 64) == img);
  }
  SUBCASE("constant image stays constant") {
    const ImageTensor img = ImageTensor::filled(3, 20, 30, 0.5);
    for (auto [h, w] : {std::pair{8, 8}, std::pair{41, 17}, std::pair{64, 64}}) {
      const ImageTensor r = resize(img, h, w);
      CHECK(r.height() == h);
      CHECK(r.width() == w);
      for (double v : r.tensor().values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
  SUBCASE("2x2 -> 2x4 matches a hand-computed bilinear oracle") {
    // rows [0, 1]; output column j samples source x = (j + 0.5) * 2/4 - 0.5
    // -> -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1)
    const Tensor src(Shape{1, 2, 2}, {0.0, 1.0, 0.0, 1.0});
    const Tensor out = resize_bilinear(src, 2, 4);
    const double expected[4] = {0.0, 0.25, 0.75, 1.0};
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == doctest::Approx(expected[x]).epsilon(1e-15));
    // the two midpoint columns straddle the source midpoint symmetrically
    CHECK(0.5 * (out.at(0, 0, 1) + out.at(0, 0, 2)) == doctest::Approx(0.5));
  }
  SUBCASE("range is preserved") {
    Rng rng(8);
    const ImageTensor img(test::random_tensor(3, 13, 17, rng));
    const ImageTensor r = resize(img, 31, 9);
    for (double v : r.tensor().values()) CHECK((v >= 0.0 && v <= 1.0));
  }
  SUBCASE("invalid targets") {
    const ImageTensor img = ImageTensor::filled(3, 8, 8, 0.2);
    CHECK_THROWS_AS(resize(img, 0, 8), ArgumentError);
    CHECK_THROWS_AS(resize(img, 8, -3), ArgumentError);
  }
}

TEST_CASE("PNG round trips") {
  TempDir dir("png");
  Rng rng(5);
  Raster8 r{13, 9, 3, {}};
  r.pixels.resize(13 * 9 * 3);
  for (auto& p : r.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  write_png(dir / "a.png", r);
  const Raster8 back = read_png(dir / "a.png", 3);
  CHECK(back.width == 13);
  CHECK(back.height == 9);
  CHECK(back.pixels == r.pixels);

  // float image: one trip quantizes (<= 1/255 after rounding), the second is lossless
  const ImageTensor img(test::random_tensor(3, 10, 12, rng));
  save_image(dir / "b.png", img);
  const ImageTensor once = load_image(dir / "b.png");
  CHECK(max_abs_diff(once.tensor(), img.tensor()) <= 0.5 / 255.0 + 1e-12);
  save_image(dir / "c.png", once);
  CHECK(load_image(dir / "c.png") == once);

  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  CHECK_THROWS_AS(read_png(dir / "junk.png"), IoError);
}

namespace {

void write_scene(const std::filesystem::path& root, const std::string& id, int h, int w, int mh, int mw,
                 bool mask_all = false) {
  Raster8 img{w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 100)};
  write_png(root / "images" / (id + ".png"), img);
  if (mh > 0) {
    Raster8 m{mw, mh, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(mw) * mh, 0)};
    if (mask_all)
      std::fill(m.pixels.begin(), m.pixels.end(), 255);
    else
      m.pixels[0] = 255;
    write_png(root / "masks" / (id + ".png"), m);
  }
}

}  // namespace

TEST_CASE("load_dataset flat layout") {
  TempDir dir("ds");
  write_scene(dir.path(), "c", 16, 16, 16, 16);
  write_scene(dir.path(), "a", 16, 16, 16, 16, true);
  write_scene(dir.path(), "b", 16, 16, 16, 16);

  SUBCASE("three pairs load sorted with binary masks") {
    const Dataset ds = load_dataset(dir.path(), DatasetLayout::flat);
    REQUIRE(ds.records.size() == 3);
    CHECK(ds.records[0].scene_id == "a");
    CHECK(ds.records[2].scene_id == "c");
    for (const auto& r : ds.records) {
      REQUIRE(r.mask.has_value());
      for (auto v : r.mask->values()) CHECK((v == 0 || v == 1));
      CHECK(r.image.tensor().at(0, 0, 0) == doctest::Approx(100.0 / 255.0));
    }
    CHECK(ds.records[0].mask->count() == 16 * 16);
    CHECK(ds.records[1].mask->count() == 1);
    CHECK(ds.summary.loaded == 3);
    CHECK(ds.summary.files_scanned == 3);
  }

  SUBCASE("size mismatch is a per-record error, unreadable files are skipped") {
    write_scene(dir.path(), "d", 64, 64, 32, 32);
    std::ofstream(dir / "images/e.png") << "garbage";
    write_scene(dir.path(), "f", 16, 16, 0, 0);  // no mask
    const Dataset ds = load_dataset(dir.path(), DatasetLayout::flat, 3);
    CHECK(ds.records.size() == 4);
    REQUIRE(ds.summary.errors.size() == 1);
    CHECK(ds.summary.errors[0].scene_id == "d");
    CHECK(ds.summary.warnings.size() == 1);
    CHECK(ds.summary.loaded + ds.summary.skipped == ds.summary.files_scanned);
    CHECK(ds.summary.files_scanned == 6);
    CHECK_FALSE(ds.records.back().mask.has_value());
  }

  SUBCASE("missing root is a config error") {
    CHECK_THROWS_AS(load_dataset(dir / "nope", DatasetLayout::flat), ConfigError);
  }
}

TEST_CASE("load_dataset cityscapes_like layout") {
  TempDir dir("cs");
  const auto root = dir.path();
  Raster8 img{16, 16, 3, std::vector<std::uint8_t>(16 * 16 * 3, 7)};
  Raster8 m{16, 16, 1, std::vector<std::uint8_t>(16 * 16, 0)};
  m.pixels[5] = 255;
  write_png(root / "leftImg8bit/val/berlin/berlin_000001_leftImg8bit.png", img);
  write_png(root / "masks/val/berlin/berlin_000001_leftImg8bit.png", m);
  write_png(root / "leftImg8bit/train/bonn/bonn_000002_leftImg8bit.png", img);
  const Dataset ds = load_dataset(root, DatasetLayout::cityscapes_like);
  REQUIRE(ds.records.size() == 2);
  CHECK(ds.records[0].scene_id == "berlin_000001");
  CHECK(ds.records[0].split == SplitTag::eval);
  REQUIRE(ds.records[0].mask.has_value());
  CHECK(ds.records[0].mask->count() == 1);
  CHECK(ds.records[1].scene_id == "bonn_000002");
  CHECK(ds.records[1].split == SplitTag::train);
}

TEST_CASE("synthesize_scene") {
  SUBCASE("no anomaly requested -> empty mask") {
    const auto s = synthesize_scene({BasePattern::gradient, AnomalyShape::none, 0.05, 1});
    REQUIRE(s.mask.has_value());
    CHECK(s.mask->count() == 0);
  }
  SUBCASE("same seed is bit-identical") {
    const SyntheticSceneSpec spec{BasePattern::stripes, AnomalyShape::square, 0.05, 7};
    const auto a = synthesize_scene(spec);
    const auto b = synthesize_scene(spec);
    CHECK(a.image == b.image);
    CHECK(*a.mask == *b.mask);
  }
  SUBCASE("checker/disk/0.10/seed 3 fraction by pixel count") {
    const auto s = synthesize_scene({BasePattern::checker, AnomalyShape::disk, 0.10, 3});
    const double frac = static_cast<double>(s.mask->count()) / (64.0 * 64.0);
    CHECK(frac >= 0.08);
    CHECK(frac <= 0.12);
  }
  SUBCASE("fraction out of range") {
    CHECK_THROWS_AS(synthesize_scene({BasePattern::checker, AnomalyShape::disk, 0.0, 3}), ArgumentError);
    CHECK_THROWS_AS(synthesize_scene({BasePattern::checker, AnomalyShape::square, 0.25, 3}), ArgumentError);
  }
}

TEST_CASE("synthetic scenes: mask within 20% of target and anomaly visibly distinct") {
  const BasePattern bases[] = {BasePattern::gradient, BasePattern::stripes, BasePattern::checker};
  const AnomalyShape shapes[] = {AnomalyShape::square, AnomalyShape::disk};
  const double fractions[] = {0.01, 0.05, 0.1, 0.2};
  for (std::uint64_t seed = 0; seed < 8; ++seed)
    for (auto base : bases)
      for (auto shape : shapes)
        for (double f : fractions)
          for (auto [h, w] : {std::pair{64, 64}, std::pair{32, 48}}) {
            SyntheticSceneSpec spec{base, shape, f, seed, h, w};
            const auto scene = synthesize_scene(spec);
            const auto bg = render_base_pattern(spec);
            const double frac = scene.mask->fraction();
            CHECK(std::abs(frac - f) <= 0.2 * f);
            for (int y = 0; y < h; ++y)
              for (int x = 0; x < w; ++x) {
                if (!scene.mask->at(y, x)) {
                  for (int c = 0; c < 3; ++c) CHECK(scene.image.at(c, y, x) == bg.at(c, y, x));
                  continue;
                }
                double dev = 0.0;
                for (int c = 0; c < 3; ++c) dev = std::max(dev, std::abs(scene.image.at(c, y, x) - bg.at(c, y, x)));
                CHECK(dev >= 0.3);
              }
          }
}

TEST_CASE("synthesize_dataset") {
  const auto d = synthesize_dataset(10, 4, 32, 48, 0.2);
  REQUIRE(d.size() == 10);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i].scene_id == "synthetic_00" + std::to_string(i));
    CHECK(d[i].image.height() == 32);
    CHECK(d[i].image.width() == 48);
    REQUIRE(d[i].mask);
    CHECK(d[i].mask->has_both_classes());
    CHECK(d[i].split == (i >= 8 ? SplitTag::eval : SplitTag::train));
  }
  const auto again = synthesize_dataset(10, 4, 32, 48, 0.2);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i].image == again[i].image);
  CHECK_FALSE(synthesize_dataset(1, 5, 32, 48).front().image == d.front().image);
  CHECK(synthesize_dataset(3, 4, 32, 32, 0.0).back().split == SplitTag::train);
  CHECK_THROWS_AS(synthesize_dataset(0, 1), ArgumentError);
  CHECK_THROWS_AS(synthesize_dataset(3, 1, 64, 64, 1.5), ArgumentError);
}
