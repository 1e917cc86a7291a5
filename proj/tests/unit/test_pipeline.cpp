#include "fbst/core/png_io.hpp"
#include "fbst/core/synthetic.hpp"
#include "fbst/errors.hpp"
#include "fbst/pipeline/pipeline.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace fbst;
using fbst::test::TempDir;

namespace {

CycleGanArch small_arch() {
  CycleGanArch a;
  a.base_channels = 4;
  a.image_height = 32;
  a.image_width = 32;
  return a;
}

NSTParams quick_nst(int iterations = 20) {
  NSTParams p;
  p.iterations = iterations;
  p.extractor = ExtractorSpec::tiny(3);
  return p;
}

ImageTensor random_image(Rng& rng, int h = 16, int w = 16) { return ImageTensor(test::random_tensor(3, h, w, rng)); }

std::shared_ptr<const TranslationModel> untrained_model(std::uint64_t seed = 1) {
  return std::make_shared<const TranslationModel>(small_arch(), seed);
}

}  // namespace

TEST_CASE("difference_map") {
  Rng rng(1);
  const ImageTensor a = random_image(rng);
  const auto zero = difference_map(a, a);
  for (double v : zero.values()) CHECK(v == 0.0);

  const auto ones = difference_map(ImageTensor::filled(3, 16, 16, 1.0), ImageTensor::filled(3, 16, 16, 0.0));
  for (double v : ones.values()) CHECK(v == 1.0);

  for (int trial = 0; trial < 10; ++trial) {
    const ImageTensor x = random_image(rng), y = random_image(rng), z = random_image(rng);
    const auto dxy = difference_map(x, y), dyx = difference_map(y, x);
    const auto dyz = difference_map(y, z), dxz = difference_map(x, z);
    const auto sq = difference_map(x, y, DiffMetric::squared);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) {
        double abs_sum = 0.0, sq_sum = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
          const double d = x.at(ch, r, c) - y.at(ch, r, c);
          abs_sum += std::abs(d);
          sq_sum += d * d;
        }
        CHECK(std::abs(dxy.at(r, c) - abs_sum / 3) <= 1e-9);
        CHECK(std::abs(sq.at(r, c) - sq_sum / 3) <= 1e-9);
        CHECK(dxy.at(r, c) == dyx.at(r, c));
        CHECK(dxz.at(r, c) <= dxy.at(r, c) + dyz.at(r, c) + 1e-9);
      }
  }
  // signed inputs are compared in unit range
  const ImageTensor b = random_image(rng);
  const auto unit = difference_map(a, b);
  const auto mixed = difference_map(a.to_signed(), b);
  for (std::size_t i = 0; i < unit.size(); ++i) CHECK(std::abs(unit.values()[i] - mixed.values()[i]) <= 1e-12);

  CHECK_THROWS_AS(difference_map(a, random_image(rng, 16, 17)), ArgumentError);
  CHECK_THROWS_AS(difference_map(a, ImageTensor::filled(1, 16, 16, 0.0)), ArgumentError);
}

TEST_CASE("score maps and blur") {
  CHECK_THROWS_AS(AnomalyScoreMap(2, 2, {0, 0, 0}), ArgumentError);
  CHECK_THROWS_AS(AnomalyScoreMap(1, 2, {0.5, 1.5}), ArgumentError);
  CHECK_THROWS_AS(AnomalyScoreMap(1, 2, {0.5, std::nan("")}), ArgumentError);

  const AnomalyScoreMap impulse(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(box_blur(impulse, 0) == impulse);
  const auto b = box_blur(impulse, 1);
  CHECK(b.at(1, 1) == doctest::Approx(1.0 / 9));
  CHECK(b.at(0, 0) == doctest::Approx(1.0 / 4));
  CHECK(b.at(0, 1) == doctest::Approx(1.0 / 6));
  const AnomalyScoreMap flat(4, 5, std::vector<double>(20, 0.3));
  const auto blurred = box_blur(flat, 2);
  for (double v : blurred.values()) CHECK(v == doctest::Approx(0.3));
  CHECK_THROWS_AS(box_blur(flat, -1), ArgumentError);
}

TEST_CASE("backend choice validation") {
  const auto ok = BackendChoice::of(NstBackend{quick_nst()}, CycleGanBackend{untrained_model(), Direction::a_to_b});
  CHECK(ok.forward == BackendKind::nst);
  CHECK(ok.backward == BackendKind::cyclegan);
  CHECK_NOTHROW(BackendChoice::of(NstBackend{quick_nst()}, NstBackend{quick_nst()}));
  CHECK_NOTHROW(BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a},
                                  CycleGanBackend{untrained_model(), Direction::a_to_b}));

  BackendChoice bad = ok;
  bad.backward = BackendKind::nst;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  Rng rng(2);
  CHECK_THROWS_AS(backward_transfer(random_image(rng, 32, 32), bad), ArgumentError);
  CHECK_THROWS_AS(BackendChoice::of(IdentityBackend{}, CycleGanBackend{nullptr, Direction::a_to_b}), ArgumentError);
  NSTParams broken = quick_nst();
  broken.iterations = 0;
  CHECK_THROWS_AS(BackendChoice::of(NstBackend{broken}, IdentityBackend{}), ArgumentError);

  CHECK(parse_backend_kind("cyclegan") == BackendKind::cyclegan);
  CHECK_THROWS_AS(parse_backend_kind("pix2pix"), ArgumentError);
  const auto j = describe(ok);
  CHECK(j.at("forward").at("kind") == "nst");
  CHECK(j.at("backward").at("direction") == "a_to_b");
  CHECK(j.at("backward").at("seed") == 1);
}

TEST_CASE("forward and backward transfers") {
  Rng rng(3);
  const ImageTensor img = synthesize_scene({BasePattern::stripes, AnomalyShape::disk, 0.05, 4, 32, 32}).image;

  SUBCASE("NST with the input as its own style is a fixed point") {
    const auto self = BackendChoice::of(NstBackend{quick_nst()}, NstBackend{quick_nst()});
    const ImageTensor out = forward_transfer(img, self);
    CHECK(max_abs_diff(out.tensor(), img.tensor()) <= 1e-6);
    const ImageTensor back = backward_transfer(out, self);
    CHECK(max_abs_diff(back.tensor(), img.tensor()) <= 1e-6);
  }
  SUBCASE("NST at 1e5/1e5 moves the image toward the style") {
    const ImageTensor style = synthesize_style_image(8, 32, 32);
    NSTParams p = quick_nst(60);
    const auto choice = BackendChoice::of(NstBackend{p, style, "swirl"}, IdentityBackend{});
    const ImageTensor out = forward_transfer(img, choice);
    const FeatureExtractor fx(p.extractor);
    const auto& layers = p.extractor.style_layers;
    const GramMap grams = style_grams(fx.extract(style), layers);
    const LayerWeights w = uniform_layer_weights(layers);
    CHECK(style_loss(fx.extract(out), grams, w) < style_loss(fx.extract(img), grams, w));
  }
  SUBCASE("seeded untrained CycleGAN is deterministic and keeps the size") {
    const auto choice =
        BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a}, IdentityBackend{});
    const ImageTensor a = forward_transfer(img, choice);
    CHECK(a == forward_transfer(img, choice));
    const auto again = BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a}, IdentityBackend{});
    CHECK(a == forward_transfer(img, again));

    const ImageTensor odd = random_image(rng, 48, 40);
    const TransferResult r = apply_backend(odd, choice.forward_config);
    CHECK(r.image.height() == 48);
    CHECK(r.image.width() == 40);
    REQUIRE(r.resize);
    CHECK(r.resize->to_height == 32);
    CHECK(r.resize->from_width == 40);
    CHECK(!apply_backend(img, choice.forward_config).resize);
  }
  SUBCASE("backend errors carry the stage") {
    const auto choice =
        BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a}, IdentityBackend{});
    try {
      forward_transfer(ImageTensor::filled(1, 32, 32, 0.5), choice);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "forward");
    }
    const auto back = BackendChoice::of(IdentityBackend{}, NstBackend{quick_nst(), ImageTensor::filled(1, 32, 32, 0.5)});
    try {
      backward_transfer(img, back);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "backward");
    }
  }
}

TEST_CASE("run_pipeline") {
  SUBCASE("identity backends give exactly zero scores") {
    const auto scene = synthesize_scene({BasePattern::checker, AnomalyShape::square, 0.1, 2, 24, 40});
    const auto a = run_pipeline(scene, BackendChoice::of(IdentityBackend{}, IdentityBackend{}));
    CHECK(a.score_map.height() == 24);
    CHECK(a.score_map.width() == 40);
    for (double v : a.score_map.values()) CHECK(v == 0.0);
  }
  SUBCASE("three synthetic scenes through nst/nst") {
    const auto style = synthesize_style_image(5, 32, 32);
    const auto clean = synthesize_scene({BasePattern::gradient, AnomalyShape::none, 0.05, 9, 32, 32}).image;
    const auto choice = BackendChoice::of(NstBackend{quick_nst(), style, "swirl"}, NstBackend{quick_nst(), clean, "clean"});
    const auto scenes = synthesize_dataset(3, 17, 32, 32);
    const auto batch = run_batch(scenes, choice, {}, 2);
    CHECK(batch.failures.empty());
    REQUIRE(batch.artifacts.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& a = batch.artifacts[i];
      CHECK(a.scene_id == scenes[i].scene_id);
      for (const ImageTensor* im : {&a.original, &a.stylized, &a.reconstruction}) {
        CHECK(im->height() == 32);
        CHECK(im->width() == 32);
      }
      CHECK(a.score_map.height() == 32);
      for (double v : a.score_map.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
    // same inputs, sequential run: identical artifacts
    const auto seq = run_batch(scenes, choice, {}, 1);
    CHECK(seq.artifacts[1].score_map == batch.artifacts[1].score_map);
  }
  SUBCASE("hybrid nst/cyclegan with resizing") {
    const auto scene = synthesize_scene({BasePattern::stripes, AnomalyShape::disk, 0.05, 3, 40, 48});
    const auto choice = BackendChoice::of(NstBackend{quick_nst(), synthesize_style_image(1, 32, 32), "swirl"},
                                          CycleGanBackend{untrained_model(), Direction::a_to_b});
    const auto a = run_pipeline(scene, choice);
    CHECK(a.reconstruction.height() == 40);
    CHECK(a.reconstruction.width() == 48);
    CHECK(!a.forward_resize);
    REQUIRE(a.backward_resize);
  }
  SUBCASE("a failing scene does not stop the batch") {
    std::vector<SceneRecord> scenes = synthesize_dataset(3, 4, 32, 32);
    scenes.insert(scenes.begin() + 1, SceneRecord("gray", ImageTensor::filled(1, 32, 32, 0.5)));
    const auto choice = BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a},
                                          CycleGanBackend{untrained_model(), Direction::a_to_b});
    const auto batch = run_batch(scenes, choice, {}, 2);
    CHECK(batch.artifacts.size() == 3);
    REQUIRE(batch.failures.size() == 1);
    CHECK(batch.failures[0].scene_id == "gray");
    CHECK(batch.failures[0].stage == "forward");
  }
}

TEST_CASE("artifact files") {
  TempDir dir("artifacts");
  const auto scene = synthesize_scene({BasePattern::stripes, AnomalyShape::disk, 0.05, 3, 32, 32});
  const auto choice = BackendChoice::of(CycleGanBackend{untrained_model(), Direction::b_to_a},
                                        CycleGanBackend{untrained_model(), Direction::a_to_b});
  PipelineOptions opt;
  opt.blur_radius = 1;
  const auto a = run_pipeline(scene, choice, opt);
  write_artifacts(dir / "scene", a, choice, opt);
  for (const char* f : {"original.png", "stylized.png", "reconstruction.png", "score_map.png", "artifacts.json"})
    CHECK(std::filesystem::exists(dir / "scene" / f));

  const Raster8 r = read_png(dir / "scene/score_map.png", 1);
  REQUIRE(r.pixels.size() == a.score_map.size());
  for (std::size_t i = 0; i < r.pixels.size(); ++i)
    CHECK(r.pixels[i] == static_cast<int>(std::lround(255.0 * a.score_map.values()[i])));
  const auto loaded = load_score_map(dir / "scene/score_map.png");
  for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(std::abs(loaded.values()[i] - a.score_map.values()[i]) <= 0.5 / 255 + 1e-12);

  std::ifstream js(dir / "scene/artifacts.json");
  const auto j = nlohmann::json::parse(js);
  CHECK(j.at("scene_id") == scene.scene_id);
  CHECK(j.at("backend").at("forward").at("kind") == "cyclegan");
  CHECK(j.at("backend").at("forward").at("seed") == 1);
  CHECK(j.at("blur_radius") == 1);
  CHECK(j.at("forward_resize").is_null());
}
