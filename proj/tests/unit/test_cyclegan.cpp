#include "fbst/core/synthetic.hpp"
#include "fbst/cyclegan/model.hpp"
#include "fbst/cyclegan/toy.hpp"
#include "fbst/cyclegan/training.hpp"
#include "fbst/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

using namespace fbst;
using fbst::test::TempDir;

namespace {

CycleGanArch small_arch() {
  CycleGanArch a;
  a.base_channels = 4;
  a.residual_blocks = 2;
  a.image_height = 32;
  a.image_width = 32;
  return a;
}

std::vector<SceneRecord> small_domain(std::uint64_t seed, int n, bool stylized) {
  std::vector<SceneRecord> out;
  for (int i = 0; i < n; ++i) {
    auto r = synthesize_scene({static_cast<BasePattern>(i % 3), AnomalyShape::square, 0.05, seed + i, 32, 32});
    if (stylized) r = SceneRecord(r.scene_id, ImageTensor::clamped(r.image.tensor() * 0.5 + Tensor(r.image.tensor().shape(), 0.4)));
    out.push_back(r);
  }
  return out;
}

ImageTensor random_image(Rng& rng, int h = 32, int w = 32) { return ImageTensor(test::random_tensor(3, h, w, rng)); }

std::vector<double> flat_params(const TranslationModel& m) {
  std::vector<double> v;
  for (const Param* p : m.all_params()) v.insert(v.end(), p->value.begin(), p->value.end());
  return v;
}

// Relative error of analytic vs central-difference gradients over a sample
// of parameter entries; the floor is relative to the largest gradient seen.
template <typename Loss>
double sampled_param_error(const std::vector<Param*>& params, const GradBuffer& grads, Loss loss, Rng& rng,
                           int samples) {
  std::vector<std::pair<Param*, std::size_t>> picks;
  std::size_t total = 0;
  for (Param* p : params) total += p->value.size();
  for (int s = 0; s < samples; ++s) {
    std::size_t k = rng.below(total);
    for (Param* p : params) {
      if (k < p->value.size()) {
        picks.emplace_back(p, k);
        break;
      }
      k -= p->value.size();
    }
  }
  std::vector<double> analytic, numeric;
  const double h = 1e-6;
  for (auto [p, i] : picks) {
    const auto* g = grads.find(*p);
    analytic.push_back(g ? (*g)[i] : 0.0);
    const double v = p->value[i];
    p->value[i] = v + h;
    const double lp = loss();
    p->value[i] = v - h;
    const double lm = loss();
    p->value[i] = v;
    numeric.push_back((lp - lm) / (2 * h));
  }
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  double err = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    err = std::max(err, std::abs(analytic[i] - numeric[i]) /
                            std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4 * scale}));
  return err;
}

}  // namespace

TEST_CASE("cycle_consistency_loss") {
  Rng rng(1);
  const ImageTensor x = random_image(rng);
  CHECK(cycle_consistency_loss(x, x) == 0.0);
  CHECK(cycle_consistency_loss(x, x.to_signed()) <= 1e-15);

  const auto half = ImageTensor::filled(3, 16, 16, 0.5);
  const auto three_quarters = ImageTensor::filled(3, 16, 16, 0.75);
  CHECK(cycle_consistency_loss(half, three_quarters) == doctest::Approx(0.25).epsilon(1e-12));
  // the reconstruction arrives in signed range and is converted back first
  CHECK(cycle_consistency_loss(half, three_quarters.to_signed()) == doctest::Approx(0.25).epsilon(1e-12));
  // evaluated in signed range the same pair differs by 0.5
  CHECK(cycle_consistency_loss(half.to_signed(), three_quarters) == doctest::Approx(0.5).epsilon(1e-12));

  for (int trial = 0; trial < 10; ++trial) {
    const ImageTensor a = random_image(rng), b = random_image(rng);
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int xx = 0; xx < 32; ++xx) s += std::abs(a.at(c, y, xx) - b.at(c, y, xx));
    const double l = cycle_consistency_loss(a, b);
    CHECK(std::abs(l - s / (3 * 32 * 32)) <= 1e-9);
    CHECK(l > 0.0);
  }
  CHECK_THROWS_AS(cycle_consistency_loss(x, random_image(rng, 16, 16)), ArgumentError);
}

TEST_CASE("adversarial_losses") {
  const Tensor ones(1, 4, 4, 1.0), zeros(1, 4, 4, 0.0), halves(1, 4, 4, 0.5);
  CHECK(adversarial_losses(zeros, ones).gen_loss == 0.0);
  CHECK(adversarial_losses(ones, zeros).disc_loss == 0.0);
  CHECK(adversarial_losses(halves, halves).disc_loss == 0.25);
  CHECK(adversarial_losses(halves, halves).gen_loss == 0.25);
  Tensor bad = ones;
  bad[5] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adversarial_losses(bad, ones), NumericError);
  CHECK_THROWS_AS(adversarial_losses(ones, bad), NumericError);
}

TEST_CASE("identity weight zero removes the identity term exactly") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const GeneratorLossTerms t{rng.uniform(0, 3), rng.uniform(0, 2), rng.uniform(0, 2)};
    const double lc = rng.uniform(1, 20);
    CHECK(std::abs(generator_objective(t, lc, 0.0) - (t.adversarial + lc * t.cycle)) <= 1e-9);
    CHECK(generator_objective(t, lc, 2.0) == doctest::Approx(t.adversarial + lc * t.cycle + 2.0 * t.identity));
  }
  // the training sample agrees: without identity the terms are the same up to the identity slot
  const TranslationModel m(small_arch(), 3);
  const Tensor a = test::random_tensor(3, 32, 32, rng, -1, 1), b = test::random_tensor(3, 32, 32, rng, -1, 1);
  const auto with = generator_sample(m, a, b, 10.0, 5.0, nullptr);
  const auto without = generator_sample(m, a, b, 10.0, 0.0, nullptr);
  CHECK(without.identity == 0.0);
  CHECK(with.identity > 0.0);
  CHECK(with.adversarial == without.adversarial);
  CHECK(with.cycle == without.cycle);
}

TEST_CASE("image pool") {
  Rng rng(4);
  ImagePool passthrough(0, 1);
  const Tensor t = test::random_tensor(3, 4, 4, rng);
  CHECK(passthrough.query(t) == t);

  ImagePool pool(5, 9);
  std::vector<Tensor> seen;
  for (int i = 0; i < 5; ++i) {
    seen.push_back(test::random_tensor(3, 4, 4, rng));
    CHECK(pool.query(seen.back()) == seen.back());
  }
  CHECK(pool.size() == 5);
  int swapped = 0;
  for (int i = 0; i < 200; ++i) {
    const Tensor fresh = test::random_tensor(3, 4, 4, rng);
    const Tensor got = pool.query(fresh);
    if (!(got == fresh)) {
      ++swapped;
      CHECK(std::find(seen.begin(), seen.end(), got) != seen.end());
    }
    seen.push_back(fresh);
  }
  CHECK(swapped > 60);
  CHECK(swapped < 140);
  CHECK(pool.size() == 5);
}

TEST_CASE("architecture contracts") {
  CycleGanArch a = small_arch();
  CHECK_NOTHROW(a.validate());
  a.residual_blocks = 1;
  CHECK_THROWS_AS(a.validate(), ArgumentError);
  a.residual_blocks = 7;
  CHECK_THROWS_AS(a.validate(), ArgumentError);
  a = small_arch();
  a.image_height = 30;
  CHECK_THROWS_AS(a.validate(), ArgumentError);

  const Sequential g = build_generator(small_arch());
  for (auto [h, w] : {std::pair{32, 32}, {64, 48}, {40, 36}, {12, 8}})
    CHECK(g.output_shape({3, h, w}) == Shape{3, h, w});
  CycleGanArch big;
  CHECK(build_discriminator(big).output_shape({3, 64, 64}) == Shape{1, 6, 6});
}

TEST_CASE("translate") {
  Rng rng(5);
  const TranslationModel m(small_arch(), 11);
  const ImageTensor x = random_image(rng);
  const ImageTensor y1 = translate(m, x, Direction::a_to_b);
  const ImageTensor y2 = translate(m, x, Direction::a_to_b);
  CHECK(y1 == y2);
  CHECK(y1.tensor().shape() == x.tensor().shape());
  CHECK(y1.range() == RangeTag::unit);
  for (double v : y1.tensor().values()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(!(translate(m, x, Direction::b_to_a) == y1));
  CHECK(translate(m, x.to_signed(), Direction::a_to_b).range() == RangeTag::signed_unit);

  const TranslationModel same_seed(small_arch(), 11);
  CHECK(translate(same_seed, x, Direction::a_to_b) == y1);
  const TranslationModel other_seed(small_arch(), 12);
  CHECK(!(translate(other_seed, x, Direction::a_to_b) == y1));

  CHECK_THROWS_AS(translate(m, random_image(rng, 64, 64), Direction::a_to_b), ArgumentError);
  CHECK_THROWS_AS(translate(m, ImageTensor(Tensor(1, 32, 32, 0.5)), Direction::a_to_b), ArgumentError);
  CHECK(parse_direction("b_to_a") == Direction::b_to_a);
  CHECK_THROWS_AS(parse_direction("sideways"), ArgumentError);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  TempDir dir("ckpt");
  Rng rng(6);
  TranslationModel m(small_arch(), 21, GroupId::E);
  m.meta().epochs_completed = 3;
  const auto path = dir / "model.fbcg";
  save_checkpoint(m, path);

  const TranslationModel back = load_checkpoint(path);
  CHECK(back.arch() == m.arch());
  CHECK(back.meta().group_id == GroupId::E);
  CHECK(back.meta().epochs_completed == 3);
  CHECK(back.meta().seed == 21);
  CHECK(flat_params(back) == flat_params(m));
  const ImageTensor x = random_image(rng);
  for (Direction d : {Direction::a_to_b, Direction::b_to_a}) CHECK(translate(back, x, d) == translate(m, x, d));

  std::ifstream js(checkpoint_sidecar(path));
  const auto side = nlohmann::json::parse(js);
  for (const char* key : {"arch", "group_id", "epoch", "seed", "sha256"}) CHECK(side.contains(key));
  CHECK(side.at("group_id") == "E");
  CHECK(side.at("sha256").get<std::string>().size() == 64);

  SUBCASE("corruption is detected") {
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(100);
      f.put('\x7f');
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
  SUBCASE("missing sidecar") {
    std::filesystem::remove(checkpoint_sidecar(path));
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
}

TEST_CASE("training gradients match central differences") {
  Rng rng(7);
  TranslationModel m(small_arch(), 31);
  const Tensor a = test::random_tensor(3, 32, 32, rng, -1, 1), b = test::random_tensor(3, 32, 32, rng, -1, 1);

  GradBuffer g;
  generator_sample(m, a, b, 10.0, 5.0, &g);
  auto gen_params = m.gen_ab().params();
  for (Param* p : m.gen_ba().params()) gen_params.push_back(p);
  const double gen_err = sampled_param_error(
      gen_params, g, [&] { return generator_objective(generator_sample(m, a, b, 10.0, 5.0, nullptr), 10.0, 5.0); },
      rng, 60);
  CHECK(gen_err < 1e-4);
  // discriminator parameters get no gradient from the generator objective
  for (const Param* p : m.disc_a().params()) CHECK(g.find(*p) == nullptr);

  GradBuffer dg;
  const Tensor fake = test::random_tensor(3, 32, 32, rng, -1, 1);
  discriminator_sample(m.disc_a(), a, fake, &dg);
  const double disc_err = sampled_param_error(
      m.disc_a().params(), dg, [&] { return discriminator_sample(m.disc_a(), a, fake, nullptr); }, rng, 60);
  CHECK(disc_err < 1e-4);
}

TEST_CASE("training group configs") {
  const auto f = TrainingGroupConfig::for_group(GroupId::F);
  CHECK(f.source_domain.label == "Van Gogh stylized Cityscapes");
  CHECK(f.source_domain.nst_stylized);
  CHECK(f.target_domain.label == "Cityscapes");
  const auto e = TrainingGroupConfig::for_group(GroupId::E);
  CHECK(e.source_domain.label == "Van Gogh stylized KITTI");
  CHECK(e.target_domain.label == "KITTI");
  CHECK(TrainingGroupConfig::for_group(GroupId::A).source_domain.label == "Paintings by Van Gogh");
  CHECK(TrainingGroupConfig::for_group(GroupId::B).target_domain.label == "KITTI + photos");
  CHECK(TrainingGroupConfig::for_group(GroupId::C).source_domain.label == "Ukiyo-e style paintings");
  CHECK(TrainingGroupConfig::for_group(GroupId::D).target_domain.label == "KITTI + photos");
  CHECK(!TrainingGroupConfig::for_group(GroupId::C).source_domain.nst_stylized);
  CHECK(f.lambda_cycle == 10.0);
  CHECK(f.lambda_identity == 0.5 * f.lambda_cycle);
  CHECK(f.pool_size == 50);
  CHECK_THROWS_AS(parse_group_id("G"), ArgumentError);

  nlohmann::json j = f;
  const auto back = j.get<TrainingGroupConfig>();
  CHECK(back.group_id == GroupId::F);
  CHECK(back.source_domain.label == f.source_domain.label);
  CHECK(back.epochs == f.epochs);
  CHECK(back.arch == f.arch);
  // lambda_identity follows lambda_cycle unless given
  const auto partial = nlohmann::json{{"group_id", "E"}, {"lambda_cycle", 4.0}}.get<TrainingGroupConfig>();
  CHECK(partial.lambda_identity == 2.0);
  CHECK(partial.source_domain.label == "Van Gogh stylized KITTI");
}

TEST_CASE("learning rate schedule") {
  auto c = TrainingGroupConfig::for_group(GroupId::F);
  c.epochs = 6;
  c.learning_rate = 1e-3;
  for (int e = 1; e <= 6; ++e) CHECK(learning_rate_at(c, e) == 1e-3);
  c.decay_epochs = 3;
  CHECK(learning_rate_at(c, 3) == 1e-3);
  CHECK(learning_rate_at(c, 4) == doctest::Approx(0.75e-3));
  CHECK(learning_rate_at(c, 5) == doctest::Approx(0.5e-3));
  CHECK(learning_rate_at(c, 6) == doctest::Approx(0.25e-3));
  for (int e = 1; e < 6; ++e) CHECK(learning_rate_at(c, e + 1) <= learning_rate_at(c, e));
  CHECK_NOTHROW(c.validate());
  c.decay_epochs = 7;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.decay_epochs = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.decay_epochs = 2;
  nlohmann::json j = c;
  CHECK(j.get<TrainingGroupConfig>().decay_epochs == 2);
  c.flip = false;
  j = c;
  CHECK_FALSE(j.get<TrainingGroupConfig>().flip);
}

TEST_CASE("train") {
  auto cfg = TrainingGroupConfig::for_group(GroupId::F);
  cfg.arch = small_arch();
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 5;
  const auto src = small_domain(100, 4, true);
  const auto tgt = small_domain(200, 4, false);

  SUBCASE("preconditions") {
    auto bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train(bad, src, tgt), ArgumentError);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(bad, src, tgt), ArgumentError);
    CHECK_THROWS_AS(train(cfg, {}, tgt), ConfigError);
    CHECK_THROWS_AS(train(cfg, src, {}), ConfigError);
  }
  SUBCASE("reproducible, logged and checkpointed") {
    TempDir dir("train");
    TrainingOptions opt;
    opt.checkpoint_dir = dir.path();
    opt.checkpoint_every = 1;
    opt.log_path = dir / "log.csv";
    const auto r1 = train(cfg, src, tgt, opt);
    const auto r2 = train(cfg, src, tgt);
    CHECK(flat_params(r1.model) == flat_params(r2.model));
    CHECK(!(flat_params(r1.model) == flat_params(TranslationModel(cfg.arch, cfg.seed))));
    CHECK(r1.model.meta().epochs_completed == 2);
    REQUIRE(r1.log.size() == 2);
    for (const auto& e : r1.log) {
      CHECK(std::isfinite(e.gen_loss));
      CHECK(e.cycle_loss > 0.0);
      CHECK(e.identity_loss > 0.0);
      CHECK(e.disc_loss > 0.0);
    }
    for (int e : {0, 1, 2}) CHECK(std::filesystem::exists(dir / ("groupF_epoch" + std::to_string(e) + ".fbcg")));
    REQUIRE(r1.last_checkpoint);
    CHECK(flat_params(load_checkpoint(*r1.last_checkpoint)) == flat_params(r1.model));

    std::ifstream log(dir / "log.csv");
    std::string header, line;
    std::getline(log, header);
    CHECK(header == "epoch,gen_loss,disc_loss,cycle_loss,identity_loss");
    int rows = 0;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 2);
  }
  SUBCASE("different seed gives a different model") {
    auto other = cfg;
    other.seed = 6;
    other.epochs = 1;
    cfg.epochs = 1;
    CHECK(!(flat_params(train(cfg, src, tgt).model) == flat_params(train(other, src, tgt).model)));
  }
  SUBCASE("flip augmentation changes the trajectory deterministically") {
    cfg.epochs = 1;
    auto plain = cfg;
    plain.flip = false;
    const auto flipped = flat_params(train(cfg, src, tgt).model);
    CHECK(flipped == flat_params(train(cfg, src, tgt).model));
    CHECK(!(flipped == flat_params(train(plain, src, tgt).model)));
  }
  SUBCASE("identity term off") {
    cfg.lambda_identity = 0.0;
    cfg.epochs = 1;
    const auto r = train(cfg, src, tgt);
    CHECK(r.log.at(0).identity_loss == 0.0);
  }
  SUBCASE("divergence aborts and keeps the last good checkpoint") {
    TempDir dir("diverge");
    TrainingOptions opt;
    opt.checkpoint_dir = dir.path();
    cfg.learning_rate = 1e300;
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train(cfg, src, tgt, opt), NumericError);
    CHECK(std::filesystem::exists(dir / "groupF_epoch0.fbcg"));
    CHECK(!std::filesystem::exists(dir / "groupF_epoch1.fbcg"));
    CHECK(load_checkpoint(dir / "groupF_epoch0.fbcg").all_finite());
  }
}

TEST_CASE("toy two-domain task") {
  ToyTaskSpec spec;
  spec.images = 10;
  spec.size = 32;
  spec.stylize.iterations = 5;
  const ToyTask task = make_toy_task(spec);
  CHECK(task.train_a.size() == 8);
  CHECK(task.train_b.size() == 8);
  CHECK(task.eval_a.size() == 2);
  CHECK(task.eval_b.size() == 2);
  for (std::size_t i = 0; i < task.train_a.size(); ++i) {
    CHECK(task.train_a[i].scene_id == task.train_b[i].scene_id);
    CHECK(!(task.train_a[i].image == task.train_b[i].image));
  }
  const ToyTask again = make_toy_task(spec);
  CHECK(again.eval_a[1].image == task.eval_a[1].image);
}
