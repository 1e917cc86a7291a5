#include "fbst/cyclegan/training.hpp"

#include "fbst/errors.hpp"
#include "fbst/util/parallel.hpp"

#include <cmath>
#include <fstream>

namespace fbst {

namespace {

Tensor flip_horizontal(const Tensor& x) {
  Tensor out(x.shape());
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < x.height(); ++y)
      for (int i = 0; i < x.width(); ++i) out.at(c, y, i) = x.at(c, y, x.width() - 1 - i);
  return out;
}

double mean_abs(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// d/dx of scale * mean|x - target|
Tensor l1_grad(const Tensor& x, const Tensor& target, double scale) {
  Tensor g(x.shape());
  const double k = scale / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - target[i];
    g[i] = d > 0 ? k : (d < 0 ? -k : 0.0);
  }
  return g;
}

// d/dx of mean((x - target)^2) * scale
Tensor square_grad(const Tensor& x, double target, double scale) {
  Tensor g(x.shape());
  const double k = 2.0 * scale / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = k * (x[i] - target);
  return g;
}

double mean_square(const Tensor& x, double target) {
  double s = 0.0;
  for (double v : x.values()) s += (v - target) * (v - target);
  return s / static_cast<double>(x.size());
}

void accumulate(Tensor& into, const Tensor& g) {
  if (into.empty())
    into = g;
  else
    into += g;
}

std::vector<Tensor> prepare(const std::vector<SceneRecord>& records, const CycleGanArch& arch) {
  std::vector<Tensor> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.image.channels() != 3) throw ConfigError("training images must be RGB: " + r.scene_id);
    out.push_back(resize(r.image, arch.image_height, arch.image_width).to_signed().tensor());
  }
  return out;
}

void scale_grads(GradBuffer& g, const std::vector<Param*>& params, double s) {
  for (Param* p : params)
    if (g.find(*p))
      for (double& x : g.of(*p)) x *= s;
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, GroupId g, int epoch) {
  return dir / ("group" + std::string(to_string(g)) + "_epoch" + std::to_string(epoch) + ".fbcg");
}

std::vector<Param*> concat(std::vector<Param*> a, const std::vector<Param*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

double cycle_consistency_loss(const ImageTensor& x, const ImageTensor& x_reconstructed) {
  if (!(x.tensor().shape() == x_reconstructed.tensor().shape()))
    throw ArgumentError("cycle_consistency_loss: shape mismatch");
  return mean_abs(x.tensor(), x_reconstructed.with_range(x.range()).tensor());
}

AdversarialLosses adversarial_losses(const Tensor& disc_real, const Tensor& disc_fake) {
  if (!disc_real.all_finite() || !disc_fake.all_finite())
    throw NumericError("adversarial_losses: non-finite discriminator output");
  if (disc_real.empty() || disc_fake.empty()) throw ArgumentError("adversarial_losses: empty input");
  return {mean_square(disc_fake, 1.0), 0.5 * mean_square(disc_real, 1.0) + 0.5 * mean_square(disc_fake, 0.0)};
}

double generator_objective(const GeneratorLossTerms& t, double lambda_cycle, double lambda_identity) {
  return t.adversarial + lambda_cycle * t.cycle + lambda_identity * t.identity;
}

Tensor ImagePool::query(const Tensor& image) {
  if (capacity_ == 0) return image;
  if (images_.size() < capacity_) {
    images_.push_back(image);
    return image;
  }
  if (rng_.uniform() < 0.5) {
    const std::size_t k = rng_.below(capacity_);
    Tensor old = std::move(images_[k]);
    images_[k] = image;
    return old;
  }
  return image;
}

GeneratorLossTerms generator_sample(const TranslationModel& m, const Tensor& a, const Tensor& b,
                                    double lc, double li, GradBuffer* grads, Tensor* fake_a_out,
                                    Tensor* fake_b_out) {
  const auto t_ab = m.gen_ab().forward_trace(a);
  const Tensor& fake_b = t_ab.back();
  const auto t_rec_a = m.gen_ba().forward_trace(fake_b);
  const auto t_ba = m.gen_ba().forward_trace(b);
  const Tensor& fake_a = t_ba.back();
  const auto t_rec_b = m.gen_ab().forward_trace(fake_a);

  const auto d_fb = m.disc_b().forward_trace(fake_b);
  const auto d_fa = m.disc_a().forward_trace(fake_a);
  GeneratorLossTerms terms;
  terms.adversarial = mean_square(d_fb.back(), 1.0) + mean_square(d_fa.back(), 1.0);
  terms.cycle = mean_abs(t_rec_a.back(), a) + mean_abs(t_rec_b.back(), b);

  Tensor g_fake_b = m.disc_b().backward(d_fb, square_grad(d_fb.back(), 1.0, 1.0), nullptr);
  Tensor g_fake_a = m.disc_a().backward(d_fa, square_grad(d_fa.back(), 1.0, 1.0), nullptr);
  accumulate(g_fake_b, m.gen_ba().backward(t_rec_a, l1_grad(t_rec_a.back(), a, lc), grads));
  accumulate(g_fake_a, m.gen_ab().backward(t_rec_b, l1_grad(t_rec_b.back(), b, lc), grads));
  if (li > 0.0) {
    const auto t_id_b = m.gen_ab().forward_trace(b);
    const auto t_id_a = m.gen_ba().forward_trace(a);
    terms.identity = mean_abs(t_id_b.back(), b) + mean_abs(t_id_a.back(), a);
    m.gen_ab().backward(t_id_b, l1_grad(t_id_b.back(), b, li), grads);
    m.gen_ba().backward(t_id_a, l1_grad(t_id_a.back(), a, li), grads);
  }
  m.gen_ab().backward(t_ab, g_fake_b, grads);
  m.gen_ba().backward(t_ba, g_fake_a, grads);
  if (fake_a_out) *fake_a_out = fake_a;
  if (fake_b_out) *fake_b_out = fake_b;
  return terms;
}

double discriminator_sample(const Sequential& disc, const Tensor& real, const Tensor& fake, GradBuffer* grads) {
  const auto tr = disc.forward_trace(real);
  const auto tf = disc.forward_trace(fake);
  const double loss = adversarial_losses(tr.back(), tf.back()).disc_loss;
  disc.backward(tr, square_grad(tr.back(), 1.0, 0.5), grads);
  disc.backward(tf, square_grad(tf.back(), 0.0, 0.5), grads);
  return loss;
}

TrainingGroupConfig TrainingGroupConfig::for_group(GroupId g) {
  TrainingGroupConfig c;
  c.group_id = g;
  switch (g) {
    case GroupId::A:
      c.source_domain = {"Paintings by Van Gogh", {}, false};
      c.target_domain = {"KITTI", {}, false};
      break;
    case GroupId::B:
      c.source_domain = {"Paintings by Van Gogh", {}, false};
      c.target_domain = {"KITTI + photos", {}, false};
      break;
    case GroupId::C:
      c.source_domain = {"Ukiyo-e style paintings", {}, false};
      c.target_domain = {"KITTI", {}, false};
      break;
    case GroupId::D:
      c.source_domain = {"Ukiyo-e style paintings", {}, false};
      c.target_domain = {"KITTI + photos", {}, false};
      break;
    case GroupId::E:
      c.source_domain = {"Van Gogh stylized KITTI", {}, true};
      c.target_domain = {"KITTI", {}, false};
      break;
    case GroupId::F:
      c.source_domain = {"Van Gogh stylized Cityscapes", {}, true};
      c.target_domain = {"Cityscapes", {}, false};
      break;
  }
  return c;
}

void TrainingGroupConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be positive");
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be positive");
  if (!(lambda_cycle > 0.0) || !std::isfinite(lambda_cycle)) throw ArgumentError("lambda_cycle must be positive");
  if (!(lambda_identity >= 0.0) || !std::isfinite(lambda_identity))
    throw ArgumentError("lambda_identity must be nonnegative");
  if (pool_size < 0) throw ArgumentError("pool_size must be nonnegative");
  if (decay_epochs < 0 || decay_epochs > epochs) throw ArgumentError("decay_epochs must be in [0, epochs]");
  arch.validate();
}

namespace {

nlohmann::json domain_json(const DomainSource& d) {
  std::vector<std::string> roots;
  for (const auto& r : d.roots) roots.push_back(r.string());
  return {{"label", d.label}, {"roots", roots}, {"nst_stylized", d.nst_stylized}};
}

void domain_from(const nlohmann::json& j, DomainSource& d) {
  d.label = j.value("label", d.label);
  if (j.contains("roots")) {
    d.roots.clear();
    for (const auto& r : j.at("roots")) d.roots.emplace_back(r.get<std::string>());
  }
  d.nst_stylized = j.value("nst_stylized", d.nst_stylized);
}

}  // namespace

void to_json(nlohmann::json& j, const TrainingGroupConfig& c) {
  j = {{"group_id", to_string(c.group_id)},
       {"source_domain", domain_json(c.source_domain)},
       {"target_domain", domain_json(c.target_domain)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"decay_epochs", c.decay_epochs},
       {"flip", c.flip},
       {"lambda_cycle", c.lambda_cycle},
       {"lambda_identity", c.lambda_identity},
       {"seed", c.seed},
       {"arch", c.arch},
       {"pool_size", c.pool_size}};
}

void from_json(const nlohmann::json& j, TrainingGroupConfig& c) {
  if (j.contains("group_id")) {
    const auto base = TrainingGroupConfig::for_group(parse_group_id(j.at("group_id").get<std::string>()));
    c.group_id = base.group_id;
    c.source_domain = base.source_domain;
    c.target_domain = base.target_domain;
  }
  if (j.contains("source_domain")) domain_from(j.at("source_domain"), c.source_domain);
  if (j.contains("target_domain")) domain_from(j.at("target_domain"), c.target_domain);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
  c.flip = j.value("flip", c.flip);
  c.lambda_cycle = j.value("lambda_cycle", c.lambda_cycle);
  c.lambda_identity = j.value("lambda_identity", 0.5 * c.lambda_cycle);
  c.seed = j.value<std::uint64_t>("seed", c.seed);
  if (j.contains("arch")) from_json(j.at("arch"), c.arch);
  c.pool_size = j.value("pool_size", c.pool_size);
}

double learning_rate_at(const TrainingGroupConfig& group, int epoch) {
  const int constant = group.epochs - group.decay_epochs;
  if (epoch <= constant) return group.learning_rate;
  return group.learning_rate * (1.0 - static_cast<double>(epoch - constant) / (group.decay_epochs + 1));
}

TrainingResult train(const TrainingGroupConfig& group, const std::vector<SceneRecord>& source_data,
                     const std::vector<SceneRecord>& target_data, const TrainingOptions& options) {
  group.validate();
  if (source_data.empty()) throw ConfigError("training group " + std::string(to_string(group.group_id)) +
                                             ": source dataset is empty");
  if (target_data.empty()) throw ConfigError("training group " + std::string(to_string(group.group_id)) +
                                             ": target dataset is empty");
  if (options.checkpoint_every < 1) throw ArgumentError("checkpoint_every must be positive");

  const std::vector<Tensor> data_a = prepare(source_data, group.arch);
  const std::vector<Tensor> data_b = prepare(target_data, group.arch);

  TrainingResult result{TranslationModel(group.arch, group.seed, group.group_id), {}, std::nullopt};
  TranslationModel& m = result.model;
  const std::vector<Param*> gen_params = concat(m.gen_ab().params(), m.gen_ba().params());
  const std::vector<Param*> disc_params = concat(m.disc_a().params(), m.disc_b().params());
  AdamConfig adam{group.learning_rate, 0.5, 0.999, 1e-8};
  Adam gen_opt(adam), disc_opt(adam);
  ImagePool pool_a(group.pool_size, derive_seed(group.seed, 11));
  ImagePool pool_b(group.pool_size, derive_seed(group.seed, 12));

  auto checkpoint = [&](int epoch) {
    if (!options.checkpoint_dir) return;
    const auto path = checkpoint_name(*options.checkpoint_dir, group.group_id, epoch);
    save_checkpoint(m, path);
    result.last_checkpoint = path;
  };
  checkpoint(0);

  const double lc = group.lambda_cycle, li = group.lambda_identity;
  const int steps = static_cast<int>(std::max(data_a.size(), data_b.size()));
  const int na = static_cast<int>(data_a.size()), nb = static_cast<int>(data_b.size());

  for (int epoch = 1; epoch <= group.epochs; ++epoch) {
    Rng order(derive_seed(group.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    const std::vector<int> perm_a = order.permutation(na);
    const std::vector<int> perm_b = order.permutation(nb);
    double sum_gen = 0, sum_disc = 0, sum_cyc = 0, sum_id = 0;
    Rng flips(derive_seed(group.seed, 2000 + static_cast<std::uint64_t>(epoch)));
    const double lr = learning_rate_at(group, epoch);
    gen_opt.set_learning_rate(lr);
    disc_opt.set_learning_rate(lr);

    for (int start = 0; start < steps; start += group.batch_size) {
      const int batch = std::min(group.batch_size, steps - start);
      GradBuffer ggrad, dgrad;
      std::vector<Tensor> reals_a, reals_b, fakes_a, fakes_b;

      for (int k = 0; k < batch; ++k) {
        reals_a.push_back(data_a[perm_a[(start + k) % na]]);
        reals_b.push_back(data_b[perm_b[(start + k) % nb]]);
        if (group.flip && flips.uniform() < 0.5) reals_a.back() = flip_horizontal(reals_a.back());
        if (group.flip && flips.uniform() < 0.5) reals_b.back() = flip_horizontal(reals_b.back());
        const Tensor& a = reals_a.back();
        const Tensor& b = reals_b.back();

        Tensor fake_a, fake_b;
        const GeneratorLossTerms terms = generator_sample(m, a, b, lc, li, &ggrad, &fake_a, &fake_b);
        const double gen_total = generator_objective(terms, lc, li);
        if (!std::isfinite(gen_total))
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": non-finite generator loss");
        sum_gen += gen_total;
        sum_cyc += terms.cycle;
        sum_id += terms.identity;
        fakes_a.push_back(fake_a);
        fakes_b.push_back(fake_b);
      }
      if (!ggrad.all_finite())
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": non-finite generator gradient");
      scale_grads(ggrad, gen_params, 1.0 / batch);

      for (int k = 0; k < batch; ++k) {
        const Tensor& a = reals_a[k];
        const Tensor& b = reals_b[k];
        try {
          sum_disc += discriminator_sample(m.disc_a(), a, pool_a.query(fakes_a[k]), &dgrad);
          sum_disc += discriminator_sample(m.disc_b(), b, pool_b.query(fakes_b[k]), &dgrad);
        } catch (const NumericError& e) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
      }
      if (!dgrad.all_finite())
        throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite discriminator gradient");
      scale_grads(dgrad, disc_params, 1.0 / batch);

      gen_opt.step(gen_params, ggrad);
      disc_opt.step(disc_params, dgrad);
    }
    if (!m.all_finite())
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": non-finite parameters");

    m.meta().epochs_completed = epoch;
    result.log.push_back({epoch, sum_gen / steps, sum_disc / steps, sum_cyc / steps, sum_id / steps});
    if (options.log_path) write_training_log(*options.log_path, result.log);
    if (epoch % options.checkpoint_every == 0 || epoch == group.epochs) checkpoint(epoch);
    if (options.on_epoch) options.on_epoch(result.log.back(), m);
  }
  return result;
}

double mean_cycle_loss(const TranslationModel& model, const std::vector<ImageTensor>& domain_a,
                       const std::vector<ImageTensor>& domain_b, int jobs) {
  if (domain_a.empty() && domain_b.empty()) throw ArgumentError("mean_cycle_loss: no images");
  auto domain_mean = [&](const std::vector<ImageTensor>& images, Direction there, Direction back) {
    std::vector<double> losses(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
      const ImageTensor x = images[i].with_range(RangeTag::unit);
      losses[i] = cycle_consistency_loss(x, translate(model, translate(model, x, there), back));
    });
    double s = 0.0;
    for (double v : losses) s += v;
    return s / static_cast<double>(losses.size());
  };
  if (domain_b.empty()) return domain_mean(domain_a, Direction::a_to_b, Direction::b_to_a);
  if (domain_a.empty()) return domain_mean(domain_b, Direction::b_to_a, Direction::a_to_b);
  return 0.5 * (domain_mean(domain_a, Direction::a_to_b, Direction::b_to_a) +
                domain_mean(domain_b, Direction::b_to_a, Direction::a_to_b));
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out.precision(17);
  out << "epoch,gen_loss,disc_loss,cycle_loss,identity_loss\n";
  for (const auto& e : log)
    out << e.epoch << ',' << e.gen_loss << ',' << e.disc_loss << ',' << e.cycle_loss << ',' << e.identity_loss
        << '\n';
  if (!out) throw IoError("cannot write training log " + path.string());
}

}  // namespace fbst
