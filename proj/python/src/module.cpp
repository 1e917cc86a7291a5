#include "fbst/cli/commands.hpp"
#include "fbst/core/png_io.hpp"
#include "fbst/core/synthetic.hpp"
#include "fbst/cyclegan/training.hpp"
#include "fbst/errors.hpp"
#include "fbst/eval/metrics.hpp"
#include "fbst/features/extractor.hpp"
#include "fbst/nst/losses.hpp"
#include "fbst/nst/optimize.hpp"
#include "fbst/nst/params_json.hpp"
#include "fbst/pipeline/pipeline.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace fbst;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

// (C, H, W) array <-> Tensor
Tensor to_tensor(const Array& a) {
  if (a.ndim() != 3) throw ArgumentError("expected a (C, H, W) array");
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
  return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_tensor(const Tensor& t) {
  Array a({t.channels(), t.height(), t.width()});
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

// (H, W, C) image in [0, 1]
ImageTensor to_image(const Array& a) {
  if (a.ndim() != 3) throw ArgumentError("expected an (H, W, C) image");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1)), c = static_cast<int>(a.shape(2));
  Tensor t(c, h, w);
  const double* p = a.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) t.at(k, y, x) = *p++;
  return ImageTensor(std::move(t));
}

Array from_image(const ImageTensor& image) {
  const ImageTensor u = image.with_range(RangeTag::unit);
  Array a({u.height(), u.width(), u.channels()});
  double* p = a.mutable_data();
  for (int y = 0; y < u.height(); ++y)
    for (int x = 0; x < u.width(); ++x)
      for (int k = 0; k < u.channels(); ++k) *p++ = u.at(k, y, x);
  return a;
}

AnomalyScoreMap to_scores(const Array& a) {
  if (a.ndim() != 2) throw ArgumentError("expected an (H, W) score map");
  return AnomalyScoreMap(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                         std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_scores(const AnomalyScoreMap& m) {
  Array a({m.height(), m.width()});
  std::copy(m.values().begin(), m.values().end(), a.mutable_data());
  return a;
}

AnomalyMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw ArgumentError("expected an (H, W) mask");
  return AnomalyMask(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                     std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

MaskArray from_mask(const AnomalyMask& m) {
  MaskArray a({m.height(), m.width()});
  std::copy(m.values().begin(), m.values().end(), a.mutable_data());
  return a;
}

ExtractorSpec make_spec(const std::string& kind, std::uint64_t seed, const std::string& weights,
                        const std::string& sha256) {
  const ExtractorKind k = parse_extractor_kind(kind);
  return k == ExtractorKind::tiny_test ? ExtractorSpec::tiny(seed) : ExtractorSpec::vgg19(weights, sha256);
}

NSTParams params_from(const std::string& json) {
  NSTParams p;
  if (!json.empty()) p = nlohmann::json::parse(json).get<NSTParams>();
  p.validate();
  return p;
}

py::tuple nst_result(const NSTResult& r) {
  Array trace({static_cast<py::ssize_t>(r.loss_trace.size()), py::ssize_t{4}});
  double* p = trace.mutable_data();
  for (const auto& e : r.loss_trace) {
    *p++ = e.iteration;
    *p++ = e.content_loss;
    *p++ = e.style_loss;
    *p++ = e.total_loss;
  }
  return py::make_tuple(from_image(r.output), trace, r.best_iteration);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Forward-backward style transfer anomaly detection core";

  m.def("gram_matrix", [](const Array& features) {
    const Eigen::MatrixXd g = gram_matrix(to_tensor(features));
    Array out({g.rows(), g.cols()});
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) out.mutable_at(i, j) = g(i, j);
    return out;
  }, py::arg("features"), "Gram matrix of a (C, H, W) feature map.");

  py::class_<FeatureExtractor>(m, "FeatureExtractor")
      .def(py::init([](const std::string& kind, std::uint64_t seed, const std::string& weights,
                       const std::string& sha256) { return FeatureExtractor(make_spec(kind, seed, weights, sha256)); }),
           py::arg("kind") = "tiny_test", py::arg("seed") = 0, py::arg("weights") = "", py::arg("sha256") = "")
      .def_property_readonly("available_layers", &FeatureExtractor::available_layers)
      .def_property_readonly("default_layers", &FeatureExtractor::default_layers)
      .def("extract", [](const FeatureExtractor& ex, const Array& image, std::vector<std::string> layers) {
        const ImageTensor img = to_image(image);
        const FeatureBundle b = layers.empty() ? ex.extract(img) : ex.extract(img, layers);
        py::dict out;
        for (const auto& [name, t] : b.layers()) out[py::str(name)] = from_tensor(t);
        return out;
      }, py::arg("image"), py::arg("layers") = std::vector<std::string>{});

  m.def("stylize", [](const Array& content, const Array& style, const std::string& params_json) {
    const NSTParams p = params_from(params_json);
    const ImageTensor c = to_image(content), s = to_image(style);
    const NSTResult r = [&] {
      py::gil_scoped_release release;
      return nst_optimize(c, s, p);
    }();
    return nst_result(r);
  }, py::arg("content"), py::arg("style"), py::arg("params_json") = "",
        "NST from a JSON parameter string; returns (image, trace[iteration, content, style, total], best).");

  m.def("difference_map", [](const Array& original, const Array& reconstruction, const std::string& metric) {
    return from_scores(difference_map(to_image(original), to_image(reconstruction), parse_diff_metric(metric)));
  }, py::arg("original"), py::arg("reconstruction"), py::arg("metric") = "mean_abs");

  m.def("cycle_consistency_loss", [](const Array& x, const Array& y) {
    return cycle_consistency_loss(to_image(x), to_image(y));
  }, py::arg("x"), py::arg("x_reconstructed"));

  m.def("auroc", [](const Array& s, const MaskArray& k) { return auroc(to_scores(s), to_mask(k)); },
        py::arg("scores"), py::arg("mask"));
  m.def("average_precision",
        [](const Array& s, const MaskArray& k) { return average_precision(to_scores(s), to_mask(k)); },
        py::arg("scores"), py::arg("mask"));
  m.def("contrast_ratio", [](const Array& s, const MaskArray& k) { return contrast_ratio(to_scores(s), to_mask(k)); },
        py::arg("scores"), py::arg("mask"));
  m.def("noise_level", [](const Array& s, const MaskArray& k) { return noise_level(to_scores(s), to_mask(k)); },
        py::arg("scores"), py::arg("mask"));

  m.def("synthesize_dataset", [](int count, std::uint64_t seed, int size) {
    py::list out;
    for (const auto& r : synthesize_dataset(count, seed, size, size, 0.0))
      out.append(py::make_tuple(r.scene_id, from_image(r.image),
                                r.mask ? py::object(from_mask(*r.mask)) : py::object(py::none())));
    return out;
  }, py::arg("count"), py::arg("seed"), py::arg("size") = 64, "List of (scene_id, image, mask).");

  m.def("load_image", [](const std::string& path) { return from_image(load_image(path)); }, py::arg("path"));
  m.def("save_image", [](const std::string& path, const Array& image) { save_image(path, to_image(image)); },
        py::arg("path"), py::arg("image"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs one fbst subcommand; returns (exit_code, stdout, stderr).");
}
