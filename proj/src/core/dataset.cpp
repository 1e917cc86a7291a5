#include "fbst/core/dataset.hpp"

#include "fbst/core/png_io.hpp"
#include "fbst/errors.hpp"
#include "fbst/util/parallel.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace fbst {

namespace fs = std::filesystem;

DatasetLayout parse_layout(const std::string& name) {
  if (name == "flat") return DatasetLayout::flat;
  if (name == "cityscapes_like") return DatasetLayout::cityscapes_like;
  throw ConfigError("unknown dataset layout '" + name + "' (expected flat or cityscapes_like)");
}

namespace {

struct Candidate {
  std::string scene_id;
  fs::path image;
  fs::path mask;  // may not exist
  SplitTag split = SplitTag::eval;
};

constexpr std::string_view kCityscapesSuffix = "_leftImg8bit";

bool is_png(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

std::vector<Candidate> scan_flat(const fs::path& root) {
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw ConfigError("missing image directory " + images.string());
  std::vector<Candidate> out;
  for (const auto& e : fs::directory_iterator(images)) {
    if (!e.is_regular_file() || !is_png(e.path())) continue;
    const std::string id = e.path().stem().string();
    out.push_back({id, e.path(), root / "masks" / (id + ".png"), SplitTag::eval});
  }
  return out;
}

std::vector<Candidate> scan_cityscapes(const fs::path& root) {
  const fs::path images = root / "leftImg8bit";
  if (!fs::is_directory(images)) throw ConfigError("missing image directory " + images.string());
  std::vector<Candidate> out;
  for (const auto& e : fs::recursive_directory_iterator(images)) {
    if (!e.is_regular_file() || !is_png(e.path())) continue;
    const fs::path rel = fs::relative(e.path(), images);
    std::string stem = e.path().stem().string();
    if (stem.size() > kCityscapesSuffix.size() && stem.ends_with(kCityscapesSuffix))
      stem.resize(stem.size() - kCityscapesSuffix.size());
    const std::string split = rel.begin() != rel.end() ? rel.begin()->string() : "";
    out.push_back({stem, e.path(), root / "masks" / rel, split == "train" ? SplitTag::train : SplitTag::eval});
  }
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& root, DatasetLayout layout, int jobs) {
  if (!fs::is_directory(root)) throw ConfigError("dataset root does not exist: " + root.string());
  std::vector<Candidate> cands = layout == DatasetLayout::flat ? scan_flat(root) : scan_cityscapes(root);
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) { return a.scene_id < b.scene_id; });
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].scene_id == cands[i - 1].scene_id)
      throw ConfigError("duplicate scene id '" + cands[i].scene_id + "' in " + root.string());
  }

  struct Outcome {
    std::optional<SceneRecord> record;
    std::string warning;
    std::optional<RecordError> error;
  };
  std::vector<Outcome> outcomes(cands.size());
  parallel_for(cands.size(), jobs, [&](std::size_t i) {
    const Candidate& c = cands[i];
    Outcome& o = outcomes[i];
    std::optional<ImageTensor> image;
    try {
      image = load_image(c.image);
    } catch (const std::exception& e) {
      o.warning = "skipped " + c.scene_id + ": " + e.what();
      return;
    }
    std::optional<AnomalyMask> mask;
    if (fs::exists(c.mask)) {
      try {
        mask = load_mask(c.mask);
      } catch (const std::exception& e) {
        o.warning = "skipped " + c.scene_id + ": unreadable mask: " + e.what();
        return;
      }
      if (mask->height() != image->height() || mask->width() != image->width()) {
        o.error = RecordError{c.scene_id, "mask " + std::to_string(mask->height()) + "x" +
                                              std::to_string(mask->width()) + " does not match image " +
                                              std::to_string(image->height()) + "x" +
                                              std::to_string(image->width())};
        return;
      }
    }
    o.record.emplace(c.scene_id, std::move(*image), std::move(mask), c.split);
  });

  Dataset ds;
  ds.summary.files_scanned = static_cast<int>(cands.size());
  for (auto& o : outcomes) {
    if (o.record) {
      ds.records.push_back(std::move(*o.record));
      ++ds.summary.loaded;
    } else {
      ++ds.summary.skipped;
      if (!o.warning.empty()) ds.summary.warnings.push_back(o.warning);
      if (o.error) ds.summary.errors.push_back(*o.error);
    }
  }
  return ds;
}

}  // namespace fbst
