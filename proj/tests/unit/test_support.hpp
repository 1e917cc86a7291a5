#pragma once

#include "fbst/nn/tensor.hpp"
#include "fbst/util/random.hpp"

#include <filesystem>
#include <string>

namespace fbst::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
    path_ = std::filesystem::temp_directory_path() / ("fbst_" + tag + "_" + std::to_string(rng.next() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(c, h, w);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace fbst::test
