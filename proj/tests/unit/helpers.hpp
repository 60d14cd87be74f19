#pragma once

#include <filesystem>
#include <string>

#include "mminr/random.hpp"
#include "mminr/radar_data.hpp"
#include "mminr/tensor.hpp"

namespace testing {

template <typename T>
mminr::Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
  mminr::Tensor<T> t(n, c, h, w);
  mminr::Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline mminr::RainField random_field(int h, int w, std::uint64_t seed, double hi = 19.0) {
  mminr::RainField f(h, w);
  mminr::Rng rng(seed);
  for (auto& v : f.grid) v = static_cast<float>(rng.uniform(0.0, hi));
  return f;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("mminr-test-" + tag + "-" + std::to_string(mminr::Rng(std::hash<std::string>{}(tag)).next() % 100000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
