#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "treff_adapter.hpp"

namespace treff::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

inline EmbeddingSet random_set(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  return EmbeddingSet(random_matrix(rng, rows, cols));
}

inline ClassVocabulary numbered_vocab(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n; ++c) names.push_back("c" + std::to_string(c));
  return ClassVocabulary(std::move(names));
}

// n classes, k rows each, class-major.
inline SupportSet random_support(Rng& rng, std::size_t n, std::size_t k, Eigen::Index dim) {
  Labels labels;
  for (std::size_t c = 0; c < n; ++c) labels.insert(labels.end(), k, static_cast<ClassId>(c));
  return SupportSet(random_set(rng, static_cast<Eigen::Index>(n * k), dim), std::move(labels), numbered_vocab(n));
}

inline Matrix rows2(std::initializer_list<std::pair<double, double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index r = 0;
  for (auto [x, y] : rows) {
    m(r, 0) = x;
    m(r, 1) = y;
    ++r;
  }
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("treff_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace treff::testing
