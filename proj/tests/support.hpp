#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "ka/core_math.hpp"
#include "ka/mlp.hpp"
#include "ka/random.hpp"

namespace ka::testing {

inline ProbVector random_prob(Rng& rng, std::size_t n, double floor = 0.0) {
  ProbVector p(n);
  double total = 0.0;
  for (auto& v : p) {
    v = floor + rng.uniform();
    total += v;
  }
  for (auto& v : p) v /= total;
  return p;
}

inline DenseVector random_dense(Rng& rng, std::size_t n, double lo = -3.0, double hi = 3.0) {
  DenseVector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Random sparse row with roughly `density` non-zeros.
inline SparseVector random_sparse(Rng& rng, std::size_t dim, double density = 0.5) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::size_t i = 0; i < dim; ++i) {
    if (rng.bernoulli(density)) entries.emplace_back(static_cast<std::uint32_t>(i), rng.uniform(-1.0, 1.0));
  }
  return SparseVector::from_entries(dim, std::move(entries));
}

// Model with every parameter (biases included) drawn at random, so ReLU units
// sit on both sides of zero.
inline MlpModel random_model(Rng& rng, std::size_t in, std::size_t hidden, std::size_t classes) {
  MlpModel m{MlpParams::zeros({in, hidden, classes})};
  for (auto t : m.params.tensors()) {
    for (auto& v : t) v = rng.uniform(-1.0, 1.0);
  }
  return m;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ka-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

}  // namespace ka::testing
