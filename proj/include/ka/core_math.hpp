#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ka {

using DenseVector = std::vector<double>;
// A DenseVector whose entries lie in [0,1] and sum to 1.
using ProbVector = std::vector<double>;

// Clamp applied to predicted probabilities before taking logs.
inline constexpr double kLogEpsilon = 1e-12;

// Sparse row with strictly increasing indices and non-zero finite values.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }

  // Builds a valid vector from unordered (index, value) pairs: duplicates are
  // summed and zeros dropped. Throws InvalidArgument on out-of-range indices
  // or non-finite values.
  static SparseVector from_entries(std::size_t dim,
                                   std::vector<std::pair<std::uint32_t, double>> entries);

  double norm() const;
  DenseVector to_dense() const;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  static DenseMatrix from_rows(const std::vector<DenseVector>& rows);

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

ProbVector softmax(std::span<const double> logits);

// softmax(logits / tau).
ProbVector tempered_softmax(std::span<const double> logits, double tau);

// H(target, pred) = -sum target_i ln max(pred_i, kLogEpsilon).
double cross_entropy(std::span<const double> target, std::span<const double> pred);

// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(std::span<const double> p);

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> u);

// Throws DegenerateInput when either vector has zero norm.
double cosine(std::span<const double> u, std::span<const double> v);

struct Correlation {
  double r = 0.0;
  double p = 1.0;  // two-tailed, Student-t with n-2 degrees of freedom
};

Correlation pearson(std::span<const double> xs, std::span<const double> ys);

struct PcaResult {
  DenseMatrix projections;                // rows x k
  DenseMatrix components;                 // k x cols, unit rows
  std::vector<double> explained_variance;  // descending, length k
};

// PCA through the eigendecomposition of the sample covariance. Each
// component is signed so that its largest-magnitude loading is positive.
PcaResult pca(const DenseMatrix& rows, std::size_t k);

DenseMatrix pca_project(const DenseMatrix& rows, std::size_t k);

}  // namespace ka
