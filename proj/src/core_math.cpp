#include "ka/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "ka/errors.hpp"

namespace ka {
namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite entry");
  }
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

SparseVector SparseVector::from_entries(
    std::size_t dim, std::vector<std::pair<std::uint32_t, double>> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector out;
  out.dim = dim;
  for (std::size_t i = 0; i < entries.size();) {
    const std::uint32_t index = entries[i].first;
    if (index >= dim) throw InvalidArgument("sparse index out of range");
    double sum = 0.0;
    for (; i < entries.size() && entries[i].first == index; ++i) sum += entries[i].second;
    if (!std::isfinite(sum)) throw InvalidArgument("sparse value is not finite");
    if (sum != 0.0) {
      out.indices.push_back(index);
      out.values.push_back(sum);
    }
  }
  return out;
}

double SparseVector::norm() const { return l2_norm(values); }

DenseVector SparseVector::to_dense() const {
  DenseVector out(dim, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
  return out;
}

DenseMatrix DenseMatrix::from_rows(const std::vector<DenseVector>& rows) {
  if (rows.empty()) return {};
  DenseMatrix out(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require_same_length(rows[r].size(), out.cols(), "DenseMatrix::from_rows");
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty input");
  require_finite(logits, "softmax");
  const double top = *std::max_element(logits.begin(), logits.end());
  ProbVector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

ProbVector tempered_softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgument("tempered_softmax: tau must be positive and finite");
  }
  if (tau == 1.0) return softmax(logits);
  DenseVector scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= tau;
  return softmax(scaled);
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  require_same_length(target.size(), pred.size(), "cross_entropy");
  double h = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    h -= target[i] * std::log(std::clamp(pred[i], kLogEpsilon, 1.0));
  }
  return h;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double dot(std::span<const double> u, std::span<const double> v) {
  require_same_length(u.size(), v.size(), "dot");
  return std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
}

double l2_norm(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v * v;
  return std::sqrt(s);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  require_same_length(u.size(), v.size(), "cosine");
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) throw DegenerateInput("cosine: zero-norm vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs.size(), ys.size(), "pearson");
  const std::size_t n = xs.size();
  if (n < 3) throw InvalidArgument("pearson: need at least 3 observations");
  require_finite(xs, "pearson");
  require_finite(ys, "pearson");

  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson: zero variance");

  Correlation out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - out.r * out.r;
  if (denom <= 0.0) {
    out.p = 0.0;
  } else {
    const double t = std::abs(out.r) * std::sqrt(df / denom);
    boost::math::students_t dist(df);
    out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
  }
  return out;
}

PcaResult pca(const DenseMatrix& rows, std::size_t k) {
  const std::size_t n = rows.rows();
  const std::size_t d = rows.cols();
  if (k == 0 || k > std::min(n, d)) {
    throw InvalidArgument("pca: k must be in [1, min(rows, cols)]");
  }
  require_finite(rows.flat(), "pca");

  Eigen::MatrixXd x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) x(r, c) = rows(r, c);
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double denom = static_cast<double>(std::max<std::size_t>(n - 1, 1));
  const Eigen::MatrixXd cov = (x.transpose() * x) / denom;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegenerateInput("pca: eigendecomposition failed");

  PcaResult out;
  out.projections = DenseMatrix(n, k);
  out.components = DenseMatrix(k, d);
  out.explained_variance.resize(k);
  // Eigen orders eigenvalues ascending.
  for (std::size_t j = 0; j < k; ++j) {
    const auto col = static_cast<Eigen::Index>(d - 1 - j);
    Eigen::VectorXd axis = solver.eigenvectors().col(col);
    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < axis.size(); ++i) {
      if (std::abs(axis(i)) > std::abs(axis(lead))) lead = i;
    }
    if (axis(lead) < 0.0) axis = -axis;
    out.explained_variance[j] = std::max(0.0, solver.eigenvalues()(col));
    for (std::size_t c = 0; c < d; ++c) out.components(j, c) = axis(static_cast<Eigen::Index>(c));
    const Eigen::VectorXd proj = x * axis;
    for (std::size_t r = 0; r < n; ++r) out.projections(r, j) = proj(static_cast<Eigen::Index>(r));
  }
  return out;
}

DenseMatrix pca_project(const DenseMatrix& rows, std::size_t k) { return pca(rows, k).projections; }

}  // namespace ka
