#include "ka/domain_similarity.hpp"

#include <algorithm>
#include <cmath>

#include "ka/errors.hpp"

namespace ka {
namespace {

void check_pair(std::span<const double> p, std::span<const double> q, const char* what) {
  if (p.size() != q.size()) throw InvalidArgument(std::string(what) + ": length mismatch");
  if (p.empty()) throw InvalidArgument(std::string(what) + ": empty distributions");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0) || !std::isfinite(p[i]) || !std::isfinite(q[i])) {
      throw InvalidArgument(std::string(what) + ": entries must be finite and non-negative");
    }
  }
}

}  // namespace

DivergenceKind DivergenceKind::renyi(double alpha) {
  if (!(alpha > 0.0) || alpha == 1.0 || !std::isfinite(alpha)) {
    throw InvalidArgument("Renyi alpha must be positive and != 1");
  }
  return {Type::Renyi, alpha};
}

DivergenceKind DivergenceKind::parse(std::string_view name, double alpha) {
  if (name == "js" || name == "jensen-shannon") return jensen_shannon();
  if (name == "renyi") return renyi(alpha);
  if (name == "mmd") return mmd();
  throw InvalidArgument("unknown similarity kind '" + std::string(name) + "' (expected js, renyi or mmd)");
}

std::string DivergenceKind::name() const {
  switch (type) {
    case Type::JensenShannon: return "js";
    case Type::Renyi: return "renyi";
    case Type::Mmd: return "mmd";
  }
  return "?";
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q, "kl_divergence");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw DivergenceUndefined("kl_divergence: q_i = 0 where p_i > 0");
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q, "js_divergence");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  // Summing the two halves termwise keeps the result exactly symmetric.
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p[i] > 0.0 ? p[i] * std::log(p[i] / m[i]) : 0.0;
    const double b = q[i] > 0.0 ? q[i] * std::log(q[i] / m[i]) : 0.0;
    d += 0.5 * (a + b);
  }
  return std::clamp(d, 0.0, std::log(2.0));
}

double renyi_divergence(std::span<const double> p, std::span<const double> q, double alpha) {
  check_pair(p, q, "renyi_divergence");
  if (!(alpha > 0.0) || alpha == 1.0 || !std::isfinite(alpha)) {
    throw InvalidArgument("renyi_divergence: alpha must be positive and != 1 (use KL for alpha = 1)");
  }
  // sum p^a q^(1-a) = sum p + sum p (exp((a-1) ln(p/q)) - 1); the expm1 form
  // keeps precision as alpha approaches 1.
  double mass = 0.0;
  double excess = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw DivergenceUndefined("renyi_divergence: q_i = 0 where p_i > 0");
    mass += p[i];
    excess += p[i] * std::expm1((alpha - 1.0) * std::log(p[i] / q[i]));
  }
  return std::log1p((mass - 1.0) + excess) / (alpha - 1.0);
}

double mmd(const DenseMatrix& source, const DenseMatrix& target) {
  if (source.rows() == 0 || target.rows() == 0) throw InvalidArgument("mmd: empty sample");
  if (source.cols() != target.cols()) throw InvalidArgument("mmd: column count mismatch");
  const std::size_t d = source.cols();
  std::vector<double> ms(d, 0.0), mt(d, 0.0);
  for (std::size_t r = 0; r < source.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) ms[c] += source(r, c);
  }
  for (std::size_t r = 0; r < target.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) mt[c] += target(r, c);
  }
  const double ns = static_cast<double>(source.rows());
  const double nt = static_cast<double>(target.rows());
  double sq = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = ms[c] / ns - mt[c] / nt;
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

TeacherWeights similarity_weights(std::span<const double> divergences) {
  if (divergences.empty()) throw InvalidArgument("similarity_weights: no divergences");
  for (double d : divergences) {
    if (!std::isfinite(d) || d < 0.0) {
      throw InvalidArgument("similarity_weights: divergences must be finite and >= 0");
    }
  }
  const double lo = *std::min_element(divergences.begin(), divergences.end());
  TeacherWeights w;
  w.values.resize(divergences.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < divergences.size(); ++i) {
    w.values[i] = std::exp(-(divergences[i] - lo));
    sum += w.values[i];
  }
  for (double& v : w.values) v /= sum;
  return w;
}

}  // namespace ka
