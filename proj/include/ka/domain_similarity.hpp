#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ka/core_math.hpp"

namespace ka {

inline constexpr double kDefaultRenyiAlpha = 0.99;

struct DivergenceKind {
  enum class Type { JensenShannon, Renyi, Mmd };

  Type type = Type::JensenShannon;
  double alpha = kDefaultRenyiAlpha;  // Renyi only

  static DivergenceKind jensen_shannon() { return {Type::JensenShannon}; }
  static DivergenceKind renyi(double alpha = kDefaultRenyiAlpha);
  static DivergenceKind mmd() { return {Type::Mmd}; }

  // "js", "renyi", "mmd".
  static DivergenceKind parse(std::string_view name, double alpha = kDefaultRenyiAlpha);
  std::string name() const;
};

// Normalized teacher weights; non-negative, summing to 1.
struct TeacherWeights {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

// sum p_i ln(p_i / q_i); terms with p_i = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Symmetric and bounded by ln 2.
double js_divergence(std::span<const double> p, std::span<const double> q);

// 1/(alpha - 1) ln sum p_i^alpha q_i^(1 - alpha); alpha > 0, alpha != 1.
double renyi_divergence(std::span<const double> p, std::span<const double> q, double alpha);

// Distance between the row means of two representation matrices.
double mmd(const DenseMatrix& source, const DenseMatrix& target);

// Softmin: w_i = exp(-d_i) / sum_j exp(-d_j).
TeacherWeights similarity_weights(std::span<const double> divergences);

}  // namespace ka
