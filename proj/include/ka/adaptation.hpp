#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ka/core_math.hpp"
#include "ka/domain_similarity.hpp"
#include "ka/mlp.hpp"
#include "ka/text_features.hpp"

namespace ka {

struct DistillConfig {
  double tau = 5.0;
  double lambda = 0.2;
  std::size_t n_mcd = 500;
  std::size_t epochs = 0;  // required; for distill_mcd, the number of alternation rounds
  std::size_t batch_size = 10;
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = kDefaultHiddenDim;
  std::size_t unsup_epochs = 1;   // passes of the soft-target objective per round
  std::size_t pseudo_epochs = 1;  // passes of the pseudo-supervised objective per round

  void validate() const;
};

// Per-class mean hidden representation of the examples a teacher assigns
// to that class.
struct Centroids {
  DenseMatrix means;                 // n_classes x hidden_dim
  std::vector<std::size_t> counts;   // members per class

  std::size_t classes() const noexcept { return means.rows(); }
};

// Top-MCD target examples with the teacher's hard and softened labels.
struct PseudoLabeledSet {
  std::vector<std::size_t> indices;  // positions in the unlabeled set
  std::vector<SparseVector> features;
  std::vector<int> teacher_labels;   // argmax of the teacher at tau = 1
  std::vector<ProbVector> teacher_soft;
  std::vector<double> mcd_scores;

  std::size_t size() const noexcept { return indices.size(); }
};

struct StudentRun {
  MlpModel model;
  TrainHistory history;
};

// Trains on hard source labels at tau = 1; dev selects the snapshot.
MlpModel train_teacher(const FeatureMatrix& labeled, const TrainConfig& config,
                       const FeatureMatrix& dev);

// Row i = softmax(z_i / tau) of the teacher's logits for example i.
std::vector<ProbVector> soft_targets(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                                     double tau);

// Row i = sum_t weight_t * softmax(z_{t,i} / tau).
std::vector<ProbVector> mixed_soft_targets(std::span<const MlpModel> teachers,
                                           const TeacherWeights& weights,
                                           const FeatureMatrix& unlabeled, double tau);

// Student trained on H(P_T^tau, P_S^tau) over the unlabeled target set.
StudentRun distill_single(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                          const DistillConfig& config, const FeatureMatrix* dev = nullptr);

// Student trained against the similarity-weighted mixture of teacher outputs.
StudentRun distill_multi(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                         const FeatureMatrix& unlabeled, const DistillConfig& config,
                         const FeatureMatrix* dev = nullptr);

// argmax of the weighted mixture of the teachers' tau = 1 distributions.
std::size_t teacher_only_predict(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                                 const SparseVector& x);

double teacher_only_accuracy(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                             const FeatureMatrix& labeled);

// Throws EmptyCluster when some class receives no examples.
Centroids compute_centroids(const MlpModel& teacher, const FeatureMatrix& examples);

// |cos(c_1, h) - cos(c_0, h)| for binary centroids (class 1 is the positive cluster).
double mcd_score(const Centroids& centroids, std::span<const double> h);

// Sum over unordered centroid pairs of |cos(c_i, h) - cos(c_j, h)|.
double mcd_score_multi(const Centroids& centroids, std::span<const double> h);

// MCD of every example against the teacher's centroids. Examples whose
// hidden representation is all zero score 0.
std::vector<double> mcd_scores(const MlpModel& teacher, const Centroids& centroids,
                               const FeatureMatrix& examples);

// Positions of the n largest scores, ties to the lower index; n is clamped
// to the number of scores.
std::vector<std::size_t> top_n_indices(std::span<const double> scores, std::size_t n);

PseudoLabeledSet select_top_n(const MlpModel& teacher, const FeatureMatrix& unlabeled, std::size_t n,
                              double tau);

// Alternates soft-target passes over the full unlabeled set with
// pseudo-supervised passes over the top-n_mcd examples, whose per-example
// target is (1 - lambda) y_teacher + lambda P_T^tau. Selection is made once
// from the frozen teacher.
StudentRun distill_mcd(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                       const DistillConfig& config, const FeatureMatrix* dev = nullptr);

}  // namespace ka
