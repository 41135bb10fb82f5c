#include "ka/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ka/errors.hpp"

namespace ka {
namespace {

void require_non_empty(const FeatureMatrix& m, const char* what) {
  if (m.size() == 0) throw InvalidArgument(std::string(what) + ": no examples");
}

void check_input_dim(const MlpModel& model, const FeatureMatrix& m, const char* what) {
  if (model.dims().input != m.dim) {
    throw InvalidArgument(std::string(what) + ": feature dim " + std::to_string(m.dim) +
                          " != model input dim " + std::to_string(model.dims().input));
  }
}

void check_teachers(std::span<const MlpModel> teachers, const TeacherWeights& weights) {
  if (teachers.empty()) throw InvalidArgument("at least one teacher is required");
  if (weights.size() != teachers.size()) {
    throw InvalidArgument("teacher weights (" + std::to_string(weights.size()) +
                          ") not aligned with teachers (" + std::to_string(teachers.size()) + ")");
  }
  double sum = 0.0;
  for (double w : weights.values) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("teacher weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("teacher weights must sum to 1");
  const MlpDims first = teachers.front().dims();
  for (const auto& t : teachers) {
    if (t.dims().input != first.input || t.dims().classes != first.classes) {
      throw InvalidArgument("teachers disagree on input or class dimensions");
    }
  }
}

// Student trained on soft targets for `config.epochs` passes.
StudentRun distill_soft(std::vector<ProbVector> targets, std::size_t n_classes,
                        const FeatureMatrix& unlabeled, const DistillConfig& config,
                        const FeatureMatrix* dev) {
  TargetBatch batch;
  batch.kind = TargetKind::Soft;
  batch.features = unlabeled.rows;
  batch.soft = std::move(targets);

  TrainConfig tc;
  tc.hidden_dim = config.hidden_dim;
  tc.batch_size = config.batch_size;
  tc.epochs = config.epochs;
  tc.lr = config.lr;
  tc.seed = config.seed;
  tc.tau = config.tau;
  MlpModel student = init_model(unlabeled.dim, config.hidden_dim, n_classes, config.seed);
  auto result = train(std::move(student), batch, tc, dev);
  return {std::move(result.model), std::move(result.history)};
}

}  // namespace

void DistillConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("DistillConfig: tau must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("DistillConfig: lambda must be in [0,1]");
  if (n_mcd < 1) throw InvalidArgument("DistillConfig: n_mcd must be >= 1");
  if (epochs < 1) throw InvalidArgument("DistillConfig: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("DistillConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("DistillConfig: lr must be positive");
  if (hidden_dim < 1) throw InvalidArgument("DistillConfig: hidden_dim must be >= 1");
  if (unsup_epochs == 0 && pseudo_epochs == 0) {
    throw InvalidArgument("DistillConfig: unsup_epochs and pseudo_epochs cannot both be 0");
  }
}

MlpModel train_teacher(const FeatureMatrix& labeled, const TrainConfig& config,
                       const FeatureMatrix& dev) {
  if (!labeled.labels) throw InvalidArgument("train_teacher: source examples must be labeled");
  require_non_empty(labeled, "train_teacher");
  if (dev.size() > 0 && dev.dim != labeled.dim) throw InvalidArgument("train_teacher: dev dim mismatch");

  TargetBatch batch;
  batch.kind = TargetKind::Hard;
  batch.features = labeled.rows;
  batch.labels = *labeled.labels;
  MlpModel teacher = init_model(labeled.dim, config.hidden_dim, kDefaultClasses, config.seed);
  return train(std::move(teacher), batch, config, dev.size() > 0 ? &dev : nullptr).model;
}

std::vector<ProbVector> soft_targets(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                                     double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("soft_targets: tau must be positive");
  check_input_dim(teacher, unlabeled, "soft_targets");
  std::vector<ProbVector> out;
  out.reserve(unlabeled.size());
  for (const auto& x : unlabeled.rows) out.push_back(tempered_softmax(forward(teacher, x).logits, tau));
  return out;
}

std::vector<ProbVector> mixed_soft_targets(std::span<const MlpModel> teachers,
                                           const TeacherWeights& weights,
                                           const FeatureMatrix& unlabeled, double tau) {
  check_teachers(teachers, weights);
  const std::size_t nc = teachers.front().dims().classes;
  std::vector<ProbVector> out(unlabeled.size(), ProbVector(nc, 0.0));
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    const auto rows = soft_targets(teachers[t], unlabeled, tau);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < nc; ++c) out[i][c] += weights[t] * rows[i][c];
    }
  }
  return out;
}

StudentRun distill_single(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                          const DistillConfig& config, const FeatureMatrix* dev) {
  config.validate();
  require_non_empty(unlabeled, "distill_single");
  return distill_soft(soft_targets(teacher, unlabeled, config.tau), teacher.dims().classes,
                      unlabeled, config, dev);
}

StudentRun distill_multi(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                         const FeatureMatrix& unlabeled, const DistillConfig& config,
                         const FeatureMatrix* dev) {
  config.validate();
  require_non_empty(unlabeled, "distill_multi");
  return distill_soft(mixed_soft_targets(teachers, weights, unlabeled, config.tau),
                      teachers.front().dims().classes, unlabeled, config, dev);
}

std::size_t teacher_only_predict(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                                 const SparseVector& x) {
  check_teachers(teachers, weights);
  ProbVector mixture(teachers.front().dims().classes, 0.0);
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    const ProbVector probs = forward(teachers[t], x).probs;
    for (std::size_t c = 0; c < mixture.size(); ++c) mixture[c] += weights[t] * probs[c];
  }
  return argmax(mixture);
}

double teacher_only_accuracy(std::span<const MlpModel> teachers, const TeacherWeights& weights,
                             const FeatureMatrix& labeled) {
  if (!labeled.labels) throw InvalidArgument("teacher_only_accuracy: examples are unlabeled");
  require_non_empty(labeled, "teacher_only_accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (static_cast<int>(teacher_only_predict(teachers, weights, labeled.rows[i])) == (*labeled.labels)[i]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

Centroids compute_centroids(const MlpModel& teacher, const FeatureMatrix& examples) {
  require_non_empty(examples, "compute_centroids");
  check_input_dim(teacher, examples, "compute_centroids");
  const MlpDims dims = teacher.dims();
  Centroids out{DenseMatrix(dims.classes, dims.hidden), std::vector<std::size_t>(dims.classes, 0)};
  for (const auto& x : examples.rows) {
    const ForwardPass fp = forward(teacher, x);
    const std::size_t k = argmax(fp.logits);
    auto row = out.means.row(k);
    for (std::size_t j = 0; j < dims.hidden; ++j) row[j] += fp.hidden[j];
    ++out.counts[k];
  }
  for (std::size_t k = 0; k < dims.classes; ++k) {
    if (out.counts[k] == 0) {
      throw EmptyCluster("teacher assigns no examples to class " + std::to_string(k) +
                         "; cluster difference is undefined");
    }
    for (double& v : out.means.row(k)) v /= static_cast<double>(out.counts[k]);
  }
  return out;
}

double mcd_score(const Centroids& centroids, std::span<const double> h) {
  if (centroids.classes() != 2) throw InvalidArgument("mcd_score: binary centroids required");
  return std::abs(cosine(centroids.means.row(1), h) - cosine(centroids.means.row(0), h));
}

double mcd_score_multi(const Centroids& centroids, std::span<const double> h) {
  const std::size_t n = centroids.classes();
  if (n < 2) throw InvalidArgument("mcd_score_multi: at least two classes required");
  std::vector<double> cos(n);
  for (std::size_t k = 0; k < n; ++k) cos[k] = cosine(centroids.means.row(k), h);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += std::abs(cos[i] - cos[j]);
  }
  return total;
}

std::vector<double> mcd_scores(const MlpModel& teacher, const Centroids& centroids,
                               const FeatureMatrix& examples) {
  check_input_dim(teacher, examples, "mcd_scores");
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& x : examples.rows) {
    const ForwardPass fp = forward(teacher, x);
    if (l2_norm(fp.hidden) == 0.0) {
      out.push_back(0.0);
      continue;
    }
    out.push_back(centroids.classes() == 2 ? mcd_score(centroids, fp.hidden)
                                           : mcd_score_multi(centroids, fp.hidden));
  }
  return out;
}

std::vector<std::size_t> top_n_indices(std::span<const double> scores, std::size_t n) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

PseudoLabeledSet select_top_n(const MlpModel& teacher, const FeatureMatrix& unlabeled, std::size_t n,
                              double tau) {
  if (n < 1) throw InvalidArgument("select_top_n: n must be >= 1");
  const Centroids centroids = compute_centroids(teacher, unlabeled);
  const std::vector<double> scores = mcd_scores(teacher, centroids, unlabeled);

  PseudoLabeledSet out;
  out.indices = top_n_indices(scores, n);
  for (std::size_t i : out.indices) {
    const ForwardPass fp = forward(teacher, unlabeled.rows[i]);
    out.features.push_back(unlabeled.rows[i]);
    out.teacher_labels.push_back(static_cast<int>(argmax(fp.logits)));
    out.teacher_soft.push_back(tempered_softmax(fp.logits, tau));
    out.mcd_scores.push_back(scores[i]);
  }
  return out;
}

StudentRun distill_mcd(const MlpModel& teacher, const FeatureMatrix& unlabeled,
                       const DistillConfig& config, const FeatureMatrix* dev) {
  config.validate();
  require_non_empty(unlabeled, "distill_mcd");
  const std::size_t nc = teacher.dims().classes;

  TargetBatch soft;
  soft.kind = TargetKind::Soft;
  soft.features = unlabeled.rows;
  soft.soft = soft_targets(teacher, unlabeled, config.tau);

  PseudoLabeledSet selected = select_top_n(teacher, unlabeled, config.n_mcd, config.tau);
  TargetBatch pseudo;
  pseudo.kind = TargetKind::Mixed;
  pseudo.features = std::move(selected.features);
  pseudo.labels = std::move(selected.teacher_labels);
  pseudo.soft = std::move(selected.teacher_soft);
  pseudo.lambda = config.lambda;
  soft.validate(nc);
  pseudo.validate(nc);

  Trainer trainer(init_model(unlabeled.dim, config.hidden_dim, nc, config.seed), config.lr);
  DevSelector selector(dev);
  TrainHistory history;
  const LossOptions unsup_options{config.tau, false};
  const LossOptions pseudo_options{config.tau, true};
  std::uint64_t pass = 0;
  for (std::size_t round = 0; round < config.epochs; ++round) {
    double loss_sum = 0.0;
    std::size_t passes = 0;
    for (std::size_t e = 0; e < config.unsup_epochs; ++e, ++passes) {
      loss_sum += trainer.run_epoch(soft, config.batch_size, true, config.seed + pass++, unsup_options);
    }
    for (std::size_t e = 0; e < config.pseudo_epochs; ++e, ++passes) {
      loss_sum += trainer.run_epoch(pseudo, config.batch_size, true, config.seed + pass++, pseudo_options);
    }
    EpochRecord record;
    record.epoch = round + 1;
    record.loss = loss_sum / static_cast<double>(passes);
    record.dev_accuracy = selector.observe(trainer.model(), record.epoch);
    history.epochs.push_back(record);
  }
  if (auto best = selector.take_best()) {
    history.selected_epoch = selector.best_epoch();
    return {std::move(*best), std::move(history)};
  }
  history.selected_epoch = config.epochs;
  return {std::move(trainer).release(), std::move(history)};
}

}  // namespace ka
