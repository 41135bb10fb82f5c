#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ka/core_math.hpp"
#include "ka/text_features.hpp"

namespace ka {

inline constexpr std::size_t kDefaultHiddenDim = 1000;
inline constexpr std::size_t kDefaultClasses = 2;

struct MlpDims {
  std::size_t input = 0;
  std::size_t hidden = kDefaultHiddenDim;
  std::size_t classes = kDefaultClasses;

  friend bool operator==(const MlpDims&, const MlpDims&) = default;
};

// The four parameter tensors of a one-hidden-layer network. Also used as the
// container for gradients and Adam moments.
struct MlpParams {
  DenseMatrix w1;  // input x hidden
  DenseVector b1;  // hidden
  DenseMatrix w2;  // hidden x classes
  DenseVector b2;  // classes

  static MlpParams zeros(const MlpDims& dims);

  MlpDims dims() const { return {w1.rows(), w1.cols(), w2.cols()}; }
  std::array<std::span<double>, 4> tensors();
  std::array<std::span<const double>, 4> tensors() const;
  void set_zero();

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct MlpModel {
  MlpParams params;

  MlpDims dims() const { return params.dims(); }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

// Glorot-uniform weights from the seeded generator, zero biases.
MlpModel init_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t n_classes,
                    std::uint64_t seed);

struct ForwardPass {
  DenseVector hidden;  // ReLU(W1^T x + b1)
  DenseVector logits;  // W2^T hidden + b2
  ProbVector probs;    // softmax(logits)
};

ForwardPass forward(const MlpModel& model, const SparseVector& x);

std::size_t predict(const MlpModel& model, const SparseVector& x);

double accuracy(const MlpModel& model, const FeatureMatrix& labeled);

enum class TargetKind {
  Hard,   // one-hot labels, loss at temperature 1
  Soft,   // probability rows, loss H(target, softmax(z / tau))
  Mixed,  // (1 - lambda) one-hot + lambda soft, against softmax(z / tau)
};

struct TargetBatch {
  TargetKind kind = TargetKind::Hard;
  std::vector<SparseVector> features;
  std::vector<int> labels;       // Hard, Mixed
  std::vector<ProbVector> soft;  // Soft, Mixed
  double lambda = 1.0;           // Mixed: weight of the soft portion

  std::size_t size() const noexcept { return features.size(); }
  void validate(std::size_t n_classes) const;
};

struct LossOptions {
  double tau = 1.0;  // ignored for Hard batches
  // Multiplies the soft portion's loss (and so its gradient) by tau^2.
  bool scale_soft_by_tau_sq = false;
};

struct LossAndGradients {
  double loss = 0.0;
  MlpParams grads;
};

// Mean loss over the rows in `rows` (all rows when empty) and its exact
// gradient. For Mixed batches the objective is
//   (1 - lambda) H(y, P^tau) + c lambda H(soft, P^tau),  c = tau^2 or 1,
// which equals H((1 - lambda) y + lambda soft, P^tau) when c = 1.
LossAndGradients loss_and_gradients(const MlpModel& model, const TargetBatch& batch,
                                    const LossOptions& options,
                                    std::span<const std::size_t> rows = {});

// Same as loss_and_gradients, writing into a preallocated gradient buffer of
// the model's shape. Returns the loss.
double loss_and_gradients_into(const MlpModel& model, const TargetBatch& batch,
                               const LossOptions& options, std::span<const std::size_t> rows,
                               MlpParams& grads);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t t = 0;
  MlpParams m;
  MlpParams v;

  static AdamState for_model(const MlpModel& model, double lr = 0.001);
};

void adam_step(AdamState& state, MlpModel& model, const MlpParams& grads);

struct TrainConfig {
  std::size_t hidden_dim = kDefaultHiddenDim;
  std::size_t batch_size = 10;
  std::size_t epochs = 0;  // required, no default
  double lr = 0.001;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double dev_fraction = 0.1;  // share of labeled data the harness reserves for dev
  double tau = 1.0;           // for soft-target runs

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  std::optional<double> dev_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;  // epoch whose parameters were returned
};

// Owns a model and its optimizer state across epochs, so callers can
// interleave passes over different target sets.
class Trainer {
 public:
  Trainer(MlpModel model, double lr);

  // One shuffled pass over `data` in mini-batches. Returns the mean batch loss.
  double run_epoch(const TargetBatch& data, std::size_t batch_size, bool shuffle,
                   std::uint64_t shuffle_seed, const LossOptions& options);

  const MlpModel& model() const noexcept { return model_; }
  MlpModel release() && { return std::move(model_); }

 private:
  MlpModel model_;
  AdamState adam_;
  MlpParams grads_;
  std::vector<std::size_t> order_;
};

// Keeps the snapshot with the best dev accuracy; ties keep the earlier one.
class DevSelector {
 public:
  explicit DevSelector(const FeatureMatrix* dev);

  bool active() const noexcept { return dev_ != nullptr && dev_->size() > 0; }
  // Returns the dev accuracy when a dev set is active.
  std::optional<double> observe(const MlpModel& model, std::size_t epoch);
  std::optional<MlpModel> take_best() { return std::move(best_); }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

 private:
  const FeatureMatrix* dev_;
  std::optional<MlpModel> best_;
  double best_accuracy_ = -1.0;
  std::size_t best_epoch_ = 0;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

// Epochs of seeded mini-batch Adam. Epoch e (0-based) shuffles with seed
// config.seed + e. With a non-empty labeled dev set the best-dev snapshot is
// returned, otherwise the final model.
// Soft batches use config.tau; gradients are not tau^2-scaled.
TrainResult train(MlpModel model, const TargetBatch& data, const TrainConfig& config,
                  const FeatureMatrix* dev = nullptr);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const MlpModel& model, const Vocabulary* vocab, const std::filesystem::path& path);

struct ModelBundle {
  MlpModel model;
  std::optional<Vocabulary> vocab;
};

ModelBundle load_model_bundle(const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace ka
