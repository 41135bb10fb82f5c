#include "ka/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include <zlib.h>

#include "ka/errors.hpp"
#include "ka/random.hpp"

namespace ka {
namespace {

const double kLogFloor = std::log(kLogEpsilon);

void check_dims(std::size_t input, std::size_t hidden, std::size_t classes) {
  if (input == 0 || hidden == 0 || classes == 0) {
    throw InvalidArgument("model dimensions must all be >= 1");
  }
}

// hidden pre-activation is not kept: ReLU'(a) is taken as [h > 0].
void forward_into(const MlpModel& model, const SparseVector& x, DenseVector& hidden,
                  DenseVector& logits) {
  const MlpParams& p = model.params;
  const std::size_t hd = p.w1.cols();
  const std::size_t nc = p.w2.cols();
  if (x.dim != p.w1.rows()) {
    throw InvalidArgument("forward: input dim " + std::to_string(x.dim) + " != model input dim " +
                          std::to_string(p.w1.rows()));
  }
  hidden.assign(p.b1.begin(), p.b1.end());
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const double xv = x.values[k];
    const auto row = p.w1.row(x.indices[k]);
    for (std::size_t j = 0; j < hd; ++j) hidden[j] += xv * row[j];
  }
  for (double& h : hidden) h = std::max(h, 0.0);
  logits.assign(p.b2.begin(), p.b2.end());
  for (std::size_t j = 0; j < hd; ++j) {
    if (hidden[j] == 0.0) continue;
    const auto row = p.w2.row(j);
    for (std::size_t c = 0; c < nc; ++c) logits[c] += hidden[j] * row[c];
  }
}

// ---- binary container helpers ----

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

constexpr unsigned char kMagic[4] = {'K', 'A', 'D', 'P'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 3 * 4;

}  // namespace

MlpParams MlpParams::zeros(const MlpDims& dims) {
  MlpParams p;
  p.w1 = DenseMatrix(dims.input, dims.hidden);
  p.b1.assign(dims.hidden, 0.0);
  p.w2 = DenseMatrix(dims.hidden, dims.classes);
  p.b2.assign(dims.classes, 0.0);
  return p;
}

std::array<std::span<double>, 4> MlpParams::tensors() {
  return {w1.flat(), std::span<double>(b1), w2.flat(), std::span<double>(b2)};
}

std::array<std::span<const double>, 4> MlpParams::tensors() const {
  return {w1.flat(), std::span<const double>(b1), w2.flat(), std::span<const double>(b2)};
}

void MlpParams::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

MlpModel init_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t n_classes,
                    std::uint64_t seed) {
  check_dims(input_dim, hidden_dim, n_classes);
  MlpModel model{MlpParams::zeros({input_dim, hidden_dim, n_classes})};
  Rng rng(seed);
  const auto fill = [&rng](DenseMatrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (double& v : w.flat()) v = rng.uniform(-limit, limit);
  };
  fill(model.params.w1);
  fill(model.params.w2);
  return model;
}

ForwardPass forward(const MlpModel& model, const SparseVector& x) {
  ForwardPass out;
  forward_into(model, x, out.hidden, out.logits);
  out.probs = softmax(out.logits);
  return out;
}

std::size_t predict(const MlpModel& model, const SparseVector& x) {
  DenseVector hidden, logits;
  forward_into(model, x, hidden, logits);
  return argmax(logits);
}

double accuracy(const MlpModel& model, const FeatureMatrix& labeled) {
  if (!labeled.labels) throw InvalidArgument("accuracy: examples are unlabeled");
  if (labeled.size() == 0) throw InvalidArgument("accuracy: no examples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (static_cast<int>(predict(model, labeled.rows[i])) == (*labeled.labels)[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

void TargetBatch::validate(std::size_t n_classes) const {
  const std::size_t n = features.size();
  const bool needs_labels = kind != TargetKind::Soft;
  const bool needs_soft = kind != TargetKind::Hard;
  if (needs_labels) {
    if (labels.size() != n) throw InvalidArgument("TargetBatch: labels not aligned with features");
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
        throw InvalidArgument("TargetBatch: label out of range");
      }
    }
  }
  if (needs_soft) {
    if (soft.size() != n) throw InvalidArgument("TargetBatch: soft rows not aligned with features");
    for (const auto& row : soft) {
      if (row.size() != n_classes) throw InvalidArgument("TargetBatch: soft row has wrong width");
      double sum = 0.0;
      for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("TargetBatch: soft entry outside [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("TargetBatch: soft row does not sum to 1");
    }
  }
  if (kind == TargetKind::Mixed && !(lambda >= 0.0 && lambda <= 1.0)) {
    throw InvalidArgument("TargetBatch: lambda must be in [0,1]");
  }
}

double loss_and_gradients_into(const MlpModel& model, const TargetBatch& batch,
                               const LossOptions& options, std::span<const std::size_t> rows,
                               MlpParams& grads) {
  const MlpParams& p = model.params;
  const MlpDims dims = p.dims();
  if (grads.dims() != dims) grads = MlpParams::zeros(dims);
  else grads.set_zero();

  const std::size_t n = rows.empty() ? batch.size() : rows.size();
  if (n == 0) throw InvalidArgument("loss_and_gradients: empty batch");
  const double tau = batch.kind == TargetKind::Hard ? 1.0 : options.tau;
  if (!(tau > 0.0)) throw InvalidArgument("loss_and_gradients: tau must be positive");
  const double soft_scale = options.scale_soft_by_tau_sq ? tau * tau : 1.0;
  const double hard_weight = batch.kind == TargetKind::Hard    ? 1.0
                             : batch.kind == TargetKind::Mixed ? 1.0 - batch.lambda
                                                               : 0.0;
  const double soft_weight = batch.kind == TargetKind::Soft    ? soft_scale
                             : batch.kind == TargetKind::Mixed ? batch.lambda * soft_scale
                                                               : 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t nc = dims.classes;
  const std::size_t hd = dims.hidden;

  DenseVector hidden, logits, logq(nc), q(nc), dz(nc), dh(hd);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = rows.empty() ? k : rows[k];
    if (r >= batch.size()) throw InvalidArgument("loss_and_gradients: row index out of range");
    const SparseVector& x = batch.features[r];
    forward_into(model, x, hidden, logits);

    double top = logits[0] / tau;
    for (std::size_t c = 1; c < nc; ++c) top = std::max(top, logits[c] / tau);
    double sum = 0.0;
    for (std::size_t c = 0; c < nc; ++c) sum += std::exp(logits[c] / tau - top);
    const double lse = top + std::log(sum);
    for (std::size_t c = 0; c < nc; ++c) {
      logq[c] = logits[c] / tau - lse;
      q[c] = std::exp(logq[c]);
    }

    // Each portion is -sum_c t_c max(logq_c, ln eps); clamped classes have
    // zero derivative, so d/d(z/tau) = q * sum_{unclamped} t - t_unclamped.
    std::fill(dz.begin(), dz.end(), 0.0);
    double loss = 0.0;
    const auto add_portion = [&](double weight, auto target_of) {
      if (weight == 0.0) return;
      double mass = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const double t = target_of(c);
        if (t == 0.0) continue;
        if (logq[c] < kLogFloor) {
          loss -= weight * t * kLogFloor;
        } else {
          loss -= weight * t * logq[c];
          mass += t;
          dz[c] -= weight * t;
        }
      }
      for (std::size_t c = 0; c < nc; ++c) dz[c] += weight * mass * q[c];
    };
    if (hard_weight != 0.0) {
      const auto y = static_cast<std::size_t>(batch.labels[r]);
      add_portion(hard_weight, [y](std::size_t c) { return c == y ? 1.0 : 0.0; });
    }
    if (soft_weight != 0.0) {
      const ProbVector& s = batch.soft[r];
      add_portion(soft_weight, [&s](std::size_t c) { return s[c]; });
    }
    total += loss;

    for (double& v : dz) v *= inv_n / tau;
    for (std::size_t c = 0; c < nc; ++c) grads.b2[c] += dz[c];
    for (std::size_t j = 0; j < hd; ++j) {
      if (hidden[j] == 0.0) {
        dh[j] = 0.0;
        continue;
      }
      auto gw2 = grads.w2.row(j);
      const auto w2 = p.w2.row(j);
      double back = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        gw2[c] += hidden[j] * dz[c];
        back += w2[c] * dz[c];
      }
      dh[j] = back;
    }
    for (std::size_t j = 0; j < hd; ++j) grads.b1[j] += dh[j];
    for (std::size_t e = 0; e < x.nnz(); ++e) {
      const double xv = x.values[e];
      auto gw1 = grads.w1.row(x.indices[e]);
      for (std::size_t j = 0; j < hd; ++j) gw1[j] += xv * dh[j];
    }
  }
  return total * inv_n;
}

LossAndGradients loss_and_gradients(const MlpModel& model, const TargetBatch& batch,
                                    const LossOptions& options, std::span<const std::size_t> rows) {
  batch.validate(model.dims().classes);
  LossAndGradients out;
  out.loss = loss_and_gradients_into(model, batch, options, rows, out.grads);
  return out;
}

AdamState AdamState::for_model(const MlpModel& model, double lr) {
  if (!(lr > 0.0)) throw InvalidArgument("Adam: learning rate must be positive");
  AdamState s;
  s.lr = lr;
  s.m = MlpParams::zeros(model.dims());
  s.v = MlpParams::zeros(model.dims());
  return s;
}

void adam_step(AdamState& state, MlpModel& model, const MlpParams& grads) {
  const MlpDims dims = model.dims();
  if (grads.dims() != dims || state.m.dims() != dims || state.v.dims() != dims) {
    throw InvalidArgument("adam_step: shape mismatch");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, lr = state.lr, eps = state.epsilon;

  auto params = model.params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* pk = params[k].data();
    const double* gk = g[k].data();
    double* mk = m[k].data();
    double* vk = v[k].data();
    const std::size_t size = params[k].size();
    for (std::size_t i = 0; i < size; ++i) {
      mk[i] = b1 * mk[i] + (1.0 - b1) * gk[i];
      vk[i] = b2 * vk[i] + (1.0 - b2) * gk[i] * gk[i];
      pk[i] -= lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
  if (hidden_dim < 1) throw InvalidArgument("TrainConfig: hidden_dim must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("TrainConfig: lr must be positive");
  if (!(tau > 0.0)) throw InvalidArgument("TrainConfig: tau must be positive");
  if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) {
    throw InvalidArgument("TrainConfig: dev_fraction must be in [0,1)");
  }
}

Trainer::Trainer(MlpModel model, double lr)
    : model_(std::move(model)), adam_(AdamState::for_model(model_, lr)) {}

double Trainer::run_epoch(const TargetBatch& data, std::size_t batch_size, bool shuffle,
                          std::uint64_t shuffle_seed, const LossOptions& options) {
  if (data.size() == 0) throw InvalidArgument("run_epoch: no training examples");
  if (batch_size == 0) throw InvalidArgument("run_epoch: batch_size must be >= 1");
  order_.resize(data.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(shuffle_seed);
    rng.shuffle(std::span<std::size_t>(order_));
  }
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order_.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, order_.size() - start);
    const std::span<const std::size_t> rows(order_.data() + start, len);
    loss_sum += loss_and_gradients_into(model_, data, options, rows, grads_);
    adam_step(adam_, model_, grads_);
    ++batches;
  }
  return loss_sum / static_cast<double>(batches);
}

DevSelector::DevSelector(const FeatureMatrix* dev) : dev_(dev) {
  if (dev_ && dev_->size() > 0 && !dev_->labeled()) {
    throw InvalidArgument("dev set must be labeled");
  }
}

std::optional<double> DevSelector::observe(const MlpModel& model, std::size_t epoch) {
  if (!active()) return std::nullopt;
  const double acc = accuracy(model, *dev_);
  if (acc > best_accuracy_) {
    best_accuracy_ = acc;
    best_epoch_ = epoch;
    best_ = model;
  }
  return acc;
}

TrainResult train(MlpModel model, const TargetBatch& data, const TrainConfig& config,
                  const FeatureMatrix* dev) {
  config.validate();
  if (data.size() == 0) throw InvalidArgument("train: no training examples");
  data.validate(model.dims().classes);

  Trainer trainer(std::move(model), config.lr);
  DevSelector selector(dev);
  TrainHistory history;
  const LossOptions options{config.tau, false};
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochRecord record;
    record.epoch = e + 1;
    record.loss = trainer.run_epoch(data, config.batch_size, config.shuffle, config.seed + e, options);
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

void save_model(const MlpModel& model, const Vocabulary* vocab, const std::filesystem::path& path) {
  const MlpDims dims = model.dims();
  if (vocab != nullptr && vocab->size() != dims.input) {
    throw InvalidArgument("save_model: vocabulary size does not match the model input dimension");
  }
  std::size_t n_params = 0;
  for (auto t : model.params.tensors()) n_params += t.size();
  std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
  bytes.reserve(kHeaderBytes + 8 * n_params + 8);
  put_u32(bytes, kModelFormatVersion);
  put_u32(bytes, static_cast<std::uint32_t>(dims.input));
  put_u32(bytes, static_cast<std::uint32_t>(dims.hidden));
  put_u32(bytes, static_cast<std::uint32_t>(dims.classes));
  for (auto t : model.params.tensors()) {
    for (double v : t) put_f64(bytes, v);
  }
  put_u32(bytes, crc32_of(bytes.data(), bytes.size()));
  const std::string vocab_json = vocab ? vocab->to_json().dump() : std::string();
  put_u32(bytes, static_cast<std::uint32_t>(vocab_json.size()));
  bytes.insert(bytes.end(), vocab_json.begin(), vocab_json.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ModelBundle load_model_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());

  const std::string where = path.string() + ": ";
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + "not a model file (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) throw ChecksumMismatch(where + "truncated header");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kModelFormatVersion) {
    throw VersionMismatch(where + "unsupported model format version " + std::to_string(version));
  }
  const MlpDims dims{get_u32(bytes.data() + 8), get_u32(bytes.data() + 12), get_u32(bytes.data() + 16)};
  if (dims.input == 0 || dims.hidden == 0 || dims.classes == 0) {
    throw FormatError(where + "zero model dimension");
  }
  const std::size_t n_params =
      dims.input * dims.hidden + dims.hidden + dims.hidden * dims.classes + dims.classes;
  const std::size_t body_end = kHeaderBytes + 8 * n_params;
  if (bytes.size() < body_end + 4) throw ChecksumMismatch(where + "truncated parameters");
  if (get_u32(bytes.data() + body_end) != crc32_of(bytes.data(), body_end)) {
    throw ChecksumMismatch(where + "checksum mismatch");
  }

  ModelBundle bundle{MlpModel{MlpParams::zeros(dims)}, std::nullopt};
  const unsigned char* cursor = bytes.data() + kHeaderBytes;
  for (auto t : bundle.model.params.tensors()) {
    for (double& v : t) {
      v = get_f64(cursor);
      cursor += 8;
    }
  }

  std::size_t pos = body_end + 4;
  if (bytes.size() < pos + 4) throw ChecksumMismatch(where + "truncated vocabulary length");
  const std::uint32_t vocab_len = get_u32(bytes.data() + pos);
  pos += 4;
  if (bytes.size() < pos + vocab_len) throw ChecksumMismatch(where + "truncated vocabulary");
  if (bytes.size() > pos + vocab_len) throw FormatError(where + "trailing bytes after vocabulary");
  if (vocab_len > 0) {
    const std::string text(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    try {
      bundle.vocab = Vocabulary::from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + "embedded vocabulary: " + e.what());
    }
    if (bundle.vocab->size() != dims.input) {
      throw FormatError(where + "embedded vocabulary size does not match input dimension");
    }
  }
  return bundle;
}

MlpModel load_model(const std::filesystem::path& path) { return load_model_bundle(path).model; }

}  // namespace ka
