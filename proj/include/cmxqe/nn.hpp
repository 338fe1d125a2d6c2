#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cmxqe/common.hpp"
#include "cmxqe/fusion.hpp"

namespace cmxqe::nn {

/// Layer widths: 3072 -> 1536 -> 768 -> 10.
inline constexpr std::array<std::size_t, 4> kLayerDims{kFusedDim, 1536, 768, kNumClasses};
inline constexpr std::size_t kNumLayers = 3;

/// Loss clamp applied to probabilities before taking logarithms.
inline constexpr double kProbClamp = 1e-7;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct DenseLayer {
  Matrix<T> weights;  // out x in
  Vector<T> bias;     // out
};

template <typename T>
using LayerSet = std::array<DenseLayer<T>, kNumLayers>;

/// Fixed-architecture classifier: ReLU after the two hidden layers, logistic
/// sigmoid per output unit. Parameters start at zero; see init_model.
template <typename T>
class BasicMLP {
 public:
  BasicMLP();
  BasicMLP(const BasicMLP& other);
  BasicMLP& operator=(const BasicMLP& other);
  BasicMLP(BasicMLP&&) noexcept = default;
  BasicMLP& operator=(BasicMLP&&) noexcept = default;

  const LayerSet<T>& layers() const { return layers_; }
  const DenseLayer<T>& layer(std::size_t i) const { return layers_[i]; }

  /// Mutable access invalidates every forward cache taken from this model.
  LayerSet<T>& mutable_layers() {
    ++version_;
    return layers_;
  }

  std::uint64_t id() const { return id_; }
  std::uint64_t version() const { return version_; }

  std::size_t parameter_count() const;

  template <typename U>
  BasicMLP<U> cast() const {
    BasicMLP<U> out;
    auto& dst = out.mutable_layers();
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      dst[l].weights = layers_[l].weights.template cast<U>();
      dst[l].bias = layers_[l].bias.template cast<U>();
    }
    return out;
  }

  /// Bitwise parameter equality.
  bool same_parameters(const BasicMLP& other) const;

 private:
  LayerSet<T> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

using MLPModel = BasicMLP<float>;

/// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)) drawn row-major, layer by
/// layer, from mt19937_64(seed); biases zero.
MLPModel init_model(std::uint64_t seed);

template <typename T>
struct ForwardCache {
  Matrix<T> input;
  Matrix<T> pre1, act1;
  Matrix<T> pre2, act2;
  Matrix<T> logits;
  Matrix<T> probs;
  std::uint64_t model_id = 0;
  std::uint64_t model_version = 0;
};

/// Batch forward pass over an N x 3072 input. Throws DimMismatch or NonFiniteInput.
template <typename T>
ForwardCache<T> forward(const BasicMLP<T>& model, const Matrix<T>& batch);

/// Single-row convenience; returns the 10 probabilities.
std::vector<float> forward(const MLPModel& model, std::span<const float> row);

/// N x 10 one-hot targets from class indices 0..9.
template <typename T>
Matrix<T> one_hot(std::span<const int> classes);

/// Mean over batch and classes of -[y ln p + (1-y) ln(1-p)] with p clamped to
/// [1e-7, 1-1e-7]. Accumulates in double. Throws ShapeMismatch.
template <typename T>
double bce_loss(const Matrix<T>& probs, const Matrix<T>& targets);

/// Exact gradient of bce_loss(cache.probs, targets) with respect to every
/// parameter; zero where the clamp is active. Throws StaleCache when the cache
/// was taken from another model or before the model last changed.
template <typename T>
LayerSet<T> backward(const BasicMLP<T>& model, const ForwardCache<T>& cache, const Matrix<T>& targets);

struct AdamHyper {
  double learning_rate = 5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments for a list of parameter buffers. The buffers are bound lazily on
/// the first step and must keep their sizes afterwards.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

/// Bias-corrected Adam update of each params[i] by grads[i]; increments step.
/// Throws ShapeMismatch.
template <typename T>
void adam_update(AdamState<T>& state, std::span<const std::span<T>> params,
                 std::span<const std::span<const T>> grads);

template <typename T>
void adam_step(BasicMLP<T>& model, const LayerSet<T>& grads, AdamState<T>& state);

struct TrainConfig {
  Task task = Task::Rating;
  std::optional<int> epochs;  // default: 3 for rating, 10 for disagreement
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double learning_rate = 5e-6;

  int resolved_epochs() const { return epochs.value_or(task == Task::Rating ? 3 : 10); }

  bool operator==(const TrainConfig&) const = default;
};

struct TrainResult {
  MLPModel model;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Seeded mini-batch training: init_model(seed), per-epoch Fisher-Yates
/// shuffle, Adam. Single-threaded and bitwise reproducible for a fixed seed.
/// Throws EmptyDataset, TaskMismatch, InvalidArgument or NonFiniteLoss.
TrainResult train(const TrainConfig& config, const FeatureMatrix& features,
                  const EpochCallback& on_epoch = {});

/// Index of the largest value; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

/// Class indices 0..9 decoded from the output scores.
std::vector<int> predict_classes(const MLPModel& model, const FeatureMatrix& features);

/// Labels on the task's natural scale.
std::vector<int> predict(const MLPModel& model, const FeatureMatrix& features);

struct Checkpoint {
  MLPModel model;
  TrainConfig config;
  std::vector<double> loss_trace;

  bool bitwise_equal(const Checkpoint& other) const;
};

// MLPC container, little-endian:
//   "MLPC" | version u32 | layer count u32 | 4 x dim u32 |
//   per layer: weights (out*in f32, row-major) then bias (out f32) |
//   task u8 | epochs u32 | batch size u64 | seed u64 | learning rate f64 |
//   trace count u32 | trace f64...
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws BadMagic, VersionMismatch, ArchitectureMismatch or TruncatedFile.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// "epoch,mean_loss" rows, epochs numbered from 1.
std::string loss_trace_csv(std::span<const double> trace);

}  // namespace cmxqe::nn
