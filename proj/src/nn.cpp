#include "cmxqe/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <random>

#include "cmxqe/error.hpp"
#include "cmxqe/io.hpp"

namespace cmxqe::nn {

namespace {

std::atomic<std::uint64_t> next_model_id{1};

constexpr char kCheckpointMagic[4] = {'M', 'L', 'P', 'C'};

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
bool same_bits(const Eigen::DenseBase<T>& a, const Eigen::DenseBase<T>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.derived().data(), b.derived().data(),
                     static_cast<std::size_t>(a.size()) * sizeof(typename T::Scalar)) == 0;
}

std::string shape(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
}

}  // namespace

template <typename T>
BasicMLP<T>::BasicMLP() : id_(next_model_id.fetch_add(1)) {
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const auto in = static_cast<Eigen::Index>(kLayerDims[l]);
    const auto out = static_cast<Eigen::Index>(kLayerDims[l + 1]);
    layers_[l].weights = Matrix<T>::Zero(out, in);
    layers_[l].bias = Vector<T>::Zero(out);
  }
}

template <typename T>
BasicMLP<T>::BasicMLP(const BasicMLP& other) : layers_(other.layers_), id_(next_model_id.fetch_add(1)) {}

template <typename T>
BasicMLP<T>& BasicMLP<T>::operator=(const BasicMLP& other) {
  if (this != &other) {
    layers_ = other.layers_;
    ++version_;
  }
  return *this;
}

template <typename T>
std::size_t BasicMLP<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  return n;
}

template <typename T>
bool BasicMLP<T>::same_parameters(const BasicMLP& other) const {
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    if (!same_bits(layers_[l].weights, other.layers_[l].weights) ||
        !same_bits(layers_[l].bias, other.layers_[l].bias)) {
      return false;
    }
  }
  return true;
}

MLPModel init_model(std::uint64_t seed) {
  MLPModel model;
  std::mt19937_64 rng(seed);
  auto& layers = model.mutable_layers();
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(kLayerDims[l]));
    const float fbound_max = static_cast<float>(bound) > bound
                                 ? std::nextafter(static_cast<float>(bound), 0.0f)
                                 : static_cast<float>(bound);
    auto& w = layers[l].weights;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double u = unit_interval(rng());
      const float value = static_cast<float>((2.0 * u - 1.0) * bound);
      w.data()[i] = std::clamp(value, -fbound_max, fbound_max);
    }
    layers[l].bias.setZero();
  }
  return model;
}

template <typename T>
ForwardCache<T> forward(const BasicMLP<T>& model, const Matrix<T>& batch) {
  if (batch.cols() != static_cast<Eigen::Index>(kLayerDims[0])) {
    throw Error(ErrorKind::DimMismatch, "input has " + std::to_string(batch.cols()) + " columns, expected " +
                                            std::to_string(kLayerDims[0]));
  }
  if (!batch.allFinite()) throw Error(ErrorKind::NonFiniteInput, "input batch contains NaN or Inf");

  const auto& layers = model.layers();
  ForwardCache<T> cache;
  cache.model_id = model.id();
  cache.model_version = model.version();
  cache.input = batch;
  cache.pre1 = (batch * layers[0].weights.transpose()).rowwise() + layers[0].bias.transpose();
  cache.act1 = cache.pre1.cwiseMax(T(0));
  cache.pre2 = (cache.act1 * layers[1].weights.transpose()).rowwise() + layers[1].bias.transpose();
  cache.act2 = cache.pre2.cwiseMax(T(0));
  cache.logits = (cache.act2 * layers[2].weights.transpose()).rowwise() + layers[2].bias.transpose();
  cache.probs = cache.logits.unaryExpr([](T z) { return sigmoid(z); });
  return cache;
}

std::vector<float> forward(const MLPModel& model, std::span<const float> row) {
  Matrix<float> batch(1, static_cast<Eigen::Index>(row.size()));
  std::copy(row.begin(), row.end(), batch.data());
  const auto cache = forward(model, batch);
  return std::vector<float>(cache.probs.data(), cache.probs.data() + cache.probs.size());
}

template <typename T>
Matrix<T> one_hot(std::span<const int> classes) {
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(classes.size()),
                                  static_cast<Eigen::Index>(kNumClasses));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= static_cast<int>(kNumClasses)) {
      throw Error(ErrorKind::LabelOutOfRange, "class index " + std::to_string(classes[i]));
    }
    out(static_cast<Eigen::Index>(i), classes[i]) = T(1);
  }
  return out;
}

template <typename T>
double bce_loss(const Matrix<T>& probs, const Matrix<T>& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols() || probs.size() == 0) {
    throw Error(ErrorKind::ShapeMismatch,
                "probs " + shape(probs.rows(), probs.cols()) + " vs targets " + shape(targets.rows(), targets.cols()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs.data()[i]), kProbClamp, 1.0 - kProbClamp);
    const double y = static_cast<double>(targets.data()[i]);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

template <typename T>
LayerSet<T> backward(const BasicMLP<T>& model, const ForwardCache<T>& cache, const Matrix<T>& targets) {
  if (cache.model_id != model.id() || cache.model_version != model.version()) {
    throw Error(ErrorKind::StaleCache, "forward cache does not belong to the current model state");
  }
  if (targets.rows() != cache.probs.rows() || targets.cols() != cache.probs.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "targets " + shape(targets.rows(), targets.cols()) + " vs outputs " +
                                              shape(cache.probs.rows(), cache.probs.cols()));
  }
  const auto& layers = model.layers();
  const T scale = T(1) / static_cast<T>(cache.probs.size());

  // Through sigmoid and the clamped log loss: (p - y) / (N K) inside the clamp.
  Matrix<T> delta(cache.probs.rows(), cache.probs.cols());
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    const T p = cache.probs.data()[i];
    const double pd = static_cast<double>(p);
    const bool clamped = pd < kProbClamp || pd > 1.0 - kProbClamp;
    delta.data()[i] = clamped ? T(0) : (p - targets.data()[i]) * scale;
  }

  LayerSet<T> grads;
  grads[2].weights = delta.transpose() * cache.act2;
  grads[2].bias = delta.colwise().sum().transpose();

  delta = (delta * layers[2].weights).cwiseProduct(
      cache.pre2.unaryExpr([](T z) { return z > T(0) ? T(1) : T(0); }));
  grads[1].weights = delta.transpose() * cache.act1;
  grads[1].bias = delta.colwise().sum().transpose();

  delta = (delta * layers[1].weights).cwiseProduct(
      cache.pre1.unaryExpr([](T z) { return z > T(0) ? T(1) : T(0); }));
  grads[0].weights = delta.transpose() * cache.input;
  grads[0].bias = delta.colwise().sum().transpose();
  return grads;
}

template <typename T>
void adam_update(AdamState<T>& state, std::span<const std::span<T>> params,
                 std::span<const std::span<const T>> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(params.size()) + " parameter buffers, " +
                                              std::to_string(grads.size()) + " gradient buffers");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T(0));
      state.second_moment.emplace_back(p.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state tracks " + std::to_string(state.first_moment.size()) +
                                              " buffers, got " + std::to_string(params.size()));
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size()) {
      throw Error(ErrorKind::ShapeMismatch, "buffer " + std::to_string(b) + " size mismatch");
    }
  }

  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    const auto p = params[b];
    const auto g = grads[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = h.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + h.epsilon);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

template <typename T>
void adam_step(BasicMLP<T>& model, const LayerSet<T>& grads, AdamState<T>& state) {
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const auto& layer = model.layer(l);
    if (grads[l].weights.rows() != layer.weights.rows() || grads[l].weights.cols() != layer.weights.cols() ||
        grads[l].bias.size() != layer.bias.size()) {
      throw Error(ErrorKind::ShapeMismatch, "gradient shape differs from layer " + std::to_string(l));
    }
  }
  auto& layers = model.mutable_layers();
  std::vector<std::span<T>> params;
  std::vector<std::span<const T>> gspans;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    params.emplace_back(layers[l].weights.data(), static_cast<std::size_t>(layers[l].weights.size()));
    params.emplace_back(layers[l].bias.data(), static_cast<std::size_t>(layers[l].bias.size()));
    gspans.emplace_back(grads[l].weights.data(), static_cast<std::size_t>(grads[l].weights.size()));
    gspans.emplace_back(grads[l].bias.data(), static_cast<std::size_t>(grads[l].bias.size()));
  }
  adam_update<T>(state, params, gspans);
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

TrainResult train(const TrainConfig& config, const FeatureMatrix& features, const EpochCallback& on_epoch) {
  if (features.rows() == 0) throw Error(ErrorKind::EmptyDataset, "no training rows");
  if (features.task != config.task) {
    throw Error(ErrorKind::TaskMismatch, "matrix holds " + std::string(to_string(features.task)) +
                                             " labels, config trains " + std::string(to_string(config.task)));
  }
  if (config.batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch_size must be at least 1");
  const int epochs = config.resolved_epochs();
  if (epochs < 0) throw Error(ErrorKind::InvalidArgument, "epochs must be non-negative");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error(ErrorKind::InvalidArgument, "learning rate must be positive and finite");
  }

  TrainResult result{init_model(config.seed), {}};
  AdamState<float> adam;
  adam.hyper.learning_rate = config.learning_rate;

  // The shuffle stream is decorrelated from the initialization stream.
  std::uint64_t mix = config.seed;
  std::mt19937_64 shuffle_rng(splitmix64(mix));

  const std::size_t n = features.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    seeded_shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t rows = std::min(config.batch_size, n - start);
      Matrix<float> batch(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(kFusedDim));
      std::vector<int> classes(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = features.row(order[start + r]);
        std::copy(src.begin(), src.end(), batch.row(static_cast<Eigen::Index>(r)).data());
        classes[r] = features.labels[order[start + r]];
      }
      const auto targets = one_hot<float>(classes);
      const auto cache = forward(result.model, batch);
      const double loss = bce_loss(cache.probs, targets);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch " +
                                                  std::to_string(batch_index) + ": loss is " + std::to_string(loss));
      }
      loss_sum += loss * static_cast<double>(rows);
      const auto grads = backward(result.model, cache, targets);
      adam_step(result.model, grads, adam);
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    result.loss_trace.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

std::vector<int> predict_classes(const MLPModel& model, const FeatureMatrix& features) {
  constexpr std::size_t kChunk = 256;
  std::vector<int> out;
  out.reserve(features.rows());
  for (std::size_t start = 0; start < features.rows(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, features.rows() - start);
    const Eigen::Map<const Matrix<float>> view(features.values.data() + start * kFusedDim,
                                               static_cast<Eigen::Index>(rows),
                                               static_cast<Eigen::Index>(kFusedDim));
    const auto cache = forward(model, Matrix<float>(view));
    for (Eigen::Index r = 0; r < cache.logits.rows(); ++r) {
      const auto row = cache.logits.row(r);
      out.push_back(static_cast<int>(argmax(std::span<const float>(row.data(), static_cast<std::size_t>(row.size())))));
    }
  }
  return out;
}

std::vector<int> predict(const MLPModel& model, const FeatureMatrix& features) {
  auto classes = predict_classes(model, features);
  for (auto& c : classes) c += label_offset(features.task);
  return classes;
}

bool Checkpoint::bitwise_equal(const Checkpoint& other) const {
  if (!model.same_parameters(other.model)) return false;
  if (config.task != other.config.task || config.resolved_epochs() != other.config.resolved_epochs() ||
      config.batch_size != other.config.batch_size || config.seed != other.config.seed ||
      std::memcmp(&config.learning_rate, &other.config.learning_rate, sizeof(double)) != 0) {
    return false;
  }
  return loss_trace.size() == other.loss_trace.size() &&
         std::memcmp(loss_trace.data(), other.loss_trace.data(), loss_trace.size() * sizeof(double)) == 0;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  io::ByteWriter out;
  out.reserve(checkpoint.model.parameter_count() * 4 + 128);
  out.put_bytes(std::string_view(kCheckpointMagic, 4));
  out.put_u32(kCheckpointVersion);
  out.put_u32(static_cast<std::uint32_t>(kNumLayers));
  for (const auto dim : kLayerDims) out.put_u32(static_cast<std::uint32_t>(dim));
  for (const auto& layer : checkpoint.model.layers()) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) out.put_f32(layer.weights.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out.put_f32(layer.bias.data()[i]);
  }
  const auto& cfg = checkpoint.config;
  out.put_u8(cfg.task == Task::Rating ? 0 : 1);
  out.put_u32(static_cast<std::uint32_t>(cfg.resolved_epochs()));
  out.put_u64(cfg.batch_size);
  out.put_u64(cfg.seed);
  out.put_f64(cfg.learning_rate);
  out.put_u32(static_cast<std::uint32_t>(checkpoint.loss_trace.size()));
  for (const double loss : checkpoint.loss_trace) out.put_f64(loss);
  return out.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 && std::string_view(kCheckpointMagic, 4).starts_with(bytes)) {
    throw Error(ErrorKind::TruncatedFile, std::to_string(bytes.size()) + " bytes, shorter than the MLPC magic");
  }
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, "missing MLPC magic");
  }
  io::ByteReader in(bytes.substr(4));
  const auto version = in.get_u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  const auto layer_count = in.get_u32();
  if (layer_count != kNumLayers) {
    throw Error(ErrorKind::ArchitectureMismatch, std::to_string(layer_count) + " layers, expected 3");
  }
  std::string dims_text;
  bool dims_match = true;
  for (const auto expected : kLayerDims) {
    const auto dim = in.get_u32();
    dims_text += (dims_text.empty() ? "" : ",") + std::to_string(dim);
    dims_match = dims_match && dim == expected;
  }
  if (!dims_match) {
    throw Error(ErrorKind::ArchitectureMismatch, "layer dims (" + dims_text + "), expected (3072,1536,768,10)");
  }

  Checkpoint checkpoint;
  auto& layers = checkpoint.model.mutable_layers();
  for (auto& layer : layers) {
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = in.get_f32();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias.data()[i] = in.get_f32();
  }
  const auto task = in.get_u8();
  if (task > 1) throw Error(ErrorKind::InvalidArgument, "unknown task code " + std::to_string(task));
  checkpoint.config.task = task == 0 ? Task::Rating : Task::Disagreement;
  checkpoint.config.epochs = static_cast<int>(in.get_u32());
  checkpoint.config.batch_size = static_cast<std::size_t>(in.get_u64());
  checkpoint.config.seed = in.get_u64();
  checkpoint.config.learning_rate = in.get_f64();
  const auto trace_len = in.get_u32();
  checkpoint.loss_trace.reserve(trace_len);
  for (std::uint32_t i = 0; i < trace_len; ++i) checkpoint.loss_trace.push_back(in.get_f64());
  if (in.remaining() != 0) {
    throw Error(ErrorKind::TruncatedFile, std::to_string(in.remaining()) + " trailing bytes after the loss trace");
  }
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(io::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::UnreadableFile) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string loss_trace_csv(std::span<const double> trace) {
  std::string out = "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, trace[i]);
    out += buf;
  }
  return out;
}

template class BasicMLP<float>;
template class BasicMLP<double>;
template ForwardCache<float> forward(const BasicMLP<float>&, const Matrix<float>&);
template ForwardCache<double> forward(const BasicMLP<double>&, const Matrix<double>&);
template Matrix<float> one_hot<float>(std::span<const int>);
template Matrix<double> one_hot<double>(std::span<const int>);
template double bce_loss(const Matrix<float>&, const Matrix<float>&);
template double bce_loss(const Matrix<double>&, const Matrix<double>&);
template LayerSet<float> backward(const BasicMLP<float>&, const ForwardCache<float>&, const Matrix<float>&);
template LayerSet<double> backward(const BasicMLP<double>&, const ForwardCache<double>&, const Matrix<double>&);
template void adam_update(AdamState<float>&, std::span<const std::span<float>>, std::span<const std::span<const float>>);
template void adam_update(AdamState<double>&, std::span<const std::span<double>>,
                          std::span<const std::span<const double>>);
template void adam_step(BasicMLP<float>&, const LayerSet<float>&, AdamState<float>&);
template void adam_step(BasicMLP<double>&, const LayerSet<double>&, AdamState<double>&);
template std::size_t argmax(std::span<const float>);
template std::size_t argmax(std::span<const double>);

}  // namespace cmxqe::nn
