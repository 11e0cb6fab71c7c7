#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"

namespace foveate::dcnn {

void Dataset::add(std::span<const float> image01, int label) {
  if (image01.size() != shape.size()) throw InvalidArgument("dataset image does not match the dataset shape");
  if (label < 0 || label >= num_classes) throw InvalidArgument("label out of range");
  for (float v : image01) pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  labels.push_back(label);
}

template <typename T>
Tensor<T> Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t sample = shape.size();
  Tensor<T> out({indices.size(), static_cast<std::size_t>(shape.rows), static_cast<std::size_t>(shape.cols),
                 static_cast<std::size_t>(shape.channels)});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::uint8_t* src = pixels.data() + indices[b] * sample;
    T* dst = out.data.data() + b * sample;
    for (std::size_t k = 0; k < sample; ++k) dst[k] = static_cast<T>(src[k]) / T(255);
  }
  return out;
}

template <typename T>
Tensor<T> Dataset::one_hot(std::span<const std::size_t> indices) const {
  Tensor<T> out({indices.size(), static_cast<std::size_t>(num_classes)});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    out.data[b * num_classes + static_cast<std::size_t>(labels[indices[b]])] = T(1);
  }
  return out;
}

std::size_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (dataset_size == 0) throw InvalidArgument("dataset is empty");
  if (static_cast<std::size_t>(batch_size) > dataset_size) {
    throw InvalidArgument("batch_size exceeds the dataset size");
  }
  return dataset_size / static_cast<std::size_t>(batch_size);
}

namespace {

template <typename T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
  const std::size_t k = probs.shape[1];
  const auto first = probs.data.begin() + static_cast<std::ptrdiff_t>(row * k);
  return static_cast<std::size_t>(std::max_element(first, first + static_cast<std::ptrdiff_t>(k)) - first);
}

}  // namespace

template <typename T>
EpochMetrics train_epoch(Network<T>& net, const Dataset& data, const TrainConfig& cfg, int epoch,
                         const std::function<void(const StepRecord&)>& on_step) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (data.shape != net.input_shape()) throw InvalidArgument("dataset shape does not match the network input");
  const std::size_t steps = steps_per_epoch(data.size(), cfg.batch_size);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);

  EpochMetrics metrics;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    const std::span<const std::size_t> idx(order.data() + step * batch, batch);
    const Tensor<T> x = data.batch<T>(idx);
    const Tensor<T> y = data.one_hot<T>(idx);
    const std::uint64_t stream = static_cast<std::uint64_t>(epoch) * steps + step;
    LossAndGradients<T> result = net.loss_and_backward(x, y, stream);
    sgd_step(net, result.gradients, cfg.learning_rate);

    std::size_t step_correct = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (static_cast<int>(argmax_row(result.probabilities, b)) == data.labels[idx[b]]) ++step_correct;
    }
    correct += step_correct;
    loss_sum += result.loss;
    if (on_step) {
      on_step({epoch, step, result.loss, static_cast<double>(step_correct) / static_cast<double>(batch)});
    }
  }
  metrics.steps = steps;
  metrics.loss = loss_sum / static_cast<double>(steps);
  metrics.accuracy = static_cast<double>(correct) / static_cast<double>(steps * batch);
  return metrics;
}

Evaluation metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t k = confusion.size();
  Evaluation ev;
  ev.confusion = confusion;
  ev.per_class_f1.assign(k, 0.0);
  std::size_t total = 0;
  std::size_t trace = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (confusion[i].size() != k) throw InvalidArgument("confusion matrix must be square");
    trace += confusion[i][i];
    for (std::size_t j = 0; j < k; ++j) total += confusion[i][j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t j = 0; j < k; ++j) {
      actual += confusion[c][j];
      predicted += confusion[j][c];
    }
    const double tp = static_cast<double>(confusion[c][c]);
    // 2TP / (2TP + FP + FN); zero when the class is absent everywhere.
    const double denom = static_cast<double>(predicted + actual);
    ev.per_class_f1[c] = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  }
  ev.accuracy = total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  ev.macro_f1 = k > 0 ? std::accumulate(ev.per_class_f1.begin(), ev.per_class_f1.end(), 0.0) / static_cast<double>(k) : 0.0;
  return ev;
}

template <typename T>
Evaluation evaluate(const Network<T>& net, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  const auto k = static_cast<std::size_t>(net.spec().num_classes);
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const Tensor<T> probs = net.forward(data.batch<T>(idx), false);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      ++confusion[static_cast<std::size_t>(data.labels[idx[b]])][argmax_row(probs, b)];
    }
  }
  return metrics_from_confusion(confusion);
}

void write_training_log(const std::filesystem::path& path, const std::vector<StepRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(9);
  out << "epoch,step,loss,accuracy\n";
  for (const auto& r : records) out << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.accuracy << '\n';
}

template Tensor<float> Dataset::batch<float>(std::span<const std::size_t>) const;
template Tensor<double> Dataset::batch<double>(std::span<const std::size_t>) const;
template Tensor<float> Dataset::one_hot<float>(std::span<const std::size_t>) const;
template Tensor<double> Dataset::one_hot<double>(std::span<const std::size_t>) const;
template EpochMetrics train_epoch<float>(Network<float>&, const Dataset&, const TrainConfig&, int,
                                         const std::function<void(const StepRecord&)>&);
template EpochMetrics train_epoch<double>(Network<double>&, const Dataset&, const TrainConfig&, int,
                                          const std::function<void(const StepRecord&)>&);
template Evaluation evaluate<float>(const Network<float>&, const Dataset&, int);
template Evaluation evaluate<double>(const Network<double>&, const Dataset&, int);

}  // namespace foveate::dcnn
