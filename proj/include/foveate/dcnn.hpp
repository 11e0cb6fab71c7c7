#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace foveate::dcnn {

enum class Padding : std::uint8_t { same, valid };

struct Shape3 {
  int rows = 0;
  int cols = 0;
  int channels = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols * channels; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct NetworkSpec {
  std::vector<int> conv_filters{32, 32, 64, 64, 128, 256, 256};
  int kernel_rows = 3;
  int kernel_cols = 3;
  int pool_rows = 2;
  int pool_cols = 2;
  std::vector<int> fc_widths{132, 132, 132};
  int num_classes = 9;
  double dropout_rate = 0.5;  // applied to the output of the first FC layer
  Padding padding = Padding::same;
};

// 7 conv layers, 3 x 132 FC layers, 9 classes, input (399, 752, 3).
NetworkSpec reference_spec();
inline constexpr Shape3 kReferenceInput{399, 752, 3};

struct LayerShape {
  std::string name;  // conv1, pool1, ..., flatten, fc1, ..., output
  Shape3 input;
  Shape3 output;
  std::size_t parameters = 0;
};

// Shape algebra only; throws InvalidArgument naming the layer whose output
// collapses to zero.
std::vector<LayerShape> infer_shapes(const NetworkSpec& spec, Shape3 input);
std::size_t total_parameters(const std::vector<LayerShape>& trace);

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
      : shape(std::move(s)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
};

// ---------------------------------------------------------------------------
// Single-sample layer kernels. Activations are (row, col, channel); conv
// weights are (out, kernel_row, kernel_col, in); dense weights are (out, in).
// Backward kernels accumulate into parameter gradients and overwrite input
// gradients.
// ---------------------------------------------------------------------------

struct ConvGeometry {
  Shape3 input;
  int filters = 0;
  int kernel_rows = 3;
  int kernel_cols = 3;
  Padding padding = Padding::same;

  Shape3 output() const;
  std::size_t patch_size() const { return static_cast<std::size_t>(kernel_rows) * kernel_cols * input.channels; }
};

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::vector<T>& patches, std::vector<T>& output);

// `patches` is the im2col buffer produced by the forward pass. d_input may be
// empty to skip the input gradient.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> d_output, std::span<const T> weights,
                     std::span<const T> patches, std::span<T> d_weights, std::span<T> d_bias,
                     std::span<T> d_input);

template <typename T>
void relu_forward(std::span<T> x);
template <typename T>
void relu_backward(std::span<const T> activated, std::span<T> grad);

// Floor-division max pooling with stride equal to the window; ties go to the
// first maximum in row-major window order.
template <typename T>
Shape3 maxpool_forward(Shape3 in, int pool_rows, int pool_cols, std::span<const T> input,
                       std::vector<T>& output, std::vector<std::uint32_t>& argmax);
template <typename T>
void maxpool_backward(std::span<const T> d_output, std::span<const std::uint32_t> argmax, std::span<T> d_input);

template <typename T>
void dense_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias, std::span<T> y);
template <typename T>
void dense_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> d_y,
                    std::span<T> d_weights, std::span<T> d_bias, std::span<T> d_x);

// Inverted dropout mask: kept units carry 1/(1-rate), dropped units 0.
template <typename T>
void dropout_mask(double rate, std::uint64_t seed, std::span<T> mask);

template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs);

inline constexpr double kCrossEntropyEps = 1e-12;

// -sum y ln(p + eps) and its exact gradient with respect to the logits.
template <typename T>
double cross_entropy(std::span<const T> probs, std::span<const T> target);
template <typename T>
void cross_entropy_logit_grad(std::span<const T> probs, std::span<const T> target, std::span<T> d_logits);

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

template <typename T>
struct LossAndGradients {
  double loss = 0.0;
  std::vector<Tensor<T>> gradients;  // same layout as Network::parameters()
  Tensor<T> probabilities;           // (batch, classes)
};

// conv(+ReLU+maxpool) x N -> flatten -> FC(+ReLU) x M -> dense -> softmax.
// Parameters are ordered [W, b] per layer, conv layers first.
template <typename T>
class Network {
 public:
  Network(NetworkSpec spec, Shape3 input, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  Shape3 input_shape() const { return input_; }
  const std::vector<LayerShape>& shape_trace() const { return trace_; }
  std::size_t parameter_count() const;

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }

  // Batch layout (batch, rows, cols, channels). Returns (batch, classes)
  // softmax rows. Dropout masks are derived from (seed, dropout_stream,
  // sample index) when training.
  Tensor<T> forward(const Tensor<T>& batch, bool training, std::uint64_t dropout_stream = 0) const;

  // Training-mode pass; loss is the batch mean cross-entropy against one-hot
  // rows in `targets` (batch, classes).
  LossAndGradients<T> loss_and_backward(const Tensor<T>& batch, const Tensor<T>& targets,
                                        std::uint64_t dropout_stream = 0, bool training = true) const;

  std::uint64_t seed() const { return seed_; }

 private:
  struct SampleCache;
  void check_batch(const Tensor<T>& batch) const;
  void forward_sample(std::span<const T> x, bool training, std::uint64_t mask_seed, SampleCache& cache) const;
  void backward_sample(const SampleCache& cache, std::span<const T> target, T scale,
                       std::vector<Tensor<T>>& grads) const;

  NetworkSpec spec_;
  Shape3 input_;
  std::uint64_t seed_;
  std::vector<LayerShape> trace_;
  std::vector<ConvGeometry> conv_;
  std::vector<std::pair<int, int>> dense_;  // (in, out) per dense layer incl. output
  std::vector<Tensor<T>> params_;
};

extern template class Network<float>;
extern template class Network<double>;

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, double learning_rate);

template <typename T>
void sgd_step(Network<T>& net, const std::vector<Tensor<T>>& grads, double learning_rate) {
  sgd_step(net.parameters(), grads, learning_rate);
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

// 8-bit images with integer labels; batches are normalised as value/255.
struct Dataset {
  Shape3 shape;
  int num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  void add(std::span<const float> image01, int label);

  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const;
  template <typename T>
  Tensor<T> one_hot(std::span<const std::size_t> indices) const;
};

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.01;
  int epochs = 1;
  std::uint64_t seed = 0;
};

std::size_t steps_per_epoch(std::size_t dataset_size, int batch_size);

struct StepRecord {
  int epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t steps = 0;
};

template <typename T>
EpochMetrics train_epoch(Network<T>& net, const Dataset& data, const TrainConfig& cfg, int epoch,
                         const std::function<void(const StepRecord&)>& on_step = {});

struct Evaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::vector<std::vector<std::size_t>> confusion;  // rows = true class
};

Evaluation metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);

template <typename T>
Evaluation evaluate(const Network<T>& net, const Dataset& data, int batch_size = 64);

// Binary "FNET1" checkpoint: spec, input shape, then f32 parameters.
void save_checkpoint(const std::filesystem::path& path, const Network<float>& net);
Network<float> load_checkpoint(const std::filesystem::path& path);

// CSV "epoch,step,loss,accuracy".
void write_training_log(const std::filesystem::path& path, const std::vector<StepRecord>& records);

}  // namespace foveate::dcnn
