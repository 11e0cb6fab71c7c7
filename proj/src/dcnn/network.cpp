#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"
#include "foveate/parallel.hpp"

namespace foveate::dcnn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> cmat(std::span<const T> s, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const RowMat<T>>(s.data(), rows, cols);
}
template <typename T>
Eigen::Map<RowMat<T>> mat(std::span<T> s, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<RowMat<T>>(s.data(), rows, cols);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Samples per gradient buffer. Fixed so the reduction order, and hence the
// result, does not depend on the worker count.
constexpr std::size_t kGradientChunk = 8;

int pad_before(int kernel, Padding p) { return p == Padding::same ? (kernel - 1) / 2 : 0; }

}  // namespace

// ---------------------------------------------------------------------------
// Layer kernels
// ---------------------------------------------------------------------------

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::vector<T>& patches, std::vector<T>& output) {
  const Shape3 out = g.output();
  const std::size_t patch = g.patch_size();
  const std::size_t positions = static_cast<std::size_t>(out.rows) * out.cols;
  if (input.size() != g.input.size() || weights.size() != patch * g.filters ||
      bias.size() != static_cast<std::size_t>(g.filters)) {
    throw InvalidArgument("conv2d_forward: buffer sizes do not match the geometry");
  }
  const int pr = pad_before(g.kernel_rows, g.padding);
  const int pc = pad_before(g.kernel_cols, g.padding);
  const int cin = g.input.channels;

  patches.assign(positions * patch, T(0));
  for (int oy = 0; oy < out.rows; ++oy) {
    for (int ox = 0; ox < out.cols; ++ox) {
      T* dst = patches.data() + (static_cast<std::size_t>(oy) * out.cols + ox) * patch;
      for (int ky = 0; ky < g.kernel_rows; ++ky) {
        const int iy = oy + ky - pr;
        if (iy < 0 || iy >= g.input.rows) continue;
        for (int kx = 0; kx < g.kernel_cols; ++kx) {
          const int ix = ox + kx - pc;
          if (ix < 0 || ix >= g.input.cols) continue;
          const T* src = input.data() + (static_cast<std::size_t>(iy) * g.input.cols + ix) * cin;
          std::copy(src, src + cin, dst + (static_cast<std::size_t>(ky) * g.kernel_cols + kx) * cin);
        }
      }
    }
  }

  output.resize(positions * g.filters);
  auto y = mat<T>(std::span<T>(output), static_cast<Eigen::Index>(positions), g.filters);
  const auto p = cmat<T>(std::span<const T>(patches), static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(patch));
  const auto w = cmat<T>(weights, g.filters, static_cast<Eigen::Index>(patch));
  y.noalias() = p * w.transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), g.filters);
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> d_output, std::span<const T> weights,
                     std::span<const T> patches, std::span<T> d_weights, std::span<T> d_bias,
                     std::span<T> d_input) {
  const Shape3 out = g.output();
  const std::size_t patch = g.patch_size();
  const auto positions = static_cast<Eigen::Index>(static_cast<std::size_t>(out.rows) * out.cols);
  const auto dy = cmat<T>(d_output, positions, g.filters);
  const auto p = cmat<T>(patches, positions, static_cast<Eigen::Index>(patch));
  auto dw = mat<T>(d_weights, g.filters, static_cast<Eigen::Index>(patch));
  dw.noalias() += dy.transpose() * p;
  for (Eigen::Index r = 0; r < positions; ++r) {
    const T* row = d_output.data() + static_cast<std::size_t>(r) * g.filters;
    for (int f = 0; f < g.filters; ++f) d_bias[f] += row[f];
  }

  if (d_input.empty()) return;
  if (d_input.size() != g.input.size()) throw InvalidArgument("conv2d_backward: input gradient size mismatch");
  const RowMat<T> d_patches = dy * cmat<T>(weights, g.filters, static_cast<Eigen::Index>(patch));
  std::fill(d_input.begin(), d_input.end(), T(0));
  const int pr = pad_before(g.kernel_rows, g.padding);
  const int pc = pad_before(g.kernel_cols, g.padding);
  const int cin = g.input.channels;
  for (int oy = 0; oy < out.rows; ++oy) {
    for (int ox = 0; ox < out.cols; ++ox) {
      const T* src = d_patches.data() + (static_cast<std::size_t>(oy) * out.cols + ox) * patch;
      for (int ky = 0; ky < g.kernel_rows; ++ky) {
        const int iy = oy + ky - pr;
        if (iy < 0 || iy >= g.input.rows) continue;
        for (int kx = 0; kx < g.kernel_cols; ++kx) {
          const int ix = ox + kx - pc;
          if (ix < 0 || ix >= g.input.cols) continue;
          T* dst = d_input.data() + (static_cast<std::size_t>(iy) * g.input.cols + ix) * cin;
          const T* s = src + (static_cast<std::size_t>(ky) * g.kernel_cols + kx) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += s[c];
        }
      }
    }
  }
}

template <typename T>
void relu_forward(std::span<T> x) {
  for (T& v : x) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward(std::span<const T> activated, std::span<T> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activated[i] > T(0))) grad[i] = T(0);
  }
}

template <typename T>
Shape3 maxpool_forward(Shape3 in, int pool_rows, int pool_cols, std::span<const T> input, std::vector<T>& output,
                       std::vector<std::uint32_t>& argmax) {
  const Shape3 out{in.rows / pool_rows, in.cols / pool_cols, in.channels};
  output.resize(out.size());
  argmax.resize(out.size());
  for (int oy = 0; oy < out.rows; ++oy) {
    for (int ox = 0; ox < out.cols; ++ox) {
      for (int c = 0; c < in.channels; ++c) {
        std::size_t best = (static_cast<std::size_t>(oy * pool_rows) * in.cols + ox * pool_cols) * in.channels + c;
        for (int dy = 0; dy < pool_rows; ++dy) {
          for (int dx = 0; dx < pool_cols; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(oy * pool_rows + dy) * in.cols + (ox * pool_cols + dx)) * in.channels + c;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(oy) * out.cols + ox) * out.channels + c;
        output[o] = input[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

template <typename T>
void maxpool_backward(std::span<const T> d_output, std::span<const std::uint32_t> argmax, std::span<T> d_input) {
  std::fill(d_input.begin(), d_input.end(), T(0));
  for (std::size_t o = 0; o < d_output.size(); ++o) d_input[argmax[o]] += d_output[o];
}

// Dense layers use plain loops with a fixed summation order. Eigen's
// matrix-vector kernels peel differently depending on buffer alignment, which
// made repeated training runs differ in the last bits.
template <typename T>
void dense_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias, std::span<T> y) {
  const std::size_t out = y.size();
  const std::size_t in = x.size();
  if (weights.size() != out * in || bias.size() != out) {
    throw InvalidArgument("dense_forward: buffer sizes do not match");
  }
  constexpr std::size_t lanes = 8;
  const std::size_t body = in - in % lanes;
  for (std::size_t o = 0; o < out; ++o) {
    const T* w = weights.data() + o * in;
    T acc[lanes] = {};
    for (std::size_t i = 0; i < body; i += lanes) {
      for (std::size_t l = 0; l < lanes; ++l) acc[l] += w[i + l] * x[i + l];
    }
    T sum = bias[o];
    for (std::size_t i = body; i < in; ++i) sum += w[i] * x[i];
    for (std::size_t l = 0; l < lanes; ++l) sum += acc[l];
    y[o] = sum;
  }
}

template <typename T>
void dense_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> d_y,
                    std::span<T> d_weights, std::span<T> d_bias, std::span<T> d_x) {
  const std::size_t out = d_y.size();
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < out; ++o) {
    const T g = d_y[o];
    d_bias[o] += g;
    if (g == T(0)) continue;
    T* dw = d_weights.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) dw[i] += g * x[i];
  }
  if (d_x.empty()) return;
  std::fill(d_x.begin(), d_x.end(), T(0));
  for (std::size_t o = 0; o < out; ++o) {
    const T g = d_y[o];
    if (g == T(0)) continue;
    const T* w = weights.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) d_x[i] += g * w[i];
  }
}

template <typename T>
void dropout_mask(double rate, std::uint64_t seed, std::span<T> mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (T& m : mask) m = u(rng) >= rate ? keep_scale : T(0);
}

template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  T total = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (T& p : probs) p /= total;
}

template <typename T>
double cross_entropy(std::span<const T> probs, std::span<const T> target) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (target[i] != T(0)) loss -= static_cast<double>(target[i]) * std::log(static_cast<double>(probs[i]) + kCrossEntropyEps);
  }
  return loss;
}

template <typename T>
void cross_entropy_logit_grad(std::span<const T> probs, std::span<const T> target, std::span<T> d_logits) {
  // d/dz_j of -sum_k y_k ln(p_k + eps) = -y_j r_j + p_j sum_k y_k r_k with
  // r_k = p_k / (p_k + eps).
  const T eps = static_cast<T>(kCrossEntropyEps);
  T weighted = T(0);
  for (std::size_t k = 0; k < probs.size(); ++k) weighted += target[k] * probs[k] / (probs[k] + eps);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    d_logits[j] = probs[j] * weighted - target[j] * probs[j] / (probs[j] + eps);
  }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

template <typename T>
struct Network<T>::SampleCache {
  std::vector<std::vector<T>> patches;
  std::vector<std::vector<T>> conv_out;  // post-ReLU, pre-pool
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<std::vector<T>> pooled;
  std::vector<std::vector<T>> dense_in;
  std::vector<std::vector<T>> dense_out;  // post-ReLU hidden outputs, pre-dropout
  std::vector<T> mask;
  std::vector<T> probs;
  bool dropout_active = false;
};

template <typename T>
Network<T>::Network(NetworkSpec spec, Shape3 input, std::uint64_t seed)
    : spec_(std::move(spec)), input_(input), seed_(seed), trace_(infer_shapes(spec_, input)) {
  Shape3 cur = input_;
  for (int filters : spec_.conv_filters) {
    ConvGeometry g{cur, filters, spec_.kernel_rows, spec_.kernel_cols, spec_.padding};
    conv_.push_back(g);
    const Shape3 o = g.output();
    cur = {o.rows / spec_.pool_rows, o.cols / spec_.pool_cols, filters};
  }
  int width = static_cast<int>(cur.size());
  for (int w : spec_.fc_widths) {
    dense_.emplace_back(width, w);
    width = w;
  }
  dense_.emplace_back(width, spec_.num_classes);

  // He-uniform weights, zero biases.
  std::mt19937_64 rng(seed_);
  auto init = [&](std::size_t count, std::size_t fan_in, std::vector<std::size_t> shape) {
    Tensor<T> w(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < count; ++i) w.data[i] = static_cast<T>(u(rng));
    params_.push_back(std::move(w));
  };
  for (const ConvGeometry& g : conv_) {
    init(g.patch_size() * g.filters, g.patch_size(),
         {static_cast<std::size_t>(g.filters), static_cast<std::size_t>(g.kernel_rows),
          static_cast<std::size_t>(g.kernel_cols), static_cast<std::size_t>(g.input.channels)});
    params_.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(g.filters)});
  }
  for (auto [in, out] : dense_) {
    init(static_cast<std::size_t>(in) * out, static_cast<std::size_t>(in),
         {static_cast<std::size_t>(out), static_cast<std::size_t>(in)});
    params_.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(out)});
  }
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.size();
  return total;
}

template <typename T>
void Network<T>::check_batch(const Tensor<T>& batch) const {
  if (batch.shape.size() != 4 || batch.shape[1] != static_cast<std::size_t>(input_.rows) ||
      batch.shape[2] != static_cast<std::size_t>(input_.cols) ||
      batch.shape[3] != static_cast<std::size_t>(input_.channels)) {
    throw InvalidArgument("batch shape does not match the network input (batch, " + std::to_string(input_.rows) +
                          ", " + std::to_string(input_.cols) + ", " + std::to_string(input_.channels) + ")");
  }
}

template <typename T>
void Network<T>::forward_sample(std::span<const T> x, bool training, std::uint64_t mask_seed,
                                SampleCache& cache) const {
  const std::size_t nconv = conv_.size();
  const std::size_t ndense = dense_.size();
  cache.patches.resize(nconv);
  cache.conv_out.resize(nconv);
  cache.argmax.resize(nconv);
  cache.pooled.resize(nconv);
  cache.dense_in.resize(ndense);
  cache.dense_out.resize(ndense - 1);

  std::span<const T> cur = x;
  for (std::size_t l = 0; l < nconv; ++l) {
    const ConvGeometry& g = conv_[l];
    conv2d_forward<T>(g, cur, params_[2 * l].data, params_[2 * l + 1].data, cache.patches[l], cache.conv_out[l]);
    relu_forward<T>(cache.conv_out[l]);
    maxpool_forward<T>(g.output(), spec_.pool_rows, spec_.pool_cols, cache.conv_out[l], cache.pooled[l],
                       cache.argmax[l]);
    cur = cache.pooled[l];
  }

  cache.dropout_active = training && spec_.dropout_rate > 0.0 && ndense > 1;
  std::vector<T> scratch(cur.begin(), cur.end());
  for (std::size_t j = 0; j < ndense; ++j) {
    const auto [in, out] = dense_[j];
    const std::size_t p = 2 * nconv + 2 * j;
    cache.dense_in[j] = scratch;
    std::vector<T> y(static_cast<std::size_t>(out));
    dense_forward<T>(cache.dense_in[j], params_[p].data, params_[p + 1].data, y);
    if (j + 1 == ndense) {
      cache.probs.resize(y.size());
      softmax<T>(y, cache.probs);
      break;
    }
    relu_forward<T>(y);
    cache.dense_out[j] = y;
    if (j == 0 && cache.dropout_active) {
      cache.mask.resize(y.size());
      dropout_mask<T>(spec_.dropout_rate, mask_seed, cache.mask);
      for (std::size_t k = 0; k < y.size(); ++k) y[k] *= cache.mask[k];
    }
    scratch = std::move(y);
  }
}

template <typename T>
void Network<T>::backward_sample(const SampleCache& cache, std::span<const T> target, T scale,
                                 std::vector<Tensor<T>>& grads) const {
  const std::size_t nconv = conv_.size();
  const std::size_t ndense = dense_.size();

  std::vector<T> d(cache.probs.size());
  cross_entropy_logit_grad<T>(cache.probs, target, d);
  for (T& v : d) v *= scale;

  for (std::size_t j = ndense; j-- > 0;) {
    if (j + 1 < ndense) {
      if (j == 0 && cache.dropout_active) {
        for (std::size_t k = 0; k < d.size(); ++k) d[k] *= cache.mask[k];
      }
      relu_backward<T>(cache.dense_out[j], d);
    }
    const std::size_t p = 2 * nconv + 2 * j;
    std::vector<T> dx(cache.dense_in[j].size());
    dense_backward<T>(cache.dense_in[j], params_[p].data, d, grads[p].data, grads[p + 1].data, dx);
    d = std::move(dx);
  }

  for (std::size_t l = nconv; l-- > 0;) {
    const ConvGeometry& g = conv_[l];
    std::vector<T> d_conv(cache.conv_out[l].size());
    maxpool_backward<T>(d, cache.argmax[l], d_conv);
    relu_backward<T>(cache.conv_out[l], d_conv);
    std::vector<T> d_in(l == 0 ? 0 : g.input.size());
    conv2d_backward<T>(g, d_conv, params_[2 * l].data, cache.patches[l], grads[2 * l].data, grads[2 * l + 1].data,
                       d_in);
    d = std::move(d_in);
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, bool training, std::uint64_t dropout_stream) const {
  check_batch(batch);
  const std::size_t n = batch.shape[0];
  const std::size_t sample = input_.size();
  const auto classes = static_cast<std::size_t>(spec_.num_classes);
  Tensor<T> probs({n, classes});
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    SampleCache cache;
    for (std::size_t s = begin; s < end; ++s) {
      const std::uint64_t mask_seed = splitmix64(seed_ ^ splitmix64(dropout_stream) ^ splitmix64(s + 0x51ull));
      forward_sample(std::span<const T>(batch.data).subspan(s * sample, sample), training, mask_seed, cache);
      std::copy(cache.probs.begin(), cache.probs.end(), probs.data.begin() + s * classes);
    }
  });
  return probs;
}

template <typename T>
LossAndGradients<T> Network<T>::loss_and_backward(const Tensor<T>& batch, const Tensor<T>& targets,
                                                  std::uint64_t dropout_stream, bool training) const {
  check_batch(batch);
  const std::size_t n = batch.shape[0];
  const auto classes = static_cast<std::size_t>(spec_.num_classes);
  if (targets.shape.size() != 2 || targets.shape[0] != n || targets.shape[1] != classes) {
    throw InvalidArgument("label arity does not match (batch, num_classes)");
  }
  const std::size_t sample = input_.size();
  const T scale = static_cast<T>(1.0 / static_cast<double>(n));

  auto zero_like = [&] {
    std::vector<Tensor<T>> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.shape);
    return g;
  };

  const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;
  std::vector<std::vector<Tensor<T>>> chunk_grads(chunks);
  std::vector<double> losses(n, 0.0);
  LossAndGradients<T> result;
  result.probabilities = Tensor<T>({n, classes});

  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    SampleCache cache;
    for (std::size_t c = begin; c < end; ++c) {
      chunk_grads[c] = zero_like();
      for (std::size_t s = c * kGradientChunk; s < std::min(n, (c + 1) * kGradientChunk); ++s) {
        const std::uint64_t mask_seed = splitmix64(seed_ ^ splitmix64(dropout_stream) ^ splitmix64(s + 0x51ull));
        forward_sample(std::span<const T>(batch.data).subspan(s * sample, sample), training, mask_seed, cache);
        const std::span<const T> target = std::span<const T>(targets.data).subspan(s * classes, classes);
        losses[s] = cross_entropy<T>(cache.probs, target);
        std::copy(cache.probs.begin(), cache.probs.end(), result.probabilities.data.begin() + s * classes);
        backward_sample(cache, target, scale, chunk_grads[c]);
      }
    }
  });

  result.gradients = std::move(chunk_grads[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t p = 0; p < result.gradients.size(); ++p) {
      auto& dst = result.gradients[p].data;
      const auto& src = chunk_grads[c][p].data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  double total = 0.0;
  for (double l : losses) total += l;
  result.loss = total / static_cast<double>(n);
  return result;
}

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, double learning_rate) {
  if (params.size() != grads.size()) throw InvalidArgument("gradient layout does not match parameters");
  const T lr = static_cast<T>(learning_rate);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != grads[p].size()) throw InvalidArgument("gradient tensor size mismatch");
    auto& w = params[p].data;
    const auto& g = grads[p].data;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
  }
}

#define FOVEATE_INSTANTIATE(T)                                                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<const T>, \
                                  std::vector<T>&, std::vector<T>&);                                                \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<const T>, \
                                   std::span<T>, std::span<T>, std::span<T>);                                       \
  template void relu_forward<T>(std::span<T>);                                                                      \
  template void relu_backward<T>(std::span<const T>, std::span<T>);                                                 \
  template Shape3 maxpool_forward<T>(Shape3, int, int, std::span<const T>, std::vector<T>&,                         \
                                     std::vector<std::uint32_t>&);                                                  \
  template void maxpool_backward<T>(std::span<const T>, std::span<const std::uint32_t>, std::span<T>);              \
  template void dense_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>);         \
  template void dense_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>,         \
                                  std::span<T>, std::span<T>);                                                      \
  template void dropout_mask<T>(double, std::uint64_t, std::span<T>);                                               \
  template void softmax<T>(std::span<const T>, std::span<T>);                                                       \
  template double cross_entropy<T>(std::span<const T>, std::span<const T>);                                         \
  template void cross_entropy_logit_grad<T>(std::span<const T>, std::span<const T>, std::span<T>);                  \
  template void sgd_step<T>(std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, double);                        \
  template class Network<T>;

FOVEATE_INSTANTIATE(float)
FOVEATE_INSTANTIATE(double)

#undef FOVEATE_INSTANTIATE

}  // namespace foveate::dcnn
