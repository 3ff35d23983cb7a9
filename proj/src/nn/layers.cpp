#include "segdesc/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace segdesc::nn {

namespace {

void he_uniform(std::vector<double>& w, std::size_t fan_in, rng::Engine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& x : w) x = rng.uniform(-limit, limit);
}

[[noreturn]] void shape_error(const std::string& kind, const std::string& msg) {
  throw std::invalid_argument(kind + ": " + msg);
}

}  // namespace

nlohmann::json Layer::describe() const { return {{"kind", kind()}}; }

std::size_t Layer::check_batch(const Tensor& batch,
                               const Shape& per_sample) const {
  if (batch.shape.size() != per_sample.size() + 1 ||
      !std::equal(per_sample.begin(), per_sample.end(),
                  batch.shape.begin() + 1)) {
    shape_error(kind(), "expected batched input of shape " +
                            shape_str(per_sample) + ", got " +
                            shape_str(batch.shape));
  }
  return batch.shape[0];
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::size_t width) : width_(width) {
  if (width == 0) shape_error("dense", "width must be positive");
}

void DenseLayer::prepare(const Shape& input_shape) {
  if (input_shape.size() != 1) {
    shape_error("dense", "expects a flat input, got " + shape_str(input_shape));
  }
  fan_in_ = input_shape[0];
  input_shape_ = input_shape;
  output_shape_ = {width_};
  weights_.assign(width_ * fan_in_, 0.0);
  bias_.assign(width_, 0.0);
  grad_weights_.assign(weights_.size(), 0.0);
  grad_bias_.assign(bias_.size(), 0.0);
}

void DenseLayer::init_params(rng::Engine& rng) {
  he_uniform(weights_, fan_in_, rng);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

std::vector<ParamView> DenseLayer::params() {
  return {{"weights", &weights_, &grad_weights_},
          {"bias", &bias_, &grad_bias_}};
}

nlohmann::json DenseLayer::describe() const {
  return {{"kind", "dense"}, {"width", width_}};
}

Tensor DenseLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  const std::size_t n = check_batch(batch, input_shape_);
  Tensor out = Tensor::zeros(batched(n, output_shape_));
  const std::size_t f = fan_in_, w = width_;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = batch.values.data() + i * f;
    double* y = out.values.data() + i * w;
    for (std::size_t o = 0; o < w; ++o) {
      const double* wr = weights_.data() + o * f;
      double acc = bias_[o];
      for (std::size_t k = 0; k < f; ++k) acc += wr[k] * x[k];
      y[o] = acc;
    }
  }
  if (mode == Mode::train) {
    cached_input_ = batch;
    has_cache_ = true;
  }
  return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("dense", "backward without cached forward");
  const std::size_t n = check_batch(grad_out, output_shape_);
  if (n != cached_input_.shape[0]) {
    shape_error("dense", "grad batch size does not match cached forward");
  }
  const std::size_t f = fan_in_, w = width_;
  Tensor grad_in = Tensor::zeros(cached_input_.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = cached_input_.values.data() + i * f;
    const double* g = grad_out.values.data() + i * w;
    double* gi = grad_in.values.data() + i * f;
    for (std::size_t o = 0; o < w; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      grad_bias_[o] += go;
      double* gw = grad_weights_.data() + o * f;
      const double* wr = weights_.data() + o * f;
      for (std::size_t k = 0; k < f; ++k) {
        gw[k] += go * x[k];
        gi[k] += go * wr[k];
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// ReLU

void ReluLayer::prepare(const Shape& input_shape) {
  input_shape_ = input_shape;
  output_shape_ = input_shape;
}

Tensor ReluLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  check_batch(batch, input_shape_);
  Tensor out = batch;
  for (double& x : out.values) x = x > 0.0 ? x : 0.0;
  if (mode == Mode::train) {
    cached_input_ = batch;
    has_cache_ = true;
  }
  return out;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("relu", "backward without cached forward");
  if (grad_out.shape != cached_input_.shape) {
    shape_error("relu", "grad shape mismatch");
  }
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.values.size(); ++i) {
    if (cached_input_.values[i] <= 0.0) grad_in.values[i] = 0.0;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Sigmoid

void SigmoidLayer::prepare(const Shape& input_shape) {
  input_shape_ = input_shape;
  output_shape_ = input_shape;
}

Tensor SigmoidLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  check_batch(batch, input_shape_);
  Tensor out = batch;
  for (double& x : out.values) x = 1.0 / (1.0 + std::exp(-x));
  if (mode == Mode::train) {
    cached_output_ = out;
    has_cache_ = true;
  }
  return out;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("sigmoid", "backward without cached forward");
  if (grad_out.shape != cached_output_.shape) {
    shape_error("sigmoid", "grad shape mismatch");
  }
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.values.size(); ++i) {
    const double s = cached_output_.values[i];
    grad_in.values[i] *= s * (1.0 - s);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Softmax

void SoftmaxLayer::prepare(const Shape& input_shape) {
  if (input_shape.size() != 1 || input_shape[0] == 0) {
    shape_error("softmax", "expects a flat nonempty input");
  }
  input_shape_ = input_shape;
  output_shape_ = input_shape;
}

Tensor SoftmaxLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  const std::size_t n = check_batch(batch, input_shape_);
  const std::size_t k = input_shape_[0];
  Tensor out = Tensor::zeros(batch.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = batch.values.data() + i * k;
    double* y = out.values.data() + i * k;
    double m = x[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      y[j] = std::exp(x[j] - m);
      sum += y[j];
    }
    for (std::size_t j = 0; j < k; ++j) y[j] /= sum;
  }
  if (mode == Mode::train) {
    cached_output_ = out;
    has_cache_ = true;
  }
  return out;
}

Tensor SoftmaxLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("softmax", "backward without cached forward");
  if (grad_out.shape != cached_output_.shape) {
    shape_error("softmax", "grad shape mismatch");
  }
  const std::size_t k = input_shape_[0];
  const std::size_t n = grad_out.shape[0];
  Tensor grad_in = Tensor::zeros(grad_out.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = cached_output_.values.data() + i * k;
    const double* g = grad_out.values.data() + i * k;
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += g[j] * s[j];
    double* gi = grad_in.values.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) gi[j] = s[j] * (g[j] - dot);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    shape_error("dropout", "rate must be in [0, 1)");
  }
}

void DropoutLayer::prepare(const Shape& input_shape) {
  input_shape_ = input_shape;
  output_shape_ = input_shape;
}

nlohmann::json DropoutLayer::describe() const {
  return {{"kind", "dropout"}, {"rate", rate_}};
}

Tensor DropoutLayer::forward(const Tensor& batch, Mode mode, rng::Engine& rng) {
  check_batch(batch, input_shape_);
  if (mode == Mode::infer || rate_ == 0.0) {
    has_cache_ = mode == Mode::train;
    if (has_cache_) mask_.assign(batch.values.size(), 1.0);
    return batch;
  }
  const double scale = 1.0 / (1.0 - rate_);
  mask_.resize(batch.values.size());
  Tensor out = batch;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    mask_[i] = rng.uniform01() < rate_ ? 0.0 : scale;
    out.values[i] *= mask_[i];
  }
  has_cache_ = true;
  return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  if (!has_cache_ || grad_out.values.size() != mask_.size()) {
    shape_error("dropout", "backward without matching cached forward");
  }
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.values.size(); ++i) {
    grad_in.values[i] *= mask_[i];
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Flatten

void FlattenLayer::prepare(const Shape& input_shape) {
  input_shape_ = input_shape;
  output_shape_ = {shape_size(input_shape)};
}

Tensor FlattenLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  const std::size_t n = check_batch(batch, input_shape_);
  Tensor out = batch;
  out.shape = batched(n, output_shape_);
  if (mode == Mode::train) {
    last_batch_ = n;
    has_cache_ = true;
  }
  return out;
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("flatten", "backward without cached forward");
  check_batch(grad_out, output_shape_);
  Tensor grad_in = grad_out;
  grad_in.shape = batched(last_batch_, input_shape_);
  return grad_in;
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3dLayer::Conv3dLayer(std::size_t out_channels,
                         std::array<std::size_t, 3> kernel, std::size_t stride)
    : out_channels_(out_channels), kernel_(kernel), stride_(stride) {
  if (out_channels == 0) shape_error("conv3d", "out_channels must be positive");
  if (kernel[0] == 0 || kernel[1] == 0 || kernel[2] == 0) {
    shape_error("conv3d", "kernel dims must be positive");
  }
  if (stride == 0) shape_error("conv3d", "stride must be positive");
}

void Conv3dLayer::prepare(const Shape& input_shape) {
  if (input_shape.size() != 4) {
    shape_error("conv3d", "expects (channels, x, y, z) input, got " +
                              shape_str(input_shape));
  }
  in_channels_ = input_shape[0];
  in_dims_ = {input_shape[1], input_shape[2], input_shape[3]};
  for (int a = 0; a < 3; ++a) {
    if (in_dims_[a] < kernel_[a]) {
      shape_error("conv3d", "kernel larger than input on axis " +
                                std::to_string(a) + " for input " +
                                shape_str(input_shape));
    }
    out_dims_[a] = (in_dims_[a] - kernel_[a]) / stride_ + 1;
  }
  patch_len_ = in_channels_ * kernel_[0] * kernel_[1] * kernel_[2];
  out_cells_ = out_dims_[0] * out_dims_[1] * out_dims_[2];
  input_shape_ = input_shape;
  output_shape_ = {out_channels_, out_dims_[0], out_dims_[1], out_dims_[2]};
  weights_.assign(out_channels_ * patch_len_, 0.0);
  bias_.assign(out_channels_, 0.0);
  grad_weights_.assign(weights_.size(), 0.0);
  grad_bias_.assign(bias_.size(), 0.0);
  col_.assign(patch_len_ * out_cells_, 0.0);
  grad_col_.assign(patch_len_ * out_cells_, 0.0);
}

void Conv3dLayer::init_params(rng::Engine& rng) {
  he_uniform(weights_, patch_len_, rng);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

std::vector<ParamView> Conv3dLayer::params() {
  return {{"weights", &weights_, &grad_weights_},
          {"bias", &bias_, &grad_bias_}};
}

nlohmann::json Conv3dLayer::describe() const {
  return {{"kind", "conv3d"},
          {"out_channels", out_channels_},
          {"kernel", {kernel_[0], kernel_[1], kernel_[2]}},
          {"stride", stride_}};
}

void Conv3dLayer::im2col(const double* sample, std::vector<double>& col) const {
  const std::size_t X = in_dims_[0], Y = in_dims_[1], Z = in_dims_[2];
  const std::size_t OX = out_dims_[0], OY = out_dims_[1], OZ = out_dims_[2];
  std::size_t r = 0;
  for (std::size_t c = 0; c < in_channels_; ++c) {
    const double* chan = sample + c * X * Y * Z;
    for (std::size_t kx = 0; kx < kernel_[0]; ++kx) {
      for (std::size_t ky = 0; ky < kernel_[1]; ++ky) {
        for (std::size_t kz = 0; kz < kernel_[2]; ++kz, ++r) {
          double* dst = col.data() + r * out_cells_;
          for (std::size_t ox = 0; ox < OX; ++ox) {
            const std::size_t ix = ox * stride_ + kx;
            for (std::size_t oy = 0; oy < OY; ++oy) {
              const std::size_t iy = oy * stride_ + ky;
              const double* src = chan + (ix * Y + iy) * Z + kz;
              if (stride_ == 1) {
                for (std::size_t oz = 0; oz < OZ; ++oz) dst[oz] = src[oz];
              } else {
                for (std::size_t oz = 0; oz < OZ; ++oz) {
                  dst[oz] = src[oz * stride_];
                }
              }
              dst += OZ;
            }
          }
        }
      }
    }
  }
}

Tensor Conv3dLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  const std::size_t n = check_batch(batch, input_shape_);
  const std::size_t in_size = shape_size(input_shape_);
  const std::size_t out_size = out_channels_ * out_cells_;
  Tensor out = Tensor::zeros(batched(n, output_shape_));
  for (std::size_t i = 0; i < n; ++i) {
    im2col(batch.values.data() + i * in_size, col_);
    double* y = out.values.data() + i * out_size;
    for (std::size_t o = 0; o < out_channels_; ++o) {
      double* row = y + o * out_cells_;
      std::fill(row, row + out_cells_, bias_[o]);
      const double* wr = weights_.data() + o * patch_len_;
      for (std::size_t r = 0; r < patch_len_; ++r) {
        const double w = wr[r];
        if (w == 0.0) continue;
        const double* cr = col_.data() + r * out_cells_;
        for (std::size_t m = 0; m < out_cells_; ++m) row[m] += w * cr[m];
      }
    }
  }
  if (mode == Mode::train) {
    cached_input_ = batch;
    has_cache_ = true;
  }
  return out;
}

Tensor Conv3dLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("conv3d", "backward without cached forward");
  const std::size_t n = check_batch(grad_out, output_shape_);
  if (n != cached_input_.shape[0]) {
    shape_error("conv3d", "grad batch size does not match cached forward");
  }
  const std::size_t in_size = shape_size(input_shape_);
  const std::size_t out_size = out_channels_ * out_cells_;
  const std::size_t X = in_dims_[0], Y = in_dims_[1], Z = in_dims_[2];
  const std::size_t OX = out_dims_[0], OY = out_dims_[1], OZ = out_dims_[2];

  Tensor grad_in = Tensor::zeros(cached_input_.shape);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(cached_input_.values.data() + i * in_size, col_);
    const double* g = grad_out.values.data() + i * out_size;

    std::fill(grad_col_.begin(), grad_col_.end(), 0.0);
    for (std::size_t o = 0; o < out_channels_; ++o) {
      const double* gr = g + o * out_cells_;
      double gb = 0.0;
      for (std::size_t m = 0; m < out_cells_; ++m) gb += gr[m];
      grad_bias_[o] += gb;

      double* gw = grad_weights_.data() + o * patch_len_;
      const double* wr = weights_.data() + o * patch_len_;
      for (std::size_t r = 0; r < patch_len_; ++r) {
        const double* cr = col_.data() + r * out_cells_;
        double* gcr = grad_col_.data() + r * out_cells_;
        double acc = 0.0;
        const double w = wr[r];
        for (std::size_t m = 0; m < out_cells_; ++m) {
          acc += gr[m] * cr[m];
          gcr[m] += w * gr[m];
        }
        gw[r] += acc;
      }
    }

    // col2im scatter-add
    double* gi = grad_in.values.data() + i * in_size;
    std::size_t r = 0;
    for (std::size_t c = 0; c < in_channels_; ++c) {
      double* chan = gi + c * X * Y * Z;
      for (std::size_t kx = 0; kx < kernel_[0]; ++kx) {
        for (std::size_t ky = 0; ky < kernel_[1]; ++ky) {
          for (std::size_t kz = 0; kz < kernel_[2]; ++kz, ++r) {
            const double* src = grad_col_.data() + r * out_cells_;
            for (std::size_t ox = 0; ox < OX; ++ox) {
              const std::size_t ix = ox * stride_ + kx;
              for (std::size_t oy = 0; oy < OY; ++oy) {
                const std::size_t iy = oy * stride_ + ky;
                double* dst = chan + (ix * Y + iy) * Z + kz;
                for (std::size_t oz = 0; oz < OZ; ++oz) {
                  dst[oz * stride_] += src[oz];
                }
                src += OZ;
              }
            }
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// MaxPool3d

MaxPool3dLayer::MaxPool3dLayer(std::array<std::size_t, 3> pool) : pool_(pool) {
  if (pool[0] == 0 || pool[1] == 0 || pool[2] == 0) {
    shape_error("maxpool3d", "pool dims must be positive");
  }
}

void MaxPool3dLayer::prepare(const Shape& input_shape) {
  if (input_shape.size() != 4) {
    shape_error("maxpool3d", "expects (channels, x, y, z) input, got " +
                                 shape_str(input_shape));
  }
  for (int a = 0; a < 3; ++a) {
    if (input_shape[a + 1] < pool_[a]) {
      shape_error("maxpool3d", "pool larger than input on axis " +
                                   std::to_string(a));
    }
  }
  input_shape_ = input_shape;
  output_shape_ = {input_shape[0], input_shape[1] / pool_[0],
                   input_shape[2] / pool_[1], input_shape[3] / pool_[2]};
  in_sample_size_ = shape_size(input_shape);
}

nlohmann::json MaxPool3dLayer::describe() const {
  return {{"kind", "maxpool3d"}, {"pool", {pool_[0], pool_[1], pool_[2]}}};
}

Tensor MaxPool3dLayer::forward(const Tensor& batch, Mode mode, rng::Engine&) {
  const std::size_t n = check_batch(batch, input_shape_);
  const std::size_t C = input_shape_[0];
  const std::size_t X = input_shape_[1], Y = input_shape_[2],
                    Z = input_shape_[3];
  const std::size_t OX = output_shape_[1], OY = output_shape_[2],
                    OZ = output_shape_[3];
  Tensor out = Tensor::zeros(batched(n, output_shape_));
  argmax_.resize(out.values.size());
  std::size_t w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = batch.values.data() + i * in_sample_size_;
    for (std::size_t c = 0; c < C; ++c) {
      const double* chan = in + c * X * Y * Z;
      for (std::size_t ox = 0; ox < OX; ++ox) {
        for (std::size_t oy = 0; oy < OY; ++oy) {
          for (std::size_t oz = 0; oz < OZ; ++oz, ++w) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t px = 0; px < pool_[0]; ++px) {
              for (std::size_t py = 0; py < pool_[1]; ++py) {
                const std::size_t base =
                    ((ox * pool_[0] + px) * Y + oy * pool_[1] + py) * Z +
                    oz * pool_[2];
                for (std::size_t pz = 0; pz < pool_[2]; ++pz) {
                  const double v = chan[base + pz];
                  if (v > best) {
                    best = v;
                    best_idx = base + pz;
                  }
                }
              }
            }
            out.values[w] = best;
            argmax_[w] = i * in_sample_size_ + c * X * Y * Z + best_idx;
          }
        }
      }
    }
  }
  has_cache_ = mode == Mode::train;
  return out;
}

Tensor MaxPool3dLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) shape_error("maxpool3d", "backward without cached forward");
  const std::size_t n = check_batch(grad_out, output_shape_);
  if (grad_out.values.size() != argmax_.size()) {
    shape_error("maxpool3d", "grad size does not match cached forward");
  }
  Tensor grad_in = Tensor::zeros(batched(n, input_shape_));
  for (std::size_t w = 0; w < grad_out.values.size(); ++w) {
    grad_in.values[argmax_[w]] += grad_out.values[w];
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Factory

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") {
    return std::make_unique<DenseLayer>(j.at("width").get<std::size_t>());
  }
  if (kind == "relu") return std::make_unique<ReluLayer>();
  if (kind == "sigmoid") return std::make_unique<SigmoidLayer>();
  if (kind == "softmax") return std::make_unique<SoftmaxLayer>();
  if (kind == "dropout") {
    return std::make_unique<DropoutLayer>(j.at("rate").get<double>());
  }
  if (kind == "flatten") return std::make_unique<FlattenLayer>();
  if (kind == "conv3d") {
    const auto k = j.at("kernel");
    return std::make_unique<Conv3dLayer>(
        j.at("out_channels").get<std::size_t>(),
        std::array<std::size_t, 3>{k.at(0).get<std::size_t>(),
                                   k.at(1).get<std::size_t>(),
                                   k.at(2).get<std::size_t>()},
        j.value("stride", std::size_t{1}));
  }
  if (kind == "maxpool3d") {
    const auto p = j.at("pool");
    return std::make_unique<MaxPool3dLayer>(
        std::array<std::size_t, 3>{p.at(0).get<std::size_t>(),
                                   p.at(1).get<std::size_t>(),
                                   p.at(2).get<std::size_t>()});
  }
  throw std::invalid_argument("layer_from_json: unknown layer kind '" + kind +
                              "'");
}

// ---------------------------------------------------------------------------
// LayerStack

LayerStack::LayerStack(Shape input_shape, std::uint64_t seed)
    : input_shape_(std::move(input_shape)),
      output_shape_(input_shape_),
      seed_(seed),
      engine_(seed) {
  if (shape_size(input_shape_) == 0) {
    throw std::invalid_argument("LayerStack: empty input shape");
  }
}

void LayerStack::add(std::unique_ptr<Layer> layer) {
  layer->prepare(output_shape_);
  layer->init_params(engine_);
  output_shape_ = layer->output_shape();
  layers_.push_back(std::move(layer));
}

Tensor LayerStack::forward(const Tensor& batch, Mode mode) {
  if (batch.shape.size() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(),
                  batch.shape.begin() + 1)) {
    throw std::invalid_argument("LayerStack: input shape " +
                                shape_str(batch.shape) +
                                " does not match declared " +
                                shape_str(input_shape_));
  }
  Tensor cur = batch;
  for (auto& layer : layers_) cur = layer->forward(cur, mode, engine_);
  train_cache_ = mode == Mode::train;
  return cur;
}

Tensor LayerStack::backward_from(std::size_t first, const Tensor& grad) {
  if (!train_cache_) {
    throw std::invalid_argument(
        "LayerStack: backward requires a preceding train-mode forward");
  }
  Tensor cur = grad;
  for (std::size_t i = first + 1; i-- > 0;) {
    cur = layers_[i]->backward(cur);
  }
  return cur;
}

Tensor LayerStack::backward(const Tensor& grad_out) {
  if (layers_.empty()) return grad_out;
  return backward_from(layers_.size() - 1, grad_out);
}

Tensor LayerStack::backward_fused_final(const Tensor& grad_preactivation) {
  if (layers_.empty()) {
    throw std::invalid_argument("LayerStack: fused backward on empty stack");
  }
  const std::string last = layers_.back()->kind();
  if (last != "softmax" && last != "sigmoid") {
    throw std::invalid_argument(
        "LayerStack: fused backward requires a softmax or sigmoid output, "
        "found " +
        last);
  }
  if (layers_.size() == 1) return grad_preactivation;
  return backward_from(layers_.size() - 2, grad_preactivation);
}

void LayerStack::zero_grads() {
  for (auto& layer : layers_) {
    for (const ParamView& p : layer->params()) {
      std::fill(p.grads->begin(), p.grads->end(), 0.0);
    }
  }
}

std::vector<ParamView> LayerStack::params() {
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (ParamView p : layers_[i]->params()) {
      p.name = "layer" + std::to_string(i) + "." + p.name;
      out.push_back(p);
    }
  }
  return out;
}

std::size_t LayerStack::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    for (const ParamView& p : const_cast<Layer&>(*layer).params()) {
      n += p.values->size();
    }
  }
  return n;
}

}  // namespace segdesc::nn
