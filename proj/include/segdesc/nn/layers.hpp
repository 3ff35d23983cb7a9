#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdesc/nn/tensor.hpp"
#include "segdesc/rng.hpp"

namespace segdesc::nn {

enum class Mode { train, infer };

struct ParamView {
  std::string name;
  std::vector<double>* values;
  std::vector<double>* grads;
};

/// A parametric layer with a forward/backward contract. Layers are prepared
/// once against a per-sample input shape and then operate on batched tensors
/// with a leading batch dimension. Forward in train mode caches whatever the
/// matching backward needs; instances are therefore not shareable across
/// threads while training.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  /// Validates the per-sample input shape, derives the output shape and
  /// allocates parameters. Called once when the layer joins a stack.
  virtual void prepare(const Shape& input_shape) = 0;
  virtual Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<ParamView> params() { return {}; }
  virtual void init_params(rng::Engine&) {}
  virtual nlohmann::json describe() const;

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

 protected:
  Shape input_shape_;
  Shape output_shape_;
  std::size_t check_batch(const Tensor& batch, const Shape& per_sample) const;
};

class DenseLayer : public Layer {
 public:
  explicit DenseLayer(std::size_t width);
  std::string kind() const override { return "dense"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamView> params() override;
  void init_params(rng::Engine& rng) override;
  nlohmann::json describe() const override;

  std::vector<double>& weights() { return weights_; }
  std::vector<double>& bias() { return bias_; }

 private:
  std::size_t width_;
  std::size_t fan_in_ = 0;
  std::vector<double> weights_, bias_;        // weights row-major (width x fan_in)
  std::vector<double> grad_weights_, grad_bias_;
  Tensor cached_input_;
  bool has_cache_ = false;
};

class ReluLayer : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor cached_input_;
  bool has_cache_ = false;
};

class SigmoidLayer : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor cached_output_;
  bool has_cache_ = false;
};

/// Row-wise softmax over the last (and only) per-sample dimension.
class SoftmaxLayer : public Layer {
 public:
  std::string kind() const override { return "softmax"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor cached_output_;
  bool has_cache_ = false;
};

/// Inverted dropout: training scales kept activations by 1/(1-rate) so the
/// expected activation matches inference, where the layer is the identity.
class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double rate);
  std::string kind() const override { return "dropout"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json describe() const override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<double> mask_;
  bool has_cache_ = false;
};

class FlattenLayer : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t last_batch_ = 0;
  bool has_cache_ = false;
};

/// 3D convolution, valid padding. Per-sample shapes are (channels, x, y, z).
class Conv3dLayer : public Layer {
 public:
  Conv3dLayer(std::size_t out_channels, std::array<std::size_t, 3> kernel,
              std::size_t stride = 1);
  std::string kind() const override { return "conv3d"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamView> params() override;
  void init_params(rng::Engine& rng) override;
  nlohmann::json describe() const override;

  std::vector<double>& weights() { return weights_; }
  std::vector<double>& bias() { return bias_; }

 private:
  void im2col(const double* sample, std::vector<double>& col) const;

  std::size_t out_channels_;
  std::array<std::size_t, 3> kernel_;
  std::size_t stride_;
  std::size_t in_channels_ = 0;
  std::array<std::size_t, 3> in_dims_{0, 0, 0};
  std::array<std::size_t, 3> out_dims_{0, 0, 0};
  std::size_t patch_len_ = 0;   // in_channels * kx * ky * kz
  std::size_t out_cells_ = 0;   // x' * y' * z'
  std::vector<double> weights_, bias_;  // weights (out_channels x patch_len)
  std::vector<double> grad_weights_, grad_bias_;
  std::vector<double> col_, grad_col_;  // scratch, reused across samples
  Tensor cached_input_;
  bool has_cache_ = false;
};

/// Non-overlapping 3D max pooling (stride equals the pool size); trailing
/// cells that do not fill a window are dropped.
class MaxPool3dLayer : public Layer {
 public:
  explicit MaxPool3dLayer(std::array<std::size_t, 3> pool);
  std::string kind() const override { return "maxpool3d"; }
  void prepare(const Shape& input_shape) override;
  Tensor forward(const Tensor& batch, Mode mode, rng::Engine& rng) override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json describe() const override;

 private:
  std::array<std::size_t, 3> pool_;
  std::size_t in_sample_size_ = 0;
  std::vector<std::size_t> argmax_;  // input linear index per output element
  bool has_cache_ = false;
};

std::unique_ptr<Layer> layer_from_json(const nlohmann::json& j);

/// Ordered layers with statically checked shape chaining. Owns the seeded
/// engine used for weight initialization and dropout masks, so identical
/// seeds and call sequences reproduce bit-identical results.
class LayerStack {
 public:
  LayerStack(Shape input_shape, std::uint64_t seed);
  LayerStack(LayerStack&&) = default;
  LayerStack& operator=(LayerStack&&) = default;

  void add(std::unique_ptr<Layer> layer);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  std::uint64_t seed() const { return seed_; }

  Tensor forward(const Tensor& batch, Mode mode);
  /// Backpropagates from the output; requires a preceding train-mode forward.
  /// Parameter gradients accumulate until zero_grads().
  Tensor backward(const Tensor& grad_out);
  /// Fused path for softmax or sigmoid outputs: grad is with respect to the
  /// final layer's pre-activation, whose backward is skipped.
  Tensor backward_fused_final(const Tensor& grad_preactivation);

  void zero_grads();
  std::vector<ParamView> params();
  std::size_t param_count() const;

 private:
  Tensor backward_from(std::size_t first, const Tensor& grad);

  Shape input_shape_;
  Shape output_shape_;
  std::uint64_t seed_;
  rng::Engine engine_;
  std::vector<std::unique_ptr<Layer>> layers_;
  bool train_cache_ = false;
};

}  // namespace segdesc::nn
