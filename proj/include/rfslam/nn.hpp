#pragma once
// Small float64 layer library with explicit forward/backward passes.
// Batched tensors are row-major with the batch as the leading dimension.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace rfslam::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  void fill(double v);
  Tensor reshaped(std::vector<int> new_shape) const;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

// A named handle onto a layer parameter and its gradient accumulator.
// `frozen`, when set, marks entries the optimizer must leave untouched.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  const std::vector<char>* frozen = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  // Returns d/dx and accumulates parameter gradients. Must follow forward.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out);
  // Non-trainable state saved in checkpoints (batchnorm running statistics).
  virtual void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out);
  virtual std::string kind() const = 0;
};

class Linear : public Layer {
 public:
  Linear(int in, int out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::string kind() const override { return "linear"; }

  int in() const { return in_; }
  int out() const { return out_; }
  Tensor weight, bias;  // weight is out x in
  Tensor weight_grad, bias_grad;

 private:
  int in_, out_;
  Tensor x_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor x_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "tanh"; }

 private:
  Tensor y_;
};

// Same-padded 1-D convolution over (B, C_in, W) -> (B, C_out, W).
class Conv1d : public Layer {
 public:
  Conv1d(int in_channels, int out_channels, int kernel, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::string kind() const override { return "conv1d"; }

  Tensor weight, bias;  // weight is C_out x (C_in * kernel)
  Tensor weight_grad, bias_grad;

 private:
  int cin_, cout_, k_;
  Tensor cols_;  // im2col cache: (B * W) x (C_in * kernel)
  int batch_ = 0, width_ = 0;
};

// Per-channel normalization over (B, C) or (B, C, W). Batch statistics in
// training, running averages in eval.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::string kind() const override { return "batchnorm"; }

  Tensor gamma, beta, gamma_grad, beta_grad;
  Tensor running_mean, running_var;

 private:
  int c_;
  double momentum_, eps_;
  bool trained_ = false;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<int> in_shape_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Layer> layer);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::string kind() const override { return "sequential"; }
  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// y = x + inner(x); inner must preserve shape.
class Residual : public Layer {
 public:
  explicit Residual(std::unique_ptr<Layer> inner);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::string kind() const override { return "residual"; }

 private:
  std::unique_ptr<Layer> inner_;
};

enum class Activation { kReLU, kTanh, kIdentity };

// Linear layers with `act` between them (none after the last).
std::unique_ptr<Sequential> make_mlp(const std::vector<int>& widths, Activation act,
                                     std::mt19937_64& rng);

std::vector<ParamRef> parameters(Layer& layer);
std::size_t parameter_count(const std::vector<ParamRef>& params);
void zero_grad(const std::vector<ParamRef>& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig cfg);
  // Throws NumericalError naming the offending parameter on a non-finite
  // gradient, before touching any value.
  void step();
  void zero_grad();
  long long steps() const { return t_; }
  const std::vector<ParamRef>& params() const { return params_; }
  AdamConfig& config() { return cfg_; }
  // Per-parameter learning-rate multiplier (default 1).
  void set_lr_scale(const std::string& name, double scale);

 private:
  std::vector<ParamRef> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> lr_scale_;
  long long t_ = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // parameter name or "input"
};

// Scalarizes the output as sum(w * y) with fixed random w and compares the
// analytic gradient (parameters and input) with central differences.
// Relative error per entry is |a - n| / max(|a|, |n|, 1e-6 * scale) where
// scale is the largest analytic magnitude seen.
GradCheckResult finite_diff_check(Layer& layer, const Tensor& input, double step,
                                  bool training, std::uint64_t seed = 7);

// Generic version over a scalar function of a flat vector.
double finite_diff_max_rel(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x, const std::vector<double>& analytic,
                           double step);

}  // namespace rfslam::nn
