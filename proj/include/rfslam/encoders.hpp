#pragma once
// Position encoders: fixed-width MLP, 1-D convolutional network over CSI and
// a DeepSet over variable-size delay sets. Inputs are standardized with
// statistics fitted on training data and stored alongside the weights.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rfslam/nn.hpp"

namespace rfslam::encoders {

enum class EncoderKind { kMlp, kConv, kDeepSet };

EncoderKind parse_encoder_kind(const std::string& s);
const char* encoder_kind_name(EncoderKind k);

using Input = std::vector<double>;

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kMlp;
  int input_dim = 0;  // MLP width; conv expects 2 * n_subcarriers (re block, then im)
  int out_dim = 2;
  std::vector<int> mlp_hidden = {128, 128, 128};
  int conv_channels = 8;
  int conv_kernel = 5;
  int conv_fc = 150;
  int deepset_width = 64;
  // Fixed multiplier on the network output (meters per unit).
  double output_scale = 1.0;
  // MLP only: add a direct affine path and zero the last hidden-to-output
  // layer so training starts from an affine map of the inputs.
  bool linear_skip = false;
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Encoder() = default;

  // B x out_dim
  virtual nn::Tensor forward(const std::vector<const Input*>& batch, bool training) = 0;
  virtual void backward(const nn::Tensor& grad_out) = 0;
  virtual std::vector<nn::ParamRef> parameters() = 0;
  // Normalization statistics plus layer buffers.
  virtual std::vector<nn::ParamRef> buffers() = 0;
  virtual void fit_normalization(const std::vector<const Input*>& inputs) = 0;

  const EncoderConfig& config() const { return cfg_; }

 protected:
  EncoderConfig cfg_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, std::uint64_t seed);

}  // namespace rfslam::encoders
